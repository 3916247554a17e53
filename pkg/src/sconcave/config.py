"""Experiment configuration: JSON documents validated before any sampling.

Every problem in a document is collected and reported together. Unknown
keys are rejected. Omitted fields take the defaults below, and
:meth:`ExperimentConfig.to_dict` echoes the fully resolved document,
including every knob, so outputs are self-describing.
"""

import json
import math
from dataclasses import asdict, dataclass, field, fields

from .bounds import Knobs
from .errors import ConfigError

COMMANDS = ("verify-geometry", "run-al", "run-baum", "estimate-coefficient")
FAMILIES = ("radial", "pareto1d", "symmetric1d")
NOISE = ("realizable", "adversarial")
STRATEGIES = ("boundary-proximal", "uniform")
ANCHORS = ("band", "tau", "radius", "kappa")
KNOB_NAMES = tuple(f.name for f in fields(Knobs))

# default verify-geometry grid: n in {2, 3, 5}, s in {-1e-9, -0.02, -1/(2n+3)}
DEFAULT_GRID = tuple((s, n) for n in (2, 3, 5) for s in (-1e-9, -0.02, -1.0 / (2 * n + 3)))
DEFAULT_T_GRID = (0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0)
DEFAULT_THETA_GRID = (0.05, 0.2, 0.5, 1.0)
DEFAULT_R_GRID = (0.01, 0.03, 0.1, 0.3)


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment. ``grid`` is a tuple of ``(s, n)`` cells."""

    command: str
    family: str = "radial"
    s: float = -0.02
    n: int = 3
    seeds: tuple = (0,)
    grid: tuple = None
    t_grid: tuple = DEFAULT_T_GRID
    theta_grid: tuple = DEFAULT_THETA_GRID
    n_mc: int = 1_000_000
    eps: tuple = (0.1,)
    delta: float = 0.1
    noise: str = "realizable"
    eta: float = 0.0
    strategy: str = "boundary-proximal"
    quantile: float = None
    band_eval: int = 0
    passive: bool = True
    eval_points: int = 100_000
    r_grid: tuple = DEFAULT_R_GRID
    bound_constant: float = 1.0
    targets: tuple = None
    knobs: dict = field(default_factory=dict)
    anchors: dict = field(default_factory=dict)
    output: str = "out"

    @property
    def cells(self):
        """``(s, n)`` cells the command runs on."""
        return self.grid if self.grid is not None else ((self.s, self.n),)

    def base_knobs(self):
        return Knobs(**self.knobs)

    def to_dict(self):
        out = asdict(self)
        out["knobs"] = asdict(self.base_knobs())
        out["grid"] = [list(c) for c in self.cells]
        for key in ("seeds", "t_grid", "theta_grid", "eps", "r_grid"):
            out[key] = list(out[key])
        if out["targets"] is not None:
            out["targets"] = [list(t) for t in out["targets"]]
        return out


_FIELDS = {f.name for f in fields(ExperimentConfig)}


def _is_number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def _number_list(doc, key, bad, positive=True):
    value = doc[key]
    if not isinstance(value, list) or not value or not all(_is_number(v) for v in value):
        bad.append(f"{key} must be a non-empty list of numbers")
        return None
    if positive and not all(v > 0 for v in value):
        bad.append(f"{key} entries must be positive")
    return tuple(float(v) for v in value)


def _regime(family, s, n, where):
    """Regime violations for one ``(s, n)`` cell of ``family``."""
    bad = []
    if not _is_int(n) or n < 1:
        return [f"{where}n must be a positive integer"]
    if not _is_number(s):
        return [f"{where}s must be a finite number"]
    if family == "pareto1d":
        if n != 1:
            bad.append(f"{where}pareto1d needs n = 1")
        if not -1.0 < s < 0.0:
            bad.append(f"{where}pareto1d needs -1 < s < 0")
        return bad
    if family == "symmetric1d" and n != 1:
        bad.append(f"{where}symmetric1d needs n = 1")
    if s > 0.0:
        bad.append(f"{where}s > 0 (only s <= 0 is supported)")
    elif s < -1.0 / (2 * n + 3):
        bad.append(f"{where}s < -1/(2n+3) (s = {s!r}, n = {n})")
    return bad


def _validate(doc):
    bad = []
    out = {}
    for key in sorted(set(doc) - _FIELDS):
        bad.append(f"unknown key {key!r}")
    command = doc.get("command")
    if command not in COMMANDS:
        bad.append(f"command must be one of {', '.join(COMMANDS)}, got {command!r}")
    out["command"] = command
    family = doc.get("family", "radial")
    if family not in FAMILIES:
        bad.append(f"family must be one of {', '.join(FAMILIES)}, got {family!r}")
    out["family"] = family
    for key in ("s", "delta", "eta", "bound_constant"):
        if key in doc:
            if not _is_number(doc[key]):
                bad.append(f"{key} must be a finite number")
            else:
                out[key] = float(doc[key])
    for key in ("n", "n_mc", "band_eval", "eval_points"):
        if key in doc:
            if not _is_int(doc[key]):
                bad.append(f"{key} must be an integer")
            else:
                out[key] = doc[key]
    if "seeds" in doc:
        seeds = doc["seeds"]
        if not isinstance(seeds, list) or not seeds or not all(_is_int(x) and x >= 0 for x in seeds):
            bad.append("seeds must be a non-empty list of non-negative integers")
        else:
            out["seeds"] = tuple(seeds)
    for key in ("t_grid", "theta_grid", "eps", "r_grid"):
        if key in doc:
            value = _number_list(doc, key, bad)
            if value is not None:
                out[key] = value
    if "grid" in doc:
        grid = doc["grid"]
        if not isinstance(grid, list) or not grid or not all(isinstance(c, list) and len(c) == 2 for c in grid):
            bad.append("grid must be a non-empty list of [s, n] pairs")
        else:
            out["grid"] = tuple((c[0], c[1]) for c in grid)
    for key, allowed in (("noise", NOISE), ("strategy", STRATEGIES)):
        if key in doc:
            if doc[key] not in allowed:
                bad.append(f"{key} must be one of {', '.join(allowed)}, got {doc[key]!r}")
            else:
                out[key] = doc[key]
    if "quantile" in doc and doc["quantile"] is not None:
        if not (_is_number(doc["quantile"]) and 0.0 < doc["quantile"] < 1.0):
            bad.append("quantile must lie in (0, 1)")
        else:
            out["quantile"] = float(doc["quantile"])
    if "passive" in doc:
        if not isinstance(doc["passive"], bool):
            bad.append("passive must be true or false")
        else:
            out["passive"] = doc["passive"]
    if "output" in doc:
        if not isinstance(doc["output"], str) or not doc["output"]:
            bad.append("output must be a non-empty string")
        else:
            out["output"] = doc["output"]
    if "targets" in doc and doc["targets"] is not None:
        t = doc["targets"]
        if not isinstance(t, list) or not t or not all(
            isinstance(v, list) and v and all(_is_number(x) for x in v) and any(x != 0 for x in v) for v in t
        ):
            bad.append("targets must be a list of non-zero numeric vectors")
        else:
            out["targets"] = tuple(tuple(float(x) for x in v) for v in t)
    for key, allowed in (("knobs", KNOB_NAMES), ("anchors", ANCHORS)):
        if key in doc:
            value = doc[key]
            if not isinstance(value, dict):
                bad.append(f"{key} must be an object")
                continue
            for name in sorted(value):
                if name not in allowed:
                    bad.append(f"unknown {key[:-1]} {name!r}")
                elif not (_is_number(value[name]) and value[name] > 0):
                    bad.append(f"{key[:-1]} {name} must be a positive number")
                elif name == "m_cap" and not _is_int(value[name]):
                    bad.append("knob m_cap must be an integer")
                else:
                    out.setdefault(key, {})[name] = value[name]
    return out, bad


def _semantic(cfg, bad):
    """Cross-field and regime checks on a structurally valid document."""
    def where(i):
        return "" if cfg.grid is None else f"grid[{i}]: "

    for i, (s, n) in enumerate(cfg.cells):
        bad.extend(_regime(cfg.family, s, n, where(i)))
        if cfg.command == "run-al" and _is_int(n) and n < 2:
            bad.append(f"{where(i)}run-al needs n >= 2")
        if cfg.command == "run-baum" and _is_int(n) and n < 3:
            bad.append(f"{where(i)}run-baum needs n >= 3")
    if cfg.command != "verify-geometry" and cfg.family != "radial":
        bad.append(f"{cfg.command} runs on the radial family only")
    if cfg.n_mc < 1000:
        bad.append("n_mc must be at least 1000")
    if cfg.eval_points < 1:
        bad.append("eval_points must be positive")
    if cfg.band_eval < 0:
        bad.append("band_eval must be non-negative")
    if not 0.0 < cfg.delta < 1.0:
        bad.append("delta must lie in (0, 1)")
    if not 0.0 <= cfg.eta < 1.0:
        bad.append("eta must lie in [0, 1)")
    if cfg.command == "run-al" and any(not 0.0 < e < 0.25 for e in cfg.eps):
        bad.append("run-al needs every eps in (0, 1/4)")
    if cfg.command == "run-baum" and any(not 0.0 < e < 1.0 for e in cfg.eps):
        bad.append("run-baum needs every eps in (0, 1)")
    if cfg.noise == "realizable" and cfg.eta != 0.0:
        bad.append("eta must be 0 for realizable noise")
    if cfg.noise == "adversarial":
        c0 = cfg.knobs.get("c0", 1.0)
        for e in cfg.eps:
            if not cfg.eta < c0 * e:
                bad.append(f"eta must be below c0*eps = {c0 * e!r}")
    if cfg.targets is not None:
        dims = {len(t) for t in cfg.targets}
        want = {c[1] for c in cfg.cells}
        if len(want) != 1 or dims != want:
            bad.append("target dimensions must match n")
        if cfg.command == "run-baum" and len(cfg.targets) != 2:
            bad.append("run-baum targets are exactly two vectors")
        if cfg.command in ("run-al", "estimate-coefficient") and len(cfg.targets) != 1:
            bad.append(f"{cfg.command} takes a single target vector")


def load_config(text, command=None):
    """Parse and validate a JSON document into an :class:`ExperimentConfig`.

    ``command`` fills a missing ``command`` key; if both are present they
    must agree. Raises :class:`ConfigError` listing every violation.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"parse error at line {exc.lineno} column {exc.colno}: {exc.msg}"]) from None
    if not isinstance(doc, dict):
        raise ConfigError(["config must be a JSON object"])
    if command is not None:
        if "command" in doc and doc["command"] != command:
            raise ConfigError([f"config command {doc['command']!r} does not match {command!r}"])
        doc = {**doc, "command": command}
    values, bad = _validate(doc)
    # semantic checks run on the fields that survived, so every problem is reported at once
    if values["command"] == "verify-geometry" and not {"grid", "s", "n"} & set(doc):
        values["grid"] = DEFAULT_GRID
    cfg = ExperimentConfig(**values)
    _semantic(cfg, bad)
    if bad:
        raise ConfigError(bad)
    return cfg
