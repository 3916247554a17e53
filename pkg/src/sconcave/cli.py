"""Command line entry point and experiment runner.

``sconcave <command> --config FILE [--seed N] [--out DIR]`` validates the
config, runs one job per (seed, cell), writes ``report.csv`` and
``summary.json`` and prints a one-line verdict table. The exit status is
0 when no check failed (inconclusive does not fail), 1 when one did, 2 on
a config error and 3 on a runtime error. ``SCONCAVE_THREADS`` caps the
number of worker processes.
"""

import argparse
import json
import math
import os
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import learners as L
from . import verify as V
from .bounds import SConcaveParams, band_bounds, marginal_gamma
from .config import COMMANDS, load_config
from .densities import Pareto1D, make_radial_nd, make_symmetric1d
from .errors import ConfigError, SConcaveError
from .report import write_report
from .rng import derive_stream

TAIL_T = (16.0, 32.0)
PARETO_T = (2.0, 5.0, 10.0)
VARIANCE_ANGLE = 0.1
VARIANCE_DRAWS = 100_000
ENVELOPE_POINTS = 2000
CONCAVITY_POINTS = 61

LEAD = {
    "verify-geometry": ("check", "seed", "s", "n", "t", "theta", "estimate", "std_error", "n_samples", "bound",
                        "direction", "verdict", "z_margin"),
    "run-al": ("check", "seed", "eps", "k", "band", "labels", "rejected", "working_set", "angle", "flips"),
    "run-baum": ("check", "seed", "eps", "branch", "labels", "positives", "error", "std_error", "verdict"),
    "estimate-coefficient": ("check", "seed", "s", "n", "r", "angle", "probability", "std_error", "capacity",
                             "capacity_se", "saturated", "bound", "verdict"),
}


def threads():
    raw = os.environ.get("SCONCAVE_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError([f"SCONCAVE_THREADS must be a positive integer, got {raw!r}"]) from None
    if value < 1:
        raise ConfigError([f"SCONCAVE_THREADS must be a positive integer, got {raw!r}"])
    return value


def _rotate(w, theta, stream):
    """Unit vector at angle ``theta`` from unit ``w`` in a random plane."""
    g = stream.generator
    z = g.standard_normal(len(w))
    z -= (z @ w) * w
    z /= np.linalg.norm(z)
    return math.cos(theta) * w + math.sin(theta) * z


def _random_unit(stream, n):
    v = stream.generator.standard_normal(n)
    return v / np.linalg.norm(v)


def _model(family, s, n):
    if family == "pareto1d":
        return Pareto1D(s)
    if family == "symmetric1d":
        return make_symmetric1d(s)
    return make_radial_nd(n, s)


def _concavity_row(name, p, fn, gamma, grid):
    rep = V.check_gamma_concavity(fn, gamma, grid)
    return {"check": name, "s": p.s, "n": p.n, "estimate": rep.worst_excess, "std_error": 0.0,
            "n_samples": len(grid), "bound": 0.0, "direction": V.LE, "verdict": "pass" if rep.ok else "fail",
            "z_margin": math.inf if rep.ok else -math.inf, "gamma": gamma}


# ---------------------------------------------------------------------------
# jobs


def _verify_radial(cfg, p, model, st):
    n_mc, knobs = cfg.n_mc, cfg.base_knobs()
    w = _random_unit(st.child("w"), p.n)
    reps = list(V.verify_band(p, model, w, cfg.t_grid, n_mc, st.child("band")))
    for i, theta in enumerate(cfg.theta_grid):
        v = _rotate(w, theta, st.child("rotate", i))
        reps.append(V.verify_disagreement(p, model, w, v, n_mc, st.child("disagreement", i), knobs.c_f1))
        if theta < 0.5 * math.pi and p.s != 0.0:
            reps.append(V.verify_disagreement_outside_band(p, model, w, v, knobs.c1, n_mc, st.child("outside", i)))
    if p.s != 0.0:
        a = _rotate(w, VARIANCE_ANGLE, st.child("variance-a"))
        t = 0.5 * band_bounds(p)[2]
        reps.append(V.verify_conditional_variance(p, model, w, a, t, min(n_mc, VARIANCE_DRAWS),
                                                  st.child("variance"), C0=knobs.C0))
    reps.extend(V.verify_tail(p, model, TAIL_T, 1.0, n_mc, st.child("tail")))
    reps.append(V.verify_centroid_halfspace(p, model, w, n_mc, st.child("centroid")))
    reps.append(V.verify_density_envelope(p, model, ENVELOPE_POINTS, st.child("envelope")))
    rows = [r.row() for r in reps]
    grid = np.linspace(-6.0, 6.0, CONCAVITY_POINTS)
    rows.append(_concavity_row("gamma_concavity_marginal", p, model.marginal_pdf,
                               marginal_gamma(p.s, p.n - 1), grid))
    return rows


def _verify_symmetric(cfg, p, model, st):
    reps = [V.verify_centroid_halfspace(p, model, np.ones(1), cfg.n_mc, st.child("centroid"))]
    reps.append(V.verify_density_envelope(p, model, ENVELOPE_POINTS, st.child("envelope")))
    reps.extend(V.verify_density_range_1d(model))
    reps.extend(V.verify_tail(p, model, TAIL_T, 1.0, cfg.n_mc, st.child("tail")))
    rows = [r.row() for r in reps]
    grid = np.linspace(-6.0, 6.0, CONCAVITY_POINTS)
    rows.append(_concavity_row("gamma_concavity_cdf", p, model.cdf, marginal_gamma(p.s, 1), grid))
    return rows


def _verify_pareto(cfg, p, model, st):
    ts = [t for t in PARETO_T if t >= model.start]
    reps = V.verify_pareto_tail(model, ts, cfg.n_mc, st.child("pareto-tail")) if ts else []
    if p.s > -0.5:
        reps.append(V.verify_centroid_halfspace(p, model, np.ones(1), cfg.n_mc, st.child("centroid")))
    rows = [r.row() for r in reps]
    grid = np.linspace(model.start + 0.05, model.start + 20.05, CONCAVITY_POINTS)
    rows.append(_concavity_row("gamma_concavity_cdf", p, model.cdf, marginal_gamma(p.s, 1), grid))
    return rows


def _job_verify(cfg, seed, ci):
    s, n = cfg.cells[ci]
    p = SConcaveParams(s, n)
    model = _model(cfg.family, s, n)
    st = derive_stream(seed, ("verify-geometry", ci))
    suite = {"radial": _verify_radial, "symmetric1d": _verify_symmetric, "pareto1d": _verify_pareto}[cfg.family]
    rows = suite(cfg, p, model, st)
    rows = [{"seed": seed, **r} for r in rows]
    return rows, []


def _target(cfg, st, n, index=0):
    if cfg.targets is not None:
        return np.array(cfg.targets[index])
    return st.child("target", index).generator.standard_normal(n)


def _job_al(cfg, seed, ci, ei):
    s, n = cfg.cells[ci]
    eps = cfg.eps[ei]
    p = SConcaveParams(s, n)
    model = make_radial_nd(n, s)
    knobs = cfg.base_knobs().anchored(p, **cfg.anchors)
    st = derive_stream(seed, ("run-al", ci, ei))
    w_star = _target(cfg, st, n)
    if cfg.noise == "realizable":
        oracle = L.LabelOracle.realizable(w_star)
        res = L.margin_al_realizable(p, model, oracle, eps, cfg.delta, st, knobs=knobs,
                                     eval_points=cfg.eval_points)
    else:
        quantile = cfg.quantile if cfg.quantile is not None else eps
        oracle = L.LabelOracle.adversarial(w_star, cfg.eta, cfg.strategy, quantile, st.child("adversary"))
        res = L.margin_al_adversarial(p, model, oracle, eps, cfg.delta, st, knobs=knobs, band_eval=cfg.band_eval,
                                      eval_points=cfg.eval_points)
    rows = [{"check": "round", "seed": seed, "s": s, "n": n, "eps": eps, **asdict(r)} for r in res.rounds]
    ok = res.error.within(eps)
    run = {
        "seed": seed, "s": s, "n": n, "eps": eps, "noise": cfg.noise, "T": res.schedule.T,
        "total_labels": res.total_labels, "labels_per_round": list(res.labels_per_round),
        "error": res.error.error, "std_error": res.error.std_error, "verdict": "pass" if ok else "fail",
        "final_angle": res.rounds[-1].angle, "flips": res.flips, "generated": res.generated,
        "knobs": asdict(knobs),
    }
    rows.append({"check": "al_error", "seed": seed, "s": s, "n": n, "eps": eps, "labels": res.total_labels,
                 "estimate": res.error.error, "std_error": res.error.std_error, "bound": eps,
                 "verdict": run["verdict"]})
    if cfg.passive and cfg.noise == "realizable":
        pas = L.passive_baseline(p, model, L.LabelOracle.realizable(w_star), eps, cfg.delta, st.child("passive"),
                                 knobs=knobs, eval_points=cfg.eval_points)
        run.update(passive_labels=pas.labels, passive_error=pas.error.error, passive_std_error=pas.error.std_error)
        rows.append({"check": "passive_error", "seed": seed, "s": s, "n": n, "eps": eps, "labels": pas.labels,
                     "estimate": pas.error.error, "std_error": pas.error.std_error, "bound": eps,
                     "verdict": "pass" if pas.error.within(eps) else "fail"})
    return rows, [run]


def _job_baum(cfg, seed, ci, ei):
    s, n = cfg.cells[ci]
    eps = cfg.eps[ei]
    p = SConcaveParams(s, n)
    model = make_radial_nd(n, s)
    st = derive_stream(seed, ("run-baum", ci, ei))
    u, v = _target(cfg, st, n, 0), _target(cfg, st, n, 1)
    res = L.baum_learn(p, model, (u, v), eps, cfg.delta, st, knobs=cfg.base_knobs(), eval_points=cfg.eval_points)
    ok = res.error.within(eps)
    m1, m2, m3 = res.sizes
    row = {"check": "baum_error", "seed": seed, "s": s, "n": n, "eps": eps, "branch": res.branch,
           "labels": res.labels, "positives": res.positives, "m1": m1, "m2": m2, "m3": m3,
           "error": res.error.error, "std_error": res.error.std_error, "verdict": "pass" if ok else "fail",
           "containment": res.containment, "positives_consistent": res.positives_consistent}
    run = {k: v for k, v in row.items() if k != "check"}
    run["K"] = res.K
    return [row], [run]


def _job_coefficient(cfg, seed, ci):
    s, n = cfg.cells[ci]
    p = SConcaveParams(s, n)
    model = make_radial_nd(n, s)
    st = derive_stream(seed, ("estimate-coefficient", ci))
    w = _target(cfg, st, n)
    est = L.estimate_disagreement_coefficient(p, model, w, cfg.r_grid, cfg.n_mc, st.child("mc"),
                                              knobs=cfg.base_knobs(), c=cfg.bound_constant)
    verdict = "pass" if est.holds else "fail"
    rows = [{"check": "capacity", "seed": seed, "s": s, "n": n, **asdict(r)} for r in est.rows]
    rows.append({"check": "theta", "seed": seed, "s": s, "n": n, "capacity": est.theta,
                 "capacity_se": est.theta_se, "bound": est.bound, "eps": est.eps, "verdict": verdict})
    run = {"seed": seed, "s": s, "n": n, "theta": est.theta, "theta_se": est.theta_se, "bound": est.bound,
           "eps": est.eps, "verdict": verdict}
    return rows, [run]


def _jobs(cfg):
    cells = range(len(cfg.cells))
    eps = range(len(cfg.eps))
    if cfg.command == "verify-geometry":
        return [(_job_verify, seed, c) for seed in cfg.seeds for c in cells]
    if cfg.command == "run-al":
        return [(_job_al, seed, c, e) for seed in cfg.seeds for c in cells for e in eps]
    if cfg.command == "run-baum":
        return [(_job_baum, seed, c, e) for seed in cfg.seeds for c in cells for e in eps]
    return [(_job_coefficient, seed, c) for seed in cfg.seeds for c in cells]


def _call(cfg, job):
    fn, *args = job
    return fn(cfg, *args)


def _comparison(runs):
    """Mean active and passive label counts per (s, n, eps)."""
    groups = {}
    for r in runs:
        groups.setdefault((r["s"], r["n"], r["eps"]), []).append(r)
    table = []
    for (s, n, eps), rs in groups.items():
        row = {"s": s, "n": n, "eps": eps, "al_labels": float(np.mean([r["total_labels"] for r in rs]))}
        if all("passive_labels" in r for r in rs):
            row["passive_labels"] = float(np.mean([r["passive_labels"] for r in rs]))
            row["ratio"] = row["al_labels"] / row["passive_labels"]
        table.append(row)
    return table


def verdict_line(rows):
    counts = {}
    for r in rows:
        if "verdict" in r and r["verdict"]:
            counts.setdefault(r["check"], Counter())[r["verdict"]] += 1
    parts = [f"{c} {v['pass']} pass/{v['fail']} fail/{v['inconclusive']} inconclusive" for c, v in counts.items()]
    return " | ".join(parts) if parts else "no checks"


def run(cfg, out_dir=None, workers=1):
    """Run every job of ``cfg``; write reports. Returns ``(status, rows, summary)``."""
    jobs = _jobs(cfg)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_call, [cfg] * len(jobs), jobs))
    else:
        results = [_call(cfg, job) for job in jobs]
    rows = [r for rs, _ in results for r in rs]
    runs = [r for _, rs in results for r in rs]
    failed = any(r.get("verdict") == "fail" for r in rows)
    tally = Counter(r["verdict"] for r in rows if r.get("verdict"))
    summary = {
        "command": cfg.command,
        "config": cfg.to_dict(),
        "seeds": list(cfg.seeds),
        "verdicts": {k: tally.get(k, 0) for k in ("pass", "fail", "inconclusive")},
        "status": 1 if failed else 0,
        "runs": runs,
    }
    if cfg.command == "run-al":
        summary["comparison"] = _comparison(runs)
    write_report(out_dir or cfg.output, rows, summary, LEAD[cfg.command])
    return summary["status"], rows, summary


def _error_report(exc):
    out = {"error": type(exc).__name__, "message": str(exc)}
    if getattr(exc, "condition", None):
        out["condition"] = exc.condition
    if isinstance(exc, ConfigError):
        out["violations"] = exc.violations
    return json.dumps(out, sort_keys=True)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="sconcave", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--seed", type=int, help="run a single root seed instead of the config's seeds")
    parser.add_argument("--out", help="output directory (default: the config's output)")
    args = parser.parse_args(argv)
    try:
        text = Path(args.config).read_text(encoding="utf-8")
        cfg = load_config(text, command=args.command)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError(["--seed must be non-negative"])
            cfg = replace(cfg, seeds=(args.seed,))
        workers = threads()
    except (ConfigError, OSError) as exc:
        print(_error_report(exc), file=sys.stderr)
        return 2
    try:
        status, rows, _ = run(cfg, args.out, workers)
    except SConcaveError as exc:
        print(_error_report(exc), file=sys.stderr)
        return 3
    print(verdict_line(rows))
    return status


if __name__ == "__main__":
    sys.exit(main())
