"""Monte Carlo and grid checks of the geometric inequalities.

Every check returns an :class:`McReport`. A verdict is ``pass`` when the
inequality holds with at least three standard errors to spare, ``fail``
when it is violated by at least three, and ``inconclusive`` in between.
Equality checks (``==``) pass when the estimate is within three standard
errors of the exact value and fail otherwise.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bounds as B
from .densities import Pareto1D, Symmetric1D
from .errors import BandStarvationError, PreconditionError, RegimeError
from .rng import as_generator

LE = "<="
GE = ">="
EQ = "=="
Z_CRIT = 3.0
CHUNK = 1 << 18

__all__ = [
    "McReport",
    "verdict_for",
    "mc_probability",
    "verify_band",
    "verify_disagreement",
    "verify_disagreement_outside_band",
    "verify_conditional_variance",
    "verify_tail",
    "verify_pareto_tail",
    "verify_centroid_halfspace",
    "verify_density_envelope",
    "verify_density_range_1d",
    "check_gamma_concavity",
    "GammaConcavityReport",
    "reflection_experiment",
    "ReflectionReport",
    "packing_experiment",
    "PackingReport",
    "angle",
]


@dataclass
class McReport:
    check: str
    estimate: float
    std_error: float
    n_samples: int
    bound: float
    direction: str
    verdict: str
    z_margin: float
    params: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.verdict == "pass"

    def row(self):
        out = asdict(self)
        out.update(out.pop("params"))
        return out


def verdict_for(estimate, std_error, bound, direction):
    """Return ``(verdict, z_margin)`` under the three-standard-error policy."""
    if direction not in (LE, GE, EQ):
        raise PreconditionError(f"direction must be '<=', '>=' or '==', got {direction!r}")
    if direction == EQ:
        dev = abs(estimate - bound)
        if std_error == 0.0:
            z = math.inf if dev == 0.0 else -math.inf
        else:
            z = Z_CRIT - dev / std_error
        return ("pass" if z >= 0.0 else "fail"), z
    gap = bound - estimate if direction == LE else estimate - bound
    if std_error == 0.0:
        z = math.inf if gap >= 0.0 else -math.inf
    else:
        z = gap / std_error
    if z >= Z_CRIT:
        return "pass", z
    if z <= -Z_CRIT:
        return "fail", z
    return "inconclusive", z


def _report(check, estimate, std_error, n_samples, bound, direction, params):
    verdict, z = verdict_for(estimate, std_error, bound, direction)
    return McReport(
        check, float(estimate), float(std_error), int(n_samples), float(bound),
        direction, verdict, float(z), dict(params),
    )


def _draw(model, n, stream):
    """Yield point batches totalling ``n`` draws from one generator."""
    gen = as_generator(stream)
    left = n
    while left > 0:
        k = min(left, CHUNK)
        yield model.sample(k, gen)
        left -= k


def _unit(v, name):
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if not abs(norm - 1.0) <= 1e-9:
        raise PreconditionError(f"{name} must be a unit vector, got norm {norm!r}")
    return v


def angle(u, v):
    """Angle between two vectors, accurate for nearly parallel inputs."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return float(2.0 * math.atan2(np.linalg.norm(u - v), np.linalg.norm(u + v)))


def _proportion(hits, n):
    est = hits / n
    return est, math.sqrt(est * (1.0 - est) / n)


def mc_probability(model, event, n, stream, bound=None, direction=None, check="probability", params=None):
    """Hit fraction of a vectorised predicate over ``n`` draws.

    Without ``bound`` the report carries ``nan`` bound and an
    ``inconclusive`` verdict, so it can be used as a plain estimator.
    """
    if n < 1000:
        raise PreconditionError(f"n must be >= 1000, got {n!r}")
    hits = 0
    for x in _draw(model, n, stream):
        hits += int(np.count_nonzero(event(x)))
    est, se = _proportion(hits, n)
    if bound is None:
        return McReport(check, est, se, n, math.nan, direction or "", "inconclusive", math.nan, dict(params or {}))
    return _report(check, est, se, n, bound, direction, params or {})


def _band_counts(model, w, t_grid, n, stream):
    counts = np.zeros(len(t_grid), dtype=np.int64)
    t = np.asarray(t_grid, dtype=float)
    for x in _draw(model, n, stream):
        a = np.abs(x @ w)
        counts += np.count_nonzero(a[:, None] <= t[None, :], axis=0)
    return counts


def verify_band(p, model, w, t_grid, n, stream):
    """Upper check ``Pr[|w.x| <= t] <= f3 t`` on the grid, lower ``> f2 t`` for ``t <= d``.

    All grid points share one sample.
    """
    w = _unit(w, "w")
    if any(t <= 0.0 for t in t_grid):
        raise PreconditionError("t_grid must be positive")
    f2, f3, d = B.band_bounds(p)
    counts = _band_counts(model, w, t_grid, n, stream)
    out = []
    for t, c in zip(t_grid, counts):
        est, se = _proportion(int(c), n)
        out.append(_report("band_upper", est, se, n, f3 * t, LE, {"s": p.s, "n": p.n, "t": t}))
        if t <= d:
            out.append(_report("band_lower", est, se, n, f2 * t, GE, {"s": p.s, "n": p.n, "t": t}))
    return out


def _disagree(x, u, v):
    return (x @ u >= 0.0) != (x @ v >= 0.0)


def verify_disagreement(p, model, u, v, n, stream, c=1.0):
    """``d_D(u, v) >= f1 theta(u, v)``."""
    u = _unit(u, "u")
    v = _unit(v, "v")
    theta = angle(u, v)
    if theta >= math.pi:
        raise PreconditionError("theta(u, v) must be below pi")
    bound = B.disagreement_lower_f1(p, c) * theta
    rep = mc_probability(model, lambda x: _disagree(x, u, v), n, stream, bound, GE,
                         "disagreement", {"s": p.s, "n": p.n, "theta": theta})
    return rep


def verify_disagreement_outside_band(p, model, u, v, c1, n, stream):
    """``Pr[disagree and |v.x| >= f4 theta] <= c1 f1 theta``."""
    u = _unit(u, "u")
    v = _unit(v, "v")
    theta = angle(u, v)
    if not theta < 0.5 * math.pi:
        raise PreconditionError("theta(u, v) must be below pi/2")
    f1 = B.disagreement_lower_f1(p)
    f4 = B.band_margin_f4(p, c1)
    width = f4 * theta
    return mc_probability(
        model,
        lambda x: _disagree(x, u, v) & (np.abs(x @ v) >= width),
        n, stream, c1 * f1 * theta, LE, "disagreement_outside_band",
        {"s": p.s, "n": p.n, "theta": theta, "c1": c1, "width": width},
    )


def _band_sample(model, u, t, n, stream, min_rate=1e-3, probe=100_000):
    """Rejection-sample ``n`` points from ``{|u.x| <= t}``; returns points and rate."""
    gen = as_generator(stream)
    kept, drawn, accepted = [], 0, 0
    while accepted < n:
        x = model.sample(CHUNK, gen)
        keep = x[np.abs(x @ u) <= t]
        drawn += CHUNK
        accepted += len(keep)
        kept.append(keep)
        if drawn >= probe and accepted < min_rate * drawn:
            raise BandStarvationError(
                f"band acceptance {accepted / drawn:.3g} below {min_rate:g} (t={t!r})"
            )
    return np.concatenate(kept)[:n], accepted / drawn


def _batch_means(values, batches=20):
    means = np.array([b.mean() for b in np.array_split(values, batches)])
    return float(values.mean()), float(means.std(ddof=1) / math.sqrt(batches))


def verify_conditional_variance(p, model, u, a, t, n, stream, r=None, C0=1.0):
    """Band-conditional ``E[(a.x)^2] <= f5 (r^2 + t^2)`` with ``r = |u - a|`` by default."""
    u = _unit(u, "u")
    a = np.asarray(a, dtype=float)
    if np.linalg.norm(a) > 1.0 + 1e-12:
        raise PreconditionError("|a| must be <= 1")
    gap = float(np.linalg.norm(u - a))
    r = gap if r is None else r
    if gap > r + 1e-12:
        raise PreconditionError(f"|u - a| = {gap!r} exceeds r = {r!r}")
    d = B.band_bounds(p)[2]
    if not 0.0 < t <= d:
        raise PreconditionError(f"t must lie in (0, d={d!r}], got {t!r}")
    f5 = B.variance_bound_f5(p, C0)
    x, rate = _band_sample(model, u, t, n, stream)
    est, se = _batch_means((x @ a) ** 2)
    return _report("conditional_variance", est, se, n, f5 * (r * r + t * t), LE,
                   {"s": p.s, "n": p.n, "t": t, "r": r, "acceptance": rate})


def verify_tail(p, model, t_grid, c_knob, n, stream):
    """``Pr[|x| > sqrt(n) t] <= tail_bound`` at each ``t >= 16`` (one shared sample).

    For :class:`Pareto1D` an extra exact row compares the closed-form tail.
    """
    if any(t < 16.0 for t in t_grid):
        raise PreconditionError("tail checks need t >= 16")
    radius = math.sqrt(p.n) * np.asarray(t_grid, dtype=float)
    counts = np.zeros(len(t_grid), dtype=np.int64)
    for x in _draw(model, n, stream):
        norm = np.linalg.norm(x, axis=1)
        counts += np.count_nonzero(norm[:, None] > radius[None, :], axis=0)
    out = []
    for t, c in zip(t_grid, counts):
        est, se = _proportion(int(c), n)
        bound = B.tail_bound(p, t, c_knob)
        out.append(_report("tail", est, se, n, bound, LE, {"s": p.s, "n": p.n, "t": t, "c": c_knob}))
        if isinstance(model, Pareto1D):
            exact = float(model.sf(math.sqrt(p.n) * t))
            out.append(_report("tail_exact", exact, 0.0, 0, bound, LE, {"s": p.s, "n": p.n, "t": t, "c": c_knob}))
    return out


def verify_pareto_tail(model, t_grid, n, stream):
    """Monte Carlo ``Pr[X > t]`` against the exact Pareto tail (one shared sample).

    ``z_margin`` is ``3 - |estimate - exact| / std_error``.
    """
    if not isinstance(model, Pareto1D):
        raise PreconditionError("exact tail checks apply to Pareto1D")
    if any(t < model.start for t in t_grid):
        raise PreconditionError(f"t must be at least the support start {model.start!r}")
    t = np.asarray(t_grid, dtype=float)
    counts = np.zeros(len(t), dtype=np.int64)
    for x in _draw(model, n, stream):
        counts += np.count_nonzero(x[:, 0][:, None] > t[None, :], axis=0)
    out = []
    for ti, c in zip(t_grid, counts):
        est, se = _proportion(int(c), n)
        out.append(_report("pareto_tail", est, se, n, float(model.sf(ti)), EQ, {"s": model.s, "n": 1, "t": ti}))
    return out


def _center(model):
    if isinstance(model, Pareto1D):
        return np.array([model.mean()])
    return np.zeros(model.dim)


def verify_centroid_halfspace(p, model, w, n, stream):
    """``Pr[w.(x - mean) >= 0] >= (1+g)^(-1/g)`` with ``g = s/(1+ns)``."""
    w = _unit(w, "w")
    bound = B.halfspace_mass_lower(B.marginal_gamma(p.s, p.n))
    shift = float(_center(model) @ w)
    return mc_probability(model, lambda x: x @ w >= shift, n, stream, bound, GE,
                          "centroid_halfspace", {"s": p.s, "n": p.n})


def verify_density_envelope(p, model, count, stream):
    """Model density below ``beta1 (1 - s beta2 |x|)^(1/s)`` at sampled points."""
    env = B.density_envelope(p.n, p.s)
    x = model.sample(count, as_generator(stream))
    r = np.linalg.norm(x, axis=1)
    f = model.pdf(x if model.dim > 1 else x[:, 0])
    cap = np.array([env(ri, p.s) for ri in r])
    worst = float(np.max(f - cap))
    verdict = "pass" if worst <= 1e-12 else "fail"
    return McReport("density_envelope", worst, 0.0, count, 1e-12, LE, verdict,
                    math.inf if verdict == "pass" else -math.inf, {"s": p.s, "n": p.n})


def verify_density_range_1d(model):
    """Symmetric1D: peak ``<= (1+s)/(1+3s)`` and ``g(0) >= sqrt(1/(3 (1+g)^(3/g)))``.

    Here ``g = s/(1+s)``; both rows are exact.
    """
    if not isinstance(model, Symmetric1D):
        raise PreconditionError("density range checks apply to Symmetric1D")
    s = model.s
    peak = float(model.pdf(0.0))
    upper = (1.0 + s) / (1.0 + 3.0 * s)
    g = B.marginal_gamma(s, 1)
    lower = math.sqrt(1.0 / 3.0) * B.halfspace_mass_lower(g) ** 1.5
    return [
        _report("density_peak_upper", peak, 0.0, 0, upper, LE, {"s": s, "n": 1}),
        _report("density_zero_lower", peak, 0.0, 0, lower, GE, {"s": s, "n": 1}),
    ]


@dataclass
class GammaConcavityReport:
    gamma: float
    ok: bool
    worst_excess: float
    first_violation: tuple = None


def check_gamma_concavity(fn, gamma, grid, slack=1e-9):
    """Midpoint check that ``fn^gamma`` is convex (``gamma < 0``) on a uniform grid.

    ``fn`` may be a callable or an array of values on ``grid``. At
    ``gamma = 0`` the check is log-concavity. Every triple
    ``(i - k, i, i + k)`` is tested; the slack is relative to the chord.
    """
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(fn if not callable(fn) else [fn(g) for g in grid], dtype=float)
    if values.shape != grid.shape:
        raise PreconditionError("fn values must match the grid")
    if not np.all(values > 0.0):
        raise PreconditionError("fn must be positive on the grid")
    if gamma > 0.0:
        raise PreconditionError(f"gamma must be <= 0, got {gamma!r}")
    steps = np.diff(grid)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise PreconditionError("grid must be uniformly spaced")
    h = np.log(values) if gamma == 0.0 else values**gamma
    sign = -1.0 if gamma == 0.0 else 1.0
    worst, first = -math.inf, None
    size = len(grid)
    for k in range(1, (size - 1) // 2 + 1):
        mid = h[k:size - k]
        chord = 0.5 * (h[: size - 2 * k] + h[2 * k:])
        excess = sign * (mid - chord) - slack * np.maximum(1.0, np.abs(chord))
        j = int(np.argmax(excess))
        if excess[j] > worst:
            worst = float(excess[j])
        if first is None and excess[j] > 0.0:
            first = (j, j + k, j + 2 * k)
    return GammaConcavityReport(gamma, first is None, worst, first)


@dataclass
class ReflectionReport:
    K: float
    ratios: list
    skipped: int
    worst_ratio: float
    verdict: str


def _random_units(gen, count, dim):
    v = gen.standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def reflection_experiment(p, model, trials, n_samples, stream, normals=None, K=None):
    """Worst ``Pr[-R] / Pr[R]`` over cones ``R`` cut by three halfspaces.

    One shared sample serves every region. Regions with fewer than 10
    hits are skipped. The verdict fails only when a ratio's lower
    three-standard-error limit (delta method on the log ratio) exceeds K.
    """
    if p.n < 3:
        raise RegimeError("reflection experiment needs n >= 3", "n >= 3")
    K = B.baum_reflection_K(p) if K is None else K
    gen = as_generator(stream)
    x = model.sample(n_samples, gen)
    if normals is None:
        normals = [_random_units(gen, 3, p.n) for _ in range(trials)]
    ratios, skipped, verdict = [], 0, "pass"
    for w in normals:
        proj = x @ np.asarray(w, dtype=float).T
        inside = int(np.count_nonzero(np.all(proj >= 0.0, axis=1)))
        mirror = int(np.count_nonzero(np.all(proj <= 0.0, axis=1)))
        if inside < 10:
            skipped += 1
            continue
        ratio = mirror / inside
        ratios.append(ratio)
        if mirror > 0:
            low = ratio * math.exp(-Z_CRIT * math.sqrt(1.0 / mirror + 1.0 / inside))
            if low > K:
                verdict = "fail"
            elif ratio > K and verdict == "pass":
                verdict = "inconclusive"
    worst = max(ratios) if ratios else math.nan
    return ReflectionReport(K, ratios, skipped, worst, verdict)


@dataclass
class PackingReport:
    survivors: int
    lower_bound: int
    n_candidates: int
    eps: float
    holds: bool
    vectors: np.ndarray = None


def packing_experiment(p, model, eps, n_candidates, n_mc, stream, c=1.0):
    """Greedy eps-separated subset of random unit vectors under MC ``d_D``.

    ``d_D`` for every pair comes from one shared sample. Pairs are scanned
    in index order and the later endpoint of each eps-close pair is dropped.
    """
    if not eps > 0.0:
        raise PreconditionError(f"eps must be positive, got {eps!r}")
    gen = as_generator(stream)
    w = _random_units(gen, n_candidates, p.n)
    x = model.sample(n_mc, gen)
    signs = np.where(x @ w.T >= 0.0, 1.0, -1.0)
    dist = 0.5 * (1.0 - signs.T @ signs / n_mc)
    alive = np.ones(n_candidates, dtype=bool)
    for i in range(n_candidates):
        if alive[i]:
            close = dist[i, i + 1:] < eps
            alive[i + 1:][close] = False
    survivors = int(alive.sum())
    lower = B.packing_lower_bound(p, eps, c)
    return PackingReport(survivors, lower, n_candidates, eps, survivors >= lower, w[alive])
