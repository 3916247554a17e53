"""Label oracles and learners.

Margin-based active learning in the realizable and adversarial-noise
models, the two-halfspace intersection learner, a passive VC baseline and
the disagreement-coefficient estimator. Every learner draws training
points from a ``draws`` child stream and measures error on fresh points
from an ``eval`` child stream.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .bounds import (
    Knobs,
    al_schedule,
    baum_reflection_K,
    baum_sizes,
    disagreement_coefficient_bound,
    disagreement_lower_f1,
    vc_sample_size,
)
from .errors import PreconditionError, StreamExhaustedError
from .optim import HingeProblem, find_consistent_halfspace, fit_quadratic_separator, minimize_hinge, quadratic_predict
from .rng import RngStream
from .verify import angle

log = logging.getLogger(__name__)

__all__ = [
    "LabelOracle",
    "IntersectionOracle",
    "query",
    "ErrorEstimate",
    "RoundRecord",
    "ALRunResult",
    "IntersectionHypothesis",
    "BaumResult",
    "PassiveResult",
    "CapacityRow",
    "CoefficientEstimate",
    "evaluate_error",
    "halfspace_error",
    "margin_al_realizable",
    "margin_al_adversarial",
    "baum_learn",
    "passive_baseline",
    "estimate_disagreement_coefficient",
]

REALIZABLE = "realizable"
ADVERSARIAL = "adversarial"
BOUNDARY = "boundary-proximal"
UNIFORM = "uniform"

EVAL_POINTS = 100_000
MAX_REJECTIONS = 10**8
FIRST_CHUNK = 4096
MAX_CHUNK = 1 << 18
Z_CRIT = 3.0

# margin histogram for the adversary's running quantile: log-spaced, ~1.2% bin ratio
_EDGES = np.concatenate([[0.0], np.geomspace(1e-12, 1e3, 3001), [np.inf]])


def _halfspace_labels(w, X):
    return np.where(X @ w >= 0.0, 1, -1)


def _unit(w, what):
    w = np.asarray(w, dtype=float).ravel()
    norm = np.linalg.norm(w)
    if not norm > 0.0 or not math.isfinite(norm):
        raise PreconditionError(f"{what} must be a non-zero finite vector")
    return w / norm


# ---------------------------------------------------------------------------
# oracles


class LabelOracle:
    """Labels ``sign(w* . x)``, optionally corrupted by a budgeted adversary.

    The adversary may flip at most ``eta`` times the number of points
    generated so far, checked at every prefix of the stream. Generated
    points are reported through :meth:`observe`; a queried point counts as
    generated. ``boundary-proximal`` flips a point when its true margin is
    below the running ``quantile``-level quantile of all generated
    margins. ``uniform`` flips with probability ``eta``.
    """

    def __init__(self, target, noise=REALIZABLE, eta=0.0, strategy=BOUNDARY, quantile=None, stream=None):
        self.target = _unit(target, "target")
        if noise not in (REALIZABLE, ADVERSARIAL):
            raise PreconditionError(f"noise must be realizable or adversarial, got {noise!r}")
        if noise == REALIZABLE:
            eta = 0.0
        if not 0.0 <= eta < 1.0:
            raise PreconditionError(f"eta must lie in [0, 1), got {eta!r}")
        if strategy not in (BOUNDARY, UNIFORM):
            raise PreconditionError(f"unknown adversary strategy {strategy!r}")
        if noise == ADVERSARIAL and strategy == BOUNDARY and not (quantile is not None and 0.0 < quantile < 1.0):
            raise PreconditionError("boundary-proximal flips need a quantile level in (0, 1)")
        if noise == ADVERSARIAL and strategy == UNIFORM and stream is None:
            raise PreconditionError("uniform flips need a random stream")
        self.noise = noise
        self.eta = float(eta)
        self.strategy = strategy
        self.quantile = quantile
        self._gen = None if stream is None else (stream.generator if isinstance(stream, RngStream) else stream)
        self.queries = 0
        self.flips = 0
        self.generated = 0
        self._hist = np.zeros(len(_EDGES) - 1, dtype=np.int64)

    @classmethod
    def realizable(cls, target):
        return cls(target)

    @classmethod
    def adversarial(cls, target, eta, strategy=BOUNDARY, quantile=None, stream=None):
        return cls(target, ADVERSARIAL, eta, strategy, quantile, stream)

    @property
    def _tracks_margins(self):
        return self.noise == ADVERSARIAL and self.strategy == BOUNDARY and self.eta > 0.0

    def observe(self, X):
        """Record generated points that were not queried."""
        X = np.atleast_2d(X)
        if len(X) == 0:
            return
        self.generated += len(X)
        if self._tracks_margins:
            self._hist += np.bincount(self._bins(np.abs(X @ self.target)), minlength=len(self._hist))

    def _bins(self, margins):
        return np.searchsorted(_EDGES, margins, side="right") - 1

    def threshold(self):
        """Upper bin edge of the running margin quantile, 0 before any data."""
        total = int(self._hist.sum())
        if total == 0:
            return 0.0
        idx = int(np.searchsorted(np.cumsum(self._hist), self.quantile * total))
        return float(_EDGES[min(idx + 1, len(_EDGES) - 1)])

    def clean(self, X):
        return _halfspace_labels(self.target, np.atleast_2d(X))

    def query(self, x):
        x = np.asarray(x, dtype=float).ravel()
        margin = float(x @ self.target)
        label = 1 if margin >= 0.0 else -1
        flip = False
        if self.noise == ADVERSARIAL and self.eta > 0.0:
            if self.strategy == BOUNDARY:
                wants = abs(margin) < self.threshold()
            else:
                wants = self._gen.random() < self.eta
            flip = wants and (self.flips + 1) <= self.eta * (self.generated + 1)
        self.observe(x[None, :])
        self.queries += 1
        if flip:
            self.flips += 1
            return -label
        return label


class IntersectionOracle:
    """Noise-free labels of ``H_u & H_v``: +1 iff ``u.x >= 0`` and ``v.x >= 0``."""

    def __init__(self, u, v):
        self.u = _unit(u, "u")
        self.v = _unit(v, "v")
        self.queries = 0
        self.generated = 0

    def observe(self, X):
        self.generated += len(np.atleast_2d(X))

    def clean(self, X):
        X = np.atleast_2d(X)
        return np.where((X @ self.u >= 0.0) & (X @ self.v >= 0.0), 1, -1)

    def query(self, x):
        x = np.asarray(x, dtype=float).ravel()
        self.observe(x[None, :])
        self.queries += 1
        return int(self.clean(x[None, :])[0])


def query(oracle, x):
    """Label one point through ``oracle``; the point counts as generated."""
    return oracle.query(x)


# ---------------------------------------------------------------------------
# sampling


class _Source:
    """Filtered, labelled draws in stream order.

    Rejected points before an accepted one are reported to the oracle
    before it is queried, so budget checks see the exact stream prefix.
    Points of a chunk after the last accepted one are discarded unseen.
    """

    def __init__(self, model, oracle, stream, max_rejections=MAX_REJECTIONS):
        self.model = model
        self.oracle = oracle
        self.gen = stream.generator
        self.max_rejections = max_rejections

    def take(self, count, accept=None):
        X_out, y_out = [], []
        examined = rejected = 0
        chunk = FIRST_CHUNK
        while len(X_out) < count:
            X = self.model.sample(chunk, self.gen)
            idx = np.arange(len(X)) if accept is None else np.flatnonzero(accept(X))
            idx = idx[: count - len(X_out)]
            start = 0
            for i in idx:
                self.oracle.observe(X[start:i])
                y_out.append(self.oracle.query(X[i]))
                X_out.append(X[i])
                start = i + 1
            used = start if len(X_out) == count else len(X)
            if used > start:
                self.oracle.observe(X[start:used])
            examined += used
            rejected += used - len(idx)
            if rejected > self.max_rejections:
                raise StreamExhaustedError(
                    f"filter rejected {rejected} points while collecting {count} (accepted {len(X_out)})"
                )
            rate = max(len(X_out), 1) / examined
            chunk = int(min(MAX_CHUNK, max(FIRST_CHUNK, math.ceil(1.2 * (count - len(X_out)) / rate))))
        dim = getattr(self.model, "dim", 1)
        X_out = np.array(X_out).reshape(-1, dim)
        return X_out, np.array(y_out, dtype=float), rejected


def _band(w, b):
    return lambda X: np.abs(X @ w) < b


def _check_model(p, model):
    if getattr(model, "dim", 1) != p.n:
        raise PreconditionError(f"model dimension {getattr(model, 'dim', 1)} does not match n = {p.n}")


def _as_stream(stream):
    if not isinstance(stream, RngStream):
        raise PreconditionError("learners need an RngStream so training and evaluation draws stay disjoint")
    return stream


# ---------------------------------------------------------------------------
# error measurement


@dataclass(frozen=True)
class ErrorEstimate:
    """Monte Carlo disagreement rate with its binomial standard error."""

    error: float
    std_error: float
    n_points: int

    def within(self, eps, z=Z_CRIT):
        """True when the estimate is at most ``eps`` up to ``z`` standard errors."""
        return self.error <= eps + z * self.std_error


def evaluate_error(model, predict, truth, stream, n_points=EVAL_POINTS):
    """Fraction of fresh points where ``predict`` and ``truth`` disagree."""
    if n_points < 1:
        raise PreconditionError("n_points must be positive")
    gen = stream.generator if isinstance(stream, RngStream) else stream
    wrong = 0
    left = n_points
    while left > 0:
        X = model.sample(min(left, MAX_CHUNK), gen)
        wrong += int(np.count_nonzero(predict(X) != truth(X)))
        left -= len(X)
    e = wrong / n_points
    return ErrorEstimate(e, math.sqrt(e * (1.0 - e) / n_points), n_points)


def halfspace_error(model, w, w_star, stream, n_points=EVAL_POINTS):
    w, w_star = np.asarray(w, dtype=float), np.asarray(w_star, dtype=float)
    return evaluate_error(model, lambda X: _halfspace_labels(w, X), lambda X: _halfspace_labels(w_star, X),
                          stream, n_points)


# ---------------------------------------------------------------------------
# margin-based active learning

NAN = float("nan")


@dataclass(frozen=True)
class RoundRecord:
    """One round. ``band`` is the band the round's working set came from
    (``inf`` for the first round) and ``labels`` the labels it added."""

    k: int
    band: float
    labels: int
    rejected: int
    working_set: int
    angle: float
    flips: int
    tau: float = NAN
    radius: float = NAN
    kappa: float = NAN
    hinge: float = NAN
    v_norm: float = NAN
    renormalised: bool = False
    band_error: float = NAN
    band_error_se: float = NAN


@dataclass(frozen=True)
class ALRunResult:
    model: str
    w: np.ndarray
    rounds: tuple
    total_labels: int
    error: ErrorEstimate
    schedule: object
    flips: int
    generated: int

    @property
    def labels_per_round(self):
        return tuple(r.labels for r in self.rounds)

    @property
    def angles(self):
        return tuple(r.angle for r in self.rounds)


def _initial(p, model, oracle, eps, delta, knobs, stream, kind):
    _check_model(p, model)
    stream = _as_stream(stream)
    if oracle.target.shape != (p.n,):
        raise PreconditionError(f"target has dimension {oracle.target.shape[0]}, expected {p.n}")
    sched = al_schedule(p, eps, delta, knobs, kind)
    return stream, sched, _Source(model, oracle, stream.child("draws"))


def margin_al_realizable(p, model, oracle, eps, delta, stream, knobs=None, solver="lp", eval_points=EVAL_POINTS):
    """Margin-based active learning with a growing working set.

    Round k fits a unit halfspace consistent with every label so far, then
    (except after the last round) labels ``m_{k+1}`` points from the band
    ``|w_k . x| < b_k``.
    """
    if oracle.noise != REALIZABLE:
        raise PreconditionError("margin_al_realizable needs a realizable oracle")
    stream, sched, source = _initial(p, model, oracle, eps, delta, knobs, stream, REALIZABLE)
    X, y, rejected = source.take(sched.m[0])
    band, added = math.inf, len(y)
    WX, Wy = [X], [y]
    rounds = []
    w = None
    for k in range(1, sched.T + 1):
        w = find_consistent_halfspace(np.vstack(WX), np.concatenate(Wy), method=solver)
        size = sum(len(a) for a in Wy)
        rounds.append(RoundRecord(k, band, added, rejected, size, angle(w, oracle.target), oracle.flips))
        if k < sched.T:
            band = sched.b[k]
            X, y, rejected = source.take(sched.m[k], _band(w, band))
            added = len(y)
            WX.append(X)
            Wy.append(y)
    error = halfspace_error(model, w, oracle.target, stream.child("eval"), eval_points)
    total = sum(r.labels for r in rounds)
    return ALRunResult(REALIZABLE, w, tuple(rounds), total, error, sched, oracle.flips, oracle.generated)


def margin_al_adversarial(p, model, oracle, eps, delta, stream, knobs=None, band_eval=0,
                          eval_points=EVAL_POINTS, hinge_method="cutting-plane"):
    """Margin-based active learning with hinge-loss localisation.

    Round k minimises the ``tau_k`` hinge loss over the current working set
    within ``ball(w_{k-1}, r_k) & ball(0, 1)`` to accuracy ``kappa_k / 8``,
    normalises, clears the working set and refills it from the band
    ``|w_k . x| < b_k``. The first search ball is centred at the origin.
    With ``band_eval > 0`` each round also measures the error of ``w_k``
    conditioned on the band its working set came from.
    """
    if knobs is None:
        knobs = Knobs()
    if not oracle.eta < knobs.c0 * eps:
        raise PreconditionError(f"noise rate {oracle.eta!r} must be below c0*eps = {knobs.c0 * eps!r}")
    stream, sched, source = _initial(p, model, oracle, eps, delta, knobs, stream, ADVERSARIAL)
    X, y, rejected = source.take(sched.m[0])
    band = math.inf
    w_prev = np.zeros(p.n)
    rounds = []
    for k in range(1, sched.T + 1):
        tau, radius, kappa = sched.tau[k - 1], sched.r[k - 1], sched.kappa[k - 1]
        prob = HingeProblem(X, y, tau, w_prev, radius, kappa / 8.0)
        v = minimize_hinge(prob, method=hinge_method)
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            raise PreconditionError(f"round {k}: hinge minimiser is the zero vector")
        if norm < 0.5:
            log.info("round %d: |v_k| = %.3g < 1/2, renormalising", k, norm)
        w = v / norm
        be = bse = NAN
        if band_eval > 0:
            accept = None if k == 1 else _band(w_prev, band)
            est = _band_error(model, w, oracle.target, accept, band_eval, stream.child("band-eval", k))
            be, bse = est.error, est.std_error
        rounds.append(RoundRecord(
            k, band, len(y), rejected, len(y), angle(w, oracle.target), oracle.flips,
            tau, radius, kappa, prob.loss(v), norm, norm < 0.5, be, bse,
        ))
        w_prev = w
        if k < sched.T:
            band = sched.b[k]
            X, y, rejected = source.take(sched.m[k], _band(w, band))
    error = halfspace_error(model, w_prev, oracle.target, stream.child("eval"), eval_points)
    total = sum(r.labels for r in rounds)
    return ALRunResult(ADVERSARIAL, w_prev, tuple(rounds), total, error, sched, oracle.flips, oracle.generated)


def _band_error(model, w, w_star, accept, count, stream):
    gen = stream.generator
    wrong = seen = 0
    rejected = 0
    while seen < count:
        X = model.sample(MAX_CHUNK if accept is not None else count - seen, gen)
        if accept is not None:
            keep = accept(X)
            rejected += len(X) - int(keep.sum())
            X = X[keep][: count - seen]
            if rejected > MAX_REJECTIONS:
                raise StreamExhaustedError("band evaluation starved")
        wrong += int(np.count_nonzero(_halfspace_labels(w, X) != _halfspace_labels(w_star, X)))
        seen += len(X)
    e = wrong / seen
    return ErrorEstimate(e, math.sqrt(e * (1.0 - e) / seen), seen)


# ---------------------------------------------------------------------------
# passive baseline


@dataclass(frozen=True)
class PassiveResult:
    w: np.ndarray
    labels: int
    error: ErrorEstimate


def passive_baseline(p, model, oracle, eps, delta, stream, knobs=None, solver="lp", eval_points=EVAL_POINTS):
    """Label a VC-sized i.i.d. sample and return a consistent halfspace."""
    if oracle.noise != REALIZABLE:
        raise PreconditionError("passive_baseline needs a realizable oracle")
    if knobs is None:
        knobs = Knobs()
    _check_model(p, model)
    stream = _as_stream(stream)
    m = vc_sample_size(eps, delta, p.n, knobs.C_vc)
    X, y, _ = _Source(model, oracle, stream.child("draws")).take(m)
    w = find_consistent_halfspace(X, y, method=solver)
    return PassiveResult(w, m, halfspace_error(model, w, oracle.target, stream.child("eval"), eval_points))


# ---------------------------------------------------------------------------
# intersections of two halfspaces


@dataclass(frozen=True)
class IntersectionHypothesis:
    """``h(x) = sign(x' W x)`` inside ``H' = {h'.x >= 0}``, -1 outside.

    With ``h_prime`` set to ``None`` every point is labelled -1.
    """

    h_prime: object
    W: object

    def inside(self, X):
        X = np.atleast_2d(X)
        if self.h_prime is None:
            return np.zeros(len(X), dtype=bool)
        return X @ self.h_prime >= 0.0

    def predict(self, X):
        X = np.atleast_2d(X)
        out = np.full(len(X), -1)
        mask = self.inside(X)
        if mask.any():
            out[mask] = quadratic_predict(self.W, X[mask])
        return out


@dataclass(frozen=True)
class BaumResult:
    hypothesis: IntersectionHypothesis
    branch: str
    labels: int
    positives: int
    sizes: tuple
    K: float
    error: ErrorEstimate
    containment: bool
    positives_consistent: bool


def baum_learn(p, model, targets, eps, delta, stream, knobs=None, K=None, solver="lp", eval_points=EVAL_POINTS):
    """Learn ``H_u & H_v`` with a covering halfspace and a quadratic separator.

    ``H'`` is a consistent halfspace separating the positives from their
    reflections through the origin, so it contains every positive.
    """
    if knobs is None:
        knobs = Knobs()
    p.require_geometry(min_n=3)
    _check_model(p, model)
    stream = _as_stream(stream)
    u, v = targets
    oracle = IntersectionOracle(u, v)
    if K is None:
        K = baum_reflection_K(p)
    m1, m2, m3 = baum_sizes(eps, delta, p.n, K, knobs.C_vc)
    source = _Source(model, oracle, stream.child("draws"))
    X3, y3, _ = source.take(m3)
    P = X3[y3 > 0]
    r = len(P)
    if r < m2:
        hyp = IntersectionHypothesis(None, None)
        branch, containment, consistent = "all-negative", True, True
    else:
        h_prime = find_consistent_halfspace(np.vstack([P, -P]), np.concatenate([np.ones(r), -np.ones(r)]),
                                            method=solver)
        containment = bool(np.all(P @ h_prime >= 0.0))
        if not containment:
            log.warning("covering halfspace misses %d positives", int(np.sum(P @ h_prime < 0.0)))
        S, yS, _ = source.take(m1, lambda X: X @ h_prime >= 0.0)
        W = fit_quadratic_separator(S, yS, method=solver)
        hyp = IntersectionHypothesis(h_prime, W)
        branch = "composite"
        consistent = bool(np.all(hyp.predict(S[yS > 0]) == 1))
    error = evaluate_error(model, hyp.predict, oracle.clean, stream.child("eval"), eval_points)
    return BaumResult(hyp, branch, oracle.queries, r, (m1, m2, m3), K, error, containment, consistent)


# ---------------------------------------------------------------------------
# disagreement coefficient


@dataclass(frozen=True)
class CapacityRow:
    r: float
    angle: float
    probability: float
    std_error: float
    capacity: float
    capacity_se: float
    saturated: bool


@dataclass(frozen=True)
class CoefficientEstimate:
    rows: tuple
    theta: float
    theta_se: float
    eps: float
    bound: float
    holds: bool


def estimate_disagreement_coefficient(p, model, w_star, r_grid, n_mc, stream, knobs=None, c=1.0, eps=None):
    """Capacity ``Pr[DIS(ball(w*, r))] / r`` over a grid via the angular surrogate.

    ``DIS`` is replaced by ``{x : |w*.x| <= |x| sin(r / f1)}``, a superset,
    and is everything once ``r / f1 >= pi/2``. Every radius shares one
    sample. ``eps`` (default: smallest radius) sets the comparison bound.
    """
    if knobs is None:
        knobs = Knobs()
    _check_model(p, model)
    r_grid = np.asarray(r_grid, dtype=float)
    if r_grid.size == 0 or not np.all(r_grid > 0.0):
        raise PreconditionError("r_grid must be non-empty and positive")
    if n_mc < 1000:
        raise PreconditionError("n_mc must be at least 1000")
    w_star = _unit(w_star, "w_star")
    f1 = disagreement_lower_f1(p, knobs.c_f1)
    angles = r_grid / f1
    sat = angles >= math.pi / 2
    sines = np.where(sat, 1.0, np.sin(np.minimum(angles, math.pi / 2)))
    gen = stream.generator if isinstance(stream, RngStream) else stream
    hits = np.zeros(len(r_grid), dtype=np.int64)
    left = n_mc
    while left > 0:
        X = model.sample(min(left, MAX_CHUNK), gen)
        margin = np.abs(X @ w_star)
        norm = np.linalg.norm(X, axis=1)
        hits += (margin[None, :] <= norm[None, :] * sines[:, None]).sum(axis=1)
        left -= len(X)
    rows = []
    for r, a, s_, h in zip(r_grid, angles, sat, hits):
        prob = 1.0 if s_ else h / n_mc
        se = 0.0 if s_ else math.sqrt(prob * (1.0 - prob) / n_mc)
        rows.append(CapacityRow(float(r), float(a), prob, se, prob / r, se / r, bool(s_)))
    best = max(rows, key=lambda row: row.capacity)
    if eps is None:
        eps = float(r_grid.min())
    bound = disagreement_coefficient_bound(p, eps, c)
    holds = best.capacity - Z_CRIT * best.capacity_se <= bound
    return CoefficientEstimate(tuple(rows), best.capacity, best.capacity_se, eps, bound, holds)
