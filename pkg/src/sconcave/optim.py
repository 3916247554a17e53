"""Convex kernels for the learners.

Hinge-loss minimisation over ``ball(center, r) & ball(0, 1)``, Euclidean
projection onto that intersection, consistent-halfspace finding and the
quadratic lift used for the XOR step of the intersection learner.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix, hstack, identity, vstack

from .errors import InfeasibleError, NonSeparableError, PreconditionError

log = logging.getLogger(__name__)

__all__ = [
    "HingeProblem",
    "hinge_loss",
    "project_two_balls",
    "minimize_hinge",
    "subgradient_steps",
    "find_consistent_halfspace",
    "lift_quadratic",
    "fit_quadratic_separator",
    "quadratic_predict",
]


def _labels(y):
    y = np.asarray(y, dtype=float)
    if not np.all(np.abs(y) == 1.0):
        raise PreconditionError("labels must be -1 or +1")
    return y


def hinge_loss(w, X, y, tau):
    """Mean of ``max(0, 1 - y (w.x) / tau)`` over the labelled set."""
    if not tau > 0.0:
        raise PreconditionError(f"tau must be positive, got {tau!r}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    margins = np.asarray(y, dtype=float) * (X @ np.asarray(w, dtype=float)) / tau
    return float(np.maximum(0.0, 1.0 - margins).mean())


def _check_feasible(center, radius):
    if radius < 0.0:
        raise PreconditionError(f"radius must be non-negative, got {radius!r}")
    if np.linalg.norm(center) > 1.0 + radius:
        raise InfeasibleError(
            f"ball(center, {radius!r}) misses the unit ball (|center| = {np.linalg.norm(center)!r})"
        )


def _project_ball(w, center, radius):
    gap = w - center
    norm = np.linalg.norm(gap)
    if norm <= radius:
        return w
    return center + gap * (radius / norm)


def _dykstra(w, center, radius, iterations, tol):
    origin = np.zeros_like(w)
    x = w.copy()
    p = np.zeros_like(w)
    q = np.zeros_like(w)
    for _ in range(iterations):
        y = _project_ball(x + p, center, radius)
        p = x + p - y
        nxt = _project_ball(y + q, origin, 1.0)
        q = y + q - nxt
        moved = np.linalg.norm(nxt - x)
        x = nxt
        if moved <= tol:
            break
    return x


def _exact_two_balls(w, center, radius):
    """Closed-form projection: a single-ball projection or the nearest rim point."""
    pa = _project_ball(w, center, radius)
    if np.linalg.norm(pa) <= 1.0:
        return pa
    pb = _project_ball(w, np.zeros_like(w), 1.0)
    if np.linalg.norm(pb - center) <= radius:
        return pb
    # both spheres are active: nearest point of their intersection circle
    cn = np.linalg.norm(center)
    axis = center / cn
    h = (1.0 + cn * cn - radius * radius) / (2.0 * cn)
    rho = math.sqrt(max(0.0, 1.0 - h * h))
    perp = w - (w @ axis) * axis
    pn = np.linalg.norm(perp)
    if pn == 0.0:
        # every rim point is equally close; take any direction orthogonal to the axis
        k = int(np.argmin(np.abs(axis)))
        perp = -axis[k] * axis
        perp[k] += 1.0
        pn = np.linalg.norm(perp)
    return h * axis + rho * perp / pn


def project_two_balls(w, center, radius, method="exact", iterations=200, tol=1e-12):
    """Euclidean projection onto ``ball(center, radius) & ball(0, 1)``.

    ``method="exact"`` uses the two-sphere geometry. ``method="dykstra"``
    runs Dykstra's alternating projections for at most ``iterations``
    rounds or until a step moves less than ``tol``.
    """
    w = np.asarray(w, dtype=float)
    center = np.asarray(center, dtype=float)
    _check_feasible(center, radius)
    if np.linalg.norm(w) <= 1.0 and np.linalg.norm(w - center) <= radius:
        return w.copy()
    if method == "exact":
        return _exact_two_balls(w, center, radius)
    if method == "dykstra":
        return _dykstra(w, center, radius, iterations, tol)
    raise PreconditionError(f"unknown method {method!r}")


@dataclass(frozen=True)
class HingeProblem:
    """Working set ``(X, y)``, hinge scale, search ball and additive accuracy."""

    X: np.ndarray
    y: np.ndarray
    tau: float
    center: np.ndarray
    radius: float
    accuracy: float

    def __post_init__(self):
        if not self.tau > 0.0:
            raise PreconditionError(f"tau must be positive, got {self.tau!r}")
        if not self.radius >= 0.0:
            raise PreconditionError(f"radius must be non-negative, got {self.radius!r}")
        if not self.accuracy > 0.0:
            raise PreconditionError(f"accuracy must be positive, got {self.accuracy!r}")
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if len(X) == 0:
            raise PreconditionError("working set is empty")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", _labels(self.y))
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    def loss(self, w):
        return hinge_loss(w, self.X, self.y, self.tau)


def subgradient_steps(problem):
    """``T_opt = ceil((G D / accuracy)^2)`` with ``G = max|x| / tau``, ``D = 2 min(1, r)``."""
    G = float(np.linalg.norm(problem.X, axis=1).max()) / problem.tau
    D = 2.0 * min(1.0, problem.radius)
    return max(1, math.ceil((G * D / problem.accuracy) ** 2)), G, D


def _subgradient(problem, max_steps):
    steps, G, D = subgradient_steps(problem)
    if steps > max_steps:
        raise PreconditionError(
            f"subgradient method needs {steps} steps for the requested accuracy (cap {max_steps})"
        )
    X, y, tau = problem.X, problem.y, problem.tau
    w = project_two_balls(problem.center, problem.center, problem.radius)
    eta = D / (G * math.sqrt(steps)) if G > 0.0 else 0.0
    total = np.zeros_like(w)
    for _ in range(steps):
        active = y * (X @ w) < tau
        grad = -(y[active, None] * X[active]).sum(axis=0) / (tau * len(y))
        w = project_two_balls(w - eta * grad, problem.center, problem.radius)
        total += w
    return project_two_balls(total / steps, problem.center, problem.radius)


def _cutting_plane(problem, max_rounds):
    """LP relaxation with ball cuts; stops once projection certifies the gap.

    The LP over a box containing the feasible set bounds the optimum from
    below. Projecting its minimiser onto the feasible set gives a feasible
    point; when that point's loss is within ``accuracy`` of the LP value
    the additive guarantee holds exactly. Otherwise tangent cuts at the
    violated balls are added and the LP is re-solved.
    """
    X, y, tau = problem.X, problem.y, problem.tau
    c, r = problem.center, problem.radius
    m, n = X.shape
    cost = np.concatenate([np.zeros(n), np.full(m, 1.0 / m)])
    rows = hstack([csr_matrix(-(y[:, None] * X) / tau), -identity(m, format="csr")]).tocsr()
    rhs = -np.ones(m)
    lo = np.maximum(-1.0, c - r)
    hi = np.minimum(1.0, c + r)
    bounds = [(lo[j], hi[j]) for j in range(n)] + [(0.0, None)] * m
    cuts, cut_rhs = [], []
    best, best_loss = None, math.inf
    for _ in range(max_rounds):
        a_ub = rows if not cuts else vstack([rows, csr_matrix(np.array(cuts))]).tocsr()
        res = linprog(cost, A_ub=a_ub, b_ub=np.concatenate([rhs, cut_rhs]), bounds=bounds, method="highs")
        if res.status != 0:
            raise InfeasibleError(f"hinge LP failed: {res.message}")
        w = res.x[:n]
        v = project_two_balls(w, c, r)
        value = problem.loss(v)
        if value < best_loss:
            best, best_loss = v, value
        if best_loss - res.fun <= problem.accuracy:
            return best
        for cc, rr in ((np.zeros(n), 1.0), (c, r)):
            gap = w - cc
            norm = np.linalg.norm(gap)
            if norm > rr:
                g = gap / norm
                cuts.append(np.concatenate([g, np.zeros(m)]))
                cut_rhs.append(rr + g @ cc)
    log.warning("hinge cutting planes stopped after %d rounds above the target gap", max_rounds)
    return best


def minimize_hinge(problem, method="cutting-plane", max_rounds=500, max_steps=1_000_000):
    """Return ``v`` in the feasible set with loss within ``accuracy`` of the minimum.

    ``method="cutting-plane"`` certifies the gap against an LP lower bound.
    ``method="subgradient"`` runs averaged projected subgradient descent
    for the a-priori ``T_opt`` steps and refuses when ``T_opt > max_steps``.
    """
    _check_feasible(problem.center, problem.radius)
    if problem.radius == 0.0:
        return problem.center.copy()
    if method == "cutting-plane":
        return _cutting_plane(problem, max_rounds)
    if method == "subgradient":
        return _subgradient(problem, max_steps)
    raise PreconditionError(f"unknown method {method!r}")


def _max_margin(Xn, y):
    """Max-margin LP: maximise t with ``y (w.x) >= t`` and ``|w|_inf <= 1``."""
    m, n = Xn.shape
    cost = np.zeros(n + 1)
    cost[-1] = -1.0
    a_ub = np.hstack([-(y[:, None] * Xn), np.ones((m, 1))])
    bounds = [(-1.0, 1.0)] * n + [(None, 1.0)]
    res = linprog(cost, A_ub=a_ub, b_ub=np.zeros(m), bounds=bounds, method="highs")
    if res.status != 0:
        raise NonSeparableError(f"max-margin LP failed: {res.message}")
    return res.x[:n], -res.fun


def _perceptron(Xn, y, w, cap):
    """Normalised perceptron, always correcting the worst violation."""
    for _ in range(cap):
        margins = y * (Xn @ w)
        i = int(np.argmin(margins))
        if margins[i] > 0.0:
            return w
        w = w + y[i] * Xn[i]
    raise NonSeparableError(f"perceptron hit the {cap}-update cap")


def find_consistent_halfspace(X, y, method="lp", cap=1_000_000):
    """Unit ``w`` with ``y (w.x) > 0`` on every labelled point.

    The default solves the max-margin LP on unit-normalised points, which
    also certifies non-separability. Points at the origin are ignored.
    ``method="perceptron"`` runs the normalised perceptron from zero.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = _labels(y)
    norms = np.linalg.norm(X, axis=1)
    keep = norms > 0.0
    Xn = X[keep] / norms[keep, None]
    y = y[keep]
    if len(y) == 0:
        w = np.zeros(X.shape[1])
        w[0] = 1.0
        return w
    if method == "lp":
        w, margin = _max_margin(Xn, y)
        if not margin > 0.0:
            raise NonSeparableError(f"no consistent halfspace (max margin {margin:.3g})")
        if np.min(y * (Xn @ w)) <= 0.0:
            # solver tolerance left a boundary point; finish with perceptron steps
            w = _perceptron(Xn, y, w / np.linalg.norm(w), cap)
    elif method == "perceptron":
        w = _perceptron(Xn, y, np.zeros(Xn.shape[1]), cap)
    else:
        raise PreconditionError(f"unknown method {method!r}")
    return w / np.linalg.norm(w)


def lift_quadratic(X):
    """Features ``x_i x_j`` for ``i <= j``, off-diagonal terms doubled."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    i, j = np.triu_indices(X.shape[1])
    scale = np.where(i == j, 1.0, 2.0)
    return X[:, i] * X[:, j] * scale


def fit_quadratic_separator(X, y, method="lp", cap=1_000_000):
    """Symmetric ``W`` with ``sign(x' W x) = y`` on every point."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[1]
    v = find_consistent_halfspace(lift_quadratic(X), y, method, cap)
    W = np.zeros((n, n))
    W[np.triu_indices(n)] = v
    return W + np.triu(W, 1).T


def quadratic_predict(W, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.where(np.einsum("ij,jk,ik->i", X, W, X) > 0.0, 1, -1)
