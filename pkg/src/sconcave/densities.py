"""Concrete s-concave density families with exact densities and samplers.

All samplers use inverse-CDF transforms of uniforms drawn from the caller's
stream, and every family returns point batches of shape ``(count, dim)``.
"""

import math

import numpy as np
from scipy import integrate
from scipy.special import betainc, betaincinv, gammainc, gammaincinv, gammaln

from .errors import DivergentMomentError, PreconditionError, RegimeError
from .rng import as_generator

__all__ = [
    "Pareto1D",
    "Symmetric1D",
    "RadialND",
    "BaselineHalfLine",
    "pareto_tail",
    "make_symmetric1d",
    "make_radial_nd",
    "sample",
    "baseline_moment",
    "write_points_csv",
    "read_points_csv",
]


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if dim == 1 and x.ndim <= 1:
        return x.reshape(-1, 1)
    return x.reshape(-1, dim)


def _profile_log(r, b, s):
    """log of (1 + b r)^(1/s), or -lambda r in the s = 0 limit (b = lambda)."""
    if s == 0.0:
        return -b * r
    return np.log1p(b * r) / s


def _radial_slope(n, s):
    """Slope b giving E|x|^2 = n for the density (1 + b|x|)^(1/s) on R^n.

    This is sqrt(B(m-2, n+2) / (n B(m, n))) with m = -1/s - n, reduced to
    its exact rational form. At s = 0 it returns the exponential rate.
    """
    if s == 0.0:
        return math.sqrt(n + 1.0)
    m = -1.0 / s - n
    return math.sqrt((n + 1.0) / ((m - 2.0) * (m - 1.0)))


class Pareto1D:
    """Density (-1-1/s)^(-1/s) x^(1/s) on x >= (s+1)/(-s), for -1 < s < 0."""

    dim = 1

    def __init__(self, s):
        if not -1.0 < s < 0.0:
            raise RegimeError(f"Pareto1D needs -1 < s < 0, got {s!r}", "-1 < s < 0")
        self.s = float(s)
        self.start = (s + 1.0) / -s
        self._p = (s + 1.0) / s

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        s = self.s
        out = np.zeros_like(x)
        inside = x >= self.start
        out[inside] = np.exp((-1.0 / s) * math.log(self.start) + np.log(x[inside]) / s)
        return out

    def sf(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t < self.start, 1.0, np.power(np.maximum(t, self.start) / self.start, self._p))

    def cdf(self, t):
        return 1.0 - self.sf(t)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        return self.start * np.power(1.0 - u, 1.0 / self._p)

    def mean(self):
        if not self.s > -0.5:
            raise DivergentMomentError("Pareto1D mean is infinite for s <= -1/2", "s > -1/2")
        return self.start * (1.0 + self.s) / (1.0 + 2.0 * self.s)

    def sample(self, count, stream):
        u = as_generator(stream).random(count)
        return self.quantile(u).reshape(-1, 1)


def pareto_tail(model, t):
    """Exact Pr[X > t] = ((-s/(s+1)) t)^((s+1)/s) for t at or above the support start."""
    if t < model.start:
        raise RegimeError(
            f"t={t!r} lies below the support start {model.start!r}", "t >= (s+1)/(-s)"
        )
    return float(model.sf(t))


class Symmetric1D:
    """Unit-variance density c (1 + b|x|)^(1/s) on the line, s > -1/3."""

    dim = 1

    def __init__(self, s):
        if not (-1.0 / 3.0 < s <= 0.0):
            raise RegimeError(f"Symmetric1D needs -1/3 < s <= 0, got {s!r}", "s > -1/3")
        self.s = float(s)
        self.b = _radial_slope(1, self.s)
        # c = b(-1/s - 1)/2, which is b/2 in the exponential limit
        self.c = self.b / 2.0 if s == 0.0 else self.b * (-1.0 / s - 1.0) / 2.0

    def pdf(self, x):
        x = np.abs(np.asarray(x, dtype=float))
        return self.c * np.exp(_profile_log(x, self.b, self.s))

    def _half_tail(self, x):
        """Pr[X > x] for x >= 0."""
        if self.s == 0.0:
            return 0.5 * np.exp(-self.b * x)
        return 0.5 * np.exp(np.log1p(self.b * x) * (1.0 / self.s + 1.0))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        tail = self._half_tail(np.abs(x))
        return np.where(x >= 0, 1.0 - tail, tail)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        lower = np.minimum(u, 1.0 - u)
        # solve tail(x) = lower for x >= 0
        if self.s == 0.0:
            x = -np.log(2.0 * lower) / self.b
        else:
            x = np.expm1(np.log(2.0 * lower) / (1.0 / self.s + 1.0)) / self.b
        return np.where(u >= 0.5, x, -x)

    def sample(self, count, stream):
        u = as_generator(stream).random(count)
        return self.quantile(u).reshape(-1, 1)


def make_symmetric1d(s):
    return Symmetric1D(s)


class RadialND:
    """Isotropic density proportional to (1 + b|x|)^(1/s) on R^n, s > -1/(n+2).

    With u = b r/(1 + b r) the radius satisfies u ~ Beta(n, -1/s - n), which
    gives the radial CDF and quantile through the regularised incomplete
    beta function. ``s = 0`` is the exponential-radial limit.
    """

    def __init__(self, n, s):
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise RegimeError(f"n must be a positive integer, got {n!r}", "n >= 1")
        if not (-1.0 / (n + 2) < s <= 0.0):
            raise RegimeError(
                f"RadialND needs -1/(n+2) < s <= 0, got s={s!r}, n={n}", "s > -1/(n+2)"
            )
        self.n = self.dim = int(n)
        self.s = float(s)
        self.b = _radial_slope(self.n, self.s)
        half = 0.5 * n
        log_area = math.log(2.0) + half * math.log(math.pi) - gammaln(half)
        if self.s == 0.0:
            self.shape_m = math.inf
            log_radial = gammaln(n) - n * math.log(self.b)
        else:
            self.shape_m = -1.0 / self.s - n
            log_radial = _log_beta_int(self.shape_m, n) - n * math.log(self.b)
        self.log_norm = -(log_area + log_radial)

    def log_pdf(self, x):
        r = np.linalg.norm(_as_points(x, self.n), axis=1)
        return self.log_norm + _profile_log(r, self.b, self.s)

    def pdf(self, x):
        return np.exp(self.log_pdf(x))

    def radial_cdf(self, r):
        r = np.asarray(r, dtype=float)
        if self.s == 0.0:
            return gammainc(self.n, self.b * r)
        br = self.b * r
        return betainc(self.n, self.shape_m, br / (1.0 + br))

    def radial_quantile(self, q):
        q = np.asarray(q, dtype=float)
        if self.s == 0.0:
            return gammaincinv(self.n, q) / self.b
        u = _beta_quantile(self.n, self.shape_m, q)
        return u / (self.b * (1.0 - u))

    def radial_pdf(self, r):
        """Density of |x| at radius r."""
        r = np.asarray(r, dtype=float)
        half = 0.5 * self.n
        log_area = math.log(2.0) + half * math.log(math.pi) - gammaln(half)
        with np.errstate(divide="ignore"):
            return np.exp(log_area + (self.n - 1) * np.log(r) + self.log_norm + _profile_log(r, self.b, self.s))

    def marginal_pdf(self, x1):
        """Density of one coordinate, by quadrature over the orthogonal radius."""
        n = self.n
        if n == 1:
            return float(self.pdf(np.array([[x1]]))[0])
        half = 0.5 * (n - 1)
        log_area = math.log(2.0) + half * math.log(math.pi) - gammaln(half)

        def integrand(rho):
            log_f = self.log_norm + float(_profile_log(math.hypot(x1, rho), self.b, self.s))
            return rho ** (n - 2) * math.exp(log_area + log_f)

        value, _ = integrate.quad(integrand, 0.0, np.inf, epsabs=0.0, epsrel=1e-12, limit=200)
        return value

    def sample(self, count, stream):
        gen = as_generator(stream)
        direction = gen.standard_normal((count, self.n))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radius = self.radial_quantile(gen.random(count))
        return direction * radius[:, None]


def make_radial_nd(n, s):
    return RadialND(n, s)


def _log_beta_int(a, k):
    """log B(a, k) for a positive integer k, exact for large a."""
    return math.lgamma(k) - sum(math.log(a + j) for j in range(k))


def _beta_quantile(n, m, q, steps=3):
    """Beta(n, m) quantile for integer n: scipy's inverse, Newton-polished.

    The bare inverse drifts by ~1e-8 in CDF terms once m is very large; a
    few Newton steps on the regularised incomplete beta, each clipped to
    stay strictly inside (0, 1), bring the round trip to ~1e-15.
    """
    q = np.asarray(q, dtype=float)
    u = np.atleast_1d(betaincinv(n, m, q)).astype(float)
    qq = np.broadcast_to(q, u.shape).reshape(u.shape)
    log_b = _log_beta_int(m, n)
    for _ in range(steps):
        live = (u > 0.0) & (u < 1.0)
        if not live.any():
            break
        ul = u[live]
        dens = np.exp((n - 1.0) * np.log(ul) + (m - 1.0) * np.log1p(-ul) - log_b)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            step = (betainc(n, m, ul) - qq[live]) / dens
        step = np.where(np.isfinite(step), step, 0.0)
        u[live] = np.clip(ul - step, 0.5 * ul, 0.5 * (1.0 + ul))
    return u.reshape(q.shape)


def sample(model, count, stream):
    """Draw ``count`` i.i.d. points from ``model`` as a ``(count, dim)`` array."""
    if count < 1:
        raise PreconditionError(f"count must be >= 1, got {count!r}")
    return model.sample(int(count), stream)


class BaselineHalfLine:
    """Unnormalised profile h(t) = alpha (1 + beta t)^(1/s) on t >= 0."""

    def __init__(self, alpha, beta, s):
        if not (alpha > 0.0 and beta > 0.0):
            raise PreconditionError("alpha and beta must be positive")
        if not s < 0.0:
            raise RegimeError(f"BaselineHalfLine needs s < 0, got {s!r}", "s < 0")
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.s = float(s)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.alpha * np.exp(np.log1p(self.beta * t) / self.s)

    def moment(self, order):
        return baseline_moment(self, order)


def baseline_moment(h, order):
    """M_n(h) = B(-1/s - n - 1, n + 1) alpha / beta^(n+1)."""
    if int(order) != order or order < 0:
        raise PreconditionError(f"order must be a non-negative integer, got {order!r}")
    a = -1.0 / h.s - order - 1.0
    if not a > 0.0:
        raise DivergentMomentError(
            f"moment of order {order} diverges for s={h.s!r}", "-1/s > order + 1"
        )
    return math.exp(_log_beta_int(a, int(order) + 1)) * h.alpha / h.beta ** (order + 1)


def write_points_csv(path, points):
    """One row per point, columns x0..x{d-1}, 17 significant digits."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    header = ",".join(f"x{j}" for j in range(points.shape[1]))
    np.savetxt(path, points, delimiter=",", fmt="%.17g", header=header, comments="")


def read_points_csv(path):
    return np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2))
