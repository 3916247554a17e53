"""Closed-form geometry bounds for isotropic s-concave distributions.

Every function here is pure. Negative ``s`` is evaluated in log space with
``log1p``/``expm1`` so that the formulas stay accurate as ``s -> 0-``; the
exact value ``s == 0`` returns the log-concave limit when that limit is
finite and raises :class:`RegimeError` when it is not (the refined envelope
coefficient ``beta2`` vanishes linearly in ``s``, so ``f4``, ``f5`` and the
reflection constant ``K`` blow up like ``|s|^-3``).
"""

import math
from dataclasses import dataclass, asdict, replace

from scipy.special import betaln, gammaln

from .errors import BetaDomainError, PreconditionError, RegimeError

__all__ = [
    "SConcaveParams",
    "GeometryBounds",
    "Envelope",
    "Knobs",
    "ALSchedule",
    "beta_function",
    "marginal_gamma",
    "halfspace_mass_lower",
    "band_bounds",
    "disagreement_lower_f1",
    "band_margin_f4",
    "variance_bound_f5",
    "density_envelope",
    "density_lower_profile",
    "density_at_zero_lower",
    "tail_bound",
    "baum_reflection_K",
    "disagreement_coefficient_bound",
    "al_schedule",
    "vc_sample_size",
    "baum_sizes",
    "packing_lower_bound",
    "geometry_bounds",
]

LN2 = math.log(2.0)
LOG_PI = math.log(math.pi)
LOG_4EPI = math.log(4.0 * math.e * math.pi)
# exp() of anything above this overflows a double
_LOG_MAX = 709.0


# ---------------------------------------------------------------------------
# stable scalar kernels


def _lxl(g):
    """log1p(g)/g, equal to 1 at g = 0."""
    if g == 0.0:
        return 1.0
    return math.log1p(g) / g


def _l2m(k, g):
    """log(2 - 2**(k*g)) / g, with its g -> 0 limit -k*ln2."""
    if g == 0.0:
        return -k * LN2
    inner = -math.expm1(k * g * LN2)
    if inner <= -1.0:
        raise RegimeError(
            f"2 - 2^({k}*{g!r}) must be positive", condition=f"2^({k}g) < 2"
        )
    return math.log1p(inner) / g


def _l2e(c, g):
    """log(2*exp(c*g) - 1) / g, with its g -> 0 limit 2c.

    This is the ``(Y**g - 1)**(1/g)`` pattern with ``Y**g = 2 exp(c g)``.
    """
    if g == 0.0:
        return 2.0 * c
    inner = 2.0 * math.expm1(c * g)
    if inner <= -1.0:
        raise RegimeError(
            "bracket (...)^s - 1 must be positive",
            condition="s*log(Y) > -log 2",
        )
    return math.log1p(inner) / g


def _exp(x, what):
    if x > _LOG_MAX:
        raise RegimeError(f"{what} overflows double precision (log value {x:.4g})")
    return math.exp(x)


def _companion_d(beta):
    """(1+g)^(-1/g) (1+3b)/(3+3b) with g = b/(1+b)."""
    g = beta / (1.0 + beta)
    return math.exp(-_lxl(g)) * (1.0 + 3.0 * beta) / (3.0 + 3.0 * beta)


def _log_profile_constant(beta, gamma):
    """log of (1+b)/(1+3b) * sqrt(3 (1+g)^(3/g))."""
    return (
        math.log((1.0 + beta) / (1.0 + 3.0 * beta))
        + 0.5 * math.log(3.0)
        + 1.5 * _lxl(gamma)
    )


def beta_function(a, b):
    """B(a, b) through log-gamma; both arguments must be positive."""
    if not (a > 0.0 and b > 0.0):
        raise BetaDomainError(
            f"beta function needs positive arguments, got B({a!r}, {b!r})",
            condition="a > 0 and b > 0",
        )
    return math.exp(betaln(a, b))


def _log_beta(a, b, label):
    if not (a > 0.0 and b > 0.0):
        raise BetaDomainError(
            f"{label}: beta arguments ({a!r}, {b!r}) must be positive",
            condition=f"{label} > 0",
        )
    if b == int(b) and b <= 8:
        # B(a, k) = (k-1)! / (a (a+1) ... (a+k-1)); betaln drifts by ~1e-9 near a = 1e6
        k = int(b)
        return math.lgamma(k) - sum(math.log(a + j) for j in range(k))
    return float(betaln(a, b))


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class SConcaveParams:
    """Concavity exponent ``s <= 0`` and ambient dimension ``n``."""

    s: float
    n: int

    def __post_init__(self):
        if not isinstance(self.n, int) or isinstance(self.n, bool) or self.n < 1:
            raise RegimeError(f"n must be a positive integer, got {self.n!r}", "n >= 1")
        if not math.isfinite(self.s) or self.s > 0.0:
            raise RegimeError(f"s must be finite and <= 0, got {self.s!r}", "s <= 0")

    @property
    def geometry_valid(self):
        return -1.0 / (2 * self.n + 3) <= self.s <= 0.0

    @property
    def second_moment_1d(self):
        return self.s > -1.0 / 3.0

    def require_geometry(self, min_n=1):
        if self.n < min_n:
            raise RegimeError(f"needs n >= {min_n}, got n={self.n}", f"n >= {min_n}")
        if not self.geometry_valid:
            raise RegimeError(
                f"s={self.s!r} < -1/(2n+3) = {-1.0 / (2 * self.n + 3)!r}",
                condition="s >= -1/(2n+3)",
            )


def _reduced(s, m):
    """s/(1+m s) without the regime check."""
    return s / (1.0 + m * s)


def marginal_gamma(s, m):
    """Exponent s/(1+ms) of a marginal after integrating out ``m`` dimensions."""
    if s > 0.0:
        raise RegimeError(f"s must be <= 0, got {s!r}", "s <= 0")
    if 1.0 + m * s <= 0.0:
        raise RegimeError(
            f"1 + m*s = {1.0 + m * s!r} <= 0: marginal may not exist",
            condition="1 + m*s > 0",
        )
    if s == 0.0:
        return 0.0
    return s / (1.0 + m * s)


def halfspace_mass_lower(gamma):
    """(1+gamma)^(-1/gamma): mass of any halfspace through the mean."""
    if not (-1.0 < gamma <= 0.0):
        raise RegimeError(f"gamma must lie in (-1, 0], got {gamma!r}", "-1 < gamma <= 0")
    return math.exp(-_lxl(gamma))


# ---------------------------------------------------------------------------
# band and disagreement


def band_bounds(p):
    """Return ``(f2, f3, d)`` bounding the probability of a band.

    ``f2 t < Pr[|w.x| <= t]`` for ``t <= d`` and ``Pr[|w.x| <= t] <= f3 t``.
    """
    p.require_geometry()
    s, n = p.s, p.n
    g = _reduced(s, n - 1)
    f3 = 2.0 * (1.0 + n * s) / (1.0 + (n + 2) * s)
    d = _companion_d(g)
    log_q = (
        math.log((1.0 + g) / (1.0 + 3.0 * g))
        + 0.5 * math.log(3.0)
        + 1.5 * _lxl(g / (1.0 + g))
    )
    f2 = 2.0 * math.exp(-_l2m(-2, g) - 0.5 * LOG_4EPI - _l2e(log_q, g))
    return f2, f3, d


def disagreement_lower_f1(p, c=1.0):
    """Rate f1 with ``d_D(u, v) >= f1 * theta(u, v)``."""
    p.require_geometry(min_n=2)
    if not c > 0.0:
        raise PreconditionError(f"c must be positive, got {c!r}")
    s, n = p.s, p.n
    alpha = _reduced(s, n - 2)
    beta = _reduced(s, n - 1)
    gamma = _reduced(s, n)
    big_l = _log_profile_constant(beta, gamma) + LN2
    log_f1 = (
        -_l2m(-3, alpha)
        - _l2e(big_l, alpha)
        - 2.0 * _lxl(gamma)
        + 2.0 * math.log((1.0 + 3.0 * beta) / (3.0 + 3.0 * beta))
    )
    return c * math.exp(log_f1)


# ---------------------------------------------------------------------------
# density envelope


@dataclass(frozen=True)
class Envelope:
    beta1: float
    beta2: float
    a: float
    d: float

    def __call__(self, r, s):
        """Envelope value beta1 (1 - s beta2 r)^(1/s) at radius ``r``."""
        if s == 0.0:
            return self.beta1 * math.exp(-self.beta2 * r)
        return self.beta1 * math.exp(math.log1p(-s * self.beta2 * r) / s)


def _envelope_logs(n, s):
    """Log-space pieces shared by :func:`density_envelope` and tests."""
    if n < 1:
        raise RegimeError(f"n must be >= 1, got {n}", "n >= 1")
    if s > 0.0:
        raise RegimeError(f"s must be <= 0, got {s!r}", "s <= 0")
    if 1.0 + (n - 1) * s <= 0.0:
        raise RegimeError("1 + (n-1)s must be positive", "1 + (n-1)s > 0")
    beta = s / (1.0 + (n - 1) * s)
    if 1.0 + 3.0 * beta <= 0.0:
        raise RegimeError("1 + 3*beta must be positive", "1 + 3beta > 0")
    if not s > -1.0 / (n + 1):
        raise RegimeError("2 - 2^(-(n+1)s) must be positive", "s > -1/(n+1)")
    gamma = beta / (1.0 + beta)
    d = _companion_d(beta)
    c = _log_profile_constant(beta, gamma) + (n - 1) * LN2
    log_xb_over_s = _l2e(c, s)
    log_beta1 = (
        _l2m(-(n + 1), s)
        - LN2
        - 0.5 * n * LOG_PI
        - n * math.log(d)
        + _lxl(-s)
        + math.log(n)
        + gammaln(0.5 * n)
        + log_xb_over_s
    )
    log_a_over_s = -0.5 * n * LOG_4EPI - log_xb_over_s
    log_a = s * log_a_over_s
    return d, log_beta1, log_a, log_a_over_s


def density_envelope(n, s):
    """Coefficients of the refined density envelope.

    Every isotropic s-concave density on R^n satisfies
    ``f(x) <= beta1 (1 - s beta2 |x|)^(1/s)``. Returns
    :class:`Envelope` ``(beta1, beta2, a, d)``; at ``s == 0`` the limit of
    ``beta2`` is 0 and the envelope degenerates to the constant ``beta1``.
    """
    d, log_beta1, log_a, log_a_over_s = _envelope_logs(n, s)
    beta1 = _exp(log_beta1, "beta1")
    a = math.exp(log_a)
    if s == 0.0:
        return Envelope(beta1, 0.0, a, d)
    if not s > -1.0 / n:
        raise RegimeError("2 - 2^(-ns) must be positive", "s > -1/n")
    log_line = (
        0.5 * (n - 1) * LOG_PI + (n - 1) * math.log(d) - gammaln(0.5 * (n + 1))
    )
    log_u = math.log1p(-s) + s * log_beta1 - log_a
    # (a + (1-s) beta1^s)^(1+1/s) - a^(1+1/s), factored around a^(1+1/s)
    log_lead = log_a + log_a_over_s
    diff = (1.0 + 1.0 / s) * math.log1p(math.exp(log_u))
    log_beta2 = (
        log_line
        - _l2m(-n, s)
        + log_lead
        + math.log(-math.expm1(diff))
        + math.log(-s)
        - s * log_beta1
        - math.log1p(s)
        - math.log1p(-s)
    )
    return Envelope(beta1, math.exp(log_beta2), a, d)


def density_at_zero_lower(n, s):
    """Lower bound on f(0) for an isotropic s-concave density on R^n."""
    if 1.0 + (n - 1) * s <= 0.0:
        raise RegimeError("1 + (n-1)s must be positive", "1 + (n-1)s > 0")
    beta = s / (1.0 + (n - 1) * s)
    gamma = beta / (1.0 + beta)
    c = _log_profile_constant(beta, gamma) + (n - 1) * LN2
    return math.exp(-0.5 * n * LOG_4EPI - _l2e(c, s))


def density_lower_profile(n, s, r):
    """Lower bound on f(u) for ``|u| = r <= d`` in terms of the f(0) bound."""
    d = _companion_d(s / (1.0 + (n - 1) * s))
    if not 0.0 <= r <= d:
        raise PreconditionError(f"radius must lie in [0, d={d!r}], got {r!r}")
    f0 = density_at_zero_lower(n, s)
    if s == 0.0:
        return f0 * math.exp(-(n + 1) * LN2 * r / d)
    q = math.expm1(-(n + 1) * s * LN2) / (1.0 - math.expm1(-(n + 1) * s * LN2))
    return f0 * math.exp(math.log1p(q * r / d) / s)


# ---------------------------------------------------------------------------
# bounds built on the envelope


def _require_nonzero(s, what):
    if s == 0.0:
        raise RegimeError(
            f"{what} has no finite value at s = 0 (beta2 -> 0 makes it diverge)",
            condition="s < 0",
        )


def band_margin_f4(p, c1=1.0, f=None):
    """Band half-width per radian outside which disagreement is rare.

    ``f`` is the disagreement rate; it defaults to ``f1(s, n)``.
    """
    p.require_geometry(min_n=2)
    if not c1 > 0.0:
        raise PreconditionError(f"c1 must be positive, got {c1!r}")
    _require_nonzero(p.s, "f4")
    if f is None:
        f = disagreement_lower_f1(p)
    if not f > 0.0:
        raise PreconditionError(f"rate f must be positive, got {f!r}")
    alpha = _reduced(p.s, p.n - 2)
    env = density_envelope(2, alpha)
    log_b = _log_beta(-1.0 / alpha - 3.0, 3.0, "-1/alpha - 3")
    log_f4 = (
        math.log(4.0)
        + math.log(env.beta1)
        + log_b
        - math.log(c1)
        - math.log(f)
        - 3.0 * math.log(-alpha)
        - 3.0 * math.log(env.beta2)
    )
    return _exp(log_f4, "f4")


def variance_bound_f5(p, C0=1.0):
    """Band-conditional second moment constant, always >= 16."""
    p.require_geometry(min_n=2)
    if not C0 >= 0.0:
        raise PreconditionError(f"C0 must be non-negative, got {C0!r}")
    _require_nonzero(p.s, "f5")
    eta = _reduced(p.s, p.n - 2)
    env = density_envelope(2, eta)
    log_b = _log_beta(-1.0 / eta - 3.0, 2.0, "-1/eta - 3")
    f2 = band_bounds(p)[0]
    log_term = (
        math.log(8.0)
        + math.log(env.beta1)
        + log_b
        - math.log(f2)
        - 3.0 * math.log(env.beta2)
        - math.log1p(eta)
        - 2.0 * math.log(-eta)
    )
    return 16.0 + C0 * _exp(log_term, "f5")


def baum_reflection_K(p, as_printed=False):
    """Reflection constant with ``Pr[-R] <= K Pr[R]`` for 3-halfspace cones.

    The printed expression integrates ``r^(2 + 1/kappa)`` over ``[0, d]``;
    that integral diverges because ``1/kappa < -3``, and the printed value
    is negative. By default ``h(kappa)`` is used as a constant lower bound
    on the ball of radius ``d`` (mass ``h d^3 / 3``), which gives a valid
    positive constant. ``as_printed=True`` returns the printed value.
    """
    p.require_geometry(min_n=3)
    _require_nonzero(p.s, "K")
    kappa = _reduced(p.s, p.n - 3)
    env = density_envelope(3, kappa)
    beta = kappa / (1.0 + 2.0 * kappa)
    gamma = kappa / (1.0 + kappa)
    d = math.exp(-_lxl(gamma)) * (1.0 + 3.0 * beta) / (3.0 + 3.0 * beta)
    em = math.expm1(-4.0 * kappa * LN2)
    q = em / (1.0 - em)
    c = _log_profile_constant(beta, gamma) + 2.0 * LN2
    log_h = math.log1p(q / d) / kappa - 1.5 * LOG_4EPI - _l2e(c, kappa)
    log_upper = (
        math.log(env.beta1)
        + _log_beta(-1.0 / kappa - 3.0, 3.0, "-1/kappa - 3")
        - 3.0 * math.log(-kappa * env.beta2)
    )
    if not as_printed:
        return _exp(log_upper + math.log(3.0) - log_h - 3.0 * math.log(d), "K")
    e = 3.0 + 1.0 / kappa
    sign = 1.0 if e > 0.0 else -1.0
    return sign * _exp(log_upper - log_h + math.log(abs(e)) - e * math.log(d), "K")


def tail_bound(p, t, c=1.0):
    """Upper bound on ``Pr[|x| > sqrt(n) t]`` for ``t >= 16``, clamped to [0, 1]."""
    if t < 16.0:
        raise PreconditionError(f"tail bound needs t >= 16, got {t!r}")
    s, n = p.s, p.n
    if 1.0 + n * s <= 0.0:
        raise RegimeError("1 + n*s must be positive", "1 + ns > 0")
    y = -c * s * t / (1.0 + n * s)
    value = math.exp(-c * t * _lxl(y))
    return min(1.0, max(0.0, value))


def disagreement_coefficient_bound(p, eps, c=1.0):
    """Disagreement coefficient bound with its O-constant as the knob ``c``."""
    if not 0.0 < eps < 1.0:
        raise PreconditionError(f"eps must lie in (0, 1), got {eps!r}")
    p.require_geometry(min_n=2)
    s, n = p.s, p.n
    f1 = disagreement_lower_f1(p)
    if s == 0.0:
        ratio = -math.log(eps)
    else:
        ratio = -math.expm1(_reduced(s, n) * math.log(eps)) / s
    return (
        c * math.sqrt(n) * (1.0 + n * s) ** 2 / ((1.0 + (n + 2) * s) * f1) * ratio
    )


# ---------------------------------------------------------------------------
# sample sizes


def vc_sample_size(eps, delta, vcdim, C=1.0):
    """ceil(C ((vcdim/eps) ln(1/eps) + (1/eps) ln(1/delta)))."""
    if not 0.0 < eps < 1.0:
        raise PreconditionError(f"eps must lie in (0, 1), got {eps!r}")
    if not 0.0 < delta < 1.0:
        raise PreconditionError(f"delta must lie in (0, 1), got {delta!r}")
    if int(vcdim) != vcdim or vcdim < 1:
        raise PreconditionError(f"vcdim must be a positive integer, got {vcdim!r}")
    if not C > 0.0:
        raise PreconditionError(f"C must be positive, got {C!r}")
    value = C * (vcdim / eps * math.log(1.0 / eps) + math.log(1.0 / delta) / eps)
    return int(math.ceil(value))


def baum_sizes(eps, delta, n, K, C=1.0):
    """Sample sizes ``(m1, m2, m3)`` for the intersection-of-two learner."""
    if not K > 0.0:
        raise PreconditionError(f"K must be positive, got {K!r}")
    m1 = vc_sample_size(eps / 2.0, delta / 4.0, n * n, C)
    m2_eps = max(delta / (4.0 * math.e * K * m1), eps / 2.0)
    m2 = vc_sample_size(m2_eps, delta / 4.0, n, C)
    m3 = int(math.ceil(max(2.0 * m2 / eps, 2.0 / eps**2 * math.log(4.0 / delta))))
    return m1, m2, m3


def packing_lower_bound(p, eps, c=1.0):
    """floor(sqrt(n)/2 (f1/(2 eps))^(n-1) - 1), or 0 when that is below 1."""
    if not eps > 0.0:
        raise PreconditionError(f"eps must be positive, got {eps!r}")
    n = p.n
    if n == 1:
        return 0
    f1 = disagreement_lower_f1(p, c)
    log_v = 0.5 * math.log(n) - LN2 + (n - 1) * math.log(f1 / (2.0 * eps))
    if log_v > _LOG_MAX:
        raise RegimeError("packing bound overflows double precision")
    value = math.exp(log_v) - 1.0
    if value < 1.0:
        return 0
    return int(math.floor(value))


# ---------------------------------------------------------------------------
# active-learning schedule


@dataclass(frozen=True)
class Knobs:
    """Unspecified absolute constants, all defaulting to 1.

    ``c`` sets the round count, ``c_b``, ``c_tau``, ``c_r`` scale the band,
    hinge scale and search radius, ``c_kappa`` the target conditional error
    and ``c_m`` the per-round label budget. ``c1``, ``c_f1``, ``C0`` enter
    f4, f1 and f5. ``C_vc`` scales VC sample sizes, ``c0`` bounds the
    admissible noise rate (eta < c0 eps) and ``m_cap`` is a hard per-round
    label cap.
    """

    c: float = 1.0
    c_b: float = 1.0
    c_tau: float = 1.0
    c_r: float = 1.0
    c_m: float = 1.0
    c_kappa: float = 1.0
    c1: float = 1.0
    c_f1: float = 1.0
    C0: float = 1.0
    C_vc: float = 1.0
    c0: float = 1.0
    m_cap: int = 1_000_000

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise PreconditionError(f"knob {name} must be positive and finite, got {value!r}")

    def anchored(self, p, band=None, tau=None, radius=None, kappa=None):
        """Return knobs whose schedule starts at the given physical values.

        ``band`` is the unclamped b_0, ``tau`` is tau_1, ``radius`` is r_0
        (so r_k = radius 2^-k) and ``kappa`` is kappa_1. The schedule
        formulas are unchanged; only the Theta-constants are solved for.
        """
        rates = _schedule_rates(p, self)
        out = self
        if band is not None:
            out = replace(out, c_b=band * rates["f1"] / rates["f4"])
        if tau is not None:
            out = replace(out, c_tau=tau / rates["tau_unit"])
        if radius is not None:
            out = replace(out, c_r=radius * rates["f1"])
        if kappa is not None:
            raw = _raw_kappa(rates, _band(rates, out, 0), _tau(rates, out, 1))
            out = replace(out, c_kappa=kappa / raw)
        return out


@dataclass(frozen=True)
class ALSchedule:
    """Per-round parameters; list index ``i`` holds round ``k = i + 1``.

    ``b`` has ``T + 1`` entries starting at ``b_0``. ``tau``, ``r`` and
    ``kappa`` are empty for the realizable model.
    """

    model: str
    T: int
    b: tuple
    m: tuple
    tau: tuple
    r: tuple
    kappa: tuple
    knobs: Knobs
    f1: float
    f2: float
    f3: float
    d: float
    f4: float
    f5: float


def _schedule_rates(p, knobs):
    p.require_geometry(min_n=2)
    f2, f3, d = band_bounds(p)
    f1 = disagreement_lower_f1(p, knobs.c_f1)
    f4 = band_margin_f4(p, knobs.c1, f1)
    f5 = variance_bound_f5(p, knobs.C0)
    tau_unit = f1**-2 * f2**-0.5 * f3 * f4**2 * f5**0.5
    return dict(f1=f1, f2=f2, f3=f3, d=d, f4=f4, f5=f5, tau_unit=tau_unit)


def _band(rates, knobs, k):
    return min(knobs.c_b * 2.0**-k * rates["f4"] / rates["f1"], rates["d"])


def _tau(rates, knobs, k):
    return knobs.c_tau * rates["tau_unit"] * 2.0 ** -(k - 1)


def _raw_kappa(rates, b_prev, tau):
    f2, f3, f5, d = rates["f2"], rates["f3"], rates["f5"], rates["d"]
    return max(
        f3 * tau / (f2 * min(b_prev, d)),
        b_prev * math.sqrt(f5) / (tau * math.sqrt(f2)),
    )


def al_schedule(p, eps, delta, knobs=None, model="realizable"):
    """Round count and per-round band, hinge, radius and label parameters."""
    if knobs is None:
        knobs = Knobs()
    if not 0.0 < eps < 0.25:
        raise PreconditionError(f"eps must lie in (0, 1/4), got {eps!r}")
    if not 0.0 < delta < 1.0:
        raise PreconditionError(f"delta must lie in (0, 1), got {delta!r}")
    if model not in ("realizable", "adversarial"):
        raise PreconditionError(f"model must be realizable or adversarial, got {model!r}")
    s, n = p.s, p.n
    rates = _schedule_rates(p, knobs)
    T = max(1, math.ceil(math.log2(1.0 / (knobs.c * eps))))
    b = tuple(_band(rates, knobs, k) for k in range(T + 1))

    def budget(value):
        return int(min(knobs.m_cap, max(1, math.ceil(value))))

    if model == "realizable":
        m = []
        for k in range(1, T + 1):
            z = rates["f3"] * b[k - 1] * 2.0**k
            m.append(budget(knobs.c_m * z * (n * math.log(z) + math.log((1 + T - k) / delta))))
        return ALSchedule(model, T, b, tuple(m), (), (), (), knobs, **_rate_fields(rates))

    g = _reduced(s, n)
    tau, r, kappa, m = [], [], [], []
    for k in range(1, T + 1):
        tk = _tau(rates, knobs, k)
        kk = knobs.c_kappa * _raw_kappa(rates, b[k - 1], tk)
        x = delta / (math.sqrt(n) * (k + k * k))
        rho = -math.log(x) if s == 0.0 else -math.expm1(g * math.log(x)) / s
        head = ((b[k - 1] / tk + (1.0 + n * s) * rho + 1.0) / kk) ** 2
        tau.append(tk)
        r.append(knobs.c_r * 2.0**-k / rates["f1"])
        kappa.append(kk)
        m.append(budget(knobs.c_m * head * n * (n + math.log((k + k * k) / delta))))
    return ALSchedule(
        model, T, b, tuple(m), tuple(tau), tuple(r), tuple(kappa), knobs, **_rate_fields(rates)
    )


def _rate_fields(rates):
    return {k: rates[k] for k in ("f1", "f2", "f3", "d", "f4", "f5")}


# ---------------------------------------------------------------------------
# summary record


@dataclass(frozen=True)
class GeometryBounds:
    """All closed-form bounds at one (s, n).

    Fields that diverge at ``s == 0`` (f4, f5, K) are ``None`` there, and
    ``K`` is ``None`` for ``n < 3``.
    """

    s: float
    n: int
    gamma_marginal: tuple
    f1: float
    f2: float
    f3: float
    f4: object
    f5: object
    d: float
    beta1: float
    beta2: float
    K: object


def geometry_bounds(p, knobs=None):
    """Evaluate every bound at ``p`` into a :class:`GeometryBounds`."""
    if knobs is None:
        knobs = Knobs()
    p.require_geometry(min_n=2)
    f2, f3, d = band_bounds(p)
    f1 = disagreement_lower_f1(p, knobs.c_f1)
    env = density_envelope(p.n, p.s)
    gammas = tuple(marginal_gamma(p.s, m) for m in range(p.n))
    if p.s == 0.0:
        f4 = f5 = K = None
    else:
        f4 = band_margin_f4(p, knobs.c1, f1)
        f5 = variance_bound_f5(p, knobs.C0)
        K = baum_reflection_K(p) if p.n >= 3 else None
    return GeometryBounds(p.s, p.n, gammas, f1, f2, f3, f4, f5, d, env.beta1, env.beta2, K)
