import math

import numpy as np
import pytest

from sconcave import bounds as B
from sconcave import densities as D
from sconcave import verify as V
from sconcave.errors import BandStarvationError, PreconditionError, RegimeError
from sconcave.rng import derive_stream

P = B.SConcaveParams


def stream(*path):
    return derive_stream(99, ("test_verify",) + path)


def pair(n, theta):
    u = np.eye(n)[0]
    v = math.cos(theta) * np.eye(n)[0] + math.sin(theta) * np.eye(n)[1]
    return u, v


class TestVerdictPolicy:
    def test_pass_fail_inconclusive(self):
        assert V.verdict_for(0.1, 0.01, 0.2, V.LE)[0] == "pass"
        assert V.verdict_for(0.3, 0.01, 0.2, V.LE)[0] == "fail"
        assert V.verdict_for(0.21, 0.01, 0.2, V.LE)[0] == "inconclusive"
        assert V.verdict_for(0.3, 0.01, 0.2, V.GE) == ("pass", pytest.approx(10.0))

    def test_zero_variance_is_exact(self):
        assert V.verdict_for(0.0, 0.0, 0.0, V.GE) == ("pass", math.inf)
        assert V.verdict_for(0.1, 0.0, 0.0, V.LE) == ("fail", -math.inf)

    def test_equality_band(self):
        assert V.verdict_for(0.52, 0.01, 0.5, V.EQ) == ("pass", pytest.approx(1.0))
        assert V.verdict_for(0.46, 0.01, 0.5, V.EQ) == ("fail", pytest.approx(-1.0))
        assert V.verdict_for(0.5, 0.0, 0.5, V.EQ) == ("pass", math.inf)

    def test_bad_direction(self):
        with pytest.raises(PreconditionError):
            V.verdict_for(0.0, 1.0, 0.0, "<")


class TestMcProbability:
    def test_always_true(self):
        r = V.mc_probability(D.Pareto1D(-0.5), lambda x: np.ones(len(x), bool), 1000, stream("true"))
        assert (r.estimate, r.std_error) == (1.0, 0.0)

    def test_symmetric_halfspace(self):
        r = V.mc_probability(D.make_symmetric1d(-0.1), lambda x: x[:, 0] >= 0, 10**5, stream("half"))
        assert abs(r.estimate - 0.5) <= 3 * r.std_error

    def test_pareto_tail(self):
        r = V.mc_probability(D.Pareto1D(-0.5), lambda x: x[:, 0] > 5, 10**6, stream("p5"))
        assert abs(r.estimate - 0.2) <= 3 * r.std_error

    def test_minimum_samples(self):
        with pytest.raises(PreconditionError):
            V.mc_probability(D.Pareto1D(-0.5), lambda x: x[:, 0] > 1, 999, stream("few"))

    def test_reproducible(self):
        args = (D.make_radial_nd(3, -0.05), lambda x: x[:, 0] > 0.3, 5000)
        assert V.mc_probability(*args, stream("rep")) == V.mc_probability(*args, stream("rep"))


class TestParetoTail:
    def test_inverse_t_tail(self):
        rows = V.verify_pareto_tail(D.Pareto1D(-0.5), [2.0, 5.0, 10.0], 10**6, stream("ptail"))
        assert [r.bound for r in rows] == pytest.approx([0.5, 0.2, 0.1], rel=1e-12)
        assert all(r.passed and r.direction == V.EQ for r in rows)

    def test_detects_wrong_law(self):
        rows = V.verify_pareto_tail(D.Pareto1D(-0.5), [2.0], 10**5, stream("wrong"))
        assert V.verdict_for(rows[0].estimate, rows[0].std_error, 0.45, V.EQ)[0] == "fail"

    def test_preconditions(self):
        with pytest.raises(PreconditionError):
            V.verify_pareto_tail(D.make_symmetric1d(-0.1), [2.0], 1000, stream("x"))
        with pytest.raises(PreconditionError):
            V.verify_pareto_tail(D.Pareto1D(-0.5), [0.5], 1000, stream("x"))


class TestBand:
    def test_example_cell(self):
        p = P(-0.05, 2)
        reps = V.verify_band(p, D.make_radial_nd(2, -0.05), np.eye(2)[0], [0.05], 10**6, stream("band"))
        assert [r.check for r in reps] == ["band_upper", "band_lower"]
        assert all(r.passed for r in reps)

    def test_only_upper_beyond_d(self):
        p = P(-0.05, 2)
        d = B.band_bounds(p)[2]
        reps = V.verify_band(p, D.make_radial_nd(2, -0.05), np.eye(2)[0], [1.5 * d], 10**4, stream("wide"))
        assert [r.check for r in reps] == ["band_upper"]

    def test_log_concave_upper_constant(self):
        assert B.band_bounds(P(0.0, 4))[1] == 2.0

    def test_requires_unit_vector(self):
        with pytest.raises(PreconditionError):
            V.verify_band(P(-0.05, 2), D.make_radial_nd(2, -0.05), [1.0, 1.0], [0.1], 10**4, stream("x"))

    def test_regime(self):
        with pytest.raises(RegimeError):
            V.verify_band(P(-0.5, 3), D.make_radial_nd(3, -0.1), np.eye(3)[0], [0.1], 10**4, stream("x"))


class TestDisagreement:
    def test_right_angle(self):
        p = P(-0.05, 3)
        u, v = pair(3, math.pi / 2)
        r = V.verify_disagreement(p, D.make_radial_nd(3, -0.05), u, v, 10**5, stream("right"))
        assert abs(r.estimate - 0.5) <= 3 * r.std_error
        assert r.passed

    def test_identical_vectors(self):
        u = np.eye(3)[0]
        r = V.verify_disagreement(P(-0.05, 3), D.make_radial_nd(3, -0.05), u, u, 10**4, stream("same"))
        assert r.estimate == 0.0 and r.bound == 0.0 and r.passed

    def test_rotation_invariance(self):
        m = D.make_radial_nd(3, -0.05)
        u, v = pair(3, 0.4)
        rot = np.linalg.qr(stream("rot").generator.standard_normal((3, 3)))[0]
        a = V.verify_disagreement(P(-0.05, 3), m, u, v, 10**5, stream("ra"))
        b = V.verify_disagreement(P(-0.05, 3), m, rot @ u, rot @ v, 10**5, stream("rb"))
        assert abs(a.estimate - b.estimate) <= 3 * math.hypot(a.std_error, b.std_error)

    def test_radial_disagreement_is_angle_over_pi(self):
        u, v = pair(4, 0.7)
        r = V.verify_disagreement(P(-0.02, 4), D.make_radial_nd(4, -0.02), u, v, 10**5, stream("pi"))
        assert abs(r.estimate - 0.7 / math.pi) <= 3 * r.std_error

    def test_angle_helper_small(self):
        u, v = pair(3, 1e-9)
        assert V.angle(u, v) == pytest.approx(1e-9, rel=1e-6)


class TestOutsideBand:
    def test_zero_angle(self):
        u = np.eye(3)[0]
        r = V.verify_disagreement_outside_band(P(-0.02, 3), D.make_radial_nd(3, -0.02), u, u, 1.0, 10**4, stream("z"))
        assert r.estimate == 0.0 and r.passed

    def test_example_cell(self):
        u, v = pair(3, 0.1)
        r = V.verify_disagreement_outside_band(P(-0.02, 3), D.make_radial_nd(3, -0.02), u, v, 1.0, 10**6, stream("c"))
        assert r.passed

    def test_wider_threshold_never_more_likely(self):
        m = D.make_radial_nd(3, -0.02)
        u, v = pair(3, 0.3)
        x = m.sample(10**5, stream("mono").generator)
        dis = (x @ u >= 0) != (x @ v >= 0)
        for w in [0.01, 0.1, 0.5]:
            a = np.count_nonzero(dis & (np.abs(x @ v) >= w))
            b = np.count_nonzero(dis & (np.abs(x @ v) >= 2 * w))
            assert b <= a

    def test_angle_precondition(self):
        u, v = pair(3, 2.0)
        with pytest.raises(PreconditionError):
            V.verify_disagreement_outside_band(P(-0.02, 3), D.make_radial_nd(3, -0.02), u, v, 1.0, 10**4, stream("a"))

    def test_log_concave_limit_unsupported(self):
        u, v = pair(3, 0.1)
        with pytest.raises(RegimeError):
            V.verify_disagreement_outside_band(P(0.0, 3), D.make_radial_nd(3, 0.0), u, v, 1.0, 10**4, stream("a"))


class TestConditionalVariance:
    def test_aligned(self):
        p = P(-0.05, 3)
        u = np.eye(3)[0]
        t = 0.05
        r = V.verify_conditional_variance(p, D.make_radial_nd(3, -0.05), u, u, t, 20000, stream("al"))
        assert r.estimate <= t * t
        assert r.passed

    def test_example_cell(self):
        p = P(-0.05, 3)
        u, a = pair(3, 2 * math.asin(0.05))
        assert np.linalg.norm(u - a) == pytest.approx(0.1)
        r = V.verify_conditional_variance(p, D.make_radial_nd(3, -0.05), u, a, 0.05, 20000, stream("ex"), r=0.1)
        assert r.passed
        assert r.params["acceptance"] >= 1e-3

    def test_monotone_in_t(self):
        p = P(-0.05, 3)
        m = D.make_radial_nd(3, -0.05)
        u, a = pair(3, 0.05)
        d = B.band_bounds(p)[2]
        est = [V.verify_conditional_variance(p, m, u, a, t, 50000, stream("mono", i)).estimate
               for i, t in enumerate([d / 8, d / 2, d])]
        assert est[0] < est[1] < est[2]

    def test_starvation(self):
        with pytest.raises(BandStarvationError):
            V.verify_conditional_variance(P(-0.05, 3), D.make_radial_nd(3, -0.05), np.eye(3)[0], np.eye(3)[0],
                                          1e-7, 1000, stream("st"))

    def test_preconditions(self):
        p = P(-0.05, 3)
        m = D.make_radial_nd(3, -0.05)
        u, a = pair(3, 0.5)
        with pytest.raises(PreconditionError):
            V.verify_conditional_variance(p, m, u, a, 0.05, 100, stream("pc"), r=0.1)
        with pytest.raises(PreconditionError):
            V.verify_conditional_variance(p, m, u, u, 1.0, 100, stream("pc"))


class TestTail:
    def test_pareto_records_exact_and_bound(self):
        reps = V.verify_tail(P(-0.5, 1), D.Pareto1D(-0.5), [16.0], 1.0, 10**5, stream("pt"))
        exact = [r for r in reps if r.check == "tail_exact"][0]
        assert exact.estimate == 1 / 16
        assert exact.bound == pytest.approx(1 / 17, rel=1e-14)
        # the closed-form tail sits just above the bound, which is nearly tight here
        assert exact.verdict == "fail"

    def test_heavy_tail_witness(self):
        s = -1 / 5
        reps = V.verify_tail(P(s, 1), D.make_symmetric1d(s), [16.0], 1.0, 10**6, stream("hw"))
        assert reps[0].estimate - 3 * reps[0].std_error > math.exp(-16.0)
        assert reps[0].passed

    def test_non_increasing(self):
        reps = V.verify_tail(P(-1 / 9, 3), D.make_radial_nd(3, -1 / 9), [16.0, 20.0, 32.0, 64.0], 1.0,
                             10**5, stream("ni"))
        est = [r.estimate for r in reps]
        assert est == sorted(est, reverse=True)

    def test_small_t_rejected(self):
        with pytest.raises(PreconditionError):
            V.verify_tail(P(-0.1, 1), D.make_symmetric1d(-0.1), [8.0], 1.0, 10**4, stream("t"))


class TestCentroidAndDensity:
    @pytest.mark.parametrize("model,p", [
        (D.Pareto1D(-0.25), P(-0.25, 1)),
        (D.Pareto1D(-0.1), P(-0.1, 1)),
        (D.make_symmetric1d(-0.2), P(-0.2, 1)),
        (D.make_radial_nd(3, -1 / 9), P(-1 / 9, 3)),
        (D.make_radial_nd(5, -1e-9), P(-1e-9, 5)),
    ])
    def test_centroid_mass(self, model, p):
        w = np.eye(p.n)[0]
        r = V.verify_centroid_halfspace(p, model, w, 10**5, stream("cen"))
        assert r.estimate >= r.bound - 3 * r.std_error

    def test_pareto_attains_centroid_bound(self):
        m = D.Pareto1D(-0.25)
        exact = float(m.sf(m.mean()))
        assert exact == pytest.approx(B.halfspace_mass_lower(B.marginal_gamma(-0.25, 1)), rel=1e-14)

    def test_log_concave_limit_is_inverse_e(self):
        assert B.halfspace_mass_lower(B.marginal_gamma(-1e-10, 4)) == pytest.approx(1 / math.e, abs=1e-6)

    @pytest.mark.parametrize("n,s", [(2, -0.1), (3, -1 / 9), (4, -0.02), (3, 0.0)])
    def test_envelope(self, n, s):
        r = V.verify_density_envelope(P(s, n), D.make_radial_nd(n, s), 1000, stream("env"))
        assert r.passed

    @pytest.mark.parametrize("s", [-0.3, -0.2, -0.05, 0.0])
    def test_one_dim_range(self, s):
        assert all(r.passed for r in V.verify_density_range_1d(D.make_symmetric1d(s)))


class TestGammaConcavity:
    def test_pareto_cdf(self):
        m = D.Pareto1D(-0.5)
        grid = np.linspace(1.01, 50.0, 401)
        assert V.check_gamma_concavity(m.cdf, -1.0, grid).ok

    def test_radial_marginal(self):
        m = D.make_radial_nd(2, -0.1)
        grid = np.linspace(-6.0, 6.0, 401)
        rep = V.check_gamma_concavity(m.marginal_pdf, B.marginal_gamma(-0.1, 1), grid)
        assert rep.ok

    def test_constant(self):
        grid = np.linspace(0.0, 1.0, 41)
        for g in [-0.9, -0.1, 0.0]:
            assert V.check_gamma_concavity(np.full(41, 3.0), g, grid).ok

    def test_reports_violation(self):
        grid = np.linspace(-2.0, 2.0, 41)
        rep = V.check_gamma_concavity(np.exp(grid**2), 0.0, grid)
        assert not rep.ok
        i, j, k = rep.first_violation
        assert j - i == k - j > 0

    def test_density_exponent_is_sharp(self):
        # the Pareto density to the power s is linear, so any larger exponent fails
        m = D.Pareto1D(-0.5)
        grid = np.linspace(1.01, 50.0, 401)
        assert V.check_gamma_concavity(m.pdf(grid), -0.5, grid).ok
        assert not V.check_gamma_concavity(m.pdf(grid), -0.4, grid).ok

    def test_requires_positive(self):
        with pytest.raises(PreconditionError):
            V.check_gamma_concavity(np.zeros(5), -0.5, np.arange(5.0))


class TestReflection:
    def test_symmetric_ratios(self):
        p = P(-0.02, 3)
        r = V.reflection_experiment(p, D.make_radial_nd(3, -0.02), 30, 10**5, stream("refl"))
        assert r.verdict == "pass"
        assert r.K >= 1.0
        big = [q for q in r.ratios]
        assert np.median(big) == pytest.approx(1.0, abs=0.1)

    def test_degenerate_skipped(self):
        p = P(-0.02, 3)
        w = np.array([[1.0, 0, 0], [-1.0, 1e-6, 0], [0, 0, 1.0]])
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        r = V.reflection_experiment(p, D.make_radial_nd(3, -0.02), 1, 10**4, stream("deg"), normals=[w])
        assert r.skipped == 1 and r.ratios == []

    def test_needs_three_dims(self):
        with pytest.raises(RegimeError):
            V.reflection_experiment(P(-0.02, 2), D.make_radial_nd(2, -0.02), 1, 10**3, stream("n"))


class TestPacking:
    def test_large_eps_keeps_one(self):
        r = V.packing_experiment(P(-0.02, 3), D.make_radial_nd(3, -0.02), 1.01, 40, 5000, stream("pk"))
        assert r.survivors == 1

    def test_circle_spacing(self):
        eps = 0.1
        r = V.packing_experiment(P(-0.02, 2), D.make_radial_nd(2, -0.02), eps, 200, 50000, stream("circ"))
        # on a rotation-invariant law d_D = theta/pi, so survivors are ~pi*eps apart
        w = r.vectors
        ang = np.arccos(np.clip(w @ w.T, -1, 1))[np.triu_indices(len(w), 1)]
        assert ang.min() >= math.pi * eps - 0.05
        assert r.survivors <= 2 / eps + 1
        assert r.holds

    def test_survivors_pairwise_separated(self):
        m = D.make_radial_nd(3, -0.02)
        r = V.packing_experiment(P(-0.02, 3), m, 0.15, 100, 20000, stream("sep"))
        x = m.sample(20000, stream("sep-check").generator)
        s = np.where(x @ r.vectors.T >= 0, 1.0, -1.0)
        dist = 0.5 * (1 - s.T @ s / len(x))
        off = dist[np.triu_indices(len(r.vectors), 1)]
        assert off.min() >= 0.15 - 0.02
