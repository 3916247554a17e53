import math

import numpy as np
import pytest

from sconcave import learners as L
from sconcave.bounds import Knobs, SConcaveParams, al_schedule, vc_sample_size
from sconcave.densities import make_radial_nd
from sconcave.errors import PreconditionError, StreamExhaustedError
from sconcave.optim import find_consistent_halfspace
from sconcave.rng import derive_stream

P3 = SConcaveParams(-0.02, 3)
P5 = SConcaveParams(-0.02, 5)
R3 = make_radial_nd(3, -0.02)
R5 = make_radial_nd(5, -0.02)

# frozen calibration, shared with configs/
REAL_KNOBS = Knobs(c_m=2.0).anchored(P3, band=1.0)
ADV_KNOBS = Knobs(c_m=0.005).anchored(P5, band=0.4, tau=0.03, radius=2.0, kappa=0.2)


def stream(*path):
    return derive_stream(17, ("test_learners",) + path)


def target(st, n):
    return st.child("target").generator.standard_normal(n)


class TestOracle:
    def test_realizable_sign(self):
        o = L.LabelOracle.realizable([1.0, 0.0, 0.0])
        assert L.query(o, np.array([0.3, -2.0, 1.0])) == 1
        assert L.query(o, np.array([-0.3, 2.0, 1.0])) == -1
        assert o.queries == 2 and o.generated == 2 and o.flips == 0

    def test_zero_eta_matches_realizable(self):
        X = R3.sample(2000, stream("eta0").generator)
        w = np.array([0.2, -1.0, 0.5])
        a = L.LabelOracle.adversarial(w, 0.0, quantile=0.1)
        b = L.LabelOracle.realizable(w)
        assert [a.query(x) for x in X] == [b.query(x) for x in X]
        assert a.flips == 0

    @pytest.mark.parametrize("strategy", ["boundary-proximal", "uniform"])
    def test_flip_fraction_and_prefix_budget(self, strategy):
        st = stream("budget", strategy)
        eta = 0.01
        o = L.LabelOracle.adversarial([1.0, 0.0, 0.0], eta, strategy, quantile=0.05, stream=st.child("adv"))
        X = R3.sample(100_000, st.generator)
        for x in X:
            o.query(x)
            assert o.flips <= eta * o.generated
        assert o.flips / len(X) <= eta + 1e-5
        assert o.flips > 0

    def test_boundary_flips_only_near_boundary(self):
        st = stream("near")
        w = np.array([0.0, 1.0, 0.0])
        o = L.LabelOracle.adversarial(w, 0.05, quantile=0.1)
        X = R3.sample(20_000, st.generator)
        o.observe(X[:10_000])
        q = o.threshold()
        for x in X[10_000:]:
            before = o.flips
            label = o.query(x)
            if o.flips > before:
                assert abs(x @ w) < o.threshold() * 1.0 + 1e-15
                assert label != (1 if x @ w >= 0 else -1)
        # running threshold sits at the sample quantile up to one bin (~1.2%)
        exact = np.quantile(np.abs(X[:10_000] @ w), 0.1)
        assert exact <= q <= exact * 1.013

    def test_threshold_before_data(self):
        assert L.LabelOracle.adversarial([1.0, 0.0], 0.1, quantile=0.5).threshold() == 0.0

    def test_validation(self):
        with pytest.raises(PreconditionError):
            L.LabelOracle([0.0, 0.0])
        with pytest.raises(PreconditionError):
            L.LabelOracle.adversarial([1.0, 0.0], 0.1)
        with pytest.raises(PreconditionError):
            L.LabelOracle.adversarial([1.0, 0.0], 0.1, strategy="uniform")
        with pytest.raises(PreconditionError):
            L.LabelOracle([1.0, 0.0], noise="massart")

    def test_intersection_oracle(self):
        o = L.IntersectionOracle([1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
        assert o.query([1.0, 1.0, 0.0]) == 1
        assert o.query([1.0, -1.0, 0.0]) == -1
        assert o.query([-1.0, -1.0, 0.0]) == -1


class TestSource:
    def test_exhaustion(self):
        o = L.LabelOracle.realizable([1.0, 0.0, 0.0])
        src = L._Source(R3, o, stream("exhaust"), max_rejections=10_000)
        with pytest.raises(StreamExhaustedError):
            src.take(5, lambda X: np.zeros(len(X), dtype=bool))

    def test_generated_counts_stream_prefix(self):
        o = L.LabelOracle.realizable([1.0, 0.0, 0.0])
        src = L._Source(R3, o, stream("prefix"))
        X, y, rejected = src.take(50, lambda X: X[:, 0] > 1.0)
        assert len(X) == 50 and np.all(X[:, 0] > 1.0)
        assert o.generated == 50 + rejected
        assert np.array_equal(y, np.ones(50))


class TestErrorEstimate:
    def test_rotation_invariant_error_is_angle_over_pi(self):
        st = stream("err")
        w_star = np.array([1.0, 0.0, 0.0])
        w = np.array([math.cos(0.3), math.sin(0.3), 0.0])
        est = L.halfspace_error(R3, w, w_star, st, 200_000)
        assert abs(est.error - 0.3 / math.pi) <= 4 * est.std_error

    def test_within(self):
        assert L.ErrorEstimate(0.11, 0.004, 100).within(0.1)
        assert not L.ErrorEstimate(0.113, 0.004, 100).within(0.1)


def realizable_run(seed, eps, knobs=REAL_KNOBS, **kw):
    st = stream("real", seed)
    return L.margin_al_realizable(P3, R3, L.LabelOracle.realizable(target(st, 3)), eps, 0.1, st, knobs=knobs, **kw)


class TestRealizable:
    def test_final_error(self):
        res = realizable_run(0, 0.1)
        assert res.error.within(0.1)

    def test_labels_follow_schedule(self):
        res = realizable_run(1, 2**-5)
        sched = al_schedule(P3, 2**-5, 0.1, REAL_KNOBS)
        assert res.labels_per_round == sched.m
        assert res.total_labels == sum(sched.m)
        assert res.rounds[0].band == math.inf
        assert [r.band for r in res.rounds[1:]] == list(sched.b[1:sched.T])

    def test_single_round(self):
        knobs = Knobs(c=4.0, c_m=2.0).anchored(P3, band=1.0)
        st = stream("single")
        w_star = target(st, 3)
        res = L.margin_al_realizable(P3, R3, L.LabelOracle.realizable(w_star), 0.2, 0.1, st, knobs=knobs)
        assert res.schedule.T == 1 and len(res.rounds) == 1
        # replay the first draw and refit
        o = L.LabelOracle.realizable(w_star)
        X, y, _ = L._Source(R3, o, st.child("draws")).take(res.schedule.m[0])
        assert np.array_equal(res.w, find_consistent_halfspace(X, y))

    def test_deterministic(self):
        a, b = realizable_run(2, 2**-4), realizable_run(2, 2**-4)
        assert np.array_equal(a.w, b.w)
        assert a.rounds == b.rounds and a.error == b.error

    def test_angle_contraction_in_aggregate(self):
        good = total = 0
        for seed in range(20):
            a = realizable_run(100 + seed, 2**-6, eval_points=1000).angles
            good += sum(a[i] <= a[i - 1] for i in range(1, len(a)))
            total += len(a) - 1
        assert good / total >= 0.9

    def test_slope_beats_passive(self):
        # fitted labels-vs-log(1/eps) slope around eps = 2^-6, AL against the VC size
        grid = [2**-5, 2**-6, 2**-7]
        x = [math.log(1 / e) for e in grid]
        al = [realizable_run(3, e, eval_points=1000).total_labels for e in grid]
        vc = [vc_sample_size(e, 0.1, 3) for e in grid]
        assert np.polyfit(x, vc, 1)[0] >= 5 * np.polyfit(x, al, 1)[0]

    def test_rejects_noisy_oracle(self):
        st = stream("noisy")
        o = L.LabelOracle.adversarial([1.0, 0.0, 0.0], 0.001, quantile=0.1)
        with pytest.raises(PreconditionError):
            L.margin_al_realizable(P3, R3, o, 0.1, 0.1, st, knobs=REAL_KNOBS)

    def test_dimension_mismatch(self):
        with pytest.raises(PreconditionError):
            L.margin_al_realizable(P3, R5, L.LabelOracle.realizable(np.ones(3)), 0.1, 0.1, stream("dim"))

    def test_needs_rng_stream(self):
        with pytest.raises(PreconditionError):
            L.margin_al_realizable(P3, R3, L.LabelOracle.realizable(np.ones(3)), 0.1, 0.1,
                                   np.random.default_rng(0))


def adversarial_run(seed, eta, strategy="boundary-proximal", **kw):
    st = stream("adv", seed, strategy)
    o = L.LabelOracle.adversarial(target(st, 5), eta, strategy, quantile=0.05, stream=st.child("adversary"))
    return L.margin_al_adversarial(P5, R5, o, 0.05, 0.1, st, knobs=ADV_KNOBS, **kw), o


class TestAdversarial:
    def test_idle_adversary(self):
        res, o = adversarial_run(0, 0.0)
        assert o.flips == 0
        assert res.error.within(0.05)

    @pytest.mark.parametrize("strategy", ["boundary-proximal", "uniform"])
    def test_noisy_run(self, strategy):
        res, o = adversarial_run(1, 0.01 * 0.05, strategy)
        assert res.error.within(0.05)
        assert o.flips <= o.eta * o.generated

    def test_band_conditional_error_below_kappa(self):
        res, _ = adversarial_run(2, 0.01 * 0.05, band_eval=20_000)
        for r in res.rounds:
            assert r.band_error - 3 * r.band_error_se <= r.kappa

    def test_round_records(self):
        res, _ = adversarial_run(3, 0.0)
        sched = res.schedule
        assert res.labels_per_round == sched.m
        assert [r.tau for r in res.rounds] == list(sched.tau)
        assert [r.radius for r in res.rounds] == list(sched.r)
        for r in res.rounds:
            assert r.renormalised == (r.v_norm < 0.5)
            assert 0.0 <= r.hinge

    def test_noise_rate_precondition(self):
        st = stream("pre")
        o = L.LabelOracle.adversarial(np.ones(5), 0.06, quantile=0.05)
        with pytest.raises(PreconditionError):
            L.margin_al_adversarial(P5, R5, o, 0.05, 0.1, st, knobs=ADV_KNOBS)

    def test_deterministic(self):
        a, _ = adversarial_run(4, 0.0005)
        b, _ = adversarial_run(4, 0.0005)
        assert np.array_equal(a.w, b.w) and a.rounds == b.rounds


class TestPassive:
    def test_labels_and_error(self):
        st = stream("passive")
        res = L.passive_baseline(P3, R3, L.LabelOracle.realizable(target(st, 3)), 0.1, 0.1, st)
        assert res.labels == vc_sample_size(0.1, 0.1, 3)
        assert res.error.within(0.1)


def baum_run(seed, u, v, eps=0.1, **kw):
    return L.baum_learn(P3, R3, (u, v), eps, 0.1, stream("baum", seed), **kw)


class TestBaum:
    def test_composite_error(self):
        g = stream("baum-targets").generator
        res = baum_run(0, g.standard_normal(3), g.standard_normal(3))
        assert res.branch == "composite"
        assert res.containment and res.positives_consistent
        assert res.error.within(0.1)
        m1, m2, m3 = res.sizes
        assert res.labels == m3 + m1

    def test_all_negative_branch(self):
        u = np.array([1.0, 0.0, 0.0])
        v = np.array([-1.0, 0.02, 0.0])
        res = baum_run(1, u, v)
        assert res.branch == "all-negative"
        assert res.positives < res.sizes[1]
        assert res.error.within(0.1)
        assert np.all(res.hypothesis.predict(R3.sample(100, stream("x").generator)) == -1)

    def test_negative_outside_cover(self):
        g = stream("baum-out").generator
        res = baum_run(2, g.standard_normal(3), g.standard_normal(3))
        X = R3.sample(20_000, g)
        out = ~res.hypothesis.inside(X)
        assert out.any() and np.all(res.hypothesis.predict(X)[out] == -1)

    def test_needs_three_dimensions(self):
        with pytest.raises(Exception):
            L.baum_learn(SConcaveParams(-0.02, 2), make_radial_nd(2, -0.02), (np.ones(2), np.ones(2)), 0.1, 0.1,
                         stream("n2"))


class TestDisagreementCoefficient:
    WIDE = Knobs(c_f1=1e5)  # rescales f1 so the angular surrogate does not saturate

    def test_saturated_capacity(self):
        est = L.estimate_disagreement_coefficient(P3, R3, [1.0, 0.0, 0.0], [0.01, 0.1], 1000, stream("sat"))
        for row in est.rows:
            assert row.saturated and row.probability == 1.0
            assert row.capacity == pytest.approx(1.0 / row.r)
        assert est.theta == pytest.approx(100.0)

    def test_surrogate_matches_sphere_oracle(self):
        # for a rotation-invariant law in R^3, |u.x|/|x| is uniform on [0, 1], so Pr = sin(angle)
        est = L.estimate_disagreement_coefficient(P3, R3, [0.0, 0.0, 1.0], [0.05, 0.2, 0.5], 200_000,
                                                  stream("sphere"), knobs=self.WIDE)
        for row in est.rows:
            assert not row.saturated
            assert abs(row.probability - math.sin(row.angle)) <= 4 * row.std_error

    def test_rotational_invariance(self):
        g = stream("rot").generator
        a = L.estimate_disagreement_coefficient(P3, R3, g.standard_normal(3), [0.1, 0.3], 100_000,
                                                stream("rot", 1), knobs=self.WIDE)
        b = L.estimate_disagreement_coefficient(P3, R3, g.standard_normal(3), [0.1, 0.3], 100_000,
                                                stream("rot", 2), knobs=self.WIDE)
        for x, y in zip(a.rows, b.rows):
            assert abs(x.capacity - y.capacity) <= 3 * math.hypot(x.capacity_se, y.capacity_se)

    def test_below_bound(self):
        est = L.estimate_disagreement_coefficient(P3, R3, [1.0, 0.0, 0.0], [0.01, 0.05, 0.2], 100_000,
                                                  stream("bound"))
        assert est.holds and est.theta <= est.bound

    def test_grid_validation(self):
        with pytest.raises(PreconditionError):
            L.estimate_disagreement_coefficient(P3, R3, [1.0, 0.0, 0.0], [0.0, 0.1], 1000, stream("v"))
