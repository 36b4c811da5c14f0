import math

import numpy as np
import pytest
from scipy import stats

from curriculum_lab.curriculum import (
    PolicyTag,
    Pool,
    SchedulePolicy,
    SchedulerState,
    ScoreLaw,
    build_pool,
    next_example,
    race,
    run_training,
    sign_test,
)
from curriculum_lab.difficulty import batch_scores
from curriculum_lab.errors import ContractViolation
from curriculum_lab.estimators import RateEstimate, Verdict, monotonicity_probe, regression_decrement
from curriculum_lab.losses import Kind, Problem
from curriculum_lab.vecspace import RngStream, StandardGaussian

DIST = StandardGaussian(2)
W_BAR = np.array([1.0, -0.5, 0.25])
REG = Problem(Kind.REGRESSION, 0.01)


def pool(rng, law=ScoreLaw("half_normal", 1.0), size=200, kind=Kind.REGRESSION, w_bar=W_BAR):
    return build_pool(DIST, w_bar, size, law, rng, kind)


class TestBuildPool:
    def test_noiseless(self, rng):
        p = pool(rng, ScoreLaw("constant", 0.0))
        np.testing.assert_array_equal(p.psi, 0.0)
        np.testing.assert_allclose(p.X @ W_BAR, p.y, atol=1e-12)

    def test_constant_score(self, rng):
        p = pool(rng, ScoreLaw("constant", 0.7))
        np.testing.assert_allclose(batch_scores(REG, p.X, p.y, W_BAR), 0.7, atol=1e-9)

    def test_half_normal_mean(self, rng):
        law = ScoreLaw("half_normal", 2.0)
        p = pool(rng, law, size=50_000)
        assert abs(p.psi.mean() - law.mean()) < 4 * law.std() / math.sqrt(p.psi.size)
        assert math.isclose(law.mean(), 2.0 * math.sqrt(2 / math.pi))

    def test_hinge_scores(self, rng):
        w = W_BAR / np.linalg.norm(W_BAR)
        p = pool(rng, ScoreLaw("uniform", 2.0), size=1000, kind=Kind.HINGE, w_bar=w)
        np.testing.assert_allclose(batch_scores(Problem(Kind.HINGE, 0.1), p.X, p.y, w), p.psi, atol=1e-9)
        assert set(np.unique(p.y)) == {-1.0, 1.0}

    def test_rescaled(self, rng):
        p = pool(rng)
        q = p.rescaled(3.0)
        np.testing.assert_allclose(q.X, 3 * p.X)
        np.testing.assert_allclose(q.w_bar, p.w_bar / 3)
        with pytest.raises(ValueError):
            p.rescaled(0.0)

    def test_bad_inputs(self, rng):
        with pytest.raises(ValueError):
            pool(rng, size=0)
        with pytest.raises(ValueError):
            ScoreLaw("cauchy")
        with pytest.raises(ValueError):
            Pool(Kind.REGRESSION, np.ones((2, 3)), np.ones(3), np.ones(2), W_BAR)


class TestSchedulePolicy:
    def test_pacing(self):
        pol = SchedulePolicy(PolicyTag.CURRICULUM_GLOBAL, p0=0.1, horizon=100)
        p = [pol.pacing(t) for t in range(0, 150)]
        assert p[0] > 0 and all(b >= a for a, b in zip(p, p[1:])) and pol.pacing(100) == 1.0

    def test_fraction_size(self):
        pol = SchedulePolicy(PolicyTag.CURRICULUM_GLOBAL, p0=0.1, horizon=100)
        assert pol.fraction_size(0, 10) == 1
        assert pol.fraction_size(0, 5) == 1
        assert pol.fraction_size(100, 37) == 37

    def test_validation(self):
        for kw in ({"p0": 0.0}, {"p0": 1.5}, {"horizon": 0}, {"refresh": 0}):
            with pytest.raises(ValueError):
                SchedulePolicy(PolicyTag.UNIFORM, **kw)


class TestNextExample:
    def test_full_fraction_is_uniform(self, rng):
        p = pool(rng, size=20)
        pol = SchedulePolicy(PolicyTag.CURRICULUM_GLOBAL, p0=1.0)
        state = SchedulerState(pol, p, REG)
        counts = np.bincount([next_example(pol, p, W_BAR, 0, rng, state) for _ in range(20_000)], minlength=20)
        assert stats.chisquare(counts).pvalue > 1e-3

    def test_singleton_fraction_is_argmin(self, rng):
        p = pool(rng, size=50)
        pol = SchedulePolicy(PolicyTag.CURRICULUM_GLOBAL, p0=1 / 50)
        assert {next_example(pol, p, W_BAR, 0, rng) for _ in range(20)} == {int(np.argmin(p.psi))}
        anti = SchedulePolicy(PolicyTag.ANTI_CURRICULUM, p0=1 / 50)
        assert next_example(anti, p, W_BAR, 0, rng) == int(np.argmax(p.psi))

    def test_ties_break_by_id(self, rng):
        p = pool(rng, ScoreLaw("constant", 1.0), size=30)
        pol = SchedulePolicy(PolicyTag.CURRICULUM_GLOBAL, p0=1 / 30)
        assert next_example(pol, p, W_BAR, 0, rng) == 0

    def test_combined_equal_scores_is_hard_mining(self, rng):
        p = pool(rng, ScoreLaw("constant", 0.5), size=40)
        w = np.zeros(3)
        combined = SchedulePolicy(PolicyTag.COMBINED, p0=0.3)
        hard = SchedulePolicy(PolicyTag.HARD_MINING_LOCAL, p0=1 / 40)
        expect = int(np.argmax(batch_scores(REG, p.X, p.y, w)))
        assert next_example(combined, p, w, 0, rng) == expect
        assert next_example(hard, p, w, 0, rng) == expect

    def test_local_policies(self, rng):
        p = pool(rng, size=40)
        w = np.zeros(3)
        ups = batch_scores(REG, p.X, p.y, w)
        easy = SchedulePolicy(PolicyTag.SELF_PACED_LOCAL, p0=1 / 40)
        assert next_example(easy, p, w, 0, rng) == int(np.argmin(ups))

    def test_combined_respects_global_filter(self, rng):
        p = pool(rng, size=100)
        pol = SchedulePolicy(PolicyTag.COMBINED, p0=0.2)
        w = np.zeros(3)
        i = next_example(pol, p, w, 0, rng)
        easiest = np.argsort(p.psi, kind="stable")[:20]
        ups = batch_scores(REG, p.X, p.y, w)
        assert i in easiest and ups[i] == ups[easiest].max()

    def test_refresh_period(self, rng):
        p = pool(rng, size=40)
        pol = SchedulePolicy(PolicyTag.HARD_MINING_LOCAL, p0=1 / 40, refresh=5)
        state = SchedulerState(pol, p, REG)
        next_example(pol, p, np.zeros(3), 0, rng, state)
        first = state.by_ups_desc.copy()
        next_example(pol, p, W_BAR, 4, rng, state)
        np.testing.assert_array_equal(state.by_ups_desc, first)
        next_example(pol, p, W_BAR, 5, rng, state)
        assert state.refreshed_at == 5


class TestRunTraining:
    def test_zero_steps(self, rng):
        tr = run_training(REG, SchedulePolicy(), pool(rng), np.zeros(3), 0, rng)
        assert len(tr) == 1 and tr.example_id[0] == -1
        assert math.isclose(tr.metric[0], float(np.linalg.norm(W_BAR)))

    def test_records(self, rng):
        tr = run_training(REG, SchedulePolicy(), pool(rng), np.zeros(3), 25, rng, loss_every=5)
        recs = tr.records()
        assert len(recs) == 26 and recs[5]["pool_loss"] is not None and recs[6]["pool_loss"] is None
        assert np.all(np.isfinite(tr.metric))

    def test_deterministic(self):
        runs = []
        for _ in range(2):
            p = pool(RngStream(8, 0), size=100)
            tr = run_training(REG, SchedulePolicy(PolicyTag.COMBINED), p, np.zeros(3), 200, RngStream(8, 1))
            runs.append(tr)
        np.testing.assert_array_equal(runs[0].metric, runs[1].metric)
        np.testing.assert_array_equal(runs[0].example_id, runs[1].example_id)

    def test_noiseless_pool_converges(self):
        finals, initials = [], []
        for seed in range(100):
            p = pool(RngStream(seed, 0), ScoreLaw("constant", 0.0), size=100)
            tr = run_training(Problem(Kind.REGRESSION, 0.05), SchedulePolicy(), p, np.zeros(3), 100, RngStream(seed, 1))
            finals.append(tr.metric[-1])
            initials.append(tr.metric[0])
        assert sign_test(finals, initials).p_value < 0.01

    def test_full_pacing_matches_uniform(self):
        def finals(tag, offset):
            out = []
            for seed in range(100):
                p = pool(RngStream(offset + seed, 0), size=200)
                pol = SchedulePolicy(tag, p0=1.0)
                out.append(run_training(REG, pol, p, np.zeros(3), 150, RngStream(offset + seed, 1), loss_every=0).metric[-1])
            return out

        assert stats.ks_2samp(finals(PolicyTag.UNIFORM, 0), finals(PolicyTag.CURRICULUM_GLOBAL, 1000)).pvalue >= 0.01

    def test_hinge_needs_normalized_start(self, rng):
        w = W_BAR / np.linalg.norm(W_BAR)
        p = pool(rng, kind=Kind.HINGE, w_bar=w)
        with pytest.raises(ContractViolation):
            run_training(Problem(Kind.HINGE, 0.1), SchedulePolicy(), p, 2 * w, 3, rng)
        tr = run_training(Problem(Kind.HINGE, 0.1), SchedulePolicy(), p, w, 3, rng)
        assert tr.metric[0] == pytest.approx(1.0)

    def test_kind_mismatch(self, rng):
        with pytest.raises(ValueError):
            run_training(Problem(Kind.HINGE, 0.1), SchedulePolicy(), pool(rng), np.zeros(3), 1, rng)

    def test_rescaled_pool_same_cosines(self, rng):
        A = 3.0
        w_bar = W_BAR / np.linalg.norm(W_BAR)
        p = pool(rng, kind=Kind.HINGE, w_bar=w_bar)
        big = Pool(p.kind, p.X, p.y, p.psi, A * w_bar)
        w0 = np.array([0.0, 1.0, 0.0])
        for tag in PolicyTag:
            pol = SchedulePolicy(tag, horizon=100)
            a = run_training(Problem(Kind.HINGE, 0.01, A), pol, big, A * w0, 100, RngStream(1), loss_every=0)
            b = run_training(Problem(Kind.HINGE, 0.01 / A**2), pol, big.rescaled(A), w0, 100, RngStream(1), loss_every=0)
            np.testing.assert_allclose(a.metric, b.metric, rtol=0, atol=1e-10)


def test_decile_rates_nonincreasing(rng):
    # one-step decrement on a finite pool, grouped by global-score decile
    p = pool(rng, ScoreLaw("half_normal", 2.0), size=20_000)
    w_t = W_BAR - np.array([1.0, 0.0, 0.0])
    d = regression_decrement(p.X, p.y, w_t, W_BAR, 0.1)
    edges = np.quantile(p.psi, np.linspace(0, 1, 11))
    idx = np.clip(np.searchsorted(edges, p.psi, side="right") - 1, 0, 9)
    curve = [
        (float(np.median(p.psi[idx == k])), RateEstimate(float(d[idx == k].mean()), float(d[idx == k].std(ddof=1) / math.sqrt(np.sum(idx == k))), int(np.sum(idx == k))))
        for k in range(10)
    ]
    probe = monotonicity_probe(curve)
    assert probe.verdict is Verdict.DECREASING


class TestRace:
    def test_sign_test(self):
        r = sign_test([1, 1, 1, 1, 1, 1, 1], [2, 2, 2, 2, 2, 2, 2])
        assert r.wins == 7 and math.isclose(r.p_value, 0.5**7)
        assert sign_test([1, 2], [1, 2]).trials == 0
        assert sign_test([3.0], [1.0], lower_is_better=False).wins == 1

    def test_race_pairs_policies(self):
        def setup(rng):
            return build_pool(DIST, W_BAR, 500, ScoreLaw("half_normal", 2.0), rng), np.zeros(3)

        pols = {t.value: SchedulePolicy(t, horizon=1000) for t in (PolicyTag.CURRICULUM_GLOBAL, PolicyTag.ANTI_CURRICULUM)}
        res = race(REG, pols, setup, 100, list(range(20)), checkpoint=100, keep_trajectories=True)
        assert len(res.trajectories["curriculum_global"]) == 20
        test = res.compare("curriculum_global", "anti_curriculum")
        assert test.wins >= 18 and test.p_value < 0.01
        with pytest.raises(ValueError):
            race(REG, pols, setup, 10, [0], checkpoint=11)
