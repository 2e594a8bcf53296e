import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import linalg, stats

from mtarmix.gibbs import ChainControl
from mtarmix.model_core import ConfigurationError, ModelSpec, regime_labels
from mtarmix.seeds import generator, int_seed, substream
from mtarmix.simlab import (ExogenousSeries, coverage_experiment, make_m1, make_m1_ar, make_m2,
                            order_candidates, regime_count_candidates, selection_experiment,
                            simulate_mtar)

# frozen by scripts/oracles.py
M1_EXO_RADIUS = 0.6557706435548626
M1_EXO_VAR = np.array([2.895, 2.994, 4.037])
M2_SHARES = np.array([0.32997, 0.33133, 0.33871])


class TestDesigns:
    def test_m1_values(self):
        m = make_m1()
        th1, th2 = m.theta
        assert th1.shape == (1 + 3 + 2, 3) and th2.shape == (1 + 6, 3)
        np.testing.assert_array_equal(th1[0], [1.0, -2.0, 6.0])
        # coefficient rows are transposed blocks: theta[1 + a, i] = phi[i, a]
        np.testing.assert_array_equal(th1[1:4].T, [[0.1, 0.6, 0.4], [-0.4, 0.5, -0.7], [0.2, 0.6, -0.3]])
        np.testing.assert_array_equal(th1[4:].T, [[0.6, -0.5], [-0.4, 0.6], [0.1, 0.3]])
        np.testing.assert_array_equal(th2[4:].T, np.diag([0.3, -0.6, 0.5]))
        np.testing.assert_array_equal(np.diag(m.sigma[1]), [1.5, 1.0, 2.0])
        assert m.c.tolist() == [0.0] and m.h == 0 and (m.k, m.r) == (3, 2)

    def test_m2_values(self):
        m = make_m2()
        assert m.c.tolist() == [1.95, 3.02] and m.h == 1
        np.testing.assert_array_equal(m.theta[2][0], [-3.0, 0.0])
        np.testing.assert_array_equal(m.theta[1][1:].T, [[0.3, 0.0], [0.0, -0.6]])
        np.testing.assert_array_equal(np.diag(m.sigma[0]), [1.0, 4.0])

    def test_m1_ar_keeps_lag_one_block(self):
        m = make_m1_ar()
        np.testing.assert_array_equal(m.theta[1], make_m1().theta[1][:4])
        assert m.spec.family.value == "student_t" and m.extra.tolist() == [5.0]

    def test_exogenous_var_stationary(self):
        exo = make_m1().exogenous
        assert max(abs(np.linalg.eigvals(exo.coef))) == pytest.approx(M1_EXO_RADIUS, abs=1e-6)
        s = linalg.solve_discrete_lyapunov(exo.coef, exo.cov)
        np.testing.assert_allclose(np.diag(s), M1_EXO_VAR, atol=1e-3)
        x, z = exo.generate(60000, np.random.default_rng(0))
        w = np.column_stack([x, z])
        np.testing.assert_allclose(w.var(axis=0), M1_EXO_VAR, rtol=0.05)

    def test_regime_autoregressions_stable(self):
        for m in (make_m1(), make_m2()):
            for j, th in enumerate(m.theta):
                k, p = m.k, m.spec.p[j]
                blocks = [th[1 + i * k:1 + (i + 1) * k].T for i in range(p)]
                comp = np.zeros((k * p, k * p))
                comp[:k] = np.hstack(blocks)
                comp[k:, :-k] = np.eye(k * (p - 1))
                assert max(abs(np.linalg.eigvals(comp))) < 1

    def test_with_family(self):
        m = make_m2().with_family("slash", [2.0])
        assert m.spec.family.value == "slash" and m.extra.tolist() == [2.0]
        with pytest.raises(ValueError):
            make_m2().with_family("slash", [-1.0])

    def test_param_vector_names(self):
        names = make_m1().param_vector()
        assert names["theta1[1,3]"] == 6.0 and names["theta1[5,1]"] == 0.6
        assert names["sigma2[3,3]"] == 2.0 and "sigma2[3,1]" not in names and names["c1"] == 0.0


class TestSimulation:
    def test_bit_reproducible(self):
        a = simulate_mtar(make_m1(), 150, rng=np.random.default_rng(4))
        b = simulate_mtar(make_m1(), 150, rng=np.random.default_rng(4))
        np.testing.assert_array_equal(a.y, b.y)
        np.testing.assert_array_equal(a.x, b.x)

    def test_regimes_match_threshold_rule(self):
        truth = make_m2()
        series, labels = simulate_mtar(truth, 400, rng=np.random.default_rng(1), return_regimes=True)
        np.testing.assert_array_equal(labels[1:], regime_labels(series.z[:-1], truth.c))

    def test_m2_regime_shares(self):
        truth = make_m2()
        _, labels = simulate_mtar(truth, 60000, rng=np.random.default_rng(2), return_regimes=True)
        np.testing.assert_allclose(np.bincount(labels) / labels.size, M2_SHARES, atol=0.012)

    def test_innovations_have_regime_covariance(self):
        truth = make_m2()
        series, labels = simulate_mtar(truth, 30000, rng=np.random.default_rng(3), return_regimes=True)
        for j in range(3):
            t = np.flatnonzero(labels[1:] == j) + 1
            pred = truth.theta[j][0] + series.y[t - 1] @ truth.theta[j][1:]
            resid = series.y[t] - pred
            np.testing.assert_allclose(resid.mean(axis=0), 0, atol=0.08)
            np.testing.assert_allclose(np.cov(resid.T), truth.sigma[j], rtol=0.06, atol=0.04)

    def test_student_innovations_heavy_tailed(self):
        truth = make_m2("student_t", [5.0])
        series, labels = simulate_mtar(truth, 30000, rng=np.random.default_rng(5), return_regimes=True)
        t = np.flatnonzero(labels[1:] == 1) + 1
        resid = series.y[t, 0] - (truth.theta[1][0, 0] + series.y[t - 1] @ truth.theta[1][1:, 0])
        # regime 2 has unit variance, so the innovation is a standard t5
        assert stats.kstest(resid, stats.t(5.0).cdf).pvalue > 1e-3
        assert stats.kstest(resid, stats.norm(0, np.sqrt(5 / 3)).cdf).pvalue < 1e-3

    def test_too_short(self):
        with pytest.raises(ConfigurationError):
            simulate_mtar(make_m1(), 5)

    def test_supplied_exogenous(self):
        base = make_m2()
        rng = np.random.default_rng(6)
        z = rng.normal(size=500)
        truth = type(base)(base.spec, base.theta, base.sigma, base.c, base.h,
                           ExogenousSeries(None, z), base.extra, base.k, base.r)
        series = simulate_mtar(truth, 100, burn=50, rng=rng)
        np.testing.assert_array_equal(series.z, z[-100:])
        with pytest.raises(ConfigurationError):
            simulate_mtar(truth, 400, burn=200, rng=rng)


class TestSeeds:
    def test_streams_distinct(self):
        a = generator(0, "estimation", 1).random(4)
        b = generator(0, "simulation", 1).random(4)
        c = generator(0, "estimation", 2).random(4)
        assert not np.allclose(a, b) and not np.allclose(a, c)
        np.testing.assert_array_equal(a, generator(0, "estimation", 1).random(4))

    def test_int_seed_stable(self):
        assert int_seed(7, "replication", 3) == int_seed(7, "replication", 3)
        assert substream(7, "forecasting").spawn_key == (1,)
        with pytest.raises(ValueError):
            substream(0, "other")


TINY = ChainControl(iterations=80, burn_in=20, seed=0)


class TestExperiments:
    def test_single_replication_report(self):
        rep = coverage_experiment(make_m2(), T=200, replications=1, control=TINY, horizon=2, seed=1)
        assert rep.replications == 1 and rep.failures == 0
        assert set(rep.coverage.values()) <= {0.0, 100.0}
        assert rep.prediction_coverage.shape == (2, 2)
        assert rep.threshold_bias.shape == (2,)
        d = rep.to_dict()
        assert d["settings"]["chain"]["iterations"] == 80 and "theta3[3,2]" in d["coverage"]

    def test_parallel_matches_serial(self):
        kw = dict(T=150, replications=2, control=TINY, horizon=1, seed=2, family="student_t", extra=[4.0])
        a = coverage_experiment(make_m2(), **kw)
        b = coverage_experiment(make_m2(), n_jobs=2, **kw)
        assert a.coverage == b.coverage
        np.testing.assert_array_equal(a.extra_relative_bias, b.extra_relative_bias)
        assert "nu1" in a.coverage

    def test_failures_are_counted(self):
        # T=15 leaves too few points per regime for the fit
        with pytest.raises(RuntimeError, match="every replication failed"):
            coverage_experiment(make_m1(), T=15, replications=2, control=TINY, horizon=1)

    def test_single_candidate_always_wins(self):
        cands = [ModelSpec(l=3, p=1, h_min=1, h_max=1)]
        tab = selection_experiment(make_m2(), cands, 0, T=150, replications=2, control=TINY, seed=3)
        assert tab.rank1 == {"DIC": 1.0, "WAIC": 1.0} and tab.rank2 == {"DIC": 0.0, "WAIC": 0.0}
        assert tab.candidates == ["MTAR(3)[p=1, gaussian]"]

    def test_candidate_builders(self):
        assert [s.l for s in regime_count_candidates(max_l=4)] == [1, 2, 3, 4]
        assert [s.p[0] for s in order_candidates(2, orders=(1, 2, 3))] == [1, 2, 3]


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(["gaussian", "student_t", "slash", "contaminated_normal",
                        "symmetric_hyperbolic", "laplace"]), st.integers(0, 10_000))
def test_simulation_finite_and_sized(family, seed):
    extra = {"student_t": [4.0], "slash": [2.0], "contaminated_normal": [0.1, 0.2],
             "symmetric_hyperbolic": [1.0]}.get(family)
    truth = make_m2(family, extra)
    series, labels = simulate_mtar(truth, 60, rng=np.random.default_rng(seed), return_regimes=True)
    assert series.T == 60 and np.all(np.isfinite(series.y))
    assert set(np.unique(labels)) <= {0, 1, 2}
