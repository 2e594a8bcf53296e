import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special, stats

from mtarmix import stats_kernel as sk
from mtarmix.stats_kernel import DomainError, NoiseFamily

FAMILY_EXTRA = [
    (NoiseFamily.GAUSSIAN, None),
    (NoiseFamily.STUDENT_T, (3.0,)),
    (NoiseFamily.SLASH, (6.0,)),
    (NoiseFamily.CONTAMINATED_NORMAL, (0.05, 0.1)),
    (NoiseFamily.SYMMETRIC_HYPERBOLIC, (0.5,)),
    (NoiseFamily.LAPLACE, None),
]

# univariate standard mixture densities by integrating over the mixing law
# (scripts/oracles.py, frozen)
DENSITY_ORACLE = {
    (NoiseFamily.STUDENT_T, 3.0, 0.3): 0.34645357427450585,
    (NoiseFamily.STUDENT_T, 3.0, 2.0): 0.06750966066389857,
    (NoiseFamily.SLASH, 6.0, 0.3): 0.33019981319205843,
    (NoiseFamily.SLASH, 6.0, 2.0): 0.07742200483151651,
    (NoiseFamily.SYMMETRIC_HYPERBOLIC, 0.5, 0.3): 0.1790958926761072,
    (NoiseFamily.SYMMETRIC_HYPERBOLIC, 0.5, 2.0): 0.09868201513588339,
    (NoiseFamily.LAPLACE, None, 0.3): 0.21517699410625774,
    (NoiseFamily.LAPLACE, None, 2.0): 0.09196986029285344,
}
HYPERBOLIC_VF_011 = 167.663148771142
HYPERBOLIC_VF_1 = 2.6994839355937725


class TestBessel:
    @pytest.mark.parametrize("order", [0.0, 0.5, 1.0, 2.0, -0.5, 3.7])
    @pytest.mark.parametrize("x", [1e-3, 0.11, 1.0, 20.0])
    def test_matches_scipy(self, order, x):
        assert sk.log_bessel_k(order, x) == pytest.approx(math.log(special.kv(order, x)), rel=1e-10)

    def test_large_argument_finite(self):
        # kv underflows to 0 here, the log stays finite
        val = sk.log_bessel_k(1.0, 2000.0)
        assert np.isfinite(val)
        assert val == pytest.approx(0.5 * math.log(math.pi / 4000.0) - 2000.0, rel=1e-6)

    def test_half_order_closed_form(self):
        x = np.array([0.1, 1.0, 7.0])
        ref = 0.5 * np.log(np.pi / (2 * x)) - x
        np.testing.assert_allclose(sk.log_bessel_k(0.5, x), ref, rtol=1e-12)

    def test_domain(self):
        with pytest.raises(DomainError):
            sk.log_bessel_k(1.0, 0.0)
        with pytest.raises(DomainError):
            sk.log_bessel_k(1.0, -2.0)


class TestIncompleteGamma:
    @pytest.mark.parametrize("a,b", [(0.5, 0.2), (2.0, 3.0), (10.0, 1.0), (4.5, 40.0)])
    def test_quadrature(self, a, b):
        ref = integrate.quad(lambda u: u ** (a - 1) * math.exp(-u), 0, b, epsabs=0, epsrel=1e-12)[0]
        assert sk.lower_incomplete_gamma(a, b) == pytest.approx(ref, rel=1e-9)

    def test_zero(self):
        assert sk.lower_incomplete_gamma(2.0, 0.0) == 0.0

    def test_domain(self):
        with pytest.raises(DomainError):
            sk.lower_incomplete_gamma(0.0, 1.0)


class TestSamplers:
    def test_gamma_mean(self):
        rng = np.random.default_rng(1)
        x = sk.sample_gamma(3.0, 2.0, rng, size=200_000)
        assert x.mean() == pytest.approx(1.5, rel=0.01)

    def test_gamma_domain(self):
        with pytest.raises(DomainError):
            sk.sample_gamma(-1.0, 1.0, np.random.default_rng())

    @pytest.mark.parametrize("shape,rate", [(2.5, 0.7), (51.5, 10.0), (51.5, 300.0), (0.5, 1e-30), (3.0, 0.0)])
    def test_truncated_gamma_ks(self, shape, rate):
        rng = np.random.default_rng(2)
        x = sk.sample_truncated_gamma(shape, np.full(4000, rate), (0.0, 1.0), rng)
        assert np.all((x > 0) & (x <= 1))
        f = lambda u: math.exp((shape - 1) * math.log(u) - rate * u)
        z = integrate.quad(f, 0, 1, epsabs=0, epsrel=1e-12)[0]
        cdf = lambda t: np.array([integrate.quad(f, 0, ti, epsabs=0, epsrel=1e-10)[0] / z for ti in t])
        assert stats.kstest(x[:800], cdf).pvalue > 1e-3

    def test_truncated_gamma_domain(self):
        with pytest.raises(DomainError):
            sk.sample_truncated_gamma(1.0, 1.0, (1.0, 1.0), np.random.default_rng())
        with pytest.raises(DomainError):
            sk.sample_truncated_gamma(0.0, 1.0, (0.0, 1.0), np.random.default_rng())

    @pytest.mark.parametrize("lam,chi,psi", [(1.0, 1.0, 0.0121), (-0.5, 2.0, 0.25), (0.0, 1.0, 1.0),
                                             (0.5, 3.0, 0.25), (-1.0, 1e-3, 4.0), (2.5, 5.0, 1.5)])
    def test_gig_against_scipy(self, lam, chi, psi):
        rng = np.random.default_rng(3)
        x = sk.sample_gig(lam, chi, psi, rng, size=5000)
        ref = stats.geninvgauss(lam, math.sqrt(chi * psi), scale=math.sqrt(chi / psi))
        assert stats.kstest(x, ref.cdf).pvalue > 1e-3
        assert sk.gig_mean(lam, chi, psi) == pytest.approx(ref.mean(), rel=1e-8)

    def test_gig_vector_parameters(self):
        rng = np.random.default_rng(4)
        chi = np.array([0.01, 1.0, 50.0])
        x = sk.sample_gig(0.5, np.repeat(chi, 20000), 0.25, rng).reshape(3, -1)
        means = [sk.gig_mean(0.5, c, 0.25) for c in chi]
        np.testing.assert_allclose(x.mean(axis=1), means, rtol=0.03)

    def test_gig_domain(self):
        with pytest.raises(DomainError):
            sk.sample_gig(1.0, 0.0, 1.0, np.random.default_rng())

    def test_dirichlet(self):
        rng = np.random.default_rng(5)
        a = np.array([2.0, 5.0, 3.0])
        x = np.array([sk.sample_dirichlet(a, rng) for _ in range(20000)])
        np.testing.assert_allclose(x.sum(axis=1), 1.0)
        np.testing.assert_allclose(x.mean(axis=0), a / a.sum(), atol=0.005)
        with pytest.raises(DomainError):
            sk.sample_dirichlet([1.0, 0.0], rng)

    def test_dirichlet_logpdf(self):
        x, a = np.array([0.2, 0.5, 0.3]), np.array([2.0, 3.0, 4.0])
        assert sk.dirichlet_logpdf(x, a) == pytest.approx(stats.dirichlet.logpdf(x, a))

    def test_inverse_wishart_mean(self):
        rng = np.random.default_rng(6)
        scale = np.array([[2.0, 0.5], [0.5, 1.0]])
        draws = np.array([sk.sample_inverse_wishart(scale, 9.0, rng) for _ in range(40000)])
        np.testing.assert_allclose(draws.mean(axis=0), scale / (9.0 - 3.0), rtol=0.03, atol=0.005)

    def test_inverse_wishart_against_scipy(self):
        rng = np.random.default_rng(7)
        scale = np.array([[1.0, 0.3], [0.3, 2.0]])
        ours = np.array([sk.sample_inverse_wishart(scale, 6.0, rng)[0, 0] for _ in range(5000)])
        ref = stats.invwishart(df=6.0, scale=scale).rvs(5000, random_state=8)[:, 0, 0]
        assert stats.ks_2samp(ours, ref).pvalue > 1e-3

    def test_inverse_wishart_domain(self):
        with pytest.raises(DomainError):
            sk.sample_inverse_wishart(np.eye(3), 1.5, np.random.default_rng())
        with pytest.raises(DomainError):
            sk.sample_inverse_wishart(-np.eye(2), 5.0, np.random.default_rng())

    def test_matrix_normal_covariance(self):
        rng = np.random.default_rng(9)
        a = np.array([[1.0, 0.4], [0.4, 2.0]])
        b = np.array([[1.5, -0.3], [-0.3, 0.5]])
        x = np.array([sk.sample_matrix_normal(np.zeros((2, 2)), a, b, rng) for _ in range(40000)])
        vec = x.transpose(0, 2, 1).reshape(len(x), -1)  # column-stacked vec
        np.testing.assert_allclose(np.cov(vec.T), np.kron(b, a), atol=0.05)


class TestDensities:
    @pytest.mark.parametrize("key", list(DENSITY_ORACLE))
    def test_univariate_oracle(self, key):
        fam, nu, y = key
        extra = None if nu is None else (nu,)
        val = math.exp(sk.mixture_log_density(fam, [y], [0.0], [[1.0]], extra))
        assert val == pytest.approx(DENSITY_ORACLE[key], rel=1e-7)

    def test_contaminated_closed_form(self):
        y = np.array([0.4, -1.0])
        s = np.array([[1.0, 0.2], [0.2, 2.0]])
        ref = 0.05 * stats.multivariate_normal.pdf(y, cov=s / 0.1) + 0.95 * stats.multivariate_normal.pdf(y, cov=s)
        assert math.exp(sk.mixture_log_density("contaminated_normal", y, [0, 0], s, (0.05, 0.1))) == pytest.approx(ref)

    def test_student_t_matches_scipy(self):
        y = np.array([0.4, -1.0])
        s = np.array([[1.0, 0.2], [0.2, 2.0]])
        ref = stats.multivariate_t.logpdf(y, shape=s, df=4.0)
        assert sk.mixture_log_density("student_t", y, [0, 0], s, (4.0,)) == pytest.approx(ref)

    def test_laplace_at_location(self):
        # k = 1 has a finite peak of 1/4 (double exponential with variance 8); k >= 2 diverges
        assert math.exp(sk.log_density_quadform("laplace", 0.0, 1, 0.0, None)) == pytest.approx(0.25)
        assert sk.log_density_quadform("laplace", 0.0, 2, 0.0, None) == np.inf

    def test_slash_at_location(self):
        # f(mu) = nu / (nu + k) (2 pi)^{-k/2} for Sigma = I
        for k in (1, 3):
            val = math.exp(sk.log_density_quadform("slash", 0.0, k, 0.0, (6.0,)))
            assert val == pytest.approx(6.0 / (6.0 + k) * (2 * math.pi) ** (-k / 2))

    def test_invalid_extra(self):
        with pytest.raises(DomainError):
            sk.mixture_log_density("student_t", [0.0], [0.0], [[1.0]], (-1.0,))
        with pytest.raises(DomainError):
            sk.mixture_log_density("contaminated_normal", [0.0], [0.0], [[1.0]], (1.5, 0.2))

    @pytest.mark.parametrize("fam,extra", FAMILY_EXTRA)
    def test_normalizes_k1(self, fam, extra):
        f = lambda y: math.exp(sk.log_density_quadform(fam, y * y, 1, 0.0, extra))
        total = 2 * integrate.quad(f, 0, np.inf, limit=500, epsabs=0, epsrel=1e-10)[0]
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_mixing_log_density_support(self):
        assert sk.mixing_log_density("slash", 1.5, (6.0,)) == -np.inf
        assert sk.mixing_log_density("laplace", -1.0) == -np.inf
        assert sk.mixing_log_density("contaminated_normal", 0.1, (0.05, 0.1)) == pytest.approx(math.log(0.05))
        assert sk.mixing_log_density("gaussian", 1.0) == 0.0

    @pytest.mark.parametrize("fam,extra", [f for f in FAMILY_EXTRA if f[0] is not NoiseFamily.CONTAMINATED_NORMAL
                                            and f[0] is not NoiseFamily.GAUSSIAN])
    def test_mixing_density_normalizes(self, fam, extra):
        f = lambda u: math.exp(sk.mixing_log_density(fam, u, extra))
        hi = 1.0 if fam is NoiseFamily.SLASH else np.inf
        assert integrate.quad(f, 0, hi, limit=500)[0] == pytest.approx(1.0, abs=1e-7)

    def test_variance_factors(self):
        assert sk.variance_factor("student_t", (5.0,)) == pytest.approx(5 / 3)
        assert sk.variance_factor("slash", (6.0,)) == pytest.approx(1.5)
        assert sk.variance_factor("contaminated_normal", (0.05, 0.1)) == pytest.approx(1.45)
        assert sk.variance_factor("laplace") == 8.0
        assert sk.variance_factor("symmetric_hyperbolic", (0.11,)) == pytest.approx(HYPERBOLIC_VF_011, rel=1e-9)
        assert sk.variance_factor("symmetric_hyperbolic", (1.0,)) == pytest.approx(HYPERBOLIC_VF_1, rel=1e-9)


class TestQuadform:
    @pytest.mark.parametrize("fam,extra", FAMILY_EXTRA)
    def test_cdf_matches_simulation(self, fam, extra):
        rng = np.random.default_rng(11)
        k = 2
        eps = sk.sample_mixture(fam, extra, np.eye(k), 40000, rng)
        rho = np.sum(eps ** 2, axis=1)
        pts = np.quantile(rho, [0.1, 0.5, 0.9])
        np.testing.assert_allclose(sk.quadform_cdf(fam, pts, k, extra), [0.1, 0.5, 0.9], atol=0.01)

    def test_gaussian_median(self):
        assert sk.quadform_cdf("gaussian", stats.chi2.median(3), 3) == pytest.approx(0.5)

    def test_domain(self):
        with pytest.raises(DomainError):
            sk.quadform_cdf("gaussian", -1.0, 2)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(FAMILY_EXTRA), st.floats(0.0, 30.0), st.floats(0.0, 30.0), st.integers(1, 3))
def test_quadform_cdf_monotone_and_complementary(fam_extra, a, b, k):
    fam, extra = fam_extra
    lo, hi = sorted((a, b))
    c_lo, c_hi = sk.quadform_cdf(fam, lo, k, extra), sk.quadform_cdf(fam, hi, k, extra)
    assert 0.0 <= c_lo <= c_hi + 1e-12 <= 1.0 + 1e-12
    assert c_hi + sk.quadform_sf(fam, hi, k, extra) == pytest.approx(1.0, abs=1e-8)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(FAMILY_EXTRA), st.lists(st.floats(-5, 5), min_size=2, max_size=2))
def test_density_symmetric_about_location(fam_extra, y):
    fam, extra = fam_extra
    y = np.array(y)
    mu = np.array([0.3, -0.2])
    s = np.array([[1.0, 0.3], [0.3, 0.8]])
    a = sk.mixture_log_density(fam, mu + y, mu, s, extra)
    b = sk.mixture_log_density(fam, mu - y, mu, s, extra)
    assert a == pytest.approx(b, rel=1e-10, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(FAMILY_EXTRA), st.floats(1e-6, 50.0), st.floats(1e-6, 50.0))
def test_density_decreasing_in_quadform(fam_extra, a, b):
    fam, extra = fam_extra
    lo, hi = sorted((a, b))
    assert sk.log_density_quadform(fam, lo, 2, 0.0, extra) >= sk.log_density_quadform(fam, hi, 2, 0.0, extra) - 1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(-3.0, 3.0), st.floats(1e-3, 40.0), st.floats(1e-3, 40.0), st.integers(0, 2**32 - 1))
def test_gig_positive_finite(lam, chi, psi, seed):
    x = sk.sample_gig(lam, chi, psi, np.random.default_rng(seed), size=50)
    assert np.all(np.isfinite(x)) and np.all(x > 0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 80.0), st.floats(0.0, 500.0), st.integers(0, 2**32 - 1))
def test_truncated_gamma_in_support(shape, rate, seed):
    x = sk.sample_truncated_gamma(shape, np.full(20, rate), (0.0, 1.0), np.random.default_rng(seed))
    assert np.all((x > 0) & (x <= 1))
