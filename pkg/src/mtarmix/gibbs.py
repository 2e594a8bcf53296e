"""Gibbs sampler for MTAR models with Gaussian-variance-mixture noise.

One sweep updates, in order: the latent mixing scales ``u``, the regression
matrices ``theta_j``, the scale matrices ``Sigma_j``, the extra parameter
``nu``, the thresholds ``c`` (Metropolis-Hastings with a Dirichlet proposal on
the gap fractions) and the delay ``h`` (exact discrete draw).

Latent scales are stored per eligible time point rather than per regime; the
regime of a time point only decides which ``(theta_j, Sigma_j)`` it meets.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray
from scipy import linalg, special

from . import stats_kernel as sk
from .model_core import (ConfigurationError, ModelSpec, MultivariateSeries, RegimeData,
                         design_rows, eligible_times, mle_init, regime_labels)
from .stats_kernel import NoiseFamily

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """A factorisation or solve failed inside the sampler."""

    def __init__(self, message: str, regime: int | None = None):
        super().__init__(message if regime is None else f"regime {regime + 1}: {message}")
        self.regime = regime


# hyperparameter defaults for the extra parameter, by family
EXTRA_PRIOR_DEFAULTS = {
    NoiseFamily.STUDENT_T: {"gamma0": 2.0, "eta0": 100.0},
    NoiseFamily.SYMMETRIC_HYPERBOLIC: {"gamma0": 0.01, "eta0": 20.0},
    NoiseFamily.SLASH: {"gamma0": 1.0, "eta0": 0.1},
    NoiseFamily.CONTAMINATED_NORMAL: {"gamma01": 1.0, "eta01": 1.0, "gamma02": 1.0, "eta02": 1.0},
}

INITIAL_EXTRA = {
    NoiseFamily.GAUSSIAN: (),
    NoiseFamily.LAPLACE: (),
    NoiseFamily.STUDENT_T: (100.0,),
    NoiseFamily.SLASH: (100.0,),
    NoiseFamily.CONTAMINATED_NORMAL: (0.01, 0.99),
    NoiseFamily.SYMMETRIC_HYPERBOLIC: (1.85,),
}


@dataclass
class Priors:
    """Conjugate priors: theta_j | Sigma_j ~ MN(mu0_j, delta0_j, Sigma_j), Sigma_j ~ W^-1(omega0_j, tau0_j).

    ``gamma0, eta0`` bound the uniform prior of nu (Student-t, hyperbolic) or
    give the Gamma(shape, rate) prior of the Slash nu. The contaminated normal
    uses Beta(gamma01, eta01) for nu1 and TGamma(gamma02, eta02; (0, 1)) for nu2.
    """

    mu0: list[NDArray]
    delta0: list[NDArray]
    omega0: list[NDArray]
    tau0: list[float]
    gamma0: float | None = None
    eta0: float | None = None
    gamma01: float | None = None
    eta01: float | None = None
    gamma02: float | None = None
    eta02: float | None = None
    grid_m: int = 1000

    @classmethod
    def default(cls, spec: ModelSpec, k: int, r: int, delta0_scale: float = 1e3,
                omega0_scale: float = 1.0, tau0: float | None = None, grid_m: int = 1000,
                **extra_hyper) -> "Priors":
        sizes = [spec.n_regressors(j, k, r) for j in range(spec.l)]
        hyper = dict(EXTRA_PRIOR_DEFAULTS.get(spec.family, {}))
        hyper.update({key: val for key, val in extra_hyper.items() if val is not None})
        return cls(
            mu0=[np.zeros((s, k)) for s in sizes],
            delta0=[delta0_scale * np.eye(s) for s in sizes],
            omega0=[omega0_scale * np.eye(k) for _ in sizes],
            tau0=[float(k + 2 if tau0 is None else tau0) for _ in sizes],
            grid_m=grid_m, **hyper)

    def validate(self, spec: ModelSpec, k: int, r: int) -> None:
        if not (len(self.mu0) == len(self.delta0) == len(self.omega0) == len(self.tau0) == spec.l):
            raise ConfigurationError("priors must give one entry per regime")
        for j in range(spec.l):
            s = spec.n_regressors(j, k, r)
            if self.mu0[j].shape != (s, k) or self.delta0[j].shape != (s, s):
                raise ConfigurationError(f"prior shapes for regime {j + 1} do not match s_j={s}, k={k}")
            if self.omega0[j].shape != (k, k) or not self.tau0[j] > k - 1:
                raise ConfigurationError(f"inverse Wishart prior for regime {j + 1} is invalid")
            for mat, name in ((self.delta0[j], "delta0"), (self.omega0[j], "omega0")):
                try:
                    np.linalg.cholesky(mat)
                except np.linalg.LinAlgError:
                    raise ConfigurationError(f"{name} of regime {j + 1} is not positive definite") from None
        fam = spec.family
        if fam in (NoiseFamily.STUDENT_T, NoiseFamily.SYMMETRIC_HYPERBOLIC):
            if self.gamma0 is None or self.eta0 is None or not 0 < self.gamma0 < self.eta0:
                raise ConfigurationError("uniform prior for nu needs 0 < gamma0 < eta0")
            if self.grid_m < 2:
                raise ConfigurationError("grid size m must be >= 2")
        elif fam is NoiseFamily.SLASH:
            if not (self.gamma0 and self.eta0 and self.gamma0 > 0 and self.eta0 > 0):
                raise ConfigurationError("Slash prior Gamma(gamma0, eta0) needs positive values")
        elif fam is NoiseFamily.CONTAMINATED_NORMAL:
            vals = (self.gamma01, self.eta01, self.gamma02, self.eta02)
            if any(v is None or not v > 0 for v in vals[:3]) or vals[3] is None or vals[3] < 0:
                raise ConfigurationError("contaminated normal priors need positive gamma01, eta01, gamma02")


@dataclass
class ChainControl:
    iterations: int = 1500
    burn_in: int = 500
    thinning: int = 1
    seed: int = 0
    zeta: float = 100.0

    def __post_init__(self):
        if not (self.iterations > self.burn_in >= 0):
            raise ConfigurationError("need iterations > burn_in >= 0")
        if self.thinning < 1:
            raise ConfigurationError("thinning must be >= 1")
        if not self.zeta > 0:
            raise ConfigurationError("Dirichlet concentration zeta must be positive")

    @property
    def n_stored(self) -> int:
        return len(range(self.burn_in, self.iterations, self.thinning))


@dataclass
class ChainState:
    theta: list[NDArray]
    sigma: list[NDArray]
    c: NDArray
    h: int
    extra: NDArray
    u: NDArray

    def copy(self) -> "ChainState":
        return ChainState([t.copy() for t in self.theta], [s.copy() for s in self.sigma],
                          self.c.copy(), int(self.h), self.extra.copy(), self.u.copy())


@dataclass
class PosteriorDraws:
    """Stored post-burn-in states, one leading axis of length G per parameter."""

    theta: list[NDArray]        # regime j: (G, s_j, k)
    sigma: list[NDArray]        # regime j: (G, k, k)
    c: NDArray                  # (G, l - 1)
    h: NDArray                  # (G,)
    extra: NDArray              # (G, n_extra)
    spec: ModelSpec
    priors: Priors | None = None
    control: ChainControl | None = None
    acceptance_rate: float = float("nan")
    k: int = 0
    r: int = 0

    @property
    def G(self) -> int:
        return self.h.shape[0]

    def state(self, g: int) -> ChainState:
        return ChainState([t[g] for t in self.theta], [s[g] for s in self.sigma],
                          self.c[g], int(self.h[g]), self.extra[g], np.empty(0))

    @classmethod
    def from_states(cls, states: list[ChainState], spec: ModelSpec, k: int, r: int,
                    **meta) -> "PosteriorDraws":
        return cls(theta=[np.stack([s.theta[j] for s in states]) for j in range(spec.l)],
                   sigma=[np.stack([s.sigma[j] for s in states]) for j in range(spec.l)],
                   c=np.array([np.asarray(s.c, dtype=float) for s in states]).reshape(len(states), spec.l - 1),
                   h=np.array([s.h for s in states], dtype=int),
                   extra=np.array([np.asarray(s.extra, dtype=float) for s in states]).reshape(
                       len(states), spec.family.n_extra),
                   spec=spec, k=k, r=r, **meta)

    def subset(self, index) -> "PosteriorDraws":
        return replace(self, theta=[t[index] for t in self.theta], sigma=[s[index] for s in self.sigma],
                       c=self.c[index], h=self.h[index], extra=self.extra[index])


class GibbsSampler:
    """Holds the data-side precomputations and the current chain state.

    Every regime's design matrix is built once over all eligible time points;
    a regime assignment then only selects rows, so threshold and delay moves
    never rebuild designs.
    """

    def __init__(self, series: MultivariateSeries, spec: ModelSpec, priors: Priors | None = None,
                 control: ChainControl | None = None, rng: np.random.Generator | None = None):
        self.series = series
        self.spec = spec
        self.k, self.r = series.k, series.r
        self.priors = priors or Priors.default(spec, self.k, self.r)
        self.priors.validate(spec, self.k, self.r)
        self.control = control or ChainControl()
        self.rng = rng if rng is not None else np.random.default_rng(self.control.seed)
        self.family = spec.family

        self.times = eligible_times(series, spec)
        self.n = self.times.size
        if self.n < 1:
            raise ConfigurationError("series too short for the requested lags")
        self.Y = series.y[self.times]
        cache: dict[tuple[int, int, int], NDArray] = {}
        self.designs = []
        for j in range(spec.l):
            key = (spec.p[j], spec.q[j], spec.d[j])
            if key not in cache:
                cache[key] = design_rows(series, self.times, *key)
            self.designs.append(cache[key])
        self.zlag = {h: series.z[self.times - h] for h in spec.h_candidates}
        self.n_min = np.array([spec.min_occupancy(j, self.k, self.r) for j in range(spec.l)])
        self.delta0_inv = [np.linalg.inv(d) for d in self.priors.delta0]
        self.prior_shift = [di @ m for di, m in zip(self.delta0_inv, self.priors.mu0)]
        self._ar = np.arange(self.n)
        self.state: ChainState | None = None
        self.labels: NDArray | None = None
        self.contaminated = np.zeros(self.n, dtype=bool)
        self.n_proposed = 0
        self.n_accepted = 0

    # ------------------------------------------------------------------ helpers

    def _occupancy_ok(self, labels: NDArray) -> bool:
        counts = np.bincount(labels, minlength=self.spec.l)
        return bool(np.all(counts >= self.n_min))

    def _chol_sigma(self, j: int, sigma: NDArray) -> NDArray:
        try:
            return np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            raise NumericalError("Sigma is not positive definite", regime=j) from None

    def quadforms(self, state: ChainState | None = None) -> tuple[NDArray, NDArray]:
        """Squared Mahalanobis residuals of every eligible t under every regime.

        Returns ``Q`` of shape (l, n) and the log-determinants of Sigma_j.
        """
        state = state or self.state
        q = np.empty((self.spec.l, self.n))
        logdet = np.empty(self.spec.l)
        for j in range(self.spec.l):
            chol = self._chol_sigma(j, state.sigma[j])
            resid = self.Y - self.designs[j] @ state.theta[j]
            w = linalg.solve_triangular(chol, resid.T, lower=True, check_finite=False)
            q[j] = np.einsum("ij,ij->j", w, w)
            logdet[j] = 2.0 * np.sum(np.log(np.diag(chol)))
        return q, logdet

    def conditional_loglik(self, q: NDArray, logdet: NDArray, u: NDArray) -> NDArray:
        """log N(y_t | M_t theta_j, kappa(u_t) Sigma_j) for all (j, t); shape (l, n)."""
        kap = sk.kappa(self.family, u)
        return (-0.5 * self.k * sk.LOG_2PI - 0.5 * logdet[:, None]
                - 0.5 * self.k * np.log(kap)[None, :] - 0.5 * q / kap[None, :])

    # ------------------------------------------------------------------ Step 0

    def init_state(self) -> ChainState:
        """Quantile thresholds, Gaussian MLE per regime, near-Gaussian nu, u = 1.

        Among the delay candidates, the one with the largest Gaussian MLE
        log-likelihood under its quantile thresholds is used.
        """
        spec, l = self.spec, self.spec.l
        best, first_error = None, None
        for h in spec.h_candidates:
            z = self.zlag[h]
            c = np.quantile(z, np.arange(1, l) / l) if l > 1 else np.empty(0)
            labels = regime_labels(z, c)
            counts = np.bincount(labels, minlength=l)
            short = np.flatnonzero(counts < self.n_min)
            if short.size:
                j = int(short[0])
                first_error = first_error or ConfigurationError(
                    f"regime {j + 1} has {counts[j]} observations at the initial thresholds "
                    f"(delay {h}); at least {self.n_min[j]} are needed")
                continue
            thetas, sigmas, ll = [], [], 0.0
            for j in range(l):
                idx = labels == j
                fit = mle_init(RegimeData(self.designs[j][idx], self.Y[idx], self.times[idx]))
                thetas.append(fit.theta)
                sigmas.append(fit.sigma)
                ll += -0.5 * counts[j] * (np.linalg.slogdet(fit.sigma)[1] + self.k)
            if best is None or ll > best[0]:
                best = (ll, h, c, thetas, sigmas, labels)
        if best is None:
            raise first_error
        _, h, c, thetas, sigmas, labels = best
        extra = np.array(INITIAL_EXTRA[self.family], dtype=float)
        if self.family in (NoiseFamily.STUDENT_T, NoiseFamily.SYMMETRIC_HYPERBOLIC):
            extra = np.clip(extra, self.priors.gamma0, self.priors.eta0)
        self.state = ChainState(thetas, sigmas, np.asarray(c, dtype=float), int(h), extra,
                                np.ones(self.n))
        self.labels = labels
        self.contaminated[:] = False
        return self.state

    # ------------------------------------------------------------------ Step 1

    def sample_latent_u(self, q_current: NDArray) -> NDArray:
        """Draw every latent scale from its full conditional given its quadratic form."""
        fam, k, st, rng = self.family, self.k, self.state, self.rng
        if fam is NoiseFamily.GAUSSIAN:
            return st.u
        nu = st.extra
        if fam is NoiseFamily.STUDENT_T:
            st.u = rng.gamma(0.5 * (nu[0] + k), 1.0 / (0.5 * nu[0] + 0.5 * q_current))
        elif fam is NoiseFamily.SLASH:
            st.u = sk.sample_truncated_gamma(0.5 * (nu[0] + k), 0.5 * q_current, (0.0, 1.0), rng)
        elif fam is NoiseFamily.CONTAMINATED_NORMAL:
            v1, v2 = nu
            a = math.log(v1) + 0.5 * k * math.log(v2) - 0.5 * v2 * q_current
            b = math.log1p(-v1) - 0.5 * q_current
            tau = special.expit(a - b)
            self.contaminated = rng.random(self.n) < tau
            st.u = np.where(self.contaminated, v2, 1.0)
        elif fam is NoiseFamily.SYMMETRIC_HYPERBOLIC:
            st.u = sk.sample_gig(0.5 * (2 - k), 1.0 + q_current, nu[0] ** 2, rng)
        else:
            st.u = sk.sample_gig(0.5 * (2 - k), np.maximum(q_current, 1e-12), 0.25, rng)
        return st.u

    # ------------------------------------------------------------------ Steps 2-3

    def regime_posterior(self, j: int, idx: NDArray, u: NDArray) -> tuple[NDArray, NDArray]:
        """Posterior mean mu_j and the Cholesky factor of Delta_j^{-1}."""
        m = self.designs[j][idx]
        w = 1.0 / sk.kappa(self.family, u[idx])
        mw = m * w[:, None]
        prec = m.T @ mw + self.delta0_inv[j]
        rhs = mw.T @ self.Y[idx] + self.prior_shift[j]
        try:
            chol = np.linalg.cholesky(prec)
        except np.linalg.LinAlgError:
            raise NumericalError("posterior precision of theta is not positive definite", regime=j) from None
        mean = linalg.cho_solve((chol, True), rhs, check_finite=False)
        return mean, chol

    def sample_theta(self) -> list[NDArray]:
        st = self.state
        for j in range(self.spec.l):
            idx = self.labels == j
            mean, chol_prec = self.regime_posterior(j, idx, st.u)
            chol_sigma = self._chol_sigma(j, st.sigma[j])
            z = self.rng.standard_normal(mean.shape)
            # Delta_j = L^{-T} L^{-1} where L L^T is the posterior precision
            st.theta[j] = mean + linalg.solve_triangular(chol_prec.T, z, lower=False,
                                                         check_finite=False) @ chol_sigma.T
        return st.theta

    def sigma_posterior(self, j: int, idx: NDArray) -> tuple[NDArray, float]:
        st = self.state
        m = self.designs[j][idx]
        w = 1.0 / sk.kappa(self.family, st.u[idx])
        resid = self.Y[idx] - m @ st.theta[j]
        dev = st.theta[j] - self.priors.mu0[j]
        omega = self.priors.omega0[j] + resid.T @ (resid * w[:, None]) + dev.T @ self.delta0_inv[j] @ dev
        omega = 0.5 * (omega + omega.T)
        tau = self.priors.tau0[j] + int(idx.sum()) + m.shape[1]
        return omega, tau

    def sample_sigma(self) -> list[NDArray]:
        st = self.state
        for j in range(self.spec.l):
            omega, tau = self.sigma_posterior(j, self.labels == j)
            try:
                st.sigma[j] = sk.sample_inverse_wishart(omega, tau, self.rng)
            except sk.DomainError as exc:
                raise NumericalError(str(exc), regime=j) from None
        return st.sigma

    # ------------------------------------------------------------------ Step 4

    def nu_grid(self) -> tuple[NDArray, NDArray]:
        pr = self.priors
        edges = np.linspace(pr.gamma0, pr.eta0, pr.grid_m + 1)
        return edges, 0.5 * (edges[:-1] + edges[1:])

    def log_nu_kernel(self, nu: NDArray, u: NDArray) -> NDArray:
        """Unnormalised log conditional of nu on the uniform-prior support."""
        n = u.size
        if self.family is NoiseFamily.STUDENT_T:
            s = float(np.sum(np.log(u) - u))
            return n * (0.5 * nu * np.log(0.5 * nu) - special.gammaln(0.5 * nu)) + 0.5 * nu * s
        s = float(np.sum(u))
        return n * (np.log(nu) - sk.log_bessel_k(1.0, nu)) - 0.5 * nu ** 2 * s

    def sample_extra(self, q_current: NDArray) -> NDArray:
        st, pr, rng, fam = self.state, self.priors, self.rng, self.family
        if fam in (NoiseFamily.GAUSSIAN, NoiseFamily.LAPLACE):
            return st.extra
        if fam is NoiseFamily.SLASH:
            shape = pr.gamma0 + self.n
            rate = pr.eta0 - 0.5 * float(np.sum(np.log(st.u)))
            st.extra = np.array([rng.gamma(shape, 1.0 / rate)])
        elif fam is NoiseFamily.CONTAMINATED_NORMAL:
            n2 = int(self.contaminated.sum())
            v1 = rng.beta(pr.gamma01 + n2, pr.eta01 + (self.n - n2))
            shape2 = pr.gamma02 + 0.5 * self.k * n2
            rate2 = pr.eta02 + 0.5 * float(np.sum(q_current[self.contaminated]))
            v2 = float(sk.sample_truncated_gamma(shape2, rate2, (0.0, 1.0), rng))
            v1 = min(max(v1, 1e-12), 1.0 - 1e-12)
            v2 = min(v2, 1.0 - 1e-12)
            st.extra = np.array([v1, v2])
            st.u = np.where(self.contaminated, v2, 1.0)
        else:
            edges, atoms = self.nu_grid()
            lk = self.log_nu_kernel(edges, st.u)
            lw = np.logaddexp(lk[:-1], lk[1:])
            prob = np.exp(lw - lw.max())
            prob /= prob.sum()
            st.extra = np.array([atoms[rng.choice(atoms.size, p=prob)]])
        return st.extra

    # ------------------------------------------------------------------ Step 5

    def gap_fractions(self, c: NDArray, z0: float, z1: float) -> NDArray:
        return np.diff(np.concatenate(([z0], c, [z1]))) / (z1 - z0)

    def sample_thresholds(self, loglik: NDArray) -> bool:
        """One Metropolis-Hastings move on c; returns True when accepted."""
        if self.spec.l < 2:
            return False
        st = self.state
        z = self.zlag[st.h]
        z0, z1 = float(z.min()), float(z.max())
        zeta = self.control.zeta
        gaps = self.gap_fractions(st.c, z0, z1)
        self.n_proposed += 1
        if np.any(gaps <= 0):
            return False
        r = sk.sample_dirichlet(zeta * gaps, self.rng)
        c_new = z0 + np.cumsum(r[:-1]) * (z1 - z0)
        gaps_new = self.gap_fractions(c_new, z0, z1)
        if np.any(gaps_new <= 0) or np.any(np.diff(c_new) <= 0):
            return False
        labels_new = regime_labels(z, c_new)
        if not self._occupancy_ok(labels_new):
            return False
        log_ratio = (loglik[labels_new, self._ar].sum() - loglik[self.labels, self._ar].sum()
                     + sk.dirichlet_logpdf(gaps, zeta * gaps_new)
                     - sk.dirichlet_logpdf(gaps_new, zeta * gaps))
        if math.log(self.rng.random()) < log_ratio:
            st.c = c_new
            self.labels = labels_new
            self.n_accepted += 1
            return True
        return False

    # ------------------------------------------------------------------ Step 6

    def delay_logweights(self, loglik: NDArray) -> dict[int, float]:
        out = {}
        for h, z in self.zlag.items():
            labels = regime_labels(z, self.state.c)
            if self._occupancy_ok(labels):
                out[h] = float(loglik[labels, self._ar].sum())
        return out

    def sample_delay(self, loglik: NDArray) -> int:
        st = self.state
        if len(self.zlag) == 1:
            return st.h
        weights = self.delay_logweights(loglik)
        hs = np.array(list(weights))
        lw = np.array(list(weights.values()))
        prob = np.exp(lw - lw.max())
        prob /= prob.sum()
        st.h = int(hs[self.rng.choice(hs.size, p=prob)])
        self.labels = regime_labels(self.zlag[st.h], st.c)
        return st.h

    # ------------------------------------------------------------------ driver

    def sweep(self, q: NDArray | None = None) -> NDArray:
        """One full scan; returns the quadratic forms valid for the next sweep."""
        if q is None:
            q, _ = self.quadforms()
        self.sample_latent_u(q[self.labels, self._ar])
        self.sample_theta()
        self.sample_sigma()
        q, logdet = self.quadforms()
        self.sample_extra(q[self.labels, self._ar])
        loglik = self.conditional_loglik(q, logdet, self.state.u)
        self.sample_thresholds(loglik)
        self.sample_delay(loglik)
        return q

    def run(self) -> PosteriorDraws:
        ctl, spec = self.control, self.spec
        if self.state is None:
            self.init_state()
        G = ctl.n_stored
        theta = [np.empty((G,) + t.shape) for t in self.state.theta]
        sigma = [np.empty((G, self.k, self.k)) for _ in range(spec.l)]
        c = np.empty((G, spec.l - 1))
        h = np.empty(G, dtype=int)
        extra = np.empty((G, spec.family.n_extra))
        q = None
        g = 0
        for it in range(ctl.iterations):
            q = self.sweep(q)
            if it >= ctl.burn_in and (it - ctl.burn_in) % ctl.thinning == 0:
                st = self.state
                for j in range(spec.l):
                    theta[j][g] = st.theta[j]
                    sigma[j][g] = st.sigma[j]
                c[g] = st.c
                h[g] = st.h
                extra[g] = st.extra
                g += 1
        rate = self.n_accepted / self.n_proposed if self.n_proposed else float("nan")
        log.debug("chain finished: G=%d, threshold acceptance %.3f", G, rate)
        return PosteriorDraws(theta=theta, sigma=sigma, c=c, h=h, extra=extra, spec=spec,
                              priors=self.priors, control=ctl, acceptance_rate=rate,
                              k=self.k, r=self.r)


def run_chain(series: MultivariateSeries, spec: ModelSpec, priors: Priors | None = None,
              control: ChainControl | None = None) -> PosteriorDraws:
    """Run the Gibbs sampler; deterministic given ``control.seed``."""
    control = control or ChainControl()
    sampler = GibbsSampler(series, spec, priors, control, np.random.default_rng(control.seed))
    return sampler.run()
