"""Special functions, samplers and densities for Gaussian variance mixtures.

Every family is written as ``Y = mu + sqrt(kappa(U)) * eps0`` with
``eps0 ~ N_k(0, Sigma)``. Two conventions hold throughout the module:

* gamma laws use the shape/rate parameterisation, density
  ``u**(shape - 1) * exp(-rate * u)``;
* ``GIG(lam, chi, psi)`` has density proportional to
  ``u**(lam - 1) * exp(-(chi / u + psi * u) / 2)``;
* the modified Bessel function of the third kind is the standard one,
  ``K_a(b) = 1/2 * int_0^inf x**(a - 1) exp(-b/2 (x + 1/x)) dx``.
"""

from __future__ import annotations

import enum
import math
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate, special, stats

LOG_2PI = math.log(2.0 * math.pi)


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


class NoiseFamily(str, enum.Enum):
    GAUSSIAN = "gaussian"
    STUDENT_T = "student_t"
    SLASH = "slash"
    CONTAMINATED_NORMAL = "contaminated_normal"
    SYMMETRIC_HYPERBOLIC = "symmetric_hyperbolic"
    LAPLACE = "laplace"

    @property
    def n_extra(self) -> int:
        """Length of the extra-parameter vector for this family."""
        if self in (NoiseFamily.GAUSSIAN, NoiseFamily.LAPLACE):
            return 0
        if self is NoiseFamily.CONTAMINATED_NORMAL:
            return 2
        return 1

    @property
    def kappa_is_inverse(self) -> bool:
        """True when kappa(u) = 1/u, False when kappa(u) = u."""
        return self in (NoiseFamily.STUDENT_T, NoiseFamily.SLASH,
                        NoiseFamily.CONTAMINATED_NORMAL, NoiseFamily.GAUSSIAN)

    @classmethod
    def parse(cls, value: "str | NoiseFamily") -> "NoiseFamily":
        if isinstance(value, NoiseFamily):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"normal": "gaussian", "t": "student_t", "studentt": "student_t",
                   "cn": "contaminated_normal", "contaminated": "contaminated_normal",
                   "hyperbolic": "symmetric_hyperbolic", "sh": "symmetric_hyperbolic"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise DomainError(f"unknown noise family {value!r}") from None


def check_extra(family: NoiseFamily, extra: ArrayLike | None) -> NDArray:
    """Validate the extra parameter of ``family`` and return it as an array."""
    family = NoiseFamily.parse(family)
    nu = np.atleast_1d(np.asarray([] if extra is None else extra, dtype=float))
    if nu.size != family.n_extra:
        raise DomainError(f"{family.value} takes {family.n_extra} extra parameter(s), got {nu.size}")
    if family is NoiseFamily.CONTAMINATED_NORMAL:
        if not np.all((nu > 0) & (nu < 1)):
            raise DomainError(f"contaminated normal needs nu1, nu2 in (0, 1), got {nu}")
    elif nu.size == 1 and not (np.isfinite(nu[0]) and nu[0] > 0):
        raise DomainError(f"{family.value} needs nu > 0, got {nu[0]}")
    return nu


def kappa(family: NoiseFamily, u: ArrayLike) -> NDArray:
    u = np.asarray(u, dtype=float)
    return 1.0 / u if NoiseFamily.parse(family).kappa_is_inverse else u


# ---------------------------------------------------------------------------
# special functions
# ---------------------------------------------------------------------------

def log_bessel_k(order: ArrayLike, x: ArrayLike) -> NDArray | float:
    """Log of the modified Bessel function of the third kind, ``log K_order(x)``.

    Uses the exponentially scaled ``kve`` so large ``x`` never overflows; when
    ``kve`` itself overflows (tiny ``x``, large order) the leading small-argument
    term ``Gamma(v) 2**(v-1) x**(-v)`` is used instead.
    """
    v = np.abs(np.asarray(order, dtype=float))
    xa = np.asarray(x, dtype=float)
    if np.any(xa <= 0) or np.any(np.isnan(xa)):
        raise DomainError("log_bessel_k requires x > 0")
    with np.errstate(over="ignore", divide="ignore"):
        kv = special.kve(v, xa)
        out = np.log(kv) - xa
    bad = ~np.isfinite(out)
    if np.any(bad):
        vb = np.broadcast_to(v, out.shape)[bad]
        xb = np.broadcast_to(xa, out.shape)[bad]
        out = np.array(out, copy=True)
        out[bad] = special.gammaln(vb) + (vb - 1.0) * math.log(2.0) - vb * np.log(xb)
    return out[()] if out.ndim == 0 else out


def lower_incomplete_gamma(a: float, b: ArrayLike) -> NDArray | float:
    """Unregularised lower incomplete gamma ``int_0^b t**(a-1) e**-t dt``."""
    if not a > 0:
        raise DomainError("lower_incomplete_gamma requires a > 0")
    b = np.asarray(b, dtype=float)
    if np.any(b < 0):
        raise DomainError("lower_incomplete_gamma requires b >= 0")
    out = special.gammainc(a, b) * special.gamma(a)
    return out[()] if out.ndim == 0 else out


def _log_lower_gamma_scaled(a: float, b: NDArray) -> NDArray:
    """``log(gamma(a, b)) - a*log(b)``, finite as b -> 0 (limit ``-log a``)."""
    b = np.asarray(b, dtype=float)
    out = np.empty_like(b)
    with np.errstate(divide="ignore"):
        p = special.gammainc(a, b)
    direct = p > 1e-280
    bd = b[direct]
    out[direct] = np.log(p[direct]) + special.gammaln(a) - a * np.log(bd)
    small = ~direct
    if np.any(small):
        # gamma(a,b) = b**a e**-b sum_n b**n / (a (a+1) ... (a+n))
        bs = b[small]
        term = np.full_like(bs, 1.0 / a)
        total = term.copy()
        for n in range(1, 200):
            term = term * bs / (a + n)
            total += term
            if np.all(term < 1e-17 * total):
                break
        out[small] = np.log(total) - bs
    return out


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------

def sample_gamma(shape: ArrayLike, rate: ArrayLike, rng: np.random.Generator,
                 size=None) -> NDArray | float:
    """Gamma draw with density proportional to ``u**(shape-1) exp(-rate u)``."""
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if np.any(shape <= 0) or np.any(rate <= 0):
        raise DomainError("gamma shape and rate must be positive")
    return rng.gamma(shape, 1.0 / rate, size=size)


def sample_truncated_gamma(shape: float, rate: ArrayLike, support: tuple[float, float],
                           rng: np.random.Generator, size=None) -> NDArray | float:
    """Gamma(shape, rate) restricted to ``(lo, hi]`` via inverse CDF.

    ``rate`` may be an array (one draw per entry). ``rate == 0`` gives the
    power law ``u**(shape-1)`` on the interval. When the interval mass
    underflows in both tails, draws come from the power-law envelope with an
    ``exp(-rate (u - lo))`` acceptance step.
    """
    lo, hi = float(support[0]), float(support[1])
    if not (0.0 <= lo < hi) or not np.isfinite(hi):
        raise DomainError(f"invalid truncation interval ({lo}, {hi})")
    if not shape > 0:
        raise DomainError("truncated gamma shape must be positive")
    rate = np.asarray(rate, dtype=float)
    if np.any(rate < 0):
        raise DomainError("truncated gamma rate must be nonnegative")
    if size is not None:
        rate = np.broadcast_to(rate, size)
    scalar = rate.ndim == 0
    rate = np.atleast_1d(rate).astype(float)
    out = np.empty(rate.shape)
    unif = rng.random(rate.shape)

    xlo, xhi = rate * lo, rate * hi
    plo, phi = special.gammainc(shape, xlo), special.gammainc(shape, xhi)
    qlo, qhi = special.gammaincc(shape, xlo), special.gammaincc(shape, xhi)
    use_lower = (rate > 0) & (phi - plo > 1e-12) & (phi < 0.5)
    use_upper = (rate > 0) & ~use_lower & (qlo - qhi > 1e-12)
    if np.any(use_lower):
        p = plo[use_lower] + unif[use_lower] * (phi[use_lower] - plo[use_lower])
        out[use_lower] = special.gammaincinv(shape, p) / rate[use_lower]
    if np.any(use_upper):
        q = qlo[use_upper] - unif[use_upper] * (qlo[use_upper] - qhi[use_upper])
        out[use_upper] = special.gammainccinv(shape, q) / rate[use_upper]
    rest = ~(use_lower | use_upper)
    if np.any(rest):
        out[rest] = _truncated_gamma_envelope(shape, rate[rest], lo, hi, rng)
    out = np.clip(out, np.nextafter(lo, hi), hi)
    return out[0] if scalar else out


def _truncated_gamma_envelope(shape, rate, lo, hi, rng):
    # log f(u) = (shape-1) log u - rate u is concave for shape >= 1. When it still
    # increases at hi, the tangent line at hi is a truncated-exponential envelope;
    # otherwise the power law u**(shape-1) with an exp(-rate (u - lo)) test works.
    slope = (shape - 1.0) / hi - rate
    tangent = (shape >= 1.0) & (slope > 0)
    lo_a, hi_a = lo ** shape, hi ** shape
    out = np.empty(rate.shape)
    pending = np.arange(rate.size)
    for _ in range(10_000):
        if pending.size == 0:
            return out
        w = rng.random(pending.size)
        lam = slope[pending]
        tan = tangent[pending]
        u = np.empty(pending.size)
        u[~tan] = (lo_a + w[~tan] * (hi_a - lo_a)) ** (1.0 / shape)
        lt = lam[tan]
        u[tan] = hi + np.log1p(-w[tan] * -np.expm1(-lt * (hi - lo))) / lt
        u = np.clip(u, np.nextafter(lo, hi), hi)
        log_acc = np.where(tan,
                           (shape - 1.0) * (np.log(u) - math.log(hi)) - (rate[pending] + lam) * (u - hi),
                           -rate[pending] * (u - lo))
        accept = np.log(rng.random(pending.size)) <= log_acc
        out[pending[accept]] = u[accept]
        pending = pending[~accept]
    raise RuntimeError("truncated gamma envelope sampler failed to converge")


def _gig_mode(lam: float, omega: NDArray) -> NDArray:
    if lam >= 1.0:
        return (np.sqrt((lam - 1.0) ** 2 + omega ** 2) + (lam - 1.0)) / omega
    return omega / (np.sqrt((1.0 - lam) ** 2 + omega ** 2) + (1.0 - lam))


def _gig_rou_shift(lam, omega, rng):
    # ratio-of-uniforms with mode shift, for lam >= 1 or omega > 1
    t = 0.5 * (lam - 1.0)
    s = 0.25 * omega
    xm = _gig_mode(lam, omega)
    nc = t * np.log(xm) - s * (xm + 1.0 / xm)
    a = -(2.0 * (lam + 1.0) / omega + xm)
    b = 2.0 * (lam - 1.0) * xm / omega - 1.0
    c = xm
    p = b - a * a / 3.0
    q = 2.0 * a ** 3 / 27.0 - a * b / 3.0 + c
    fi = np.arccos(np.clip(-q / (2.0 * np.sqrt(-(p ** 3) / 27.0)), -1.0, 1.0))
    fak = 2.0 * np.sqrt(-p / 3.0)
    y1 = fak * np.cos(fi / 3.0) - a / 3.0
    y2 = fak * np.cos(fi / 3.0 + 4.0 / 3.0 * np.pi) - a / 3.0
    uplus = (y1 - xm) * np.exp(t * np.log(y1) - s * (y1 + 1.0 / y1) - nc)
    uminus = (y2 - xm) * np.exp(t * np.log(y2) - s * (y2 + 1.0 / y2) - nc)

    out = np.empty(omega.shape)
    pending = np.arange(omega.size)
    while pending.size:
        uu = uminus[pending] + rng.random(pending.size) * (uplus[pending] - uminus[pending])
        vv = rng.random(pending.size)
        x = uu / vv + xm[pending]
        ok = x > 0
        xs = np.where(ok, x, 1.0)
        ok &= np.log(vv) <= t * np.log(xs) - s[pending] * (xs + 1.0 / xs) - nc[pending]
        out[pending[ok]] = x[ok]
        pending = pending[~ok]
    return out


def _gig_rou_noshift(lam, omega, rng):
    # ratio-of-uniforms without mode shift, for 0 <= lam < 1 and moderate omega
    t = 0.5 * (lam - 1.0)
    s = 0.25 * omega
    xm = _gig_mode(lam, omega)
    nc = t * np.log(xm) - s * (xm + 1.0 / xm)
    ym = ((lam + 1.0) + np.sqrt((lam + 1.0) ** 2 + omega ** 2)) / omega
    um = np.exp(0.5 * (lam + 1.0) * np.log(ym) - s * (ym + 1.0 / ym) - nc)

    out = np.empty(omega.shape)
    pending = np.arange(omega.size)
    while pending.size:
        uu = um[pending] * rng.random(pending.size)
        vv = rng.random(pending.size)
        x = uu / vv
        ok = np.log(vv) <= t * np.log(x) - s[pending] * (x + 1.0 / x) - nc[pending]
        out[pending[ok]] = x[ok]
        pending = pending[~ok]
    return out


def _gig_small_omega(lam, omega, rng):
    # piecewise-envelope rejection for 0 <= lam < 1 and small omega
    xm = _gig_mode(lam, omega)
    x0 = omega / (1.0 - lam)
    k0 = np.exp((lam - 1.0) * np.log(xm) - 0.5 * omega * (xm + 1.0 / xm))
    a0 = k0 * x0
    far = x0 >= 2.0 / omega
    k1 = np.where(far, 0.0, np.exp(-omega))
    if lam == 0.0:
        a1 = np.where(far, 0.0, k1 * np.log(2.0 / omega ** 2))
    else:
        a1 = np.where(far, 0.0, k1 / lam * ((2.0 / omega) ** lam - x0 ** lam))
    k2 = np.where(far, x0 ** (lam - 1.0), (2.0 / omega) ** (lam - 1.0))
    a2 = np.where(far, k2 * 2.0 * np.exp(-omega * x0 / 2.0) / omega,
                  k2 * 2.0 * np.exp(-1.0) / omega)
    atot = a0 + a1 + a2
    edge = np.maximum(x0, 2.0 / omega)

    out = np.empty(omega.shape)
    pending = np.arange(omega.size)
    while pending.size:
        om = omega[pending]
        v = atot[pending] * rng.random(pending.size)
        x = np.empty(pending.size)
        hx = np.empty(pending.size)
        r0 = v <= a0[pending]
        x[r0] = x0[pending][r0] * v[r0] / a0[pending][r0]
        hx[r0] = k0[pending][r0]
        v1 = v - a0[pending]
        r1 = ~r0 & (v1 <= a1[pending])
        if np.any(r1):
            kk = k1[pending][r1]
            if lam == 0.0:
                x[r1] = om[r1] * np.exp(np.exp(om[r1]) * v1[r1])
                hx[r1] = kk / x[r1]
            else:
                x[r1] = (x0[pending][r1] ** lam + lam / kk * v1[r1]) ** (1.0 / lam)
                hx[r1] = kk * x[r1] ** (lam - 1.0)
        r2 = ~(r0 | r1)
        if np.any(r2):
            v2 = v1[r2] - a1[pending][r2]
            o2 = om[r2]
            kk = k2[pending][r2]
            arg = np.exp(-o2 / 2.0 * edge[pending][r2]) - o2 / (2.0 * kk) * v2
            x[r2] = -2.0 / o2 * np.log(np.maximum(arg, 1e-300))
            hx[r2] = kk * np.exp(-o2 / 2.0 * x[r2])
        uu = rng.random(pending.size) * hx
        ok = np.log(uu) <= (lam - 1.0) * np.log(x) - om / 2.0 * (x + 1.0 / x)
        out[pending[ok]] = x[ok]
        pending = pending[~ok]
    return out


def sample_gig(lam: float, chi: ArrayLike, psi: ArrayLike, rng: np.random.Generator,
               size=None) -> NDArray | float:
    """Draw from GIG(lam, chi, psi); ``chi`` and ``psi`` broadcast elementwise.

    Uses the scale identity ``GIG(lam, chi, psi) = sqrt(chi/psi) GIG(lam, w, w)``
    with ``w = sqrt(chi psi)`` and the reciprocal identity for ``lam < 0``, then
    one of three rejection schemes chosen per element by ``(lam, w)``.
    """
    chi = np.asarray(chi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if np.any(~(chi > 0)) or np.any(~(psi > 0)):
        raise DomainError("GIG sampling requires chi > 0 and psi > 0")
    chi, psi = np.broadcast_arrays(chi, psi)
    if size is not None:
        chi = np.broadcast_to(chi, size)
        psi = np.broadcast_to(psi, size)
    scalar = chi.ndim == 0
    chi = np.atleast_1d(chi).ravel()
    psi = np.atleast_1d(psi).ravel()
    shape = np.shape(chi) if size is None else size

    lam = float(lam)
    flip = lam < 0
    lam_abs = abs(lam)
    omega = np.sqrt(chi * psi)
    alpha = np.sqrt(chi / psi)

    x = np.empty(omega.shape)
    if lam_abs >= 1.0:
        x[:] = _gig_rou_shift(lam_abs, omega, rng)
    else:
        big = omega > 1.0
        mid = ~big & (omega >= min(0.5, 2.0 / 3.0 * math.sqrt(1.0 - lam_abs)))
        small = ~(big | mid)
        if np.any(big):
            x[big] = _gig_rou_shift(lam_abs, omega[big], rng)
        if np.any(mid):
            x[mid] = _gig_rou_noshift(lam_abs, omega[mid], rng)
        if np.any(small):
            x[small] = _gig_small_omega(lam_abs, omega[small], rng)
    out = alpha / x if flip else alpha * x
    if scalar:
        return float(out[0])
    return out.reshape(shape)


def gig_mean(lam: float, chi: float, psi: float) -> float:
    """E[U] for U ~ GIG(lam, chi, psi)."""
    w = math.sqrt(chi * psi)
    return math.sqrt(chi / psi) * math.exp(log_bessel_k(lam + 1.0, w) - log_bessel_k(lam, w))


def sample_dirichlet(alphas: ArrayLike, rng: np.random.Generator) -> NDArray:
    alphas = np.asarray(alphas, dtype=float)
    if alphas.ndim != 1 or alphas.size < 2:
        raise DomainError("Dirichlet needs at least two concentration parameters")
    if np.any(~(alphas > 0)):
        raise DomainError("Dirichlet concentrations must be positive")
    g = rng.standard_gamma(alphas)
    total = g.sum()
    if total == 0.0:
        # every component underflowed; fall back to the log-space construction
        lg = np.log(rng.random(alphas.size)) / alphas + np.log(rng.standard_gamma(alphas + 1.0))
        g = np.exp(lg - lg.max())
        total = g.sum()
    return g / total


def dirichlet_logpdf(x: NDArray, alphas: NDArray) -> float:
    if np.any(x <= 0):
        return -np.inf
    return float(special.gammaln(alphas.sum()) - special.gammaln(alphas).sum()
                 + np.sum((alphas - 1.0) * np.log(x)))


def _cholesky(a: NDArray, what: str) -> NDArray:
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise DomainError(f"{what} is not positive definite") from None


def sample_inverse_wishart(scale: ArrayLike, dof: float, rng: np.random.Generator) -> NDArray:
    """Draw from W^{-1}(scale, dof), mean ``scale / (dof - k - 1)``.

    Bartlett construction: ``Sigma = inv(W)`` with ``W ~ Wishart(inv(scale), dof)``.
    """
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    k = scale.shape[0]
    if not dof > k - 1:
        raise DomainError(f"inverse Wishart needs dof > k - 1 = {k - 1}, got {dof}")
    chol_scale = _cholesky(scale, "inverse Wishart scale")
    a = np.zeros((k, k))
    a[np.diag_indices(k)] = np.sqrt(rng.chisquare(dof - np.arange(k)))
    a[np.tril_indices(k, -1)] = rng.standard_normal(k * (k - 1) // 2)
    # W = C^{-T} A A^T C^{-1} with scale = C C^T, so Sigma = (C A^{-T})(C A^{-T})^T
    b = np.linalg.solve(a, chol_scale.T).T
    sigma = b @ b.T
    return 0.5 * (sigma + sigma.T)


def sample_matrix_normal(mean: ArrayLike, row_cov: ArrayLike, col_cov: ArrayLike,
                         rng: np.random.Generator) -> NDArray:
    """Draw from MN(mean, row_cov, col_cov); vec(draw) has covariance col_cov (x) row_cov."""
    mean = np.atleast_2d(np.asarray(mean, dtype=float))
    lr = _cholesky(np.atleast_2d(row_cov), "row covariance")
    lc = _cholesky(np.atleast_2d(col_cov), "column covariance")
    z = rng.standard_normal(mean.shape)
    return mean + lr @ z @ lc.T


def sample_mixing(family: NoiseFamily, extra: ArrayLike | None, size,
                  rng: np.random.Generator) -> NDArray:
    """Draw the mixing variable U of ``family``."""
    family = NoiseFamily.parse(family)
    nu = check_extra(family, extra)
    if family is NoiseFamily.GAUSSIAN:
        return np.ones(size)
    if family is NoiseFamily.STUDENT_T:
        return rng.gamma(nu[0] / 2.0, 2.0 / nu[0], size=size)
    if family is NoiseFamily.SLASH:
        return rng.random(size) ** (2.0 / nu[0])
    if family is NoiseFamily.CONTAMINATED_NORMAL:
        return np.where(rng.random(size) < nu[0], nu[1], 1.0)
    if family is NoiseFamily.SYMMETRIC_HYPERBOLIC:
        return sample_gig(1.0, 1.0, nu[0] ** 2, rng, size=size)
    return rng.exponential(8.0, size=size)


def sample_mixture(family: NoiseFamily, extra: ArrayLike | None, sigma: ArrayLike, size: int,
                   rng: np.random.Generator) -> NDArray:
    """``size`` draws (rows) of a zero-location mixture vector with scale ``sigma``."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    chol = _cholesky(sigma, "scale matrix")
    u = sample_mixing(family, extra, size, rng)
    z = rng.standard_normal((size, sigma.shape[0]))
    return np.sqrt(kappa(family, u))[:, None] * (z @ chol.T)


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------

def log_density_quadform(family: NoiseFamily, q: ArrayLike, k: int, logdet: ArrayLike,
                         extra: ArrayLike | None) -> NDArray:
    """Mixture log density written through ``q = (y-mu)' Sigma^{-1} (y-mu)``.

    ``logdet`` is ``log|Sigma|`` and broadcasts against ``q``. At ``q == 0`` the
    Slash value is the exact mode formula; the Laplace value is the finite
    limit for ``k == 1`` and ``+inf`` for ``k >= 2``.
    """
    family = NoiseFamily.parse(family)
    nu = check_extra(family, extra)
    q = np.asarray(q, dtype=float)
    base = -0.5 * k * LOG_2PI - 0.5 * np.asarray(logdet, dtype=float)

    if family is NoiseFamily.GAUSSIAN:
        return base - 0.5 * q
    if family is NoiseFamily.STUDENT_T:
        v = nu[0]
        return (base + special.gammaln(0.5 * (v + k)) - special.gammaln(0.5 * v)
                - 0.5 * k * math.log(0.5 * v) - 0.5 * (v + k) * np.log1p(q / v))
    if family is NoiseFamily.SLASH:
        v = nu[0]
        a = 0.5 * (k + v)
        return base + math.log(0.5 * v) + _log_lower_gamma_scaled(a, 0.5 * q)
    if family is NoiseFamily.CONTAMINATED_NORMAL:
        v1, v2 = nu
        return base + np.logaddexp(math.log(v1) + 0.5 * k * math.log(v2) - 0.5 * v2 * q,
                                   math.log1p(-v1) - 0.5 * q)
    if family is NoiseFamily.SYMMETRIC_HYPERBOLIC:
        v = nu[0]
        order = 0.5 * (2 - k)
        r = np.sqrt(1.0 + q)
        return (base + 0.5 * k * math.log(v) + log_bessel_k(order, v * r) + order * np.log(r)
                - float(log_bessel_k(1.0, v)))
    # Laplace: (1/4) (2 pi)^{-k/2} (4q)^{(2-k)/4} K_{(2-k)/2}(sqrt(q)/2)
    order = 0.5 * (2 - k)
    q_arr = np.atleast_1d(q)
    out = np.empty(np.broadcast(q_arr, base).shape)
    pos = np.broadcast_to(q_arr > 0, out.shape)
    qb = np.broadcast_to(q_arr, out.shape)
    bb = np.broadcast_to(base, out.shape)
    qp = qb[pos]
    out[pos] = (bb[pos] - math.log(4.0) + 0.5 * order * np.log(4.0 * qp)
                + log_bessel_k(order, 0.5 * np.sqrt(qp)))
    zero = ~pos
    if np.any(zero):
        # k == 1: (4q)^{1/4} K_{1/2}(sqrt(q)/2) -> sqrt(2 pi)
        out[zero] = bb[zero] - math.log(4.0) + 0.5 * LOG_2PI if k == 1 else np.inf
    return out if np.ndim(q) or np.ndim(base) else out.reshape(())[()]


def mixture_log_density(family: NoiseFamily, y: ArrayLike, mu: ArrayLike, sigma: ArrayLike,
                        extra: ArrayLike | None = None) -> float:
    """log f_Y(y | mu, Sigma, nu) for a single k-vector ``y``."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    chol = _cholesky(sigma, "scale matrix")
    w = np.linalg.solve(chol, y - mu)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return float(log_density_quadform(family, float(w @ w), y.size, logdet, extra))


def mixing_log_density(family: NoiseFamily, u: ArrayLike, extra: ArrayLike | None = None):
    """Log density (log mass for the discrete laws) of the mixing variable."""
    family = NoiseFamily.parse(family)
    nu = check_extra(family, extra)
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if family is NoiseFamily.GAUSSIAN:
            out = np.where(u == 1.0, 0.0, -np.inf)
        elif family is NoiseFamily.STUDENT_T:
            out = np.where(u > 0, stats.gamma.logpdf(u, nu[0] / 2.0, scale=2.0 / nu[0]), -np.inf)
        elif family is NoiseFamily.SLASH:
            inside = (u > 0) & (u < 1)
            out = np.where(inside, math.log(nu[0] / 2.0) + (nu[0] / 2.0 - 1.0) * np.log(u), -np.inf)
        elif family is NoiseFamily.CONTAMINATED_NORMAL:
            out = np.where(u == nu[1], math.log(nu[0]),
                           np.where(u == 1.0, math.log1p(-nu[0]), -np.inf))
        elif family is NoiseFamily.SYMMETRIC_HYPERBOLIC:
            v = nu[0]
            norm = math.log(v) - math.log(2.0) - float(log_bessel_k(1.0, v))
            out = np.where(u > 0, norm - 0.5 * (1.0 / u + v * v * u), -np.inf)
        else:
            out = np.where(u > 0, -math.log(8.0) - u / 8.0, -np.inf)
    return out[()] if out.ndim == 0 else out


def variance_factor(family: NoiseFamily, extra: ArrayLike | None = None) -> float:
    """E[kappa(U)], so that Var(Y) = variance_factor * Sigma."""
    family = NoiseFamily.parse(family)
    nu = check_extra(family, extra)
    if family is NoiseFamily.GAUSSIAN:
        return 1.0
    if family in (NoiseFamily.STUDENT_T, NoiseFamily.SLASH):
        return nu[0] / (nu[0] - 2.0) if nu[0] > 2 else np.inf
    if family is NoiseFamily.CONTAMINATED_NORMAL:
        return nu[0] / nu[1] + 1.0 - nu[0]
    if family is NoiseFamily.SYMMETRIC_HYPERBOLIC:
        v = nu[0]
        return math.exp(log_bessel_k(2.0, v) - log_bessel_k(1.0, v)) / v
    return 8.0


# ---------------------------------------------------------------------------
# distribution of the squared norm of a standardised mixture vector
# ---------------------------------------------------------------------------

def _quadform_mixture_integral(family, x, k, nu, upper):
    """E_U[chi2 CDF (or SF) of x / kappa(U)] by adaptive quadrature."""
    half = 0.5 * k
    reg = special.gammaincc if upper else special.gammainc
    cdf = lambda y: reg(half, 0.5 * y)
    if family is NoiseFamily.SLASH:
        # U = W**(2/nu) with W uniform, kappa = 1/U
        f = lambda w: cdf(x * w ** (2.0 / nu[0]))
        val, _ = integrate.quad(f, 0.0, 1.0, epsabs=1e-10, epsrel=1e-10, limit=200)
        return val
    if family is NoiseFamily.SYMMETRIC_HYPERBOLIC:
        v = nu[0]
        lognorm = math.log(v) - math.log(2.0) - float(log_bessel_k(1.0, v))
        logmode = math.log(_gig_mode(1.0, np.array([v]))[0] / v)   # mode of GIG(1,1,v^2)
        logdens = lambda s: lognorm - 0.5 * (math.exp(min(-s, 700.0)) + v * v * math.exp(min(s, 700.0))) + s
    else:  # Laplace, U exponential with mean 8
        logmode = math.log(8.0)
        logdens = lambda s: -math.log(8.0) - math.exp(min(s, 700.0)) / 8.0 + s
    f = lambda s: math.exp(max(logdens(s), -745.0)) * cdf(x * math.exp(min(-s, 700.0)))
    with np.errstate(over="ignore"):
        lo, _ = integrate.quad(f, -np.inf, logmode, epsabs=1e-10, epsrel=1e-10, limit=200)
        hi, _ = integrate.quad(f, logmode, np.inf, epsabs=1e-10, epsrel=1e-10, limit=200)
    return lo + hi


def _quadform_tail(family, x, k, extra, upper):
    family = NoiseFamily.parse(family)
    nu = check_extra(family, extra)
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise DomainError("quadform_cdf requires x >= 0")
    if family is NoiseFamily.GAUSSIAN:
        out = stats.chi2.sf(xa, k) if upper else stats.chi2.cdf(xa, k)
    elif family is NoiseFamily.STUDENT_T:
        out = (stats.f.sf if upper else stats.f.cdf)(xa / k, k, nu[0])
    elif family is NoiseFamily.CONTAMINATED_NORMAL:
        g = stats.chi2.sf if upper else stats.chi2.cdf
        out = nu[0] * g(nu[1] * xa, k) + (1.0 - nu[0]) * g(xa, k)
    else:
        flat = np.atleast_1d(xa).ravel()
        vals = np.array([_quadform_mixture_integral(family, xi, k, nu, upper) for xi in flat])
        out = vals.reshape(xa.shape)
    out = np.clip(out, 0.0, 1.0)
    return out[()] if np.ndim(out) == 0 else out


def quadform_cdf(family: NoiseFamily, x: ArrayLike, k: int, extra: ArrayLike | None = None):
    """CDF of ``rho = eps' eps`` for a standardised k-dimensional mixture vector.

    Given U, ``rho / kappa(U)`` is chi-square with k degrees of freedom.
    """
    return _quadform_tail(family, x, k, extra, upper=False)


def quadform_sf(family: NoiseFamily, x: ArrayLike, k: int, extra: ArrayLike | None = None):
    """Survival function ``1 - quadform_cdf``, computed directly for tail accuracy."""
    return _quadform_tail(family, x, k, extra, upper=True)
