"""Independent reference values frozen into the test-suite.

Everything here uses direct quadrature or closed forms from scipy and none of
the package's own density code, so the tests compare two separate routes.
Run ``python scripts/oracles.py`` to regenerate the printed constants.
"""

import math

import numpy as np
from scipy import integrate, special, stats


def gig_pdf(u, lam, chi, psi):
    w = math.sqrt(chi * psi)
    norm = (psi / chi) ** (lam / 2) / (2 * special.kv(lam, w))
    return norm * u ** (lam - 1) * math.exp(-0.5 * (chi / u + psi * u))


def hyperbolic_variance_factor(nu):
    # E[U] for U ~ GIG(1, 1, nu^2), by quadrature
    f = lambda u: u * gig_pdf(u, 1.0, 1.0, nu * nu)
    return integrate.quad(f, 0, np.inf, limit=500, epsabs=0, epsrel=1e-12)[0]


def mixture_density_k1(family, y, nu=None):
    """Univariate standard mixture density by integrating over the mixing law."""
    phi = lambda s2: math.exp(-0.5 * y * y / s2) / math.sqrt(2 * math.pi * s2)
    if family == "student_t":
        g = lambda u: stats.gamma.pdf(u, nu / 2, scale=2 / nu) * phi(1 / u)
        return integrate.quad(g, 0, np.inf, limit=500)[0]
    if family == "slash":
        g = lambda u: (nu / 2) * u ** (nu / 2 - 1) * phi(1 / u)
        return integrate.quad(g, 0, 1, limit=500)[0]
    if family == "hyperbolic":
        g = lambda u: gig_pdf(u, 1.0, 1.0, nu * nu) * phi(u)
        return integrate.quad(g, 0, np.inf, limit=500)[0]
    if family == "laplace":
        g = lambda u: math.exp(-u / 8) / 8 * phi(u)
        return integrate.quad(g, 0, np.inf, limit=500)[0]
    raise ValueError(family)


if __name__ == "__main__":
    print("hyperbolic variance factor nu=0.11:", repr(hyperbolic_variance_factor(0.11)))
    print("hyperbolic variance factor nu=1.0:", repr(hyperbolic_variance_factor(1.0)))
    for fam, nu in [("student_t", 3.0), ("slash", 6.0), ("hyperbolic", 0.5), ("laplace", None)]:
        for y in (0.3, 2.0):
            print(f"density {fam} nu={nu} y={y}:", repr(mixture_density_k1(fam, y, nu)))
    print("Laplace density at 0, k=1:", repr(mixture_density_k1("laplace", 0.0)))
    m, sd = 2.5, math.sqrt(1.5625)
    print("M2 quantiles:", stats.norm.ppf([1 / 3, 2 / 3], m, sd), stats.norm.ppf([0.33, 0.66], m, sd))
    p = stats.norm.cdf([1.95, 3.02], m, sd)
    print("M2 regime shares:", [p[0], p[1] - p[0], 1 - p[1]])
    A = np.array([[0.24, 0.48, -0.12], [0.46, -0.36, 0.10], [-0.12, -0.47, 0.58]])
    print("M1 exogenous spectral radius:", max(abs(np.linalg.eigvals(A))))
    # stationary variance of Z in M1: solve S = A S A' + 2I
    S = np.linalg.solve(np.eye(9) - np.kron(A, A), (2 * np.eye(3)).ravel()).reshape(3, 3)
    print("M1 exogenous stationary covariance diag:", np.diag(S))
