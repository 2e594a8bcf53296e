"""Posterior summaries, DIC/WAIC and quantile residuals."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy import linalg, special, stats

from . import stats_kernel as sk
from .gibbs import PosteriorDraws
from .model_core import ModelSpec, MultivariateSeries, design_rows, eligible_times, regime_labels

RESIDUAL_CLAMP = 1e-12


def flat_names(prefix: str, j: int, shape: tuple[int, ...]) -> list[str]:
    rows, cols = shape
    return [f"{prefix}{j + 1}[{a + 1},{b + 1}]" for a in range(rows) for b in range(cols)]


@dataclass
class FitSummary:
    """Plug-in posterior quantities and equal-tailed intervals for every scalar."""

    spec: ModelSpec
    level: float
    theta: list[NDArray]
    sigma: list[NDArray]
    c: NDArray
    h: int
    extra: NDArray
    mean: dict[str, float]
    lower: dict[str, float]
    upper: dict[str, float]
    h_probs: dict[int, float]
    G: int
    acceptance_rate: float = float("nan")
    k: int = 0
    r: int = 0

    def covers(self, name: str, value: float) -> bool:
        return self.lower[name] <= value <= self.upper[name]

    def to_dict(self) -> dict:
        return {
            "level": self.level, "G": self.G, "h_mode": self.h,
            "h_probs": {str(h): p for h, p in self.h_probs.items()},
            "acceptance_rate": self.acceptance_rate,
            "parameters": {n: {"mean": self.mean[n], "lower": self.lower[n], "upper": self.upper[n]}
                           for n in self.mean},
        }


def _named_draws(draws: PosteriorDraws) -> dict[str, NDArray]:
    out: dict[str, NDArray] = {}
    G = draws.G
    for j, th in enumerate(draws.theta):
        for name, col in zip(flat_names("theta", j, th.shape[1:]), th.reshape(G, -1).T):
            out[name] = col
    for j, sg in enumerate(draws.sigma):
        for a, b in zip(*np.triu_indices(sg.shape[1])):
            out[f"sigma{j + 1}[{a + 1},{b + 1}]"] = sg[:, a, b]
    for i in range(draws.c.shape[1]):
        out[f"c{i + 1}"] = draws.c[:, i]
    for i in range(draws.extra.shape[1]):
        out[f"nu{i + 1}"] = draws.extra[:, i]
    out["h"] = draws.h.astype(float)
    return out


def posterior_mode_h(h: NDArray) -> int:
    vals, counts = np.unique(h, return_counts=True)
    return int(vals[np.argmax(counts)])  # np.unique sorts, so ties go to the smaller h


def posterior_summary(draws: PosteriorDraws, level: float = 0.95) -> FitSummary:
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    named = _named_draws(draws)
    probs = [(1 - level) / 2, (1 + level) / 2]
    mean, lower, upper = {}, {}, {}
    for name, col in named.items():
        mean[name] = float(np.mean(col))
        lo, hi = np.quantile(col, probs)
        lower[name], upper[name] = float(lo), float(hi)
    vals, counts = np.unique(draws.h, return_counts=True)
    return FitSummary(
        spec=draws.spec, level=level,
        theta=[t.mean(axis=0) for t in draws.theta],
        sigma=[0.5 * (s.mean(axis=0) + s.mean(axis=0).T) for s in draws.sigma],
        c=draws.c.mean(axis=0), h=posterior_mode_h(draws.h), extra=draws.extra.mean(axis=0),
        mean=mean, lower=lower, upper=upper,
        h_probs={int(v): float(n) / draws.G for v, n in zip(vals, counts)},
        G=draws.G, acceptance_rate=draws.acceptance_rate, k=draws.k, r=draws.r)


class PointwiseEvaluator:
    """Per-observation log densities of the mixture model over the eligible window."""

    def __init__(self, series: MultivariateSeries, spec: ModelSpec):
        self.series, self.spec = series, spec
        self.times = eligible_times(series, spec)
        self.Y = series.y[self.times]
        self.k = series.k
        self.designs = [design_rows(series, self.times, spec.p[j], spec.q[j], spec.d[j])
                        for j in range(spec.l)]
        self.zlag = {h: series.z[self.times - h] for h in range(0, spec.h_max + 1)}

    def labels(self, c: NDArray, h: int) -> NDArray:
        return regime_labels(self.zlag[int(h)], c)

    def quadform(self, labels: NDArray, theta, sigma) -> tuple[NDArray, NDArray]:
        q = np.empty(self.times.size)
        logdet = np.empty(self.times.size)
        for j in range(self.spec.l):
            idx = labels == j
            if not idx.any():
                continue
            chol = np.linalg.cholesky(sigma[j])
            resid = self.Y[idx] - self.designs[j][idx] @ theta[j]
            w = linalg.solve_triangular(chol, resid.T, lower=True)
            q[idx] = np.einsum("ij,ij->j", w, w)
            logdet[idx] = 2.0 * np.sum(np.log(np.diag(chol)))
        return q, logdet

    def loglik(self, theta, sigma, c, h, extra) -> NDArray:
        labels = self.labels(c, h)
        q, logdet = self.quadform(labels, theta, sigma)
        return sk.log_density_quadform(self.spec.family, q, self.k, logdet, extra)

    def loglik_matrix(self, draws: PosteriorDraws) -> NDArray:
        """(G, n) matrix of log f(y_t | draw g) with per-draw regimes."""
        out = np.empty((draws.G, self.times.size))
        for g in range(draws.G):
            st = draws.state(g)
            out[g] = self.loglik(st.theta, st.sigma, st.c, st.h, st.extra)
        return out


def plugin_delay(draws: PosteriorDraws, rule: str = "mode") -> int:
    if rule == "mode":
        return posterior_mode_h(draws.h)
    if rule == "mean_rounded":
        return int(np.floor(np.mean(draws.h) + 0.5))
    raise ValueError(f"unknown plug-in delay rule {rule!r}")


def dic(draws: PosteriorDraws, series: MultivariateSeries, spec: ModelSpec | None = None,
        dic_h: str = "mode", loglik: NDArray | None = None) -> tuple[float, float, float]:
    """Returns (DIC, D_hat, D_bar); D_hat uses posterior means and the plug-in delay."""
    spec = spec or draws.spec
    ev = PointwiseEvaluator(series, spec)
    if loglik is None:
        loglik = ev.loglik_matrix(draws)
    d_bar = float(np.mean(-2.0 * loglik.sum(axis=1)))
    theta = [t.mean(axis=0) for t in draws.theta]
    sigma = [s.mean(axis=0) for s in draws.sigma]
    sigma = [0.5 * (s + s.T) for s in sigma]
    d_hat = float(-2.0 * np.sum(ev.loglik(theta, sigma, draws.c.mean(axis=0),
                                          plugin_delay(draws, dic_h), draws.extra.mean(axis=0))))
    return d_hat + 2.0 * (d_bar - d_hat), d_hat, d_bar


def waic(draws: PosteriorDraws, series: MultivariateSeries, spec: ModelSpec | None = None,
         loglik: NDArray | None = None) -> tuple[float, float, float]:
    """Returns (WAIC, W_hat, W_bar)."""
    spec = spec or draws.spec
    if loglik is None:
        loglik = PointwiseEvaluator(series, spec).loglik_matrix(draws)
    G = loglik.shape[0]
    w_hat = float(np.sum(-2.0 * (special.logsumexp(loglik, axis=0) - np.log(G))))
    w_bar = float(np.sum(np.mean(-2.0 * loglik, axis=0)))
    return w_hat + 2.0 * (w_bar - w_hat), w_hat, w_bar


def criteria(draws: PosteriorDraws, series: MultivariateSeries, dic_h: str = "mode") -> dict[str, float]:
    """DIC and WAIC from a single pass over the draws."""
    ll = PointwiseEvaluator(series, draws.spec).loglik_matrix(draws)
    d, d_hat, d_bar = dic(draws, series, draws.spec, dic_h=dic_h, loglik=ll)
    w, w_hat, w_bar = waic(draws, series, draws.spec, loglik=ll)
    return {"DIC": d, "D_hat": d_hat, "D_bar": d_bar, "WAIC": w, "W_hat": w_hat, "W_bar": w_bar}


@dataclass
class ResidualSeries:
    times: NDArray
    r: NDArray
    theoretical: NDArray
    clamped: NDArray = field(default_factory=lambda: np.empty(0, dtype=bool))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "theoretical_quantile", "residual"])
            for t, tq, r in zip(self.times, self.theoretical, self.r):
                w.writerow([int(t) + 1, f"{tq:.10g}", f"{r:.10g}"])


def residual_transform(summary: FitSummary, series: MultivariateSeries,
                       spec: ModelSpec | None = None) -> ResidualSeries:
    """r_t = Phi^{-1}(F(q_t)) at the plug-in parameters, with F the law of the quadratic form."""
    spec = spec or summary.spec
    ev = PointwiseEvaluator(series, spec)
    labels = ev.labels(summary.c, summary.h)
    q, _ = ev.quadform(labels, summary.theta, summary.sigma)
    cdf = sk.quadform_cdf(spec.family, q, series.k, summary.extra)
    upper = cdf > 0.5
    r = np.empty(q.size)
    # the survival branch keeps precision in the upper tail
    sf = sk.quadform_sf(spec.family, q[upper], series.k, summary.extra) if upper.any() else np.empty(0)
    sf = np.clip(sf, RESIDUAL_CLAMP, 1 - RESIDUAL_CLAMP)
    lo = np.clip(cdf[~upper], RESIDUAL_CLAMP, 1 - RESIDUAL_CLAMP)
    r[upper] = stats.norm.isf(sf)
    r[~upper] = stats.norm.ppf(lo)
    clamped = np.zeros(q.size, dtype=bool)
    clamped[upper] = sf <= RESIDUAL_CLAMP
    clamped[~upper] = lo <= RESIDUAL_CLAMP
    n = r.size
    theo = np.empty(n)
    theo[np.argsort(r, kind="stable")] = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    return ResidualSeries(times=ev.times, r=r, theoretical=theo, clamped=clamped)
