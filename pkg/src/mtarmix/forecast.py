"""Joint predictive simulation: one trajectory per posterior draw."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import stats_kernel as sk
from .gibbs import PosteriorDraws
from .model_core import ConfigurationError, MultivariateSeries
from .stats_kernel import NoiseFamily


@dataclass
class ForecastInput:
    """History up to T plus the known exogenous paths for T+1..T+m.

    With ``self_exciting`` set to a column index of y, Z is that column and its
    future values come from each simulated trajectory instead of ``future_z``.
    """

    history: MultivariateSeries
    horizon: int
    future_z: NDArray | None = None
    future_x: NDArray | None = None
    self_exciting: int | None = None

    def __post_init__(self):
        m, hist = int(self.horizon), self.history
        if m < 1:
            raise ConfigurationError("forecast horizon must be >= 1")
        self.horizon = m
        if self.self_exciting is None:
            if self.future_z is None:
                raise ConfigurationError("future_z is required unless z is a column of y")
            self.future_z = np.asarray(self.future_z, dtype=float).ravel()
            if self.future_z.size != m:
                raise ConfigurationError(f"future_z has {self.future_z.size} values, horizon is {m}")
        elif not 0 <= self.self_exciting < hist.k:
            raise ConfigurationError("self_exciting must index a column of y")
        if hist.r > 0:
            if self.future_x is None:
                raise ConfigurationError("future_x is required when the model has covariates")
            fx = np.asarray(self.future_x, dtype=float)
            fx = fx.reshape(m, -1) if fx.size == m * hist.r else fx
            if fx.shape != (m, hist.r):
                raise ConfigurationError(f"future_x must be {m}x{hist.r}, got {fx.shape}")
            self.future_x = fx
        else:
            self.future_x = np.empty((m, 0))


@dataclass
class ForecastResult:
    draws: NDArray      # (G, m, k)
    point: NDArray      # (m, k)
    lower: NDArray
    upper: NDArray
    level: float

    @property
    def horizon(self) -> int:
        return self.draws.shape[1]

    def covers(self, truth: ArrayLike) -> NDArray:
        truth = np.asarray(truth, dtype=float).reshape(self.point.shape)
        return (self.lower <= truth) & (truth <= self.upper)

    def write_csv(self, path, truth: ArrayLike | None = None) -> None:
        truth = None if truth is None else np.asarray(truth, dtype=float).reshape(self.point.shape)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "coordinate", "truth", "mean", "lower", "upper"])
            m, k = self.point.shape
            for i in range(m):
                for j in range(k):
                    tv = "" if truth is None else f"{truth[i, j]:.10g}"
                    w.writerow([i + 1, j + 1, tv, f"{self.point[i, j]:.10g}",
                                f"{self.lower[i, j]:.10g}", f"{self.upper[i, j]:.10g}"])

    def metadata(self) -> dict:
        return {"G": int(self.draws.shape[0]), "horizon": self.horizon,
                "k": int(self.point.shape[1]), "level": self.level,
                "point": self.point.tolist(), "lower": self.lower.tolist(), "upper": self.upper.tolist()}

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.metadata(), fh, indent=2)


def sample_mixing_per_draw(family: NoiseFamily, extra: NDArray, rng: np.random.Generator) -> NDArray:
    """One mixing draw per row of ``extra`` (shape (G, n_extra))."""
    G = extra.shape[0]
    if family is NoiseFamily.GAUSSIAN:
        return np.ones(G)
    if family is NoiseFamily.STUDENT_T:
        nu = extra[:, 0]
        return rng.gamma(0.5 * nu, 2.0 / nu)
    if family is NoiseFamily.SLASH:
        return rng.random(G) ** (2.0 / extra[:, 0])
    if family is NoiseFamily.CONTAMINATED_NORMAL:
        return np.where(rng.random(G) < extra[:, 0], extra[:, 1], 1.0)
    if family is NoiseFamily.SYMMETRIC_HYPERBOLIC:
        return sk.sample_gig(1.0, np.ones(G), extra[:, 0] ** 2, rng)
    return rng.exponential(8.0, size=G)


def forecast(draws: PosteriorDraws, inp: ForecastInput, level: float = 0.95,
             rng: np.random.Generator | None = None) -> ForecastResult:
    if not 0 < level < 1:
        raise ConfigurationError("level must lie in (0, 1)")
    rng = rng if rng is not None else np.random.default_rng()
    spec, hist, m = draws.spec, inp.history, inp.horizon
    G, k = draws.G, hist.k
    if hist.k != draws.k or hist.r != draws.r:
        raise ConfigurationError("history dimensions do not match the fitted model")
    lag = max(spec.max_lag, int(draws.h.max()) if G else 0)
    if hist.T < lag:
        raise ConfigurationError(f"history has {hist.T} points, at least {lag} are needed")
    if inp.self_exciting is not None and G and int(draws.h.min()) == 0:
        raise ConfigurationError("a self-exciting forecast needs delay h >= 1 in every draw")
    L = lag
    # per-draw paths: the last L observed points followed by m simulated ones
    y = np.empty((G, L + m, k))
    y[:, :L] = hist.y[hist.T - L:]
    x = np.vstack([hist.x[hist.T - L:], inp.future_x])
    z = np.empty((G, L + m))
    if inp.self_exciting is None:
        z[:, :L] = hist.z[hist.T - L:]
        z[:, L:] = inp.future_z
    else:
        z[:, :L] = hist.y[hist.T - L:, inp.self_exciting]
    chols = [np.linalg.cholesky(s) for s in draws.sigma]
    gidx = np.arange(G)
    for i in range(m):
        t = L + i
        labels = _labels_vectorized(z[gidx, t - draws.h], draws.c)
        u = sample_mixing_per_draw(spec.family, draws.extra, rng)
        eps = rng.standard_normal((G, k))
        for j in range(spec.l):
            sel = np.flatnonzero(labels == j)
            if sel.size == 0:
                continue
            p, q, d = spec.p[j], spec.q[j], spec.d[j]
            cols = [np.ones((sel.size, 1))]
            cols += [y[sel, t - a] for a in range(1, p + 1)]
            cols += [np.broadcast_to(x[t - a], (sel.size, hist.r)) for a in range(1, q + 1)]
            cols += [z[sel, t - a][:, None] for a in range(1, d + 1)]
            row = np.hstack(cols)
            mean = np.einsum("gs,gsk->gk", row, draws.theta[j][sel])
            shock = np.einsum("gab,gb->ga", chols[j][sel], eps[sel])
            y[sel, t] = mean + np.sqrt(sk.kappa(spec.family, u[sel]))[:, None] * shock
        if inp.self_exciting is not None:
            z[:, t] = y[:, t, inp.self_exciting]
    paths = y[:, L:]
    probs = [(1 - level) / 2, (1 + level) / 2]
    lower, upper = np.quantile(paths, probs, axis=0)
    return ForecastResult(draws=paths, point=paths.mean(axis=0), lower=lower, upper=upper, level=level)


def _labels_vectorized(zval: NDArray, c: NDArray) -> NDArray:
    """Regime of zval[g] under thresholds c[g]: the count of thresholds strictly below,
    which matches the (c_{j-1}, c_j] convention of ``regime_labels``."""
    return np.sum(c < zval[:, None], axis=1)
