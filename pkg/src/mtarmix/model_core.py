"""Series containers, regime assignment, design matrices and Gaussian MLE.

Time indices are 0-based throughout the code: row ``t`` of ``series.y`` is
the observation at time ``t + 1`` in 1-based notation. ``effective_start``
is the one exception and returns the 1-based index of the first usable
observation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .stats_kernel import NoiseFamily


class ConfigurationError(ValueError):
    """Model specification or data inconsistent with the requested fit."""


@dataclass(frozen=True)
class MultivariateSeries:
    y: NDArray
    x: NDArray
    z: NDArray

    def __init__(self, y: ArrayLike, z: ArrayLike, x: ArrayLike | None = None):
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        z = np.asarray(z, dtype=float).ravel()
        if x is None:
            x = np.empty((y.shape[0], 0))
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if not (y.shape[0] == z.shape[0] == x.shape[0]):
            raise ConfigurationError(
                f"series lengths differ: y={y.shape[0]}, x={x.shape[0]}, z={z.shape[0]}")
        if y.shape[1] < 1:
            raise ConfigurationError("output series needs at least one column")
        for name, arr in (("y", y), ("x", x), ("z", z)):
            if not np.all(np.isfinite(arr)):
                raise ConfigurationError(f"{name} contains missing or non-finite values")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)

    @property
    def T(self) -> int:
        return self.y.shape[0]

    @property
    def k(self) -> int:
        return self.y.shape[1]

    @property
    def r(self) -> int:
        return self.x.shape[1]

    def head(self, n: int) -> "MultivariateSeries":
        return MultivariateSeries(self.y[:n], self.z[:n], self.x[:n])

    def tail_from(self, start: int) -> "MultivariateSeries":
        return MultivariateSeries(self.y[start:], self.z[start:], self.x[start:])


def _as_orders(value, l: int, name: str) -> tuple[int, ...]:
    if np.isscalar(value):
        value = [int(value)] * l
    out = tuple(int(v) for v in value)
    if len(out) != l:
        raise ConfigurationError(f"{name} needs {l} entries, got {len(out)}")
    if any(v < 0 for v in out):
        raise ConfigurationError(f"{name} entries must be nonnegative")
    return out


@dataclass(frozen=True)
class ModelSpec:
    """Structural parameters of an MTAR(l; p, q, d) model.

    ``p``, ``q`` and ``d`` accept a scalar (shared by every regime) or one
    entry per regime. Delay candidates are ``h_min..h_max`` inclusive.
    """

    l: int
    p: tuple[int, ...]
    q: tuple[int, ...] = 0
    d: tuple[int, ...] = 0
    h_min: int = 0
    h_max: int = 0
    family: NoiseFamily = NoiseFamily.GAUSSIAN

    def __post_init__(self):
        if int(self.l) < 1:
            raise ConfigurationError("regime count l must be >= 1")
        object.__setattr__(self, "l", int(self.l))
        for name in ("p", "q", "d"):
            object.__setattr__(self, name, _as_orders(getattr(self, name), self.l, name))
        if not (0 <= self.h_min <= self.h_max):
            raise ConfigurationError(f"invalid delay range {self.h_min}..{self.h_max}")
        object.__setattr__(self, "family", NoiseFamily.parse(self.family))

    @property
    def h_candidates(self) -> tuple[int, ...]:
        return tuple(range(self.h_min, self.h_max + 1))

    def n_regressors(self, j: int, k: int, r: int) -> int:
        """s_j = 1 + p_j k + q_j r + d_j."""
        return 1 + self.p[j] * k + self.q[j] * r + self.d[j]

    def min_occupancy(self, j: int, k: int, r: int) -> int:
        return self.n_regressors(j, k, r) + k + 1

    @property
    def max_lag(self) -> int:
        return max(max(self.p), max(self.q), max(self.d), self.h_max)


@dataclass
class RegimeData:
    design: NDArray
    response: NDArray
    time_points: NDArray

    @property
    def n(self) -> int:
        return self.response.shape[0]


def effective_start(spec: ModelSpec) -> int:
    """1-based index of the first usable observation.

    Uses ``h_max`` rather than the current delay so every candidate delay
    sees the same observations.
    """
    return spec.max_lag + 1


def eligible_times(series: MultivariateSeries, spec: ModelSpec) -> NDArray:
    """0-based indices of the observations that enter the likelihood."""
    return np.arange(effective_start(spec) - 1, series.T)


def regime_labels(z_lagged: ArrayLike, c: ArrayLike) -> NDArray:
    """0-based regime of each value: regime j holds values in ``(c_{j-1}, c_j]``."""
    return np.searchsorted(np.asarray(c, dtype=float), np.asarray(z_lagged), side="left")


def assign_regimes(series: MultivariateSeries, c: ArrayLike, h: int,
                   spec: ModelSpec) -> list[NDArray]:
    """Partition the eligible (0-based) time points by the regime of ``Z_{t-h}``."""
    times = eligible_times(series, spec)
    labels = regime_labels(series.z[times - h], c)
    return [times[labels == j] for j in range(spec.l)]


def design_rows(series: MultivariateSeries, times: ArrayLike, p: int, q: int, d: int) -> NDArray:
    """Rows ``[1, y_{t-1}', ..., y_{t-p}', x_{t-1}', ..., x_{t-q}', z_{t-1}, ..., z_{t-d}]``."""
    times = np.asarray(times, dtype=int)
    if times.size and times.min() < max(p, q, d):
        raise ConfigurationError("design row requested before all lags are available")
    cols = [np.ones((times.size, 1))]
    cols += [series.y[times - i] for i in range(1, p + 1)]
    cols += [series.x[times - i] for i in range(1, q + 1)]
    cols += [series.z[times - i][:, None] for i in range(1, d + 1)]
    return np.hstack(cols)


def build_design(series: MultivariateSeries, time_points: ArrayLike, spec: ModelSpec,
                 j: int) -> RegimeData:
    time_points = np.asarray(time_points, dtype=int)
    if time_points.size and time_points.min() < effective_start(spec) - 1:
        raise ConfigurationError("time point precedes the effective start of the model")
    design = design_rows(series, time_points, spec.p[j], spec.q[j], spec.d[j])
    return RegimeData(design=design, response=series.y[time_points], time_points=time_points)


@dataclass
class MLEResult:
    theta: NDArray
    sigma: NDArray
    ridge: bool = False
    inflated: bool = False


def mle_init(reg: RegimeData, ridge: float = 1e-8) -> MLEResult:
    """Gaussian MLE of (theta_j, Sigma_j) for one regime.

    A rank-deficient design falls back to a ridge solve; a singular residual
    covariance is inflated by ``1e-6 * mean(diag) * I``.
    """
    m, y = reg.design, reg.response
    gram = m.T @ m
    used_ridge = np.linalg.matrix_rank(gram) < gram.shape[0]
    if used_ridge:
        scale = max(np.trace(gram) / gram.shape[0], 1.0)
        gram = gram + ridge * scale * np.eye(gram.shape[0])
    theta = np.linalg.solve(gram, m.T @ y)
    resid = y - m @ theta
    sigma = resid.T @ resid / max(reg.n, 1)
    sigma = 0.5 * (sigma + sigma.T)
    # singularity is judged against the scale of the response, not of sigma itself
    scale = float(np.mean(y * y)) if y.size else 1.0
    scale = scale if scale > 0 else 1.0
    eig = np.linalg.eigvalsh(sigma)
    inflated = bool(eig[0] <= 1e-10 * max(eig[-1], scale))
    if inflated:
        level = max(float(np.mean(np.diag(sigma))), scale)
        sigma = sigma + 1e-6 * level * np.eye(sigma.shape[0])
    return MLEResult(theta=theta, sigma=sigma, ridge=bool(used_ridge), inflated=inflated)
