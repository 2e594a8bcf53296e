"""Ground-truth MTAR designs, data generation and Monte-Carlo experiment runners."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from . import stats_kernel as sk
from .model_core import ConfigurationError, ModelSpec, MultivariateSeries, regime_labels
from .stats_kernel import NoiseFamily

log = logging.getLogger(__name__)


@dataclass
class ExogenousVAR1:
    """(X, Z) jointly from a zero-mean VAR(1); the last coordinate is Z."""

    coef: NDArray
    cov: NDArray
    intercept: NDArray | None = None

    @property
    def dim(self) -> int:
        return self.coef.shape[0]

    def mean(self) -> NDArray:
        b = np.zeros(self.dim) if self.intercept is None else np.asarray(self.intercept, float)
        return np.linalg.solve(np.eye(self.dim) - self.coef, b)

    def generate(self, n: int, rng: np.random.Generator) -> tuple[NDArray, NDArray]:
        b = np.zeros(self.dim) if self.intercept is None else np.asarray(self.intercept, float)
        noise = rng.standard_normal((n, self.dim)) @ np.linalg.cholesky(self.cov).T
        w = np.empty((n, self.dim))
        prev = self.mean()
        for t in range(n):
            prev = b + self.coef @ prev + noise[t]
            w[t] = prev
        return w[:, :-1], w[:, -1]


@dataclass
class ExogenousAR1:
    """Z_t = a + b Z_{t-1} + N(0, 1); no covariates."""

    intercept: float
    slope: float

    def mean(self) -> float:
        return self.intercept / (1.0 - self.slope)

    def generate(self, n: int, rng: np.random.Generator) -> tuple[NDArray, NDArray]:
        noise = rng.standard_normal(n)
        z = np.empty(n)
        prev = self.mean()
        for t in range(n):
            prev = self.intercept + self.slope * prev + noise[t]
            z[t] = prev
        return np.empty((n, 0)), z


@dataclass
class ExogenousSeries:
    """User-supplied (X, Z); must cover burn + T points."""

    x: NDArray
    z: NDArray

    def generate(self, n: int, rng: np.random.Generator) -> tuple[NDArray, NDArray]:
        if self.z.shape[0] < n:
            raise ConfigurationError(f"supplied exogenous series has {self.z.shape[0]} points, need {n}")
        x = np.empty((n, 0)) if self.x is None else np.asarray(self.x, float)[-n:]
        return x, np.asarray(self.z, float)[-n:]


@dataclass
class TrueModel:
    spec: ModelSpec
    theta: list[NDArray]
    sigma: list[NDArray]
    c: NDArray
    h: int
    exogenous: ExogenousVAR1 | ExogenousAR1 | ExogenousSeries
    extra: NDArray = field(default_factory=lambda: np.empty(0))
    k: int = 1
    r: int = 0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        if self.c.size != self.spec.l - 1:
            raise ConfigurationError("threshold count must be l - 1")
        for j in range(self.spec.l):
            s = self.spec.n_regressors(j, self.k, self.r)
            if self.theta[j].shape != (s, self.k) or self.sigma[j].shape != (self.k, self.k):
                raise ConfigurationError(f"truth shapes inconsistent in regime {j + 1}")

    def with_family(self, family, extra=None) -> "TrueModel":
        fam = NoiseFamily.parse(family)
        spec = ModelSpec(self.spec.l, self.spec.p, self.spec.q, self.spec.d,
                         self.spec.h_min, self.spec.h_max, fam)
        return TrueModel(spec, self.theta, self.sigma, self.c, self.h, self.exogenous,
                         sk.check_extra(fam, extra), self.k, self.r)

    def param_vector(self) -> dict[str, float]:
        """Flat name -> value map, using the same names as ``FitSummary``."""
        from .selection import flat_names
        out = {}
        for j in range(self.spec.l):
            for name, val in zip(flat_names("theta", j, self.theta[j].shape), self.theta[j].ravel()):
                out[name] = float(val)
            iu = np.triu_indices(self.k)
            for a, b in zip(*iu):
                out[f"sigma{j + 1}[{a + 1},{b + 1}]"] = float(self.sigma[j][a, b])
        for i, v in enumerate(self.c):
            out[f"c{i + 1}"] = float(v)
        return out


def _theta(phi0, phis=(), betas=(), deltas=()) -> NDArray:
    blocks = [np.atleast_2d(np.asarray(phi0, float))]
    blocks += [np.asarray(p, float).T for p in phis]
    blocks += [np.asarray(b, float).T for b in betas]
    blocks += [np.atleast_2d(np.asarray(d, float)) for d in deltas]
    return np.vstack(blocks)


M1_EXOGENOUS = np.array([[0.24, 0.48, -0.12],
                         [0.46, -0.36, 0.10],
                         [-0.12, -0.47, 0.58]])


def make_m1(family=NoiseFamily.GAUSSIAN, extra=None) -> TrueModel:
    """Three-dimensional, two-regime design with two covariates; split at Z_t <= 0."""
    phi1_1 = [[0.1, 0.6, 0.4], [-0.4, 0.5, -0.7], [0.2, 0.6, -0.3]]
    beta1_1 = [[0.6, -0.5], [-0.4, 0.6], [0.1, 0.3]]
    phi1_2 = [[0.3, 0.5, -0.5], [0.2, 0.7, -0.1], [0.3, -0.4, 0.6]]
    phi2_2 = np.diag([0.3, -0.6, 0.5])
    theta = [_theta([1.0, -2.0, 6.0], [phi1_1], [beta1_1]),
             _theta([0.0, 0.0, 0.0], [phi1_2, phi2_2])]
    sigma = [np.eye(3), np.diag([1.5, 1.0, 2.0])]
    fam = NoiseFamily.parse(family)
    spec = ModelSpec(l=2, p=(1, 2), q=(1, 0), d=(0, 0), h_min=0, h_max=0, family=fam)
    exo = ExogenousVAR1(M1_EXOGENOUS.copy(), 2.0 * np.eye(3))
    return TrueModel(spec, theta, sigma, np.array([0.0]), 0, exo, sk.check_extra(fam, extra), k=3, r=2)


def make_m2(family=NoiseFamily.GAUSSIAN, extra=None) -> TrueModel:
    """Two-dimensional, three-regime design driven by a stationary AR(1) Z with delay 1."""
    theta = [_theta([2.0, 1.0], [[[0.8, 0.0], [-0.2, 0.5]]]),
             _theta([0.4, -0.2], [[[0.3, 0.0], [0.0, -0.6]]]),
             _theta([-3.0, 0.0], [[[0.6, 0.0], [-0.2, 0.8]]])]
    sigma = [np.diag([1.0, 4.0]), np.eye(2), np.diag([2.0, 1.0])]
    fam = NoiseFamily.parse(family)
    spec = ModelSpec(l=3, p=1, q=0, d=0, h_min=1, h_max=1, family=fam)
    return TrueModel(spec, theta, sigma, np.array([1.95, 3.02]), 1, ExogenousAR1(1.0, 0.6),
                     sk.check_extra(fam, extra), k=2, r=0)


def make_m1_ar(family=NoiseFamily.STUDENT_T, extra=(5.0,)) -> TrueModel:
    """M1 reduced to its lag-1 autoregressive part: p=(1,1), no covariates."""
    full = make_m1()
    theta = [full.theta[0][:4], full.theta[1][:4]]
    fam = NoiseFamily.parse(family)
    spec = ModelSpec(l=2, p=1, q=0, d=0, h_min=0, h_max=0, family=fam)
    return TrueModel(spec, theta, full.sigma, np.array([0.0]), 0, full.exogenous,
                     sk.check_extra(fam, extra), k=3, r=2)


def simulate_mtar(truth: TrueModel, T: int, family=None, extra=None, burn: int = 200,
                  rng: np.random.Generator | None = None, return_regimes: bool = False):
    """Generate (X, Z) first, then Y recursively; the first ``burn`` points are dropped.

    Y starts at zero and the exogenous process at its stationary mean.
    """
    rng = rng if rng is not None else np.random.default_rng()
    fam = truth.spec.family if family is None else NoiseFamily.parse(family)
    nu = sk.check_extra(fam, truth.extra if extra is None else extra)
    spec = truth.spec
    lag = max(max(spec.p), max(spec.q), max(spec.d), truth.h)
    if T < lag + 11:
        raise ConfigurationError(f"T={T} too short; need at least {lag + 11}")
    n = burn + T + lag
    x, z = truth.exogenous.generate(n, rng)
    if x.shape[1] != truth.r:
        raise ConfigurationError("exogenous generator does not match the covariate dimension")
    k = truth.k
    y = np.zeros((n, k))
    chols = [np.linalg.cholesky(s) for s in truth.sigma]
    u = sk.sample_mixing(fam, nu, n, rng)
    scale = np.sqrt(sk.kappa(fam, u))
    eps = rng.standard_normal((n, k))
    labels = np.full(n, -1)
    for t in range(lag, n):
        j = int(regime_labels(z[t - truth.h], truth.c))
        labels[t] = j
        p, q, d = spec.p[j], spec.q[j], spec.d[j]
        row = np.concatenate(([1.0], y[t - p:t][::-1].ravel(), x[t - q:t][::-1].ravel(),
                              z[t - d:t][::-1]))
        y[t] = row @ truth.theta[j] + scale[t] * (chols[j] @ eps[t])
    keep = slice(n - T, n)
    out = MultivariateSeries(y[keep], z[keep], x[keep])
    if return_regimes:
        return out, labels[keep]
    return out


# ---------------------------------------------------------------------------
# Monte-Carlo experiments
# ---------------------------------------------------------------------------

@dataclass
class CoverageReport:
    coverage: dict[str, float]
    threshold_bias: NDArray
    extra_relative_bias: NDArray
    prediction_coverage: NDArray            # (horizon, k), percent
    delay_hit_rate: float
    replications: int
    failures: int
    settings: dict
    failure_messages: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"coverage": self.coverage,
                "threshold_bias": self.threshold_bias.tolist(),
                "extra_relative_bias": self.extra_relative_bias.tolist(),
                "prediction_coverage": self.prediction_coverage.tolist(),
                "delay_hit_rate": self.delay_hit_rate,
                "replications": self.replications, "failures": self.failures,
                "failure_messages": self.failure_messages, "settings": self.settings}


@dataclass
class ReplicationOutcome:
    covered: dict[str, bool]
    c_error: NDArray
    extra_error: NDArray
    pred_covered: NDArray
    delay_hit: bool


def _chain_settings(control) -> dict:
    return {"iterations": control.iterations, "burn_in": control.burn_in,
            "thinning": control.thinning, "zeta": control.zeta}


def _run_jobs(fn, args_list, n_jobs: int):
    if n_jobs <= 1:
        return [fn(*a) for a in args_list]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, *zip(*args_list)))


def coverage_replication(truth: TrueModel, T: int, control, level: float, horizon: int,
                         master: int, index: int, fit_spec: ModelSpec | None = None):
    """One simulate/fit/summarize/forecast cycle; returns an outcome or an error string."""
    from .forecast import ForecastInput, forecast
    from .gibbs import ChainControl, NumericalError, run_chain
    from .seeds import generator, int_seed
    from .selection import posterior_summary
    try:
        full = simulate_mtar(truth, T + horizon, rng=generator(master, "simulation", index))
        train = full.head(T)
        ctl = ChainControl(control.iterations, control.burn_in, control.thinning,
                           int_seed(master, "estimation", index), control.zeta)
        spec = fit_spec or truth.spec
        draws = run_chain(train, spec, control=ctl)
        summ = posterior_summary(draws, level)
        covered = {name: summ.covers(name, val) for name, val in truth.param_vector().items()}
        for i, v in enumerate(truth.extra):
            covered[f"nu{i + 1}"] = summ.covers(f"nu{i + 1}", float(v))
        pred = np.zeros((horizon, truth.k), dtype=bool)
        if horizon > 0:
            fin = ForecastInput(train, horizon, future_z=full.z[T:], future_x=full.x[T:])
            res = forecast(draws, fin, level, generator(master, "forecasting", index))
            pred = res.covers(full.y[T:])
        with np.errstate(divide="ignore", invalid="ignore"):
            extra_err = (summ.extra - truth.extra) / truth.extra if truth.extra.size else np.empty(0)
        return ReplicationOutcome(covered, summ.c - truth.c, extra_err, pred, summ.h == truth.h)
    except (ConfigurationError, NumericalError, sk.DomainError) as exc:
        return f"replication {index}: {type(exc).__name__}: {exc}"


def coverage_experiment(truth: TrueModel, family=None, extra=None, T: int = 1000,
                        replications: int = 100, control=None, level: float = 0.95,
                        horizon: int = 10, seed: int = 0, n_jobs: int = 1,
                        fit_spec: ModelSpec | None = None) -> CoverageReport:
    """Coverage of credible and prediction intervals over independent replications."""
    from .gibbs import ChainControl
    if replications < 1:
        raise ConfigurationError("replications must be >= 1")
    control = control or ChainControl()
    if family is not None:
        truth = truth.with_family(family, truth.extra if extra is None else extra)
    elif extra is not None:
        truth = truth.with_family(truth.spec.family, extra)
    args = [(truth, T, control, level, horizon, seed, i, fit_spec) for i in range(replications)]
    outcomes = _run_jobs(coverage_replication, args, n_jobs)
    ok = [o for o in outcomes if isinstance(o, ReplicationOutcome)]
    failed = [o for o in outcomes if isinstance(o, str)]
    for msg in failed:
        log.warning(msg)
    n = len(ok)
    if n == 0:
        raise RuntimeError("every replication failed: " + "; ".join(failed[:3]))
    names = list(ok[0].covered)
    coverage = {name: 100.0 * sum(o.covered[name] for o in ok) / n for name in names}
    settings = {"T": T, "level": level, "horizon": horizon, "seed": seed,
                "family": truth.spec.family.value, "extra": truth.extra.tolist(),
                "chain": _chain_settings(control)}
    return CoverageReport(
        coverage=coverage,
        threshold_bias=np.mean([o.c_error for o in ok], axis=0),
        extra_relative_bias=100.0 * np.mean([o.extra_error for o in ok], axis=0)
        if truth.extra.size else np.empty(0),
        prediction_coverage=100.0 * np.mean([o.pred_covered for o in ok], axis=0),
        delay_hit_rate=100.0 * np.mean([o.delay_hit for o in ok]),
        replications=n, failures=len(failed), settings=settings, failure_messages=failed)


@dataclass
class SelectionTable:
    candidates: list[str]
    true_index: int
    rank1: dict[str, float]        # criterion -> share of replications where the truth ranks first
    rank2: dict[str, float]
    choices: dict[str, list[int]]  # criterion -> chosen candidate index per replication
    values: list[dict[str, list[float]]]
    replications: int
    failures: int
    settings: dict

    def to_dict(self) -> dict:
        return {"candidates": self.candidates, "true_index": self.true_index,
                "rank1": self.rank1, "rank2": self.rank2, "choices": self.choices,
                "values": self.values, "replications": self.replications,
                "failures": self.failures, "settings": self.settings}


def candidate_label(spec: ModelSpec) -> str:
    p = spec.p[0] if len(set(spec.p)) == 1 else list(spec.p)
    name = "VAR" if spec.l == 1 else f"MTAR({spec.l})"
    return f"{name}[p={p}, {spec.family.value}]"


def common_window(series: MultivariateSeries, spec: ModelSpec, lag_all: int) -> MultivariateSeries:
    """Drop leading points so that every candidate is scored on the same time points."""
    return series.tail_from(lag_all - spec.max_lag)


def selection_replication(truth: TrueModel, candidates: list[ModelSpec], T: int, control,
                          master: int, index: int, dic_h: str = "mode"):
    from .gibbs import ChainControl, NumericalError, run_chain
    from .seeds import generator, int_seed
    from .selection import criteria
    try:
        series = simulate_mtar(truth, T, rng=generator(master, "simulation", index))
        lag_all = max(s.max_lag for s in candidates)
        out = {"DIC": [], "WAIC": []}
        for ci, spec in enumerate(candidates):
            data = common_window(series, spec, lag_all)
            ctl = ChainControl(control.iterations, control.burn_in, control.thinning,
                               int_seed(master, "estimation", index, ci), control.zeta)
            draws = run_chain(data, spec, control=ctl)
            crit = criteria(draws, data, dic_h=dic_h)
            out["DIC"].append(crit["DIC"])
            out["WAIC"].append(crit["WAIC"])
        return out
    except (ConfigurationError, NumericalError, sk.DomainError) as exc:
        return f"replication {index}: {type(exc).__name__}: {exc}"


def selection_experiment(truth: TrueModel, candidates: list[ModelSpec], true_index: int,
                         T: int = 1000, replications: int = 50, control=None, seed: int = 0,
                         n_jobs: int = 1, dic_h: str = "mode") -> SelectionTable:
    """Share of replications in which each criterion ranks the true candidate first and second."""
    from .gibbs import ChainControl
    if not candidates:
        raise ConfigurationError("need at least one candidate")
    control = control or ChainControl()
    args = [(truth, candidates, T, control, seed, i, dic_h) for i in range(replications)]
    outcomes = _run_jobs(selection_replication, args, n_jobs)
    ok = [o for o in outcomes if isinstance(o, dict)]
    failed = [o for o in outcomes if isinstance(o, str)]
    rank1, rank2, choices = {}, {}, {}
    for crit in ("DIC", "WAIC"):
        order = [np.argsort(o[crit], kind="stable") for o in ok]
        choices[crit] = [int(o[0]) for o in order]
        rank1[crit] = float(np.mean([o[0] == true_index for o in order])) if ok else float("nan")
        rank2[crit] = float(np.mean([len(o) > 1 and o[1] == true_index for o in order])) if ok else float("nan")
    return SelectionTable(
        candidates=[candidate_label(s) for s in candidates], true_index=true_index,
        rank1=rank1, rank2=rank2, choices=choices, values=ok, replications=len(ok),
        failures=len(failed),
        settings={"T": T, "seed": seed, "chain": _chain_settings(control), "dic_h": dic_h})


def regime_count_candidates(family=NoiseFamily.STUDENT_T, p: int = 1, max_l: int = 4) -> list[ModelSpec]:
    return [ModelSpec(l=l, p=p, family=family) for l in range(1, max_l + 1)]


def order_candidates(l: int = 2, family=NoiseFamily.STUDENT_T, orders=(1, 2, 3)) -> list[ModelSpec]:
    return [ModelSpec(l=l, p=p, family=family) for p in orders]
