"""Command-line front end, config/data parsing and result serialization.

Usage: ``mtar <mode> --config <path> [--data <path>] [--out <dir>] [--seed <u64>]``
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import seeds
from . import stats_kernel as sk
from .forecast import ForecastInput, forecast
from .gibbs import ChainControl, NumericalError, PosteriorDraws, Priors, run_chain
from .model_core import ConfigurationError, ModelSpec, MultivariateSeries
from .selection import (FitSummary, criteria, flat_names, posterior_summary, residual_transform)
from .stats_kernel import NoiseFamily

log = logging.getLogger(__name__)

MODES = ("fit", "forecast", "simulate", "compare", "residuals", "experiment")
SIG_DIGITS = 10


class DataError(ConfigurationError):
    """Malformed input data file."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    mode: str = "fit"
    data: str | None = None
    out: str = "out"
    seed: int = 0
    # model
    l: int = 1
    p: tuple = (1,)
    q: tuple = (0,)
    d: tuple = (0,)
    h_min: int = 0
    h_max: int = 3
    family: str = "gaussian"
    # chain
    iterations: int | None = None
    burn_in: int = 500
    thinning: int = 1
    zeta: float = 100.0
    grid_m: int = 1000
    # priors
    delta0_scale: float = 1e3
    omega0_scale: float = 1.0
    tau0: float | None = None
    gamma0: float | None = None
    eta0: float | None = None
    gamma01: float | None = None
    eta01: float | None = None
    gamma02: float | None = None
    eta02: float | None = None
    # outputs
    level: float = 0.95
    save_draws: bool = False
    dic_h: str = "mode"
    # forecasting
    horizon: int = 10
    future: str | None = None
    self_exciting: int | None = None
    draws: str | None = None
    # residuals
    summary: str | None = None
    # compare
    compare_l: tuple = (1, 2)
    compare_p: tuple = (1, 2)
    compare_families: tuple = ("gaussian",)
    # simulation and experiments
    preset: str = "m1"
    extra: tuple | None = None
    T: int = 1000
    burn: int = 200
    experiment: str = "coverage"
    replications: int = 100
    n_jobs: int = 1

    @property
    def noise(self) -> NoiseFamily:
        return NoiseFamily.parse(self.family)

    def model_spec(self, l=None, p=None, family=None) -> ModelSpec:
        l = self.l if l is None else l
        p = self.p if p is None else p
        q = self.q if len(self.q) == l else self.q[:1] * l
        d = self.d if len(self.d) == l else self.d[:1] * l
        p = tuple(p) if np.ndim(p) else (int(p),)
        p = p if len(p) == l else p[:1] * l
        return ModelSpec(l=l, p=p, q=q, d=d, h_min=self.h_min, h_max=self.h_max,
                         family=self.noise if family is None else family)

    def chain_control(self, seed: int | None = None, family: NoiseFamily | None = None) -> ChainControl:
        fam = family or self.noise
        iters = self.iterations
        if iters is None:
            iters = 2000 if fam is NoiseFamily.SYMMETRIC_HYPERBOLIC else 1500
        return ChainControl(iterations=iters, burn_in=self.burn_in, thinning=self.thinning,
                            seed=seeds.int_seed(self.seed, "estimation") if seed is None else seed,
                            zeta=self.zeta)

    def priors(self, spec: ModelSpec, k: int, r: int) -> Priors:
        hyper = {name: getattr(self, name) for name in HYPER_KEYS[spec.family]}
        return Priors.default(spec, k, r, delta0_scale=self.delta0_scale,
                              omega0_scale=self.omega0_scale, tau0=self.tau0,
                              grid_m=self.grid_m, **hyper)


HYPER_KEYS = {
    NoiseFamily.GAUSSIAN: (),
    NoiseFamily.LAPLACE: (),
    NoiseFamily.STUDENT_T: ("gamma0", "eta0"),
    NoiseFamily.SYMMETRIC_HYPERBOLIC: ("gamma0", "eta0"),
    NoiseFamily.SLASH: ("gamma0", "eta0"),
    NoiseFamily.CONTAMINATED_NORMAL: ("gamma01", "eta01", "gamma02", "eta02"),
}
ALL_HYPER = ("gamma0", "eta0", "gamma01", "eta01", "gamma02", "eta02")

_INT_TUPLES = {"p", "q", "d", "compare_l", "compare_p"}
_FLOAT_TUPLES = {"extra"}
_STR_TUPLES = {"compare_families"}
_BOOLS = {"save_draws"}


def _convert(key: str, raw: str, line: int):
    ftype = {f.name: f.type for f in fields(RunConfig)}[key]
    try:
        if key in _INT_TUPLES:
            return tuple(int(v) for v in raw.split(","))
        if key in _FLOAT_TUPLES:
            return tuple(float(v) for v in raw.split(","))
        if key in _STR_TUPLES:
            return tuple(v.strip() for v in raw.split(","))
        if key in _BOOLS:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if ftype.startswith("int"):
            return int(raw)
        if ftype.startswith("float"):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigurationError(f"config line {line}: invalid value {raw!r} for {key}") from None


def validate_config(cfg: RunConfig) -> RunConfig:
    if cfg.mode not in MODES:
        raise ConfigurationError(f"unknown mode {cfg.mode!r}; expected one of {', '.join(MODES)}")
    try:
        fam = cfg.noise
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    for key in ALL_HYPER:
        if getattr(cfg, key) is not None and key not in HYPER_KEYS[fam]:
            raise ConfigurationError(f"hyperparameter {key} does not apply to family {fam.value}")
    checks = [
        (cfg.l >= 1, "l must be >= 1"),
        (all(v >= 0 for v in cfg.p + cfg.q + cfg.d), "p, q, d must be nonnegative"),
        (0 <= cfg.h_min <= cfg.h_max, "need 0 <= h_min <= h_max"),
        (cfg.iterations is None or cfg.iterations > cfg.burn_in, "iterations must exceed burn_in"),
        (cfg.burn_in >= 0 and cfg.thinning >= 1, "burn_in >= 0 and thinning >= 1 required"),
        (cfg.zeta > 0, "zeta must be positive"),
        (cfg.grid_m >= 2, "grid_m must be >= 2"),
        (0 < cfg.level < 1, "level must lie in (0, 1)"),
        (cfg.horizon >= 1, "horizon must be >= 1"),
        (cfg.delta0_scale > 0 and cfg.omega0_scale > 0, "prior scales must be positive"),
        (cfg.T >= 20 and cfg.burn >= 0, "T must be >= 20 and burn >= 0"),
        (cfg.replications >= 1 and cfg.n_jobs >= 1, "replications and n_jobs must be >= 1"),
        (cfg.dic_h in ("mode", "mean_rounded"), "dic_h must be mode or mean_rounded"),
        (cfg.preset in ("m1", "m2", "m1_ar"), "preset must be m1, m2 or m1_ar"),
        (cfg.experiment in ("coverage", "regimes", "orders"), "experiment must be coverage, regimes or orders"),
        (cfg.seed >= 0, "seed must be nonnegative"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigurationError(msg)
    for name in ("p", "q", "d"):
        if len(getattr(cfg, name)) not in (1, cfg.l):
            raise ConfigurationError(f"{name} needs 1 or l={cfg.l} entries")
    if cfg.extra is not None:
        try:
            sk.check_extra(fam, cfg.extra)
        except sk.DomainError as exc:
            raise ConfigurationError(f"extra does not match family {fam.value}: {exc}") from None
    for f in cfg.compare_families:
        try:
            NoiseFamily.parse(f)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
    return cfg


def parse_config(path, **overrides) -> RunConfig:
    """Flat ``key = value`` file with ``#`` comments; unknown keys are rejected."""
    known = {f.name for f in fields(RunConfig)}
    values = {}
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigurationError(f"config line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigurationError(f"config line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw, lineno)
    # command-line values win over the file
    values.update({k: v for k, v in overrides.items() if v is not None})
    return validate_config(RunConfig(**values))


# ---------------------------------------------------------------------------
# data files
# ---------------------------------------------------------------------------

def parse_data_csv(path) -> MultivariateSeries:
    """Header ``y1..yk[,x1..xr],z``; one row per consecutive time point."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if "z" not in header:
        raise DataError(f"{path}: header has no z column")
    ycols = sorted((h for h in header if h.startswith("y")), key=lambda h: int(h[1:]) if h[1:].isdigit() else -1)
    xcols = sorted((h for h in header if h.startswith("x")), key=lambda h: int(h[1:]) if h[1:].isdigit() else -1)
    if [h for h in ycols] != [f"y{i}" for i in range(1, len(ycols) + 1)] or not ycols:
        raise DataError(f"{path}: output columns must be y1..yk")
    if xcols != [f"x{i}" for i in range(1, len(xcols) + 1)]:
        raise DataError(f"{path}: covariate columns must be x1..xr")
    extra = set(header) - set(ycols) - set(xcols) - {"z"}
    if extra or len(set(header)) != len(header):
        raise DataError(f"{path}: unexpected or duplicate columns {sorted(extra)}")
    pos = {h: i for i, h in enumerate(header)}
    values = np.empty((len(rows) - 1, len(header)))
    for r, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r} has {len(row)} cells, header has {len(header)}")
        for c, cell in enumerate(row):
            cell = cell.strip()
            if cell == "":
                raise DataError(f"{path}: row {r}, column {header[c]}: missing value")
            try:
                values[r - 1, c] = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {r}, column {header[c]}: non-numeric value {cell!r}") from None
            if not math.isfinite(values[r - 1, c]):
                raise DataError(f"{path}: row {r}, column {header[c]}: non-finite value")
    if values.shape[0] == 0:
        raise DataError(f"{path}: no data rows")
    y = values[:, [pos[h] for h in ycols]]
    x = values[:, [pos[h] for h in xcols]] if xcols else None
    return MultivariateSeries(y, values[:, pos["z"]], x)


def fmt(v) -> str:
    return f"{float(v):.{SIG_DIGITS}g}"


def write_data_csv(series: MultivariateSeries, path) -> None:
    header = [f"y{i + 1}" for i in range(series.k)] + [f"x{i + 1}" for i in range(series.r)] + ["z"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t in range(series.T):
            w.writerow([fmt(v) for v in series.y[t]] + [fmt(v) for v in series.x[t]] + [fmt(series.z[t])])


def parse_future_csv(path, horizon: int, r: int, need_z: bool) -> tuple[np.ndarray | None, np.ndarray]:
    """Future exogenous values: header ``x1..xr[,z]``, one row per step."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"future exogenous file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = [h.strip() for h in rows[0]] if rows else []
    want = [f"x{i + 1}" for i in range(r)] + (["z"] if need_z else [])
    missing = [h for h in want if h not in header]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")
    body = rows[1:]
    if len(body) < horizon:
        raise DataError(f"{path}: {len(body)} rows, horizon needs {horizon}")
    vals = {h: [] for h in want}
    for i, row in enumerate(body[:horizon], start=1):
        for h in want:
            try:
                vals[h].append(float(row[header.index(h)]))
            except (ValueError, IndexError):
                raise DataError(f"{path}: row {i}, column {h}: invalid value") from None
    fz = np.array(vals["z"]) if need_z else None
    fx = np.column_stack([vals[h] for h in want if h != "z"]) if r else np.empty((horizon, 0))
    return fz, fx


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def rounded(obj):
    """Recursively round floats to the serialization precision."""
    if isinstance(obj, dict):
        return {str(k): rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [rounded(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return rounded(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(fmt(v)) if math.isfinite(v) else str(v)
    return obj


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rounded(obj), fh, indent=2, sort_keys=False)
        fh.write("\n")


def spec_to_dict(spec: ModelSpec) -> dict:
    return {"l": spec.l, "p": list(spec.p), "q": list(spec.q), "d": list(spec.d),
            "h_min": spec.h_min, "h_max": spec.h_max, "family": spec.family.value}


def spec_from_dict(d: dict) -> ModelSpec:
    return ModelSpec(l=d["l"], p=tuple(d["p"]), q=tuple(d["q"]), d=tuple(d["d"]),
                     h_min=d["h_min"], h_max=d["h_max"], family=d["family"])


def summary_document(summary: FitSummary, crit: dict | None, control: ChainControl | None) -> dict:
    doc = {
        "model": dict(spec_to_dict(summary.spec), k=summary.k, r=summary.r),
        "chain": None if control is None else asdict(control),
        "level": summary.level, "G": summary.G,
        "acceptance_rate": summary.acceptance_rate,
        "h_mode": summary.h,
        "h_probs": {str(h): p for h, p in summary.h_probs.items()},
        "plugin": {"theta": [t.tolist() for t in summary.theta],
                   "sigma": [s.tolist() for s in summary.sigma],
                   "c": summary.c.tolist(), "h": summary.h, "extra": summary.extra.tolist()},
        "parameters": {n: {"mean": summary.mean[n], "lower": summary.lower[n], "upper": summary.upper[n]}
                       for n in summary.mean},
    }
    if crit is not None:
        doc["criteria"] = crit
    return doc


def summary_from_document(doc: dict) -> FitSummary:
    spec = spec_from_dict(doc["model"])
    pl = doc["plugin"]
    params = doc["parameters"]
    return FitSummary(
        spec=spec, level=doc["level"], theta=[np.array(t, float) for t in pl["theta"]],
        sigma=[np.array(s, float) for s in pl["sigma"]], c=np.array(pl["c"], float),
        h=int(pl["h"]), extra=np.array(pl["extra"], float),
        mean={n: v["mean"] for n, v in params.items()},
        lower={n: v["lower"] for n, v in params.items()},
        upper={n: v["upper"] for n, v in params.items()},
        h_probs={int(h): p for h, p in doc["h_probs"].items()}, G=doc["G"],
        acceptance_rate=doc["acceptance_rate"], k=doc["model"]["k"], r=doc["model"]["r"])


def draw_columns(spec: ModelSpec, k: int, r: int) -> list[str]:
    cols = ["iteration"]
    for j in range(spec.l):
        cols += flat_names("theta", j, (spec.n_regressors(j, k, r), k))
    for j in range(spec.l):
        cols += [f"sigma{j + 1}[{a + 1},{b + 1}]" for a, b in zip(*np.triu_indices(k))]
    cols += [f"c{i + 1}" for i in range(spec.l - 1)] + ["h"]
    cols += [f"nu{i + 1}" for i in range(spec.family.n_extra)]
    return cols


def write_draws_csv(draws: PosteriorDraws, path) -> None:
    spec, k = draws.spec, draws.k
    iu = np.triu_indices(k)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(draw_columns(spec, k, draws.r))
        for g in range(draws.G):
            row = [str(g + 1)]
            row += [fmt(v) for t in draws.theta for v in t[g].ravel()]
            row += [fmt(v) for s in draws.sigma for v in s[g][iu]]
            row += [fmt(v) for v in draws.c[g]] + [str(int(draws.h[g]))]
            row += [fmt(v) for v in draws.extra[g]]
            w.writerow(row)


def read_draws_csv(path, spec: ModelSpec, k: int, r: int) -> PosteriorDraws:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    cols = draw_columns(spec, k, r)
    if not rows or rows[0] != cols:
        raise DataError(f"{path}: draw columns do not match the model")
    a = np.array(rows[1:], dtype=float)
    G = a.shape[0]
    pos, theta, sigma = 1, [], []
    for j in range(spec.l):
        s = spec.n_regressors(j, k, r)
        theta.append(a[:, pos:pos + s * k].reshape(G, s, k))
        pos += s * k
    iu = np.triu_indices(k)
    for j in range(spec.l):
        m = np.zeros((G, k, k))
        m[:, iu[0], iu[1]] = a[:, pos:pos + iu[0].size]
        m[:, iu[1], iu[0]] = a[:, pos:pos + iu[0].size]
        sigma.append(m)
        pos += iu[0].size
    c = a[:, pos:pos + spec.l - 1]
    pos += spec.l - 1
    h = a[:, pos].astype(int)
    extra = a[:, pos + 1:]
    return PosteriorDraws(theta, sigma, c, h, extra, spec, k=k, r=r)


# ---------------------------------------------------------------------------
# modes
# ---------------------------------------------------------------------------

def _require_data(cfg: RunConfig) -> MultivariateSeries:
    if not cfg.data:
        raise ConfigurationError(f"mode {cfg.mode} needs a data file")
    return parse_data_csv(cfg.data)


def _fit(cfg: RunConfig, series: MultivariateSeries, spec: ModelSpec | None = None,
         seed: int | None = None):
    spec = spec or cfg.model_spec()
    control = cfg.chain_control(seed, spec.family)
    draws = run_chain(series, spec, cfg.priors(spec, series.k, series.r), control)
    return draws, control


def mode_fit(cfg: RunConfig, out: Path) -> dict:
    series = _require_data(cfg)
    draws, control = _fit(cfg, series)
    summ = posterior_summary(draws, cfg.level)
    crit = criteria(draws, series, cfg.dic_h)
    doc = summary_document(summ, crit, control)
    write_json(doc, out / "summary.json")
    if cfg.save_draws:
        write_draws_csv(draws, out / "draws.csv")
    return doc


def mode_residuals(cfg: RunConfig, out: Path) -> dict:
    series = _require_data(cfg)
    src = Path(cfg.summary) if cfg.summary else out / "summary.json"
    if src.is_file():
        summ = summary_from_document(json.loads(src.read_text()))
    else:
        draws, _ = _fit(cfg, series)
        summ = posterior_summary(draws, cfg.level)
    res = residual_transform(summ, series, summ.spec)
    res.write_csv(out / "residuals.csv")
    return {"n": int(res.r.size), "clamped": int(res.clamped.sum()), "source": str(src) if src.is_file() else "fit"}


def mode_forecast(cfg: RunConfig, out: Path) -> dict:
    series = _require_data(cfg)
    if cfg.draws:
        spec = cfg.model_spec()
        draws = read_draws_csv(cfg.draws, spec, series.k, series.r)
    else:
        draws, _ = _fit(cfg, series)
    se = None if cfg.self_exciting is None else cfg.self_exciting - 1
    need_z = se is None
    if cfg.future:
        fz, fx = parse_future_csv(cfg.future, cfg.horizon, series.r, need_z)
    elif need_z or series.r:
        raise ConfigurationError("forecast mode needs future exogenous values (key 'future')")
    else:
        fz, fx = None, np.empty((cfg.horizon, 0))
    inp = ForecastInput(series, cfg.horizon, future_z=fz, future_x=fx, self_exciting=se)
    res = forecast(draws, inp, cfg.level, seeds.generator(cfg.seed, "forecasting"))
    res.write_csv(out / "forecast.csv")
    doc = rounded(res.metadata())
    write_json(doc, out / "forecast.json")
    return doc


def make_truth(cfg: RunConfig):
    from . import simlab
    maker = {"m1": simlab.make_m1, "m2": simlab.make_m2, "m1_ar": simlab.make_m1_ar}[cfg.preset]
    fam = cfg.noise
    extra = cfg.extra
    if extra is None:
        extra = DEFAULT_TRUE_EXTRA[cfg.preset].get(fam)
    return maker(fam, extra)


DEFAULT_TRUE_EXTRA = {
    "m1": {NoiseFamily.STUDENT_T: (3.0,), NoiseFamily.SLASH: (6.0,),
           NoiseFamily.CONTAMINATED_NORMAL: (0.05, 0.1), NoiseFamily.SYMMETRIC_HYPERBOLIC: (0.11,)},
    "m1_ar": {NoiseFamily.STUDENT_T: (5.0,), NoiseFamily.SLASH: (6.0,),
              NoiseFamily.CONTAMINATED_NORMAL: (0.05, 0.1), NoiseFamily.SYMMETRIC_HYPERBOLIC: (0.11,)},
    "m2": {NoiseFamily.STUDENT_T: (5.0,), NoiseFamily.SLASH: (4.0,),
           NoiseFamily.CONTAMINATED_NORMAL: (0.08, 0.012), NoiseFamily.SYMMETRIC_HYPERBOLIC: (0.12,)},
}


def mode_simulate(cfg: RunConfig, out: Path) -> dict:
    from .simlab import simulate_mtar
    truth = make_truth(cfg)
    series = simulate_mtar(truth, cfg.T, burn=cfg.burn, rng=seeds.generator(cfg.seed, "simulation"))
    write_data_csv(series, out / "data.csv")
    return {"T": series.T, "k": series.k, "r": series.r, "preset": cfg.preset, "family": cfg.family}


def _compare_one(cfg: RunConfig, series: MultivariateSeries, spec: ModelSpec, lag_all: int,
                 index: int) -> dict:
    from .simlab import candidate_label, common_window
    data = common_window(series, spec, lag_all)
    draws, _ = _fit(cfg, data, spec, seed=seeds.int_seed(cfg.seed, "estimation", index))
    crit = criteria(draws, data, cfg.dic_h)
    return {"model": candidate_label(spec), "l": spec.l, "p": spec.p[0],
            "family": spec.family.value, "DIC": crit["DIC"], "WAIC": crit["WAIC"],
            "acceptance_rate": draws.acceptance_rate}


def mode_compare(cfg: RunConfig, out: Path) -> dict:
    from .simlab import _run_jobs
    series = _require_data(cfg)
    specs = [cfg.model_spec(l=l, p=(p,), family=NoiseFamily.parse(f))
             for f, l, p in itertools.product(cfg.compare_families, cfg.compare_l, cfg.compare_p)]
    lag_all = max(s.max_lag for s in specs)
    # each candidate owns its estimation substream, so the pool size cannot change results
    rows = _run_jobs(_compare_one, [(cfg, series, spec, lag_all, i) for i, spec in enumerate(specs)],
                     cfg.n_jobs)
    for crit in ("DIC", "WAIC"):
        order = np.argsort([r[crit] for r in rows], kind="stable")
        for rank, idx in enumerate(order, start=1):
            rows[idx][f"rank_{crit}"] = rank
    with open(out / "compare.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "l", "p", "family", "DIC", "WAIC", "rank_DIC", "rank_WAIC"])
        for r in sorted(rows, key=lambda r: r["rank_DIC"]):
            w.writerow([r["model"], r["l"], r["p"], r["family"], fmt(r["DIC"]), fmt(r["WAIC"]),
                        r["rank_DIC"], r["rank_WAIC"]])
    doc = {"candidates": rows,
           "best": {c: rows[int(np.argmin([r[c] for r in rows]))]["model"] for c in ("DIC", "WAIC")}}
    write_json(doc, out / "summary.json")
    return doc


def mode_experiment(cfg: RunConfig, out: Path) -> dict:
    from . import simlab
    truth = make_truth(cfg)
    control = cfg.chain_control(0, truth.spec.family)
    if cfg.experiment == "coverage":
        rep = simlab.coverage_experiment(truth, T=cfg.T, replications=cfg.replications, control=control,
                                         level=cfg.level, horizon=cfg.horizon, seed=cfg.seed,
                                         n_jobs=cfg.n_jobs)
        doc = rep.to_dict()
    else:
        fam = truth.spec.family
        if cfg.experiment == "regimes":
            cands = simlab.regime_count_candidates(fam, p=1)
            true_index = truth.spec.l - 1
        else:
            cands = simlab.order_candidates(truth.spec.l, fam)
            true_index = truth.spec.p[0] - 1
        table = simlab.selection_experiment(truth, cands, true_index, T=cfg.T,
                                            replications=cfg.replications, control=control,
                                            seed=cfg.seed, n_jobs=cfg.n_jobs, dic_h=cfg.dic_h)
        doc = table.to_dict()
    doc["config"] = {k: v for k, v in asdict(cfg).items()}
    write_json(doc, out / "report.json")
    return doc


RUNNERS = {"fit": mode_fit, "forecast": mode_forecast, "simulate": mode_simulate,
           "compare": mode_compare, "residuals": mode_residuals, "experiment": mode_experiment}


def run(cfg: RunConfig) -> tuple[dict | None, int]:
    """Execute one mode; returns (result document, exit status)."""
    try:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        return RUNNERS[cfg.mode](cfg, out), 0
    except (ConfigurationError, FileNotFoundError, ValueError) as exc:
        print(f"ERROR: config/data: {exc}", file=sys.stderr)
        return None, 1
    except (NumericalError, sk.DomainError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"ERROR: numerical: {exc}", file=sys.stderr)
        return None, 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mtar", description=__doc__.splitlines()[0])
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", required=True)
    parser.add_argument("--data")
    parser.add_argument("--out")
    parser.add_argument("--seed", type=int)
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config, mode=args.mode, data=args.data, out=args.out, seed=args.seed)
    except ConfigurationError as exc:
        print(f"ERROR: config/data: {exc}", file=sys.stderr)
        return 1
    doc, status = run(cfg)
    if status == 0:
        print(json.dumps({"mode": cfg.mode, "out": str(Path(cfg.out).resolve()), "status": "ok"}))
    return status


if __name__ == "__main__":
    sys.exit(main())
