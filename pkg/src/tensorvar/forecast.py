"""Predictive densities, point forecasts and the recursive out-of-sample exercise.

For each posterior draw a few future paths are simulated (volatility forward
through its AR(1) law, the mean through the VAR recursion). The density of the
final step is then evaluated analytically, ``N(y_{T+h}; mu_{T+h}, Sigma_{T+h})``,
and the per-path values are combined with a log-mean-exp.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from . import bvar
from . import volatility as vol
from .data_io import Standardizer
from .dates import normalize_quarter, quarter_ordinal
from .errors import DataError, TensorVarError
from .sampler import FactorPrior, McmcConfig, PosteriorDraws, run_chain
from .var_data import SeriesPanel, VarDataset, build_dataset

log = logging.getLogger(__name__)

MODEL_SIGMA = "model"
DIAGONAL_FIXED = "diagonal_fixed"
FAMILIES = {
    "BVAR": vol.HOMOSKEDASTIC,
    "TVAR": vol.HOMOSKEDASTIC,
    "TVAR-CSV": vol.COMMON_SV,
    "TVAR-SV": vol.CHOLESKY_SV,
}
_LOG2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# predictive simulation


def log_mean_exp(values) -> float:
    values = np.asarray(values, dtype=float)
    return float(logsumexp(values) - math.log(values.size))


def _log_mean_exp_se(values) -> float:
    """Delta-method standard error of :func:`log_mean_exp`."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return float("nan")
    w = np.exp(values - values.max())
    return float(w.std(ddof=1) / (math.sqrt(values.size) * w.mean()))


def gaussian_logpdf_chol(y, mean, chol) -> np.ndarray:
    """``log N(y; mean, L L')`` for a batch of lower factors ``chol`` (..., n, n)."""
    d = np.asarray(y, dtype=float) - mean
    chol = np.asarray(chol, dtype=float)
    n = chol.shape[-1]
    d, chol = np.broadcast_arrays(d[..., None], chol)
    z = np.linalg.solve(chol, d[..., :1])[..., 0]
    logdet = np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(axis=-1)
    return -0.5 * n * _LOG2PI - logdet - 0.5 * np.einsum("...i,...i->...", z, z)


def _draw_parts(draws: PosteriorDraws, m: int, ds: VarDataset, sigma_mode: str):
    A = draws.A[m]
    c = draws.intercept[m] if draws.intercept is not None else np.zeros(draws.n)
    if sigma_mode == MODEL_SIGMA:
        state = draws.volatility_state(m)
    elif sigma_mode == DIAGONAL_FIXED:
        U = ds.Y - ds.X @ A - c
        state = vol.Homoskedastic(np.diag(np.mean(U * U, axis=0)))
    else:
        raise ValueError(f"unknown sigma_mode {sigma_mode!r}")
    return A, c, state


@dataclass
class PredictiveSummary:
    horizons: tuple[int, ...]
    point: dict
    log_density: dict = field(default_factory=dict)
    log_density_se: dict = field(default_factory=dict)
    n_dropped: dict = field(default_factory=dict)


def predictive_summary(
    draws: PosteriorDraws,
    ds: VarDataset,
    horizons: Sequence[int],
    rng,
    paths: int = 5,
    y_future: Optional[dict] = None,
    sigma_mode: str = MODEL_SIGMA,
) -> PredictiveSummary:
    """Point forecasts and (when ``y_future`` maps horizon -> realized vector) log predictive densities.

    One set of simulated paths up to the largest horizon serves every horizon.
    """
    hs = tuple(sorted({int(h) for h in horizons}))
    if not hs or hs[0] < 1:
        raise ValueError("horizons must be >= 1")
    if paths < 1:
        raise ValueError("paths must be >= 1")
    if draws.p != ds.p or draws.n != ds.n:
        raise ValueError("draws and dataset disagree on (n, p)")
    H, M, n = hs[-1], len(draws), ds.n
    if M == 0:
        raise ValueError("no posterior draws")
    point = {h: np.zeros(n) for h in hs}
    ld = {h: np.empty(M * paths) for h in hs} if y_future is not None else {}
    for m in range(M):
        A, c, state = _draw_parts(draws, m, ds, sigma_mode)
        L = vol.forecast_chol_paths(state, H, paths, rng)
        lags = np.tile(ds.x_next, (paths, 1))
        for k in range(1, H + 1):
            mu = c + lags @ A
            if k in point:
                point[k] += mu.sum(axis=0)
                if y_future is not None:
                    ld[k][m * paths : (m + 1) * paths] = gaussian_logpdf_chol(y_future[k], mu, L[:, k - 1])
            if k < H:
                y = mu + np.einsum("pij,pj->pi", L[:, k - 1], rng.standard_normal((paths, n)))
                lags = np.hstack([y, lags[:, : lags.shape[1] - n]])
    out = PredictiveSummary(hs, {h: v / (M * paths) for h, v in point.items()})
    for h, vals in ld.items():
        ok = np.isfinite(vals)
        dropped = int((~ok).sum())
        if dropped:
            log.warning("horizon %d: %d non-finite predictive log densities excluded", h, dropped)
        out.n_dropped[h] = dropped
        if not ok.any():
            out.log_density[h] = float("nan")
            out.log_density_se[h] = float("nan")
            continue
        out.log_density[h] = log_mean_exp(vals[ok])
        out.log_density_se[h] = _log_mean_exp_se(vals[ok])
    return out


def predictive_density(draws, ds, y_future, horizon: int, rng, paths: int = 5, sigma_mode=MODEL_SIGMA) -> float:
    """Log predictive density of ``y_future`` at ``horizon`` steps after the sample end."""
    s = predictive_summary(draws, ds, [horizon], rng, paths, {int(horizon): np.asarray(y_future, dtype=float)}, sigma_mode)
    return s.log_density[int(horizon)]


def point_forecast(draws, ds, horizon: int, rng, paths: int = 5, sigma_mode=MODEL_SIGMA) -> np.ndarray:
    """Posterior predictive mean at ``horizon``."""
    return predictive_summary(draws, ds, [horizon], rng, paths, None, sigma_mode).point[int(horizon)]


def simulate_paths(draws, ds, horizon: int, rng, paths: int = 1, sigma_mode=MODEL_SIGMA) -> np.ndarray:
    """Raw predictive simulation, shape ``(len(draws) * paths, horizon, n)``."""
    M, n = len(draws), ds.n
    out = np.empty((M * paths, horizon, n))
    for m in range(M):
        A, c, state = _draw_parts(draws, m, ds, sigma_mode)
        L = vol.forecast_chol_paths(state, horizon, paths, rng)
        lags = np.tile(ds.x_next, (paths, 1))
        for k in range(horizon):
            y = c + lags @ A + np.einsum("pij,pj->pi", L[:, k], rng.standard_normal((paths, n)))
            out[m * paths : (m + 1) * paths, k] = y
            lags = np.hstack([y, lags[:, : lags.shape[1] - n]])
    return out


# ---------------------------------------------------------------------------
# evaluation exercise


@dataclass(frozen=True)
class ModelSpec:
    """One model in the evaluation.

    ``family`` is one of ``BVAR``, ``TVAR``, ``TVAR-CSV``, ``TVAR-SV``.
    ``sigma_mode="diagonal_fixed"`` evaluates the same posterior with every
    ``Sigma_{T+k}`` replaced by the diagonal of the in-sample residual
    covariance of each draw (a control without volatility dynamics).
    """

    name: str
    family: str
    rank: int = 1
    p: int = 4
    intercept: bool = False
    sigma_mode: str = MODEL_SIGMA
    prior_variances: tuple = (1.0, 1.0, 10.0)
    minnesota: bvar.MinnesotaSpec = field(default_factory=bvar.MinnesotaSpec)
    vol_prior: vol.VolatilityPrior = field(default_factory=vol.VolatilityPrior)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}; expected one of {sorted(FAMILIES)}")
        if self.sigma_mode not in (MODEL_SIGMA, DIAGONAL_FIXED):
            raise ValueError(f"unknown sigma_mode {self.sigma_mode!r}")
        object.__setattr__(self, "prior_variances", tuple(float(v) for v in self.prior_variances))

    def fit_key(self) -> tuple:
        """Models sharing this key share posterior draws at an origin."""
        if self.family == "BVAR":
            return (self.family, self.p, self.intercept, repr(self.minnesota))
        return (self.family, self.rank, self.p, self.intercept, self.prior_variances, repr(self.vol_prior))

    def describe(self) -> dict:
        return {"family": self.family, "rank": self.rank, "p": self.p, "sigma_mode": self.sigma_mode}


@dataclass(frozen=True)
class ForecastTask:
    """Forecast origins (last in-sample quarter), horizons and scoring options.

    ``standardization`` is ``"train"`` (statistics from the estimation window
    of each origin) or ``"full"`` (whole-sample statistics).
    """

    origins: tuple[str, ...]
    horizons: tuple[int, ...] = (1, 4)
    paths: int = 5
    targets: tuple[str, ...] = ()
    benchmark: str = "BVAR"
    standardization: str = "train"
    start: Optional[str] = None

    def __post_init__(self):
        origins = tuple(normalize_quarter(o) for o in self.origins)
        if not origins:
            raise ValueError("need at least one forecast origin")
        ords = [quarter_ordinal(o) for o in origins]
        if ords != sorted(set(ords)):
            raise ValueError("origins must be strictly increasing")
        hs = tuple(sorted({int(h) for h in self.horizons}))
        if not hs or hs[0] < 1:
            raise ValueError("horizons must be positive integers")
        if self.standardization not in ("train", "full"):
            raise ValueError(f"standardization must be 'train' or 'full', got {self.standardization!r}")
        object.__setattr__(self, "origins", origins)
        object.__setattr__(self, "horizons", hs)
        object.__setattr__(self, "targets", tuple(self.targets))

    def check(self, panel: SeriesPanel) -> None:
        H = max(self.horizons)
        for o in self.origins:
            try:
                idx = panel.index_of(o)
            except KeyError:
                raise DataError(f"origin {o} is outside the panel ({panel.dates[0]}..{panel.dates[-1]})") from None
            if idx + H >= len(panel):
                raise DataError(f"origin {o} leaves no observation at horizon {H} (panel ends {panel.dates[-1]})")
        for t in self.targets:
            if t not in panel.names:
                raise DataError(f"target variable {t!r} not in panel")


def fit_model(spec: ModelSpec, ds: VarDataset, mcmc: McmcConfig, rng) -> PosteriorDraws:
    if spec.family == "BVAR":
        return bvar.run_bvar(ds, spec.minnesota, mcmc.draws, rng)
    cfg = replace(mcmc, rank=spec.rank, regime=FAMILIES[spec.family])
    prior = FactorPrior.default(ds.n, ds.p, spec.rank, spec.prior_variances)
    return run_chain(ds, cfg, prior=prior, vol_prior=spec.vol_prior, rng=rng)


def _panel_digest(panel: SeriesPanel) -> str:
    h = hashlib.sha256()
    h.update(json.dumps([panel.names, panel.dates]).encode())
    h.update(np.ascontiguousarray(panel.values).tobytes())
    return h.hexdigest()


def run_hash(panel, models, task, mcmc, seed) -> str:
    payload = {
        "panel": _panel_digest(panel),
        "models": [repr(m) for m in models],
        "task": repr(task),
        "mcmc": repr(mcmc),
        "seed": int(seed),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def evaluate_origin(panel: SeriesPanel, models, task: ForecastTask, mcmc: McmcConfig, seed: int, oi: int) -> dict:
    """Estimate every model at origin ``task.origins[oi]`` and score it.

    Returns the checkpoint record: for each model either
    ``{"status": "ok", "lpl": {h: .}, "lpl_se": .., "sq_err": {h: [.]}, ...}``
    or ``{"status": "failed", "error": message}``.
    """
    origin = task.origins[oi]
    idx = panel.index_of(origin)
    start = panel.index_of(task.start) if task.start else 0
    train = panel.values[start : idx + 1]
    ref = train if task.standardization == "train" else panel.values[start:]
    st = Standardizer.fit(ref, panel.names)
    z_train = st.apply(train)
    actual = {h: panel.values[idx + h] for h in task.horizons}
    actual_z = {h: st.apply(v) for h, v in actual.items()}

    record = {"origin": origin, "origin_index": oi, "models": {}, "timing": {}}
    fitted: dict = {}
    keys = []
    for mi, spec in enumerate(models):
        key = spec.fit_key()
        if key not in keys:
            keys.append(key)
        t0 = time.perf_counter()
        try:
            ds = build_dataset(z_train, spec.p, spec.intercept)
            if key not in fitted:
                fit_rng = np.random.default_rng([seed, oi, keys.index(key), 0])
                fitted[key] = fit_model(spec, ds, mcmc, fit_rng)
            draws = fitted[key]
            rng = np.random.default_rng([seed, oi, mi, 1])
            s = predictive_summary(draws, ds, task.horizons, rng, task.paths, actual_z, spec.sigma_mode)
        except (TensorVarError, np.linalg.LinAlgError, ValueError) as exc:
            log.warning("model %s failed at origin %s: %s", spec.name, origin, exc)
            record["models"][spec.name] = {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}
            continue
        finally:
            record["timing"][spec.name] = time.perf_counter() - t0
        sq = {}
        point = {}
        for h in task.horizons:
            fc = st.inverse(s.point[h])
            point[str(h)] = fc.tolist()
            sq[str(h)] = ((fc - actual[h]) ** 2).tolist()
        rec = {
            "status": "ok",
            "lpl": {str(h): s.log_density[h] for h in task.horizons},
            "lpl_se": {str(h): s.log_density_se[h] for h in task.horizons},
            "n_dropped": {str(h): s.n_dropped[h] for h in task.horizons},
            "point": point,
            "sq_err": sq,
        }
        if not all(np.isfinite(v) for v in rec["lpl"].values()):
            rec["status"] = "failed"
            rec["error"] = "non-finite log predictive density"
        acc = draws.diagnostics.get("acceptance") if draws.diagnostics else None
        if acc:
            rec["acceptance"] = acc
        record["models"][spec.name] = rec
    return record


def _checkpoint_path(directory: Path, oi: int, origin: str) -> Path:
    return directory / f"origin_{oi:03d}_{origin}.json"


def _write_json_atomic(path: Path, obj) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _evaluate_job(args):
    return evaluate_origin(*args)


def run_recursive_eval(
    panel: SeriesPanel,
    models: Sequence[ModelSpec],
    task: ForecastTask,
    mcmc: McmcConfig,
    seed: int = 0,
    checkpoint_dir=None,
    workers: int = 1,
    max_origins: Optional[int] = None,
) -> "EvalReport":
    """Expanding-window evaluation over ``task.origins``.

    Every origin re-standardizes and re-estimates all models. When
    ``checkpoint_dir`` is given each finished origin is written there as JSON
    (keys: ``run_hash``, ``origin``, ``origin_index``, ``models``, ``timing``)
    and reused on the next call with the same inputs. ``max_origins`` stops
    after that many newly computed origins (used to test resumption).
    """
    models = list(models)
    names = [m.name for m in models]
    if len(set(names)) != len(names):
        raise ValueError("model names must be unique")
    task.check(panel)
    rh = run_hash(panel, models, task, mcmc, seed)
    ckdir = Path(checkpoint_dir) if checkpoint_dir else None
    if ckdir:
        ckdir.mkdir(parents=True, exist_ok=True)

    records: dict[int, dict] = {}
    todo = []
    for oi, origin in enumerate(task.origins):
        if ckdir:
            path = _checkpoint_path(ckdir, oi, origin)
            if path.exists():
                rec = json.loads(path.read_text(encoding="utf-8"))
                if rec.get("run_hash") == rh:
                    records[oi] = rec
                    continue
        todo.append(oi)
    if max_origins is not None:
        todo = todo[:max_origins]

    def _store(oi, rec):
        rec["run_hash"] = rh
        records[oi] = rec
        if ckdir:
            _write_json_atomic(_checkpoint_path(ckdir, oi, task.origins[oi]), rec)

    jobs = [(panel, models, task, mcmc, seed, oi) for oi in todo]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            for oi, rec in zip(todo, ex.map(_evaluate_job, jobs)):
                _store(oi, rec)
    else:
        for job in jobs:
            _store(job[-1], evaluate_origin(*job))

    meta = {m.name: m.describe() for m in models}
    report = EvalReport(
        models=names,
        horizons=list(task.horizons),
        variables=list(panel.names),
        benchmark=task.benchmark,
        model_info=meta,
    )
    for oi in sorted(records):
        report.add_origin(records[oi])
    return report


@dataclass
class EvalReport:
    """Per-origin results and their aggregates.

    ``origins`` maps the origin stamp to its record (see
    :func:`evaluate_origin`). Merging is a union of origins, so the reduction
    does not depend on the order in which origins finish.
    """

    models: list
    horizons: list
    variables: list
    benchmark: str = "BVAR"
    model_info: dict = field(default_factory=dict)
    origins: dict = field(default_factory=dict)

    def add_origin(self, record: dict) -> None:
        clean = {k: v for k, v in record.items() if k not in ("timing", "run_hash")}
        o = clean["origin"]
        if o in self.origins and self.origins[o] != clean:
            raise ValueError(f"conflicting results for origin {o}")
        self.origins[o] = clean

    def merge(self, other: "EvalReport") -> "EvalReport":
        if (self.models, self.horizons, self.variables) != (other.models, other.horizons, other.variables):
            raise ValueError("reports describe different exercises")
        out = EvalReport(list(self.models), list(self.horizons), list(self.variables), self.benchmark, dict(self.model_info))
        for rec in list(self.origins.values()) + list(other.origins.values()):
            out.add_origin(rec)
        return out

    def _ordered(self):
        return [self.origins[o] for o in sorted(self.origins, key=quarter_ordinal)]

    def _ok(self, model):
        return [r["models"][model] for r in self._ordered() if r["models"].get(model, {}).get("status") == "ok"]

    def failures(self) -> list[tuple[str, str, str]]:
        out = []
        for r in self._ordered():
            for m in self.models:
                rec = r["models"].get(m)
                if rec is not None and rec["status"] != "ok":
                    out.append((r["origin"], m, rec.get("error", "")))
        return out

    def lpl_table(self) -> dict:
        """Average joint log predictive likelihood, ``{model: {h: value}}``."""
        out = {}
        for m in self.models:
            ok = self._ok(m)
            out[m] = {h: (float(np.mean([r["lpl"][str(h)] for r in ok])) if ok else float("nan")) for h in self.horizons}
        return out

    def counts(self) -> dict:
        return {m: len(self._ok(m)) for m in self.models}

    def rmsfe_table(self) -> dict:
        """``{model: {h: {variable: rmsfe}}}`` in the units of the transformed data."""
        out = {}
        for m in self.models:
            ok = self._ok(m)
            out[m] = {}
            for h in self.horizons:
                if ok:
                    sq = np.array([r["sq_err"][str(h)] for r in ok])
                    vals = np.sqrt(sq.mean(axis=0))
                else:
                    vals = np.full(len(self.variables), np.nan)
                out[m][h] = dict(zip(self.variables, vals.tolist()))
        return out

    def relative_rmsfe(self) -> dict:
        if self.benchmark not in self.models:
            raise ValueError(f"benchmark {self.benchmark!r} is not among the models")
        tab = self.rmsfe_table()
        base = tab[self.benchmark]
        return {
            m: {h: {v: tab[m][h][v] / base[h][v] for v in self.variables} for h in self.horizons}
            for m in self.models
        }

    # -- output -------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "models": self.models,
            "horizons": self.horizons,
            "variables": self.variables,
            "benchmark": self.benchmark,
            "model_info": self.model_info,
            "origins": {o: self.origins[o] for o in sorted(self.origins, key=quarter_ordinal)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        rep = cls(d["models"], d["horizons"], d["variables"], d.get("benchmark", "BVAR"), d.get("model_info", {}))
        for rec in d["origins"].values():
            rep.add_origin(rec)
        return rep

    def to_json(self, path) -> None:
        summary = {"lpl": self.lpl_table(), "counts": self.counts(), "failures": self.failures()}
        if self.benchmark in self.models:
            summary["relative_rmsfe"] = self.relative_rmsfe()
        obj = {"summary": _jsonable(summary), "report": self.to_dict()}
        _write_json_atomic(Path(path), obj)

    @classmethod
    def from_json(cls, path) -> "EvalReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8"))["report"])

    def lpl_rows(self) -> list[list]:
        tab = self.lpl_table()
        counts = self.counts()
        rows = [["model"] + [f"h={h}" for h in self.horizons] + ["origins"]]
        for m in self.models:
            rows.append([m] + [_fmt(tab[m][h]) for h in self.horizons] + [str(counts[m])])
        return rows

    def rmsfe_rows(self, relative: bool = True) -> list[list]:
        tab = self.relative_rmsfe() if relative else self.rmsfe_table()
        rows = [["variable"] + [f"{m} h={h}" for h in self.horizons for m in self.models]]
        for v in self.variables:
            rows.append([v] + [_fmt(tab[m][h][v]) for h in self.horizons for m in self.models])
        return rows

    def rank_rows(self) -> list[list]:
        """LPL by family (rows) and rank x horizon (columns)."""
        ranks = sorted({int(i["rank"]) for i in self.model_info.values() if i["family"] != "BVAR"})
        tab = self.lpl_table()
        fams = []
        for m in self.models:
            info = self.model_info[m]
            if info["family"] != "BVAR" and info["sigma_mode"] == MODEL_SIGMA and info["family"] not in fams:
                fams.append(info["family"])
        rows = [["model"] + [f"R={r} h={h}" for h in self.horizons for r in ranks]]
        for f in fams:
            row = [f]
            for h in self.horizons:
                for r in ranks:
                    hit = [
                        m
                        for m in self.models
                        if self.model_info[m]["family"] == f
                        and int(self.model_info[m]["rank"]) == r
                        and self.model_info[m]["sigma_mode"] == MODEL_SIGMA
                    ]
                    row.append(_fmt(tab[hit[0]][h]) if hit else "")
            rows.append(row)
        return rows

    def to_csv(self, directory) -> list[Path]:
        """Write ``lpl.csv``, ``rmsfe.csv``, ``relative_rmsfe.csv`` and, for a
        rank sweep, ``lpl_by_rank.csv``; returns the paths written."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        out = [_write_rows(d / "lpl.csv", self.lpl_rows()), _write_rows(d / "rmsfe.csv", self.rmsfe_rows(False))]
        if self.benchmark in self.models:
            out.append(_write_rows(d / "relative_rmsfe.csv", self.rmsfe_rows(True)))
        ranks = {i["rank"] for i in self.model_info.values() if i["family"] != "BVAR"}
        if len(ranks) > 1:
            out.append(_write_rows(d / "lpl_by_rank.csv", self.rank_rows()))
        return out


def _fmt(x) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6f}"


def _write_rows(path: Path, rows) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj
