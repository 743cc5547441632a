"""Command line entry point: ``tensorvar {estimate,forecast,evaluate,simulate} --config FILE``."""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import time
from importlib import metadata, resources
from pathlib import Path

import numpy as np
import pydantic
import scipy

from . import volatility as vol
from .config import RunConfig, load_config
from .data_io import load_csv, load_variable_specs, standardize, transform_panel
from .errors import TensorVarError
from .forecast import fit_model, predictive_summary, run_recursive_eval, simulate_paths
from .simulation import SimulationResult, random_factors, simulate_tvar
from .var_data import SeriesPanel, build_dataset

log = logging.getLogger("tensorvar")


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _source_digest() -> str:
    h = hashlib.sha256()
    pkg = resources.files("tensorvar")
    for name in sorted(p.name for p in pkg.iterdir() if p.name.endswith(".py")):
        h.update(name.encode())
        h.update((pkg / name).read_bytes())
    return h.hexdigest()


def write_manifest(out: Path, cfg: RunConfig, command: str, timings: dict, outputs, extra=None) -> Path:
    manifest = {
        "command": command,
        "seed": cfg.seed,
        "config": cfg.canonical(),
        "config_hash": cfg.digest(),
        "versions": {
            "tensorvar": _version(),
            "source_sha256": _source_digest(),
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pydantic": pydantic.VERSION,
        },
        "timings_sec": {k: round(v, 3) for k, v in timings.items()},
        "outputs": sorted(str(Path(p).relative_to(out)) for p in outputs),
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _simulate(cfg: RunConfig) -> SimulationResult:
    s = cfg.data.simulate
    rng = np.random.default_rng([cfg.seed, 7])
    factors = random_factors(s.n, s.p, s.rank, rng, radius=s.radius)
    omega = s.omega_scale * np.eye(s.n)
    kw = {"omega": omega}
    if s.regime == vol.COMMON_SV:
        kw.update(phi=s.phi, sigma2=s.sigma2)
    elif s.regime == vol.CHOLESKY_SV:
        b0 = np.eye(s.n)
        b0[np.tril_indices(s.n, -1)] = s.b0_lower
        kw = {"phi": s.phi, "sigma2": s.sigma2, "mu": s.mu, "b0": b0}
    return simulate_tvar(factors, s.T, s.regime, rng, burn=s.burn, start=s.start, **kw)


def load_panel(cfg: RunConfig) -> SeriesPanel:
    """Transformed (not yet standardized) panel described by the data block."""
    if cfg.data.simulate is not None:
        return _simulate(cfg).panel
    specs = load_variable_specs(cfg.resolve(cfg.data.spec))
    if cfg.data.variables:
        by = {s.name: s for s in specs}
        missing = [v for v in cfg.data.variables if v not in by]
        if missing:
            raise TensorVarError(f"data.variables: {missing} not in the variable spec")
        specs = [by[v] for v in cfg.data.variables]
    raw = load_csv(cfg.resolve(cfg.data.csv), specs, cfg.data.date_range)
    return transform_panel(raw, specs)


def _write_panel(path: Path, panel: SeriesPanel) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *panel.names])
        for d, row in zip(panel.dates, panel.values):
            w.writerow([d, *[repr(float(v)) for v in row]])


def _estimate(cfg: RunConfig, out: Path, timings: dict):
    t0 = time.perf_counter()
    panel = load_panel(cfg)
    timings["data"] = time.perf_counter() - t0
    zpanel, st = standardize(panel)
    spec = cfg.model.to_spec()
    ds = build_dataset(zpanel, spec.p, spec.intercept)
    t0 = time.perf_counter()
    draws = fit_model(spec, ds, cfg.mcmc.to_config(cfg.seed), np.random.default_rng([cfg.seed, 0]))
    timings["estimate"] = time.perf_counter() - t0
    files = [out / "draws.csv", out / "standardization.json", out / "posterior_summary.json"]
    draws.to_csv(files[0])
    files[1].write_text(
        json.dumps({"names": list(panel.names), **st.to_dict()}, indent=1) + "\n", encoding="utf-8"
    )
    summary = {
        "model": spec.name,
        "n_draws": len(draws),
        "sample": [ds.dates[0], ds.dates[-1]] if ds.dates else None,
        "posterior_mean_A": draws.mean_coef().tolist(),
        "acceptance": draws.diagnostics.get("acceptance", {}),
    }
    files[2].write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    if draws.diagnostics.get("timing"):
        timings.update({f"block_{k}": v for k, v in draws.diagnostics["timing"].items()})
    return panel, st, ds, draws, files


def cmd_estimate(cfg: RunConfig) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict = {}
    *_, files = _estimate(cfg, out, timings)
    return write_manifest(out, cfg, "estimate", timings, files)


def cmd_forecast(cfg: RunConfig) -> Path:
    """Estimate on the full sample and forecast ``forecast.horizons`` quarters past its end."""
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict = {}
    panel, st, ds, draws, files = _estimate(cfg, out, timings)
    hs = sorted(set(cfg.forecast.horizons))
    t0 = time.perf_counter()
    rng = np.random.default_rng([cfg.seed, 1])
    mode = cfg.model.sigma_mode
    summ = predictive_summary(draws, ds, hs, rng, cfg.forecast.paths, None, mode)
    sims = simulate_paths(draws, ds, hs[-1], rng, cfg.forecast.paths, mode)
    timings["forecast"] = time.perf_counter() - t0
    path = out / "forecast.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["horizon", "variable", "mean", "q05", "q50", "q95"])
        for h in hs:
            mean = st.inverse(summ.point[h])
            q = st.inverse(np.quantile(sims[:, h - 1], [0.05, 0.5, 0.95], axis=0))
            for j, nm in enumerate(panel.names):
                w.writerow([h, nm, *(f"{v:.10g}" for v in (mean[j], q[0, j], q[1, j], q[2, j]))])
    files.append(path)
    return write_manifest(out, cfg, "forecast", timings, files)


def cmd_evaluate(cfg: RunConfig) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict = {}
    t0 = time.perf_counter()
    panel = load_panel(cfg)
    timings["data"] = time.perf_counter() - t0
    task = cfg.task()
    models = cfg.model_specs()
    workers = cfg.workers or os.cpu_count() or 1
    t0 = time.perf_counter()
    report = run_recursive_eval(
        panel,
        models,
        task,
        cfg.mcmc.to_config(cfg.seed),
        seed=cfg.seed,
        checkpoint_dir=out / "checkpoints",
        workers=workers,
    )
    timings["evaluate"] = time.perf_counter() - t0
    files = report.to_csv(out)
    report.to_json(out / "report.json")
    files.append(out / "report.json")
    fails = report.failures()
    for origin, model, err in fails:
        log.warning("origin %s, model %s failed: %s", origin, model, err)
    return write_manifest(out, cfg, "evaluate", timings, files, {"failures": len(fails)})


def cmd_simulate(cfg: RunConfig) -> Path:
    if cfg.data.simulate is None:
        raise TensorVarError("simulate needs a data.simulate block")
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    res = _simulate(cfg)
    files = [out / "panel.csv", out / "truth.json", out / "variables.json"]
    _write_panel(files[0], res.panel)
    files[1].write_text(json.dumps(res.truth(), indent=1) + "\n", encoding="utf-8")
    spec = {"variables": [{"name": nm, "tcode": 1} for nm in res.panel.names]}
    files[2].write_text(json.dumps(spec, indent=1) + "\n", encoding="utf-8")
    return write_manifest(out, cfg, "simulate", {"simulate": time.perf_counter() - t0}, files)


COMMANDS = {
    "estimate": cmd_estimate,
    "forecast": cmd_forecast,
    "evaluate": cmd_evaluate,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tensorvar", description="Bayesian tensor VAR toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or name).splitlines()[0])
        p.add_argument("--config", required=True, help="YAML/JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--output", default=None, help="override the output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        cfg = load_config(args.config, seed=args.seed, output=args.output)
        manifest = COMMANDS[args.command](cfg)
    except (TensorVarError, ValueError, OSError) as exc:
        print(f"tensorvar {args.command}: error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
