from __future__ import annotations

import json
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from tensorvar.cli import main

ROOT = Path(__file__).resolve().parents[1]
TINY = ROOT / "configs" / "tiny.yaml"


def _write_config(path: Path, cfg: dict) -> Path:
    path.write_text(yaml.safe_dump(cfg, sort_keys=False), encoding="utf-8")
    return path


def _sim_config(out, **over):
    cfg = {
        "seed": 3,
        "output": str(out),
        "workers": 1,
        "data": {"simulate": {"n": 3, "p": 2, "T": 70, "regime": "homoskedastic"}},
        "model": {"family": "TVAR", "p": 2},
        "mcmc": {"burn_in": 20, "draws": 30},
        "forecast": {"origin_range": ["1975Q1", "1975Q4"], "horizons": [1, 4], "paths": 2},
    }
    cfg.update(over)
    return cfg


def test_tiny_config_estimate(tmp_path):
    t0 = time.perf_counter()
    assert main(["estimate", "--config", str(TINY), "--output", str(tmp_path / "run")]) == 0
    assert time.perf_counter() - t0 < 60
    man = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert man["command"] == "estimate" and man["seed"] == 1
    assert len(man["config_hash"]) == 64
    assert {"tensorvar", "source_sha256", "numpy", "python"} <= set(man["versions"])
    assert "draws.csv" in man["outputs"] and "estimate" in man["timings_sec"]
    assert man["config"]["model"]["family"] == "TVAR-CSV"


def test_same_seed_gives_identical_draws(tmp_path):
    for name in ("a", "b"):
        assert main(["estimate", "--config", str(TINY), "--output", str(tmp_path / name)]) == 0
    a = (tmp_path / "a" / "draws.csv").read_bytes()
    assert a == (tmp_path / "b" / "draws.csv").read_bytes()
    assert main(["estimate", "--config", str(TINY), "--seed", "2", "--output", str(tmp_path / "c")]) == 0
    assert a != (tmp_path / "c" / "draws.csv").read_bytes()


def test_forecast_command(tmp_path):
    assert main(["forecast", "--config", str(TINY), "--output", str(tmp_path)]) == 0
    lines = (tmp_path / "forecast.csv").read_text().splitlines()
    assert lines[0] == "horizon,variable,mean,q05,q50,q95"
    assert len(lines) == 1 + 2 * 3
    for row in lines[1:]:
        q05, q50, q95 = map(float, row.split(",")[3:])
        assert q05 <= q50 <= q95


def test_invalid_tcode_names_field(tmp_path, capsys):
    (tmp_path / "data.csv").write_text("date,a\n2000Q1,1\n2000Q2,2\n", encoding="utf-8")
    (tmp_path / "vars.yaml").write_text("variables:\n  - {name: a, tcode: 3}\n", encoding="utf-8")
    cfg = _write_config(tmp_path / "c.yaml", {"data": {"csv": "data.csv", "spec": "vars.yaml"}})
    assert main(["estimate", "--config", str(cfg), "--output", str(tmp_path / "o")]) != 0
    err = capsys.readouterr().err
    assert "variables[0].tcode" in err


def test_schema_errors(tmp_path, capsys):
    cfg = _write_config(tmp_path / "c.yaml", _sim_config(tmp_path, mcmc={"draws": 0}))
    assert main(["estimate", "--config", str(cfg)]) == 2
    assert "mcmc.draws" in capsys.readouterr().err
    cfg = _write_config(tmp_path / "d.yaml", _sim_config(tmp_path, unknown_block={}))
    assert main(["estimate", "--config", str(cfg)]) == 2
    assert "unknown_block" in capsys.readouterr().err
    cfg = _write_config(tmp_path / "e.yaml", _sim_config(tmp_path, model={"family": "VARMA"}))
    assert main(["estimate", "--config", str(cfg)]) == 2
    assert "model.family" in capsys.readouterr().err


def test_single_origin_one_row_per_model(tmp_path):
    fcst = {"origins": ["1975Q2"], "horizons": [1], "paths": 2,
            "models": [{"family": "BVAR", "p": 2}, {"family": "TVAR", "p": 2}, {"family": "TVAR-CSV", "p": 2}]}
    cfg = _write_config(tmp_path / "c.yaml", _sim_config(tmp_path / "o", forecast=fcst))
    assert main(["evaluate", "--config", str(cfg)]) == 0
    rows = (tmp_path / "o" / "lpl.csv").read_text().splitlines()
    assert rows[0] == "model,h=1,origins"
    assert [r.split(",")[0] for r in rows[1:]] == ["BVAR", "TVAR R=1", "TVAR-CSV R=1"]
    assert all(r.endswith(",1") for r in rows[1:])
    rmsfe = (tmp_path / "o" / "rmsfe.csv").read_text().splitlines()
    assert len(rmsfe) == 1 + 3


def test_rank_sweep_table(tmp_path):
    fcst = {"origins": ["1975Q2"], "horizons": [1, 4], "paths": 1, "ranks": [1, 3, 5, 10],
            "models": [{"family": "BVAR", "p": 2}, {"family": "TVAR", "p": 2},
                       {"family": "TVAR-CSV", "p": 2}, {"family": "TVAR-SV", "p": 2}]}
    cfg = _write_config(
        tmp_path / "c.yaml", _sim_config(tmp_path / "o", forecast=fcst, mcmc={"burn_in": 5, "draws": 10})
    )
    assert main(["evaluate", "--config", str(cfg)]) == 0
    rows = [r.split(",") for r in (tmp_path / "o" / "lpl_by_rank.csv").read_text().splitlines()]
    assert rows[0] == ["model"] + [f"R={r} h={h}" for h in (1, 4) for r in (1, 3, 5, 10)]
    assert [r[0] for r in rows[1:]] == ["TVAR", "TVAR-CSV", "TVAR-SV"]
    assert all(np.isfinite(float(v)) for r in rows[1:] for v in r[1:])


def test_bundled_rank_sweep_config_parses():
    from tensorvar.config import load_config

    cfg = load_config(ROOT / "configs" / "rank_sweep.yaml")
    specs = cfg.model_specs()
    assert sorted({s.rank for s in specs if s.family != "BVAR"}) == [1, 3, 5, 10]


def _evaluate_proc(cfg: Path):
    env = dict(os.environ, PYTHONHASHSEED="0")
    return subprocess.Popen(
        [sys.executable, "-m", "tensorvar", "evaluate", "--config", str(cfg)],
        env=env, stdout=subprocess.PIPE, stderr=subprocess.PIPE,
    )


def test_kill_and_resume_matches_uninterrupted(tmp_path):
    fcst = {"origin_range": ["1974Q1", "1976Q4"], "horizons": [1, 4], "paths": 2,
            "models": [{"family": "TVAR", "p": 2}, {"family": "TVAR-CSV", "p": 2}]}
    mcmc = {"burn_in": 50, "draws": 100}
    ref = _write_config(tmp_path / "ref.yaml", _sim_config(tmp_path / "ref", forecast=fcst, mcmc=mcmc))
    run = _write_config(tmp_path / "run.yaml", _sim_config(tmp_path / "run", forecast=fcst, mcmc=mcmc))
    assert main(["evaluate", "--config", str(ref)]) == 0

    proc = _evaluate_proc(run)
    ck = tmp_path / "run" / "checkpoints"
    deadline = time.time() + 120
    while time.time() < deadline and len(list(ck.glob("origin_*.json"))) < 2:
        time.sleep(0.05)
    proc.kill()
    proc.wait()
    done = len(list(ck.glob("origin_*.json")))
    assert 2 <= done < 12, "the run should have been interrupted part way"
    assert not (tmp_path / "run" / "report.json").exists()

    assert main(["evaluate", "--config", str(run)]) == 0
    for name in ("report.json", "lpl.csv", "rmsfe.csv"):
        assert (tmp_path / "run" / name).read_bytes() == (tmp_path / "ref" / name).read_bytes()


def test_simulate_zero_volatility_is_homoskedastic(tmp_path):
    sim = {"n": 2, "p": 1, "T": 4000, "regime": "csv", "sigma2": 0.0, "phi": 0.9}
    cfg = _write_config(tmp_path / "c.yaml", _sim_config(tmp_path / "o", data={"simulate": sim}))
    assert main(["simulate", "--config", str(cfg)]) == 0
    truth = json.loads((tmp_path / "o" / "truth.json").read_text())
    assert np.all(np.array(truth["h"]) == 0.0)
    raw = np.loadtxt(tmp_path / "o" / "panel.csv", delimiter=",", skiprows=1, usecols=(1, 2))
    A = np.array(truth["A"])
    U = raw[1:] - raw[:-1] @ A
    half = U.shape[0] // 2
    c1, c2 = np.cov(U[:half].T), np.cov(U[half:].T)
    # sampling sd of a covariance entry is about sqrt((s_ii s_jj + s_ij^2) / N)
    s = 0.5 * (c1 + c2)
    se = np.sqrt((np.outer(np.diag(s), np.diag(s)) + s**2) / half)
    assert np.all(np.abs(c1 - c2) < 3 * np.sqrt(2) * se)


def test_simulate_is_reproducible(tmp_path):
    cfg = _write_config(tmp_path / "c.yaml", _sim_config(tmp_path / "a"))
    assert main(["simulate", "--config", str(cfg)]) == 0
    assert main(["simulate", "--config", str(cfg), "--output", str(tmp_path / "b")]) == 0
    for name in ("panel.csv", "truth.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["outputs"] == ["panel.csv", "truth.json", "variables.json"]


def test_simulated_panel_feeds_csv_pipeline(tmp_path):
    cfg = _write_config(tmp_path / "c.yaml", _sim_config(tmp_path / "sim"))
    assert main(["simulate", "--config", str(cfg)]) == 0
    est = _sim_config(tmp_path / "est", data={"csv": "sim/panel.csv", "spec": "sim/variables.json"})
    cfg2 = _write_config(tmp_path / "e.yaml", est)
    assert main(["estimate", "--config", str(cfg2)]) == 0
    summary = json.loads((tmp_path / "est" / "posterior_summary.json").read_text())
    assert np.array(summary["posterior_mean_A"]).shape == (6, 3)


@pytest.mark.parametrize("cmd", ["estimate", "forecast", "evaluate", "simulate"])
def test_help(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        main([cmd, "--help"])
    assert exc.value.code == 0
    assert "--config" in capsys.readouterr().out


def test_desk_config_reads_fredqd_layout(tmp_path):
    from tensorvar.cli import load_panel
    from tensorvar.config import load_config
    from tensorvar.data_io import load_variable_specs
    from tensorvar.dates import quarter_range

    specs = {s.name: s for s in load_variable_specs()}
    cfg = load_config(ROOT / "configs" / "desk_smoke.yaml")
    cols = [specs[v].source for v in cfg.data.variables]
    # synthetic file in the FRED-QD layout: two metadata rows, M/D/YYYY dates
    dates = quarter_range("1968Q1", "2024Q4")
    rng = np.random.default_rng(0)
    vals = np.exp(np.cumsum(0.01 * rng.normal(size=(len(dates), len(cols))), axis=0)) + 1.0
    lines = ["sasdate," + ",".join(["EXTRA"] + cols), "factors," + ",".join("1" * (len(cols) + 1)),
             "transform," + ",".join("5" * (len(cols) + 1))]
    for d, row in zip(dates, vals):
        month = 3 * (int(d[-1]) - 1) + 1
        lines.append(f"{month}/1/{d[:4]},7," + ",".join(f"{v:.6f}" for v in row))
    (tmp_path / "fred_qd.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    cfg = cfg.model_copy(update={"data": cfg.data.model_copy(update={"csv": str(tmp_path / "fred_qd.csv")})})
    panel = load_panel(cfg)
    assert panel.names == tuple(cfg.data.variables)
    # CPIAUCSL is second-differenced, so the panel starts two quarters after 1969Q1
    assert panel.dates[0] == "1969Q3" and panel.dates[-1] == "2024Q1"
    cfg.task().check(panel)
