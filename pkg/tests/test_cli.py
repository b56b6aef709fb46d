import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from ceqmimo.cli import main
from ceqmimo.experiment import ConfigError, expand_tasks, parse_config, run_experiment
from ceqmimo.metrics import RESULT_FIELDS, read_results_csv

MINIMAL = {
    "seed": 3,
    "trials": 2,
    "sweep": {"algorithm": ["zf_opt"], "b": [3], "K": [2], "N_BS": [8], "N_SC": [8], "P_bs_dbm": [40]},
}


def _write(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_minimal_run(tmp_path, capsys):
    cfg = _write(tmp_path, MINIMAL)
    assert main(["run", str(cfg), "-o", str(tmp_path / "out")]) == 0
    assert "wrote 2 rows" in capsys.readouterr().out
    rows = read_results_csv(tmp_path / "out" / "results.csv")
    assert len(rows) == 2
    assert list(rows[0])[: len(RESULT_FIELDS)] == RESULT_FIELDS
    for r in rows:
        assert r["status"] == "ok" and float(r["sum_rate"]) > 0
        assert r["config_hash"] and r["seed"] and r["version"] == "0.1.0"
        assert float(r["sum_rate"]) == pytest.approx(float(r["user_rate_0"]) + float(r["user_rate_1"]), rel=1e-10)
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["seed"] == 3 and manifest["n_rows"] == 2
    assert {"ceqmimo", "numpy", "scipy", "python"} <= set(manifest["versions"])
    assert (tmp_path / "out" / "plot_results.py").exists()


def test_rerun_is_byte_identical(tmp_path):
    cfg = _write(tmp_path, dict(MINIMAL, sweep=dict(MINIMAL["sweep"], algorithm=["maxmin_sc", "zf_equal"])))
    main(["run", str(cfg), "-o", str(tmp_path / "a")])
    main(["run", str(cfg), "-o", str(tmp_path / "b"), "-w", "2"])
    a = (tmp_path / "a" / "results.csv").read_bytes()
    assert a == (tmp_path / "b" / "results.csv").read_bytes()
    main(["run", str(cfg), "-o", str(tmp_path / "c"), "--seed", "4"])
    assert a != (tmp_path / "c" / "results.csv").read_bytes()


def test_algorithms_share_channel_draws():
    cfg = parse_config(dict(MINIMAL, sweep=dict(MINIMAL["sweep"], algorithm=["zf_opt", "maxmin_sc"], b=[2, 3])))
    tasks = expand_tasks(cfg)
    seeds = {}
    for t in tasks:
        seeds.setdefault(t["realization_id"], set()).add(t["seed"])
    assert all(len(s) == 1 for s in seeds.values())
    assert len(seeds) == 2


def test_schema_errors_name_fields(tmp_path, capsys):
    bad = {
        "trials": 0,
        "sweep": {"algorithm": ["magic"], "b": [1], "K": [2], "N_BS": [8], "N_SC": [8], "P_bs_dbm": [40]},
    }
    assert main(["run", str(_write(tmp_path, bad)), "-o", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "trials:" in err and "sweep/algorithm/0:" in err and "sweep/b/0:" in err
    with pytest.raises(ConfigError, match="sweep"):
        parse_config({"seed": 1})
    with pytest.raises(ConfigError, match="<root>"):
        parse_config("- just a list")


def test_infeasible_rows_do_not_stop_the_run(tmp_path):
    cfg = dict(MINIMAL, trials=1, sweep=dict(MINIMAL["sweep"], K=[2, 10], algorithm=["zf_opt"]))
    manifest = run_experiment(cfg, tmp_path)
    rows = read_results_csv(tmp_path / "results.csv")
    status = {r["K"]: r["status"] for r in rows}
    assert status == {"2": "ok", "10": "infeasible"}
    assert manifest["n_infeasible"] == 1
    bad = [r for r in rows if r["status"] == "infeasible"][0]
    assert bad["sum_rate"] == "" and bad["detail"].startswith("ValueError")


def test_dbm_conversion_and_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg["noise_power_dbm"] == 30.0 and cfg["sweep"]["est_error"] == [0.0]
    assert cfg["solver"]["n_dummy"] == 0 and cfg["channel"]["l_taps"] == 8


def test_validate_passes(capsys):
    assert main(["validate"]) == 0
    out = capsys.readouterr().out
    lines = [l for l in out.splitlines() if l.startswith(("PASS", "FAIL"))]
    assert lines and all("measured=" in l and "allowed=" in l for l in lines)


def test_validate_detects_phi_sign_error(capsys):
    assert main(["validate", "--inject-phi-sign-error"]) == 1
    out = capsys.readouterr().out
    assert any(l.startswith("FAIL") and "duality" in l for l in out.splitlines())


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "ceqmimo.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "0.1.0" in res.stdout


@pytest.mark.slow
def test_full_algorithm_sweep(tmp_path):
    algos = ["maxmin_joint", "maxmin_sc", "maxmin_sc_equal", "zf_opt", "zf_equal", "unq_zf", "unq_rzf"]
    cfg = {
        "seed": 1,
        "trials": 1,
        "target_db": 3.0,
        "sweep": {"algorithm": algos, "b": [2, 3, "inf"], "K": [4], "N_BS": [32], "N_SC": [32], "P_bs_dbm": [40]},
    }
    run_experiment(cfg, tmp_path)
    rows = read_results_csv(tmp_path / "results.csv")
    assert len(rows) == len(algos) * 3
    assert {r["algorithm"] for r in rows} == set(algos)
    assert all(r["status"] == "ok" for r in rows)
    pytest.importorskip("pandas")
    pytest.importorskip("matplotlib")
    subprocess.run([sys.executable, str(tmp_path / "plot_results.py")], check=True)
    assert (tmp_path / "sum_rate.png").exists() and (tmp_path / "min_rate.png").exists()
