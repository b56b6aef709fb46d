"""Configuration-driven sweeps: YAML config -> results.csv + manifest.json + plot script.

Every (channel point, trial) pair gets its own seed derived from the master
seed, and the channel seed ignores the algorithm, resolution and power axes,
so all algorithms are compared on identical channel draws.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import scipy
import yaml

from . import __version__, baselines
from .ceq import INFINITE, CeqConfig
from .channel import ChannelConfig, generate
from .errors import ConvergenceError, DegeneratePrecoderError, InfeasibleGainError
from .metrics import min_rate, sum_rate, user_rates, write_results_csv
from .solver import DitherConfig, SolverConfig, SolverVariant, run
from .sqinr import PerAntennaMode
from .system import OfdmSystem, centered_active
from .validation import db_to_linear, dbm_to_watt

ALGORITHMS = ("maxmin_joint", "maxmin_sc", "maxmin_sc_equal", "zf_opt", "zf_equal", "unq_zf", "unq_rzf")
CHANNEL_AXES = ("K", "N_BS", "N_SC", "est_error")

DEFAULTS = {
    "seed": 0,
    "trials": 1,
    "workers": 1,
    "noise_power_dbm": 30.0,
    "target_db": 3.0,
    "n_active": None,
    "evaluate": "exact",
    "channel": {"l_taps": 8, "pdp_decay": 0.5, "user_correlation": 0.0},
    "solver": {"epsilon": 1e-4, "max_outer_iters": 50, "n_dummy": 0, "dummy_grid_db": [-20, -15, -10, -5, 0]},
}


class ConfigError(ValueError):
    """Schema violation; the message lists every offending field path."""


def load_schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("config_schema.json").read_text())


def _merge(defaults, cfg):
    out = dict(defaults)
    for key, value in cfg.items():
        if isinstance(value, dict) and isinstance(defaults.get(key), dict):
            out[key] = _merge(defaults[key], value)
        else:
            out[key] = value
    return out


def parse_config(source) -> dict:
    """Load (path, YAML text or dict), validate against the schema and fill defaults."""
    if isinstance(source, dict):
        raw = source
    else:
        text = Path(source).read_text() if Path(str(source)).exists() else str(source)
        raw = yaml.safe_load(text)
    if not isinstance(raw, dict):
        raise ConfigError("<root>: configuration must be a mapping")
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for e in errors:
            path = "/".join(str(p) for p in e.absolute_path) or "<root>"
            lines.append(f"{path}: {e.message}")
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(lines))
    cfg = _merge(DEFAULTS, raw)
    cfg["sweep"] = dict(cfg["sweep"])
    cfg["sweep"].setdefault("est_error", [0.0])
    return cfg


def config_hash(cfg: dict) -> str:
    body = {k: v for k, v in cfg.items() if k != "workers"}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]


def _resolution(b):
    return INFINITE if b == "inf" else int(b)


def expand_tasks(cfg: dict) -> list[dict]:
    """Cartesian grid in a fixed order; each task is one (point, trial) row."""
    sw = cfg["sweep"]
    chan_points = list(itertools.product(*(sw[a] for a in CHANNEL_AXES)))
    tasks = []
    chash = config_hash(cfg)
    for algorithm, b, p_dbm in itertools.product(sw["algorithm"], sw["b"], sw["P_bs_dbm"]):
        for c_idx, (K, n_bs, n_sc, e) in enumerate(chan_points):
            for trial in range(cfg["trials"]):
                seq = np.random.SeedSequence(cfg["seed"], spawn_key=(c_idx, trial))
                tasks.append(
                    {
                        "algorithm": algorithm,
                        "b": b,
                        "K": K,
                        "N_BS": n_bs,
                        "N_SC": n_sc,
                        "P_bs_dbm": p_dbm,
                        "est_error": e,
                        "trial": trial,
                        "realization_id": c_idx * cfg["trials"] + trial,
                        "seed": int(seq.generate_state(1, dtype=np.uint64)[0]),
                        "config_hash": chash,
                        "version": __version__,
                    }
                )
    return tasks


def _solve(algorithm, design, truth, targets, P_bs, cfg):
    sol_cfg = cfg["solver"]
    dither = None
    if sol_cfg["n_dummy"] > 0:
        dither = DitherConfig(sol_cfg["n_dummy"], tuple(sol_cfg["dummy_grid_db"]))
    common = {"epsilon": sol_cfg["epsilon"], "max_outer_iters": sol_cfg["max_outer_iters"], "dither": dither}
    if algorithm == "maxmin_joint":
        return run(design, targets, P_bs, SolverConfig(variant=SolverVariant.JOINT, **common), eval_system=truth)[0]
    if algorithm == "maxmin_sc":
        return run(design, targets, P_bs, SolverConfig(variant=SolverVariant.PER_SUBCARRIER, **common), eval_system=truth)[0]
    if algorithm == "maxmin_sc_equal":
        scfg = SolverConfig(variant=SolverVariant.PER_SUBCARRIER, per_antenna_mode=PerAntennaMode.EQUAL, **common)
        return run(design, targets, P_bs, scfg, eval_system=truth)[0]
    if algorithm == "zf_opt":
        return baselines.zf_opt_power(design, targets, P_bs, eval_system=truth)
    if algorithm == "zf_equal":
        return baselines.zf_equal_power(design, targets, P_bs, eval_system=truth)
    if algorithm == "unq_zf":
        return baselines.unquantized(design, targets, P_bs, "zf", eval_system=truth)
    if algorithm == "unq_rzf":
        return baselines.unquantized(design, targets, P_bs, "rzf", eval_system=truth)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def run_task(task: dict, cfg: dict) -> dict:
    """Draw the task's channel, solve and evaluate; failures become status rows."""
    row = dict(task)
    ch_cfg = cfg["channel"]
    try:
        chan = generate(
            ChannelConfig(
                n_bs=task["N_BS"],
                k_users=task["K"],
                n_sc=task["N_SC"],
                l_taps=min(ch_cfg["l_taps"], task["N_SC"]),
                pdp_decay=ch_cfg["pdp_decay"],
                est_error=task["est_error"],
                user_correlation=ch_cfg["user_correlation"],
            ),
            rng=np.random.default_rng(task["seed"]),
        )
        ceq = CeqConfig.from_bits(_resolution(task["b"]))
        sigma2 = float(dbm_to_watt(cfg["noise_power_dbm"]))
        active = centered_active(task["N_SC"], cfg["n_active"])
        design = OfdmSystem.from_channel(chan.freq_est, sigma2, ceq, active)
        truth = OfdmSystem.from_channel(chan.freq, sigma2, ceq, active)
        targets = float(db_to_linear(cfg["target_db"]))
        sol = _solve(task["algorithm"], design, truth, targets, float(dbm_to_watt(task["P_bs_dbm"])), cfg)
        sq = sol.sqinr_exact if cfg["evaluate"] == "exact" else sol.sqinr_approx
        row.update(
            status="ok",
            sum_rate=sum_rate(sq),
            min_rate=min_rate(sq),
            user_rates=list(user_rates(sq)),
            balance_ratio=float(sol.ratio),
            detail="",
        )
    except (np.linalg.LinAlgError, InfeasibleGainError, DegeneratePrecoderError, ConvergenceError, ValueError) as exc:
        row.update(status="infeasible", sum_rate=math.nan, min_rate=math.nan, user_rates=[], balance_ratio=math.nan)
        row["detail"] = f"{type(exc).__name__}: {exc}"
    return row


def _task_worker(args):
    return run_task(*args)


PLOT_SCRIPT = '''#!/usr/bin/env python3
"""Plot ergodic rates from results.csv (needs pandas and matplotlib)."""
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

here = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent
df = pd.read_csv(here / "results.csv")
df = df[df["status"] == "ok"]
axes = [c for c in ("P_bs_dbm", "K", "N_BS", "N_SC", "b", "est_error") if df[c].nunique() > 1]
x = axes[0] if axes else "P_bs_dbm"
others = [c for c in axes[1:]]
for metric in ("sum_rate", "min_rate"):
    fig, ax = plt.subplots()
    keys = ["algorithm"] + others
    for key, grp in df.groupby(keys):
        key = key if isinstance(key, tuple) else (key,)
        curve = grp.groupby(x)[metric].mean()
        ax.plot(curve.index.astype(str), curve.values, marker="o", label=", ".join(map(str, key)))
    ax.set_xlabel(x)
    ax.set_ylabel(f"ergodic {metric.replace('_', ' ')} [bit/s/Hz]")
    ax.legend(fontsize="small")
    fig.savefig(here / f"{metric}.png", dpi=150, bbox_inches="tight")
'''


def run_experiment(config, out_dir, workers=None, seed=None) -> dict:
    """Execute the sweep; returns the manifest written next to ``results.csv``."""
    cfg = parse_config(config)
    if seed is not None:
        cfg["seed"] = int(seed)
    if workers is not None:
        cfg["workers"] = int(workers)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = expand_tasks(cfg)
    if cfg["workers"] > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg["workers"]) as pool:
            rows = list(pool.map(_task_worker, [(t, cfg) for t in tasks], chunksize=max(1, len(tasks) // (4 * cfg["workers"]))))
    else:
        rows = [run_task(t, cfg) for t in tasks]
    max_k = max(cfg["sweep"]["K"])
    extra = ("balance_ratio", "detail", "config_hash", "seed", "version")
    write_results_csv(out / "results.csv", rows, max_k, extra_fields=extra)
    (out / "plot_results.py").write_text(PLOT_SCRIPT)
    manifest = {
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "n_rows": len(rows),
        "n_infeasible": sum(r["status"] != "ok" for r in rows),
        "versions": {
            "ceqmimo": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
