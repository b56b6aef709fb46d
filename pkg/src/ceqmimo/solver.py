"""Alternating max-min solvers: joint over all subcarriers, or one subcarrier at a time.

Each outer iteration fixes the uplink powers, replaces every beamformer by
the dominant generalized eigenvector of its (signal, interference) pair, and
then re-balances the uplink powers through the Perron root of the extended
UL coupling matrix.  The sequence of Perron roots is nonincreasing.  Once it
settles, the downlink powers follow from the DL extended matrix on the same
beamformers.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import null_space

from .ceq import NoiseModel
from .power import EIG_TOL, LinkDirection, solve_power
from .sqinr import (
    PerAntennaMode,
    Variant,
    coupling_from_arrays,
    dl_sqinr_approx,
    dl_sqinr_eq4,
    leak_scale,
    per_antenna_power,
)
from .system import BeamformingSolution, OfdmSystem, PrecodingState, total_budget
from .validation import check_targets, db_to_linear


class SolverVariant(str, Enum):
    JOINT = "joint"
    PER_SUBCARRIER = "per_subcarrier"


@dataclass(frozen=True)
class DitherConfig:
    """Dummy-user dithering: ``n_dummy`` null-space users per subcarrier.

    ``gamma_dummy_grid`` holds the candidate common dummy targets in dB,
    strictly increasing; ``-inf`` stands for "no dummy users".
    """

    n_dummy: int
    gamma_dummy_grid: tuple = (-20.0, -15.0, -10.0, -5.0, 0.0)
    include_baseline: bool = True

    def __post_init__(self):
        if self.n_dummy < 0:
            raise ValueError("n_dummy must be >= 0")
        grid = np.asarray(self.gamma_dummy_grid, dtype=float)
        if grid.ndim != 1 or grid.size == 0:
            raise ValueError("gamma_dummy_grid must be a non-empty 1-D sequence")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("gamma_dummy_grid must be strictly increasing")
        object.__setattr__(self, "gamma_dummy_grid", tuple(float(g) for g in grid))


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 1e-4
    max_outer_iters: int = 50
    variant: SolverVariant = SolverVariant.JOINT
    dither: DitherConfig | None = None
    per_antenna_mode: PerAntennaMode = PerAntennaMode.THEOREM1
    eig_method: str = "power"
    compute_exact: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if self.eig_method == "power" and EIG_TOL * 10 > self.epsilon:
            raise ValueError("epsilon must be at least 10x looser than the eigen-solver tolerance")
        object.__setattr__(self, "variant", SolverVariant(self.variant))
        object.__setattr__(self, "per_antenna_mode", PerAntennaMode(self.per_antenna_mode))


@dataclass
class SolverTrace:
    lambda_history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    final_R_opt: float = math.nan
    subcarrier_traces: list = field(default_factory=list)

    def rows(self):
        if self.subcarrier_traces:
            for n, tr in enumerate(self.subcarrier_traces):
                for i, lam in enumerate(tr.lambda_history, start=1):
                    yield {"subcarrier": n, "iteration": i, "lambda_max": lam, "min_ratio": 1.0 / lam}
        else:
            for i, lam in enumerate(self.lambda_history, start=1):
                yield {"subcarrier": "all", "iteration": i, "lambda_max": lam, "min_ratio": 1.0 / lam}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["subcarrier", "iteration", "lambda_max", "min_ratio"])
            w.writeheader()
            for row in self.rows():
                w.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in row.items()})


def _beamformers(H, p, noise_term, loading):
    """Closed-form generalized eigenvectors for all users of the given subcarriers.

    ``loading`` is the ``[n, n_bs]`` diagonal quantization term of ``S``.
    """
    n_sc, n_bs, _ = H.shape
    R = np.einsum("nmi,ni,nli->nml", H, p, H.conj())
    base = R + noise_term * np.eye(n_bs)
    idx = np.arange(n_bs)
    base[:, idx, idx] += loading
    own = p[:, :, None, None] * np.einsum("nmk,nlk->nkml", H, H.conj())
    S = base[:, None] - own
    x = np.linalg.solve(S, H.transpose(0, 2, 1)[..., None])[..., 0]
    t = np.conj(x)
    t /= np.linalg.norm(t, axis=-1, keepdims=True)
    return t.transpose(0, 2, 1)


def _loading(H, p, leak, joint: bool):
    per_sc = np.einsum("nmi,ni->nm", np.abs(H) ** 2, p)
    if joint:
        per_sc = np.broadcast_to(per_sc.sum(axis=0), per_sc.shape)
    return leak * per_sc


def interference_matrix(system: OfdmSystem, p, k: int, n: int, variant=SolverVariant.JOINT) -> np.ndarray:
    """``S_{k,n}(p)`` such that the UL SQINR of ``u = conj(t)`` is ``p |u^H h|^2 / u^H S u``."""
    variant = SolverVariant(variant)
    p = np.asarray(p, dtype=float).reshape(system.grid)
    H = system.H
    v = Variant.FULL if variant is SolverVariant.JOINT else Variant.PER_SUBCARRIER
    load = _loading(H, p, leak_scale(system, v), variant is SolverVariant.JOINT)[n]
    Hn, pn = H[n], p[n]
    S = (Hn * pn) @ Hn.conj().T - pn[k] * np.outer(Hn[:, k], Hn[:, k].conj())
    return S + np.diag(load) + system.noise_power / system.ceq.zeta_b**2 * np.eye(system.n_bs)


def beamformer_step(system: OfdmSystem, p, variant=SolverVariant.JOINT, k=None, n=None) -> np.ndarray:
    """Unit-norm beamformers maximizing every UL SQINR at fixed powers ``p``.

    The numerator matrix has rank one, so the dominant generalized
    eigenvector is ``S^{-1} h`` (up to scale); the transpose convention
    ``t^T h`` makes ``t`` its conjugate.  Returns the full ``T`` tensor, or the
    single column ``t_{k,n}`` when both indices are given.
    """
    variant = SolverVariant(variant)
    p = np.asarray(p, dtype=float).reshape(system.grid)
    if np.any(p < 0):
        raise ValueError("powers must be nonnegative")
    v = Variant.FULL if variant is SolverVariant.JOINT else Variant.PER_SUBCARRIER
    load = _loading(system.H, p, leak_scale(system, v), variant is SolverVariant.JOINT)
    T = _beamformers(system.H, p, system.noise_power / system.ceq.zeta_b**2, load)
    if k is None and n is None:
        return T
    return T[n, :, k]


def _alternate(H, targets, sigma2, ceq, leak, budget, joint, cfg: SolverConfig):
    """Outer loop on the subcarriers in ``H``; returns best (T, p, lambda) and its trace."""
    noise_term = sigma2 / ceq.zeta_b**2
    p = np.zeros(targets.shape)
    trace = SolverTrace()
    best = None
    lam_prev = math.inf
    v0 = None
    for it in range(1, cfg.max_outer_iters + 1):
        T = _beamformers(H, p, noise_term, _loading(H, p, leak, joint))
        coupling = coupling_from_arrays(H, T, targets, sigma2, ceq, leak)
        sol = solve_power(coupling, LinkDirection.UL, budget, method=cfg.eig_method, v0=v0)
        lam = sol.eigenvalue
        v0 = np.append(sol.powers.ravel(), 1.0)
        trace.lambda_history.append(lam)
        trace.iterations = it
        if best is None or lam < best[2]:
            best = (T, sol.powers, lam)
        p = sol.powers
        if lam_prev - lam < cfg.epsilon:
            trace.converged = True
            break
        lam_prev = lam
    T, p, lam = best
    coupling = coupling_from_arrays(H, T, targets, sigma2, ceq, leak)
    dl = solve_power(coupling, LinkDirection.DL, budget, method=cfg.eig_method)
    trace.final_R_opt = dl.ratio
    return T, p, dl.powers, dl.ratio, trace


def _solve_undithered(system: OfdmSystem, targets, P_bs, cfg: SolverConfig):
    budget = total_budget(system, P_bs)
    ceq, s2 = system.ceq, system.noise_power
    if cfg.variant is SolverVariant.JOINT:
        T, p, q, ratio, trace = _alternate(
            system.H, targets, s2, ceq, leak_scale(system, Variant.FULL), budget, True, cfg
        )
    else:
        leak = leak_scale(system, Variant.PER_SUBCARRIER)
        per_budget = budget / system.n_active
        outs = [
            _alternate(system.H[n : n + 1], targets[n : n + 1], s2, ceq, leak, per_budget, False, cfg)
            for n in range(system.n_active)
        ]
        T = np.concatenate([o[0] for o in outs])
        p = np.concatenate([o[1] for o in outs])
        q = np.concatenate([o[2] for o in outs])
        ratio = min(o[3] for o in outs)
        subs = [o[4] for o in outs]
        width = max(len(s.lambda_history) for s in subs)
        padded = np.array([s.lambda_history + [s.lambda_history[-1]] * (width - len(s.lambda_history)) for s in subs])
        trace = SolverTrace(
            lambda_history=list(padded.max(axis=0)),
            iterations=width,
            converged=all(s.converged for s in subs),
            final_R_opt=ratio,
            subcarrier_traces=subs,
        )
    return T, p, q, ratio, trace


def _finalize(system_design, system_eval, T, p, q, targets, ratio, trace, cfg, P_bs, info=None):
    state = PrecodingState(T=T, q=q, p=p, targets=targets)
    if cfg.per_antenna_mode is PerAntennaMode.THEOREM1:
        q_pa = per_antenna_power(state, system_design, PerAntennaMode.THEOREM1)
        approx = dl_sqinr_approx(state, system_eval)
    else:
        q_pa = per_antenna_power(state, system_design, PerAntennaMode.EQUAL, P_bs)
        approx = dl_sqinr_eq4(state, system_eval, NoiseModel.SMALL_ANGLE, q_pa=q_pa)
    state.q_pa = q_pa
    exact = dl_sqinr_eq4(state, system_eval, NoiseModel.EXACT, q_pa=q_pa) if cfg.compute_exact else None
    return BeamformingSolution(
        state=state,
        ratio=float(ratio),
        sqinr_approx=approx,
        sqinr_exact=exact,
        per_antenna=cfg.per_antenna_mode.value,
        trace=trace,
        info=dict(info or {}),
    )


def run(system: OfdmSystem, targets, P_bs: float, cfg: SolverConfig | None = None, eval_system=None):
    """Solve the max-min problem on ``system`` (the transmitter's channel).

    ``eval_system`` is the channel on which the reported SQINRs are
    evaluated (defaults to ``system``; pass the true channel when ``system``
    holds an estimate).  With ``cfg.dither`` set this delegates to
    :func:`dither_line_search`.  Returns ``(solution, trace)``.
    """
    cfg = cfg or SolverConfig()
    if not P_bs > 0:
        raise ValueError("P_bs must be positive")
    if cfg.dither is not None:
        sol, _ = dither_line_search(system, targets, P_bs, cfg, eval_system=eval_system)
        return sol, sol.trace
    targets = check_targets(targets, system.grid)
    T, p, q, ratio, trace = _solve_undithered(system, targets, P_bs, cfg)
    sol = _finalize(system, eval_system or system, T, p, q, targets, ratio, trace, cfg, P_bs)
    return sol, trace


def add_dummy_users(system: OfdmSystem, n_dummy: int) -> OfdmSystem:
    """Append ``n_dummy`` null-space users per subcarrier.

    Dummy channels are orthonormal null-space directions of ``H_n^H`` scaled
    to the mean true-user channel norm on that subcarrier.
    """
    if n_dummy < 0:
        raise ValueError("n_dummy must be >= 0")
    if n_dummy == 0:
        return system
    if n_dummy > system.n_bs - system.k_users:
        raise ValueError(f"at most n_bs - K = {system.n_bs - system.k_users} dummy users fit in the null space")
    cols = []
    for Hn in system.H:
        basis = null_space(Hn.conj().T)[:, :n_dummy]
        if basis.shape[1] < n_dummy:
            raise ValueError("channel null space is smaller than n_dummy")
        cols.append(basis * np.linalg.norm(Hn, axis=0).mean())
    return system.with_channel(np.concatenate([system.H, np.stack(cols)], axis=2))


def dither_line_search(system: OfdmSystem, targets, P_bs: float, cfg: SolverConfig, eval_system=None):
    """Line search over the common dummy target; keeps the best minimum exact true-user SQINR.

    The search walks the grid in increasing order and stops once the
    objective drops.  Returns ``(solution, chosen_target_db)``.
    """
    if cfg.dither is None:
        raise ValueError("cfg.dither is not set")
    eval_system = eval_system or system
    base_cfg = SolverConfig(
        epsilon=cfg.epsilon,
        max_outer_iters=cfg.max_outer_iters,
        variant=cfg.variant,
        per_antenna_mode=cfg.per_antenna_mode,
        eig_method=cfg.eig_method,
        compute_exact=True,
    )
    K = system.k_users
    targets = check_targets(targets, system.grid)
    grid = list(cfg.dither.gamma_dummy_grid)
    if cfg.dither.include_baseline and grid[0] != -math.inf:
        grid = [-math.inf] + grid
    aug = add_dummy_users(system, cfg.dither.n_dummy)

    best, best_val, best_db, prev = None, -math.inf, None, -math.inf
    evaluated = []
    for g_db in grid:
        if g_db == -math.inf or cfg.dither.n_dummy == 0:
            sol, _ = run(system, targets, P_bs, base_cfg, eval_system=eval_system)
        else:
            aug_targets = np.concatenate(
                [targets, np.full((system.n_active, cfg.dither.n_dummy), float(db_to_linear(g_db)))], axis=1
            )
            T, p, q, ratio, trace = _solve_undithered(aug, aug_targets, P_bs, base_cfg)
            sol = _finalize(aug, eval_system, T, p, q, aug_targets, ratio, trace, base_cfg, P_bs)
        val = float(np.min(sol.sqinr_exact[:, :K]))
        evaluated.append((g_db, val))
        if val > best_val:
            best, best_val, best_db = sol, val, g_db
        if val < prev:
            break
        prev = val
    best.info.update({"dummy_target_db": best_db, "n_dummy": cfg.dither.n_dummy, "line_search": evaluated})
    return best, best_db
