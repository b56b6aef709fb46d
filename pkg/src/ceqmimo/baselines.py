"""Linear reference precoders: quantized ZF (optimal or equal per-antenna power,
optional null-space Gaussian dithering) and unquantized ZF / regularized ZF."""
from __future__ import annotations

import numpy as np

from .ceq import CeqConfig, NoiseModel
from .power import LinkDirection, solve_power
from .sqinr import (
    PerAntennaMode,
    Variant,
    build_coupling,
    dl_sqinr_approx,
    dl_sqinr_eq4,
    per_antenna_power,
)
from .system import BeamformingSolution, OfdmSystem, PrecodingState, total_budget
from .validation import check_targets

_RANK_RTOL = 1e-10


def _gram_inverse(Hn, reg=0.0):
    # (H^T H* + reg I)^{-1}
    gram = Hn.T @ Hn.conj()
    if reg == 0.0:
        s = np.linalg.svd(Hn, compute_uv=False)
        if s.size < Hn.shape[1] or s[-1] <= _RANK_RTOL * s[0]:
            raise np.linalg.LinAlgError("channel matrix is rank deficient; ZF undefined")
    return np.linalg.inv(gram + reg * np.eye(gram.shape[0]))


def _normalize(W):
    return W / np.linalg.norm(W, axis=1, keepdims=True)


def zf_precoder(system_or_H, normalize=True) -> np.ndarray:
    """Per-subcarrier ``H_n^* (H_n^T H_n^*)^{-1}`` with unit-norm columns."""
    H = system_or_H.H if isinstance(system_or_H, OfdmSystem) else np.asarray(system_or_H, dtype=complex)
    W = np.stack([Hn.conj() @ _gram_inverse(Hn) for Hn in H])
    return _normalize(W) if normalize else W


def rzf_precoder(system_or_H, regularization: float, normalize=True) -> np.ndarray:
    """Regularized ZF ``H_n^* (H_n^T H_n^* + alpha I)^{-1}``."""
    if regularization < 0:
        raise ValueError("regularization must be nonnegative")
    H = system_or_H.H if isinstance(system_or_H, OfdmSystem) else np.asarray(system_or_H, dtype=complex)
    W = np.stack([Hn.conj() @ _gram_inverse(Hn, regularization) for Hn in H])
    return _normalize(W) if normalize else W


def null_space_projector(Hn) -> np.ndarray:
    """``I - H^* (H^T H^*)^{-1} H^T``: projector onto directions invisible to every user."""
    return np.eye(Hn.shape[0]) - Hn.conj() @ _gram_inverse(Hn) @ Hn.T


def _balanced_powers(system, T, targets, P_bs):
    coupling = build_coupling(PrecodingState(T=T), system, Variant.FULL, targets)
    return solve_power(coupling, LinkDirection.DL, total_budget(system, P_bs))


def _solution(state, design, evaluate, mode, P_bs, ratio, exact=True, dither_cov=None, info=None):
    if mode is PerAntennaMode.THEOREM1 and dither_cov is None:
        q_pa = per_antenna_power(state, design, mode)
        approx = dl_sqinr_approx(state, evaluate)
    else:
        if mode is PerAntennaMode.EQUAL:
            q_pa = per_antenna_power(state, design, mode, P_bs)
        else:
            q_pa = _dithered_matched(state, design, dither_cov, P_bs)
        approx = dl_sqinr_eq4(state, evaluate, NoiseModel.SMALL_ANGLE, q_pa=q_pa, dither_cov=dither_cov)
    state.q_pa = q_pa
    exact_tab = dl_sqinr_eq4(state, evaluate, NoiseModel.EXACT, q_pa=q_pa, dither_cov=dither_cov) if exact else None
    return BeamformingSolution(
        state=state,
        ratio=float(ratio),
        sqinr_approx=approx,
        sqinr_exact=exact_tab,
        per_antenna=mode.value,
        dither_cov=dither_cov,
        info=dict(info or {}),
    )


def _dithered_matched(state, system, dither_cov, P_bs):
    # power-matching shape of the dithered input, rescaled to the P_BS budget
    power = np.einsum("nmi,ni->m", np.abs(state.T) ** 2, state.q)
    power = power + np.real(np.einsum("nmm->m", dither_cov))
    return np.sqrt(P_bs * power / power.sum())


def zf_opt_power(system: OfdmSystem, targets, P_bs: float, eval_system=None, exact=True) -> BeamformingSolution:
    """ZF directions, balanced DL powers and power-matching per-antenna amplitudes."""
    targets = check_targets(targets, system.grid)
    T = zf_precoder(system)
    sol = _balanced_powers(system, T, targets, P_bs)
    state = PrecodingState(T=T, q=sol.powers, targets=targets)
    return _solution(state, system, eval_system or system, PerAntennaMode.THEOREM1, P_bs, sol.ratio, exact)


def zf_equal_power(system: OfdmSystem, targets, P_bs: float, eval_system=None, exact=True) -> BeamformingSolution:
    """ZF directions and balanced DL powers, but ``Q_pa = sqrt(P_bs / N_BS) I``."""
    targets = check_targets(targets, system.grid)
    T = zf_precoder(system)
    sol = _balanced_powers(system, T, targets, P_bs)
    state = PrecodingState(T=T, q=sol.powers, targets=targets)
    return _solution(state, system, eval_system or system, PerAntennaMode.EQUAL, P_bs, sol.ratio, exact)


def zf_gaussian_dither(
    system: OfdmSystem,
    targets,
    P_bs: float,
    dither_levels=(0.0, 0.05, 0.1, 0.2, 0.5, 1.0),
    eval_system=None,
):
    """ZF Opt-Pwr plus Gaussian dither projected onto the users' null space.

    ``dither_levels`` are dither-to-signal power ratios; level ``r`` gives
    per-direction variance ``r * mean_n(sum_k q_{k,n}) / (N_BS - K)``.  The
    level maximizing the minimum exact SQINR is kept (0 is always tried).
    Returns ``(solution, chosen_level)``.
    """
    targets = check_targets(targets, system.grid)
    evaluate = eval_system or system
    base = zf_opt_power(system, targets, P_bs, eval_system=evaluate)
    free = system.n_bs - system.k_users
    if free == 0:
        base.info["dither_level"] = 0.0
        return base, 0.0
    proj = np.stack([null_space_projector(Hn) for Hn in system.H])
    unit = base.q.sum(axis=1).mean() / free
    best, best_val, best_level = base, float(np.min(base.sqinr_exact)), 0.0
    for level in sorted(set(float(x) for x in dither_levels) - {0.0}):
        if level < 0:
            raise ValueError("dither levels must be nonnegative")
        cov = level * unit * proj
        state = PrecodingState(T=base.T, q=base.q, targets=targets)
        sol = _solution(state, system, evaluate, PerAntennaMode.THEOREM1, P_bs, base.ratio, dither_cov=cov)
        val = float(np.min(sol.sqinr_exact))
        if val > best_val:
            best, best_val, best_level = sol, val, level
    best.info["dither_level"] = best_level
    return best, best_level


def unquantized(system: OfdmSystem, targets, P_bs: float, method="zf", regularization=None, power="opt", eval_system=None):
    """Infinite-resolution reference (no CEQ, no quantization leakage).

    ``method`` is ``"zf"`` or ``"rzf"`` (default regularization
    ``K sigma^2 / P_bs``); ``power`` is ``"opt"`` (balanced) or ``"equal"``
    (uniform across users and subcarriers).
    """
    ideal = system.with_ceq(CeqConfig.ideal())
    evaluate = (eval_system or system).with_ceq(CeqConfig.ideal())
    targets = check_targets(targets, system.grid)
    if method == "zf":
        T = zf_precoder(ideal)
    elif method == "rzf":
        alpha = system.k_users * system.noise_power / P_bs if regularization is None else regularization
        T = rzf_precoder(ideal, alpha)
    else:
        raise ValueError(f"unknown method {method!r}")
    budget = total_budget(system, P_bs)
    if power == "opt":
        sol = _balanced_powers(ideal, T, targets, P_bs)
        q, ratio = sol.powers, sol.ratio
    elif power == "equal":
        q = np.full(system.grid, budget / (system.n_active * system.k_users))
        ratio = float(np.min(dl_sqinr_approx(PrecodingState(T=T, q=q), ideal) / targets))
    else:
        raise ValueError(f"unknown power mode {power!r}")
    state = PrecodingState(T=T, q=q, targets=targets)
    return _solution(state, ideal, evaluate, PerAntennaMode.THEOREM1, P_bs, ratio, exact=True, info={"method": method})
