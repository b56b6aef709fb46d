"""Downlink/uplink SQINR evaluation and the coupling matrices of the duality.

Conventions
-----------
``H[n, :, k]`` is user ``k``'s channel on active subcarrier ``n`` and the
received DL sample is ``h^T x``.  ``T`` has the same layout with unit-norm
columns, ``q``/``p`` are ``[n_active, K]`` power tables.  The gain
``t^T R t*`` of the analysis is ``|t^T h|**2`` and ``t^T diag(R) t*`` is
``sum_m |t_m|**2 |h_m|**2``.

Quantization leakage is normalised by the FFT size ``n_fft`` (guards carry
no power), so with every subcarrier active this is the usual ``1/N_SC``.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import block_diag

from .ceq import CeqConfig, NoiseModel, arcsine_map
from .errors import DegeneratePrecoderError, InfeasibleGainError
from .system import OfdmSystem, PrecodingState
from .validation import check_powers, check_targets

_GAIN_RTOL = 1e-24
_DELTA_RTOL = 1e-14

# Debug hook used by the self-test to prove the duality check can fail.
_PHI_SIGN = 1.0


@contextlib.contextmanager
def inject_phi_sign_error():
    """Flip the sign of the quantization coupling inside the block (mutation test only)."""
    global _PHI_SIGN
    old = _PHI_SIGN
    _PHI_SIGN = -1.0
    try:
        yield
    finally:
        _PHI_SIGN = old


class Variant(str, Enum):
    FULL = "full"
    PER_SUBCARRIER = "per_subcarrier"


class PerAntennaMode(str, Enum):
    THEOREM1 = "theorem1"
    EQUAL = "equal"


def _check_state(state: PrecodingState, system: OfdmSystem, need=("q",)):
    # extra trailing beamformer columns (dummy streams) are allowed in DL evaluation
    t, h = state.T.shape, system.H.shape
    if t[:2] != h[:2] or t[2] < h[2]:
        raise ValueError(f"beamformer shape {t} does not match channel {h}")
    for attr in need:
        if getattr(state, attr) is None:
            raise ValueError(f"state.{attr} must be set")


def cross_gains(H, T) -> np.ndarray:
    """``G[n, k, i] = |t_{i,n}^T h_{k,n}|**2``."""
    return np.abs(np.einsum("nmk,nmi->nki", H, T)) ** 2


def _direct(G):
    k = np.arange(G.shape[1])
    return G[:, k, k]


def _select(table, k, n):
    if k is None and n is None:
        return table
    if k is None or n is None:
        raise ValueError("give both k and n, or neither")
    return float(table[n, k])


def dl_sqinr_approx(state: PrecodingState, system: OfdmSystem, k=None, n=None):
    """Small-angle DL SQINR with power-matching per-antenna amplitudes.

    Returns the ``[n_active, K]`` table, or the scalar for user ``k`` on
    subcarrier ``n`` when both are given.
    """
    _check_state(state, system)
    H, T, q, cfg = system.H, state.T, state.q, system.ceq
    G = cross_gains(H, T)
    direct = _direct(G)
    K = H.shape[2]
    mui = np.einsum("nki,ni->nk", G, q) - direct * q[:, :K]
    antenna_power = np.einsum("nmi,ni->m", np.abs(T) ** 2, q)
    leak = np.einsum("nmk,m->nk", system.h_abs2, antenna_power) / system.n_fft
    den = mui + system.noise_power / cfg.zeta_b**2 + cfg.distortion_factor * leak
    return _select(q[:, :K] * direct / den, k, n)


def ul_sqinr(state: PrecodingState, system: OfdmSystem, k=None, n=None):
    """Small-angle UL SQINR; user (k, n) depends only on its own ``t_{k,n}`` and on ``p``."""
    _check_state(state, system, need=("p",))
    if state.T.shape != system.H.shape:
        raise ValueError("uplink evaluation needs one beamformer per user")
    H, T, p, cfg = system.H, state.T, state.p, system.ceq
    G = cross_gains(H, T)
    direct = _direct(G)
    mui = np.einsum("nik,ni->nk", G, p) - direct * p
    rx_power = np.einsum("nmi,ni->m", system.h_abs2, p)
    leak = np.einsum("nmk,m->nk", np.abs(T) ** 2, rx_power) / system.n_fft
    den = mui + system.noise_power / cfg.zeta_b**2 + cfg.distortion_factor * leak
    return _select(p * direct / den, k, n)


def per_antenna_power(state: PrecodingState, system: OfdmSystem, mode=PerAntennaMode.THEOREM1, P_bs=None):
    """Diagonal of ``Q_pa`` (amplitudes, length ``n_bs``).

    THEOREM1 restores the time-domain per-antenna power of the unquantized
    signal; EQUAL spreads ``P_bs`` evenly across antennas.
    """
    mode = PerAntennaMode(mode)
    if mode is PerAntennaMode.EQUAL:
        if P_bs is None or P_bs <= 0:
            raise ValueError("EQUAL mode needs a positive P_bs")
        return np.full(system.n_bs, np.sqrt(P_bs / system.n_bs))
    _check_state(state, system)
    power = np.einsum("nmi,ni->m", np.abs(state.T) ** 2, state.q) / system.n_fft
    if not np.any(power > 0):
        raise DegeneratePrecoderError("all-zero DL power: per-antenna matrix is zero")
    return np.sqrt(power)


def transmit_covariances(state: PrecodingState, system: OfdmSystem, dither_cov=None) -> np.ndarray:
    """Frequency-domain covariances ``T_n diag(q_n) T_n^H`` on the full FFT grid."""
    T, q = state.T, state.q
    C = np.zeros((system.n_fft, system.n_bs, system.n_bs), dtype=complex)
    C[system.active] = np.einsum("nmk,nk,nlk->nml", T, q, T.conj())
    if dither_cov is not None:
        C[system.active] += dither_cov
    return C


def dl_sqinr_eq4(state, system, mode=NoiseModel.EXACT, q_pa=None, dither_cov=None, k=None, n=None):
    """DL SQINR of the full Bussgang model with MUI, thermal and quantization noise.

    The time-domain input covariance of one OFDM symbol is block circulant,
    ``R_x(d) = (1/N) sum_n C_n exp(j 2 pi n d / N)``, so the distortion
    covariance is evaluated lag by lag (arcsine law in EXACT mode, the white
    ``(1 - zeta**2) I`` in SMALL_ANGLE mode) and mapped back to a per-subcarrier
    ``n_bs x n_bs`` matrix with one FFT over the lag axis.

    ``q_pa`` defaults to the power-matching amplitudes.  ``dither_cov`` (shape
    ``[n_active, n_bs, n_bs]``) adds an extra Gaussian component to the
    quantizer input whose linear part also reaches the users.
    """
    mode = NoiseModel(mode)
    _check_state(state, system)
    cfg: CeqConfig = system.ceq
    C = transmit_covariances(state, system, dither_cov)
    Rx = np.fft.ifft(C, axis=0)
    delta = np.real(np.diagonal(Rx[0]))
    if np.any(delta <= _DELTA_RTOL * max(delta.max(), 0.0)) or delta.max() <= 0:
        raise DegeneratePrecoderError("an antenna carries zero signal power; Bussgang gain undefined")
    s = 1.0 / np.sqrt(delta)
    if q_pa is None:
        q_pa = np.sqrt(delta)
    q_pa = np.asarray(q_pa, dtype=float)
    if q_pa.shape != (system.n_bs,):
        raise ValueError("q_pa must be a length-n_bs vector")

    n_bs = system.n_bs
    if mode is NoiseModel.SMALL_ANGLE or not cfg.quantized:
        # white per-sample distortion: every subcarrier sees (1 - zeta^2) I
        M = np.broadcast_to((1.0 - cfg.zeta_b**2) * np.eye(n_bs), (system.n_active, n_bs, n_bs))
    else:
        r_hat = Rx * np.outer(s, s)
        r_z = arcsine_map(r_hat, cfg)
        idx = np.arange(n_bs)
        r_hat[0, idx, idx] = 1.0
        r_z[0, idx, idx] = 1.0
        M = np.fft.fft(r_z - cfg.zeta_b**2 * r_hat, axis=0)[system.active]

    gain = cfg.zeta_b * q_pa * s
    H = system.H
    heff = gain[None, :, None] * H
    G = cross_gains(heff, state.T)
    direct = _direct(G)
    q = state.q
    K = H.shape[2]
    mui = np.einsum("nki,ni->nk", G, q) - direct * q[:, :K]
    hq = q_pa[None, :, None] * H
    qn = np.real(np.einsum("nmk,nml,nlk->nk", hq, M, hq.conj()))
    den = mui + system.noise_power + qn
    if dither_cov is not None:
        den = den + np.real(np.einsum("nmk,nml,nlk->nk", heff, dither_cov, heff.conj()))
    return _select(q[:, :K] * direct / den, k, n)


def dl_sqinr_exact(state, system, q_pa=None, dither_cov=None, k=None, n=None):
    """DL SQINR with the exact arcsine-law quantization noise."""
    return dl_sqinr_eq4(state, system, NoiseModel.EXACT, q_pa=q_pa, dither_cov=dither_cov, k=k, n=n)


@dataclass
class CouplingSystem:
    """Target, MUI and quantization coupling for a fixed beamformer set.

    ``d`` holds the diagonal of ``D`` as an ``[n_active, K]`` table, ``psi``
    the per-subcarrier MUI blocks ``[n_active, K, K]`` and ``phi`` the dense
    ``(n_active K) x (n_active K)`` quantization coupling (block diagonal in
    the per-subcarrier variant).
    """

    d: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    sigma2: float
    ceq: CeqConfig
    variant: Variant

    @property
    def size(self) -> int:
        return self.d.size

    @property
    def noise_term(self) -> float:
        return self.sigma2 / self.ceq.zeta_b**2

    @property
    def D(self) -> np.ndarray:
        return np.diag(self.d.ravel())

    @property
    def Psi(self) -> np.ndarray:
        return block_diag(*self.psi)

    @property
    def Phi(self) -> np.ndarray:
        return self.phi

    def interference(self) -> np.ndarray:
        """``Psi + Phi`` as a dense matrix."""
        return self.Psi + self.phi

    def scaled(self, uplink=False) -> np.ndarray:
        """``D (Psi + Phi)`` or, for the uplink, ``D (Psi + Phi)^T``."""
        A = self.interference()
        if uplink:
            A = A.T
        return self.d.reshape(-1, 1) * A

    def subcarrier(self, n: int) -> "CouplingSystem":
        K = self.d.shape[1]
        sl = slice(n * K, (n + 1) * K)
        return CouplingSystem(
            d=self.d[n : n + 1],
            psi=self.psi[n : n + 1],
            phi=self.phi[sl, sl],
            sigma2=self.sigma2,
            ceq=self.ceq,
            variant=self.variant,
        )


def coupling_from_arrays(H, T, targets, sigma2, ceq, leak, variant=Variant.FULL) -> CouplingSystem:
    """Coupling of the subcarriers in ``H`` with dense quantization coupling weighted by ``leak``.

    ``Phi[(n,k),(j,i)] = leak * sum_m |h_{k,n,m}|**2 |t_{i,j,m}|**2``, diagonal included.
    """
    G = cross_gains(H, T)
    direct = _direct(G)
    scale = np.abs(H) ** 2
    floor = _GAIN_RTOL * np.sum(scale, axis=1)
    if np.any(direct <= floor):
        n, k = np.argwhere(direct <= floor)[0]
        raise InfeasibleGainError(f"zero direct gain for user {k} on subcarrier {n}")
    d = targets / direct
    psi = G.copy()
    idx = np.arange(G.shape[1])
    psi[:, idx, idx] = 0.0
    n_bs = H.shape[1]
    A = scale.transpose(0, 2, 1).reshape(-1, n_bs)  # rows (n, k)
    B = (np.abs(T) ** 2).transpose(0, 2, 1).reshape(-1, n_bs)  # rows (j, i)
    phi = (leak * _PHI_SIGN) * (A @ B.T)
    return CouplingSystem(d=d, psi=psi, phi=phi, sigma2=float(sigma2), ceq=ceq, variant=Variant(variant))


def build_coupling(state: PrecodingState, system: OfdmSystem, variant=Variant.FULL, targets=None) -> CouplingSystem:
    """Coupling matrices for the joint problem (FULL) or its per-subcarrier surrogate.

    FULL couples every (user, subcarrier) pair through the quantization
    leakage ``(1/zeta**2 - 1)/n_fft sum_m |t_{i,j,m}|**2 |h_{k,n,m}|**2``.
    PER_SUBCARRIER keeps only same-subcarrier terms, rescaled by the active
    subcarrier count so that it matches FULL for IID beamformers.
    """
    variant = Variant(variant)
    targets = state.targets if targets is None else targets
    if targets is None:
        raise ValueError("targets required")
    if state.T.shape != system.H.shape:
        raise ValueError(f"beamformer shape {state.T.shape} does not match channel {system.H.shape}")
    targets = check_targets(targets, system.grid)
    leak = leak_scale(system, variant)
    H, T, s2 = system.H, state.T, system.noise_power
    if variant is Variant.FULL:
        return coupling_from_arrays(H, T, targets, s2, system.ceq, leak, variant)
    parts = [
        coupling_from_arrays(H[n : n + 1], T[n : n + 1], targets[n : n + 1], s2, system.ceq, leak, variant)
        for n in range(system.n_active)
    ]
    return CouplingSystem(
        d=np.concatenate([c.d for c in parts]),
        psi=np.concatenate([c.psi for c in parts]),
        phi=block_diag(*[c.phi for c in parts]),
        sigma2=s2,
        ceq=system.ceq,
        variant=variant,
    )


def leak_scale(system: OfdmSystem, variant=Variant.FULL) -> float:
    """Weight of the quantization leakage term for the given variant."""
    if Variant(variant) is Variant.FULL:
        return system.ceq.distortion_factor / system.n_fft
    return system.ceq.distortion_factor * system.n_active / system.n_fft


def achieved_ratio(sqinr, targets) -> np.ndarray:
    return np.asarray(sqinr) / np.asarray(targets)


def sqinr_from_powers(state: PrecodingState, system: OfdmSystem, q) -> np.ndarray:
    """Convenience: approximate DL SQINR table for a replacement power table."""
    q = check_powers(q, system.grid)
    return dl_sqinr_approx(PrecodingState(T=state.T, q=q), system)
