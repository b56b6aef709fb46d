"""Containers shared by the SQINR, power and solver modules.

Per-(user, subcarrier) quantities are stored as ``[n_active, K]`` arrays;
flattening them in C order reproduces the stacking index ``n * K + k`` used
by the coupling matrices.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .ceq import CeqConfig, as_config
from .validation import check_beamformers, check_channel, check_powers, check_targets


@dataclass(frozen=True)
class OfdmSystem:
    """Channel seen by the transmitter on the active subcarriers.

    ``H`` holds only the active subcarriers; ``active`` gives their positions
    in the ``n_fft``-point OFDM grid (guards are the remaining bins).
    """

    H: np.ndarray
    noise_power: float
    ceq: CeqConfig
    n_fft: int
    active: np.ndarray

    @classmethod
    def from_channel(cls, H, noise_power, ceq, active=None) -> "OfdmSystem":
        """Build from a full ``[n_fft, n_bs, K]`` response and an optional activity mask/index list."""
        H = check_channel(H)
        n_fft = H.shape[0]
        if active is None:
            idx = np.arange(n_fft)
        else:
            active = np.asarray(active)
            idx = np.flatnonzero(active) if active.dtype == bool else np.unique(active.astype(int))
            if active.dtype == bool and active.size != n_fft:
                raise ValueError("activity mask length must equal the number of subcarriers")
            if idx.size == 0 or idx.min() < 0 or idx.max() >= n_fft:
                raise ValueError("invalid active subcarrier set")
        if noise_power <= 0:
            raise ValueError("noise power must be positive")
        return cls(H=H[idx], noise_power=float(noise_power), ceq=as_config(ceq), n_fft=n_fft, active=idx)

    @property
    def n_active(self) -> int:
        return self.H.shape[0]

    @property
    def n_bs(self) -> int:
        return self.H.shape[1]

    @property
    def k_users(self) -> int:
        return self.H.shape[2]

    @property
    def grid(self) -> tuple[int, int]:
        return (self.n_active, self.k_users)

    @property
    def h_abs2(self) -> np.ndarray:
        """``|h_{k,n}|**2`` per antenna, shape ``[n_active, n_bs, K]`` (diagonal of ``R_{k,n}``)."""
        return np.abs(self.H) ** 2

    def with_channel(self, H) -> "OfdmSystem":
        H = check_channel(H)
        if H.shape[0] != self.n_active or H.shape[1] != self.n_bs:
            raise ValueError("replacement channel must keep the subcarrier and antenna dimensions")
        return replace(self, H=H)

    def with_ceq(self, ceq) -> "OfdmSystem":
        return replace(self, ceq=as_config(ceq))


def total_budget(system: OfdmSystem, p_bs: float) -> float:
    """Sum-power budget of the joint problem: ``P_BS * N_SC`` (``N_SC`` = FFT size)."""
    return p_bs * system.n_fft


@dataclass
class PrecodingState:
    """Beamformers ``T [n_active, n_bs, K]`` (unit-norm columns) and power allocations."""

    T: np.ndarray
    q: np.ndarray | None = None
    targets: np.ndarray | None = None
    p: np.ndarray | None = None
    q_pa: np.ndarray | None = None

    def __post_init__(self):
        self.T = check_beamformers(self.T)
        grid = self.T.shape[0], self.T.shape[2]
        if self.q is not None:
            self.q = check_powers(self.q, grid, "q")
        if self.p is not None:
            self.p = check_powers(self.p, grid, "p")
        if self.targets is not None:
            self.targets = check_targets(self.targets, grid, allow_zero=True)
        if self.q_pa is not None:
            self.q_pa = np.asarray(self.q_pa, dtype=float)
            if self.q_pa.shape != (self.T.shape[1],):
                raise ValueError("per-antenna amplitudes must be a length-n_bs vector")


@dataclass
class BeamformingSolution:
    """Solver or baseline output evaluated on the design channel."""

    state: PrecodingState
    ratio: float
    sqinr_approx: np.ndarray
    sqinr_exact: np.ndarray | None = None
    per_antenna: str = "theorem1"
    trace: object | None = None
    dither_cov: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def T(self):
        return self.state.T

    @property
    def q(self):
        return self.state.q

    @property
    def p(self):
        return self.state.p

    @property
    def q_pa(self):
        return self.state.q_pa

    @property
    def targets(self):
        return self.state.targets


def centered_active(n_fft: int, n_active: int | None) -> np.ndarray:
    """Active bins for ``n_active`` data subcarriers: DC and the band edges are guards.

    ``None`` (or ``n_active == n_fft``) activates every bin.
    """
    if n_active is None or n_active == n_fft:
        return np.arange(n_fft)
    if not 1 <= n_active < n_fft:
        raise ValueError("n_active must lie in [1, n_fft]")
    upper = (n_active + 1) // 2
    lower = n_active - upper
    return np.concatenate([np.arange(1, upper + 1), np.arange(n_fft - lower, n_fft)]).astype(int)
