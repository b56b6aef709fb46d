"""Synthetic frequency-selective multi-user channels.

Rayleigh tapped-delay-line model with an exponential power-delay profile,
an optional real pairwise correlation between users, and Gauss-Markov
channel-estimation error.  Frequency responses use the un-normalised
N_SC-point DFT over the tap axis so that ``y_n = H_n^T x_n`` holds on every
subcarrier once the data transform itself is unitary.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np


class Direction(str, Enum):
    FFT = "fft"
    IFFT = "ifft"


@dataclass(frozen=True)
class ChannelConfig:
    n_bs: int
    k_users: int
    n_sc: int
    l_taps: int = 8
    pdp_decay: float = 0.5
    seed: int | None = None
    est_error: float = 0.0
    user_correlation: float = 0.0

    def __post_init__(self):
        if self.k_users < 1:
            raise ValueError("k_users must be >= 1")
        if self.l_taps < 1 or self.n_sc < self.l_taps:
            raise ValueError("need n_sc >= l_taps >= 1")
        if self.n_bs < self.k_users:
            raise ValueError("n_bs must be >= k_users")
        if not 0.0 <= self.est_error <= 1.0:
            raise ValueError("est_error must lie in [0, 1]")
        if self.pdp_decay < 0:
            raise ValueError("pdp_decay must be nonnegative")
        if self.k_users > 1 and not -1.0 / (self.k_users - 1) < self.user_correlation < 1.0:
            raise ValueError("user_correlation gives an indefinite correlation matrix")


@dataclass
class ChannelRealization:
    """Time-domain taps ``[L, N_BS, K]`` and per-subcarrier responses ``[N_SC, N_BS, K]``."""

    taps: np.ndarray
    freq: np.ndarray
    freq_est: np.ndarray
    config: ChannelConfig | None = field(default=None, compare=False)

    @property
    def n_sc(self) -> int:
        return self.freq.shape[0]

    @property
    def n_bs(self) -> int:
        return self.freq.shape[1]

    @property
    def k_users(self) -> int:
        return self.freq.shape[2]


def power_delay_profile(l_taps: int, decay: float) -> np.ndarray:
    pdp = np.exp(-decay * np.arange(l_taps))
    return pdp / pdp.sum()


def taps_to_frequency(taps: np.ndarray, n_sc: int) -> np.ndarray:
    return np.fft.fft(taps, n=n_sc, axis=0)


def _user_coloring(k: int, rho: float) -> np.ndarray:
    corr = (1.0 - rho) * np.eye(k) + rho * np.ones((k, k))
    return np.linalg.cholesky(corr)


def _cn(rng, shape, var=1.0):
    return np.sqrt(var / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def generate(cfg: ChannelConfig, rng=None) -> ChannelRealization:
    """Draw one channel realization.

    ``rng`` overrides ``cfg.seed`` when given (a Generator or seed).
    """
    rng = np.random.default_rng(cfg.seed if rng is None else rng)
    pdp = power_delay_profile(cfg.l_taps, cfg.pdp_decay)
    w = _cn(rng, (cfg.l_taps, cfg.n_bs, cfg.k_users))
    if cfg.user_correlation != 0.0 and cfg.k_users > 1:
        w = w @ _user_coloring(cfg.k_users, cfg.user_correlation).T
    taps = np.sqrt(pdp)[:, None, None] * w
    freq = taps_to_frequency(taps, cfg.n_sc)
    e = cfg.est_error
    if e == 0.0:
        freq_est = freq.copy()
    else:
        # entry variance is sum(pdp) = 1 on every subcarrier
        freq_est = np.sqrt(1.0 - e**2) * freq + e * _cn(rng, freq.shape)
    return ChannelRealization(taps=taps, freq=freq, freq_est=freq_est, config=cfg)


def time_frequency_transform(signal, direction, n_sc: int | None = None, axis: int = -1) -> np.ndarray:
    """Unitary (inverse) DFT along ``axis`` (1/sqrt(N) normalisation)."""
    signal = np.asarray(signal)
    if n_sc is not None and signal.shape[axis] != n_sc:
        raise ValueError(f"axis {axis} has length {signal.shape[axis]}, expected {n_sc}")
    if Direction(direction) is Direction.FFT:
        return np.fft.fft(signal, axis=axis, norm="ortho")
    return np.fft.ifft(signal, axis=axis, norm="ortho")


# Tensor file format (little endian):
#   b"CQT1" | uint32 ndim | ndim * int64 shape | complex128 values, row-major
_TENSOR_MAGIC = b"CQT1"
_REALIZATION_MAGIC = b"CQCH1\n"


def write_tensor(fh, array) -> None:
    array = np.ascontiguousarray(array, dtype="<c16")
    fh.write(_TENSOR_MAGIC)
    fh.write(struct.pack("<I", array.ndim))
    fh.write(struct.pack(f"<{array.ndim}q", *array.shape))
    fh.write(array.tobytes(order="C"))


def read_tensor(fh) -> np.ndarray:
    if fh.read(4) != _TENSOR_MAGIC:
        raise ValueError("not a tensor record")
    (ndim,) = struct.unpack("<I", fh.read(4))
    shape = struct.unpack(f"<{ndim}q", fh.read(8 * ndim))
    count = int(np.prod(shape)) if ndim else 1
    data = np.frombuffer(fh.read(16 * count), dtype="<c16")
    if data.size != count:
        raise ValueError("truncated tensor record")
    return data.reshape(shape).astype(complex)


def save_realization(path, realization: ChannelRealization) -> None:
    """Write a realization: magic line, JSON config line, then taps/freq/freq_est tensors."""
    meta = asdict(realization.config) if realization.config is not None else {}
    with open(Path(path), "wb") as fh:
        fh.write(_REALIZATION_MAGIC)
        fh.write(json.dumps(meta, sort_keys=True).encode() + b"\n")
        for arr in (realization.taps, realization.freq, realization.freq_est):
            write_tensor(fh, arr)


def load_realization(path) -> ChannelRealization:
    with open(Path(path), "rb") as fh:
        if fh.readline() != _REALIZATION_MAGIC:
            raise ValueError(f"{path} is not a channel realization file")
        meta = json.loads(fh.readline())
        taps, freq, freq_est = (read_tensor(fh) for _ in range(3))
    cfg = ChannelConfig(**meta) if meta else None
    return ChannelRealization(taps=taps, freq=freq, freq_est=freq_est, config=cfg)
