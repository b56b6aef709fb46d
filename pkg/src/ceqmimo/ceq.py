"""Constant-envelope quantizer (CEQ) kernels and their second-order statistics.

A b-bit CEQ maps every complex sample to the nearest point of the PSK-like
alphabet ``{exp(j(pi + 2 pi m) / 2**b)}``; the infinite-resolution CEQ keeps
only the phase.  Besides the quantizer itself this module provides the
Bussgang gain ``zeta_b``, the arcsine law mapping an input correlation
coefficient to the output correlation, and the covariance of the Bussgang
distortion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

INFINITE = math.inf

_GL_NODES = 64
_TIE_ATOL = 1e-12


class NoiseModel(str, Enum):
    EXACT = "exact"
    SMALL_ANGLE = "small_angle"


def _check_bits(b):
    if b is None:
        return None
    if b == INFINITE:
        return INFINITE
    if isinstance(b, (bool, np.bool_)) or int(b) != b:
        raise ValueError(f"resolution must be an integer or INFINITE, got {b!r}")
    if b < 2:
        raise ValueError(f"resolution must be >= 2 bits, got {b}")
    return int(b)


def bussgang_zeta(b) -> float:
    """Bussgang scalar of the b-bit CEQ.

    ``zeta_b = 2**b / (2 sqrt(pi)) * sin(pi / 2**b)`` for finite ``b`` and
    ``sqrt(pi / 4)`` (the limit) for ``b = INFINITE``.
    """
    b = _check_bits(b)
    if b is None:
        raise ValueError("resolution required")
    if b == INFINITE:
        return math.sqrt(math.pi / 4.0)
    m = 2.0**b
    return m / (2.0 * math.sqrt(math.pi)) * math.sin(math.pi / m)


def _zeta_bar(b) -> float:
    # second-order constant of the linearised arcsine law; equals zeta_b**2
    if b == INFINITE:
        return math.pi / 4.0
    m = 2**b
    shifts = 2.0 * np.arange(m // 2) * math.pi / m
    return float(m / math.pi * math.sin(math.pi / m) ** 2 * np.sum(np.cos(shifts) ** 2))


@dataclass(frozen=True)
class CeqConfig:
    """Resolution and Bussgang constants of a CEQ DAC.

    ``b=None`` denotes an ideal (unquantized) converter: no quantizer in the
    chain, ``zeta_b = 1`` and zero distortion.  It is the reference used for
    the unquantized baselines and for the degenerate-limit checks.
    """

    b: float | int | None
    zeta_b: float
    zeta_bar_b: float

    def __post_init__(self):
        if not 0.0 < self.zeta_b <= 1.0:
            raise ValueError(f"zeta_b must lie in (0, 1], got {self.zeta_b}")
        if abs(self.zeta_bar_b - self.zeta_b**2) > 1e-12:
            raise ValueError("zeta_bar_b must equal zeta_b**2")

    @classmethod
    def from_bits(cls, b) -> "CeqConfig":
        b = _check_bits(b)
        zeta = bussgang_zeta(b)
        return cls(b=b, zeta_b=zeta, zeta_bar_b=_zeta_bar(b))

    @classmethod
    def ideal(cls) -> "CeqConfig":
        return cls(b=None, zeta_b=1.0, zeta_bar_b=1.0)

    @property
    def quantized(self) -> bool:
        return self.b is not None

    @property
    def distortion_factor(self) -> float:
        """``1 / zeta_b**2 - 1``, the weight of quantization leakage."""
        return 1.0 / self.zeta_b**2 - 1.0

    def alphabet(self) -> np.ndarray | None:
        """Quantizer output points ordered by index ``m`` (None if continuous)."""
        if self.b is None or self.b == INFINITE:
            return None
        m = 2**self.b
        return np.exp(1j * (np.pi + 2 * np.pi * np.arange(m)) / m)

    def __str__(self):
        if self.b is None:
            return "ideal"
        return "inf" if self.b == INFINITE else str(self.b)


def as_config(cfg) -> CeqConfig:
    if isinstance(cfg, CeqConfig):
        return cfg
    if cfg is None or (isinstance(cfg, str) and cfg.lower() in ("ideal", "none", "unquantized")):
        return CeqConfig.ideal()
    if isinstance(cfg, str) and cfg.lower() in ("inf", "infinite", "infinity"):
        return CeqConfig.from_bits(INFINITE)
    return CeqConfig.from_bits(cfg)


def quantize(x, cfg) -> np.ndarray:
    """Apply the CEQ elementwise.

    Finite ``b`` returns the alphabet point whose phase is nearest to the
    phase of ``x``.  Samples on a decision boundary, and ``x == 0``, go to
    the neighbour with the smaller index ``m``.  ``b = INFINITE`` returns
    ``x / |x|`` (``1`` for ``x == 0``); the ideal config is the identity.
    """
    cfg = as_config(cfg)
    x = np.asarray(x, dtype=complex)
    if cfg.b is None:
        return x.copy()
    if cfg.b == INFINITE:
        mag = np.abs(x)
        out = np.ones_like(x)
        nz = mag > 0
        out[nz] = x[nz] / mag[nz]
        return out
    levels = 2**cfg.b
    # sector index u in [0, levels); sector m spans [m, m+1) around (2m+1)pi/levels
    u = np.mod(np.angle(x), 2 * np.pi) * levels / (2 * np.pi)
    u = np.where(np.abs(x) == 0, 0.0, u)
    nearest = np.rint(u)
    on_edge = np.abs(u - nearest) < _TIE_ATOL * levels
    m = np.where(on_edge, np.mod(nearest, levels) - 1, np.floor(u))
    m = np.where(m < 0, 0, m)
    m = np.mod(m, levels)
    return np.exp(1j * (np.pi + 2 * np.pi * m) / levels)


@lru_cache(maxsize=None)
def _gauss_legendre(n):
    return np.polynomial.legendre.leggauss(n)


def _arcsine_infinite(rho: np.ndarray) -> np.ndarray:
    # 0.5 * int_0^pi e^{j phi} asin(Re(rho e^{-j phi})) dphi.  The integrand has a
    # near-kink at phi = arg(rho) mod pi when |rho| -> 1, so each entry's interval
    # is split there and both halves get their own Gauss-Legendre rule.
    nodes, weights = _gauss_legendre(_GL_NODES)
    rho = rho[..., None]
    cut = np.mod(np.angle(rho), np.pi)
    total = np.zeros(rho.shape[:-1], dtype=complex)
    for lo, hi in ((np.zeros_like(cut), cut), (cut, np.full_like(cut, np.pi))):
        half = 0.5 * (hi - lo)
        phi = lo + half * (nodes + 1.0)
        arg = np.clip(np.real(rho * np.exp(-1j * phi)), -1.0, 1.0)
        total += np.sum(half * weights * np.exp(1j * phi) * np.arcsin(arg), axis=-1)
    return 0.5 * total


def arcsine_map(rho, cfg) -> np.ndarray:
    """Elementwise arcsine law: output correlation of two CEQ outputs.

    ``rho`` holds correlation coefficients of unit-variance jointly
    circular Gaussian inputs.  Magnitudes exceeding one by rounding noise
    are clamped.
    """
    cfg = as_config(cfg)
    rho = np.asarray(rho, dtype=complex)
    mag = np.abs(rho)
    if np.any(mag > 1.0 + 1e-9):
        raise ValueError("correlation coefficients must satisfy |rho| <= 1")
    rho = np.where(mag > 1.0, rho / np.maximum(mag, 1.0), rho)
    if cfg.b is None:
        return rho
    if cfg.b == INFINITE:
        return _arcsine_infinite(rho)
    levels = 2**cfg.b
    scale = levels / np.pi * np.sin(np.pi / levels) ** 2
    out = np.zeros(rho.shape, dtype=complex)
    for shift in range(levels // 2):
        rot = np.exp(2j * np.pi * shift / levels)
        out += rot * np.arcsin(np.clip(np.real(rho / rot), -1.0, 1.0))
    return scale * out


def arcsine_correlation(r_hat, cfg) -> np.ndarray:
    """Covariance of the CEQ output for a unit-diagonal input covariance."""
    r_hat = np.asarray(r_hat, dtype=complex)
    if r_hat.ndim != 2 or r_hat.shape[0] != r_hat.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.allclose(np.diag(r_hat), 1.0, atol=1e-9):
        raise ValueError("input covariance must have a unit diagonal")
    if not np.allclose(r_hat, r_hat.conj().T, atol=1e-9):
        raise ValueError("input covariance must be Hermitian")
    r_z = arcsine_map(r_hat, cfg)
    np.fill_diagonal(r_z, 1.0)
    return r_z


def quantization_noise_covariance(r_x, cfg, mode=NoiseModel.EXACT) -> np.ndarray:
    """Covariance of the Bussgang distortion ``z - A x`` for input covariance ``r_x``.

    EXACT uses the arcsine law, ``R_z - A R_x A^H`` with
    ``A = zeta_b diag(R_x)^(-1/2)``.  SMALL_ANGLE linearises the arcsine,
    which leaves the uncorrelated ``(1 - zeta_b**2) I``.
    """
    cfg = as_config(cfg)
    mode = NoiseModel(mode)
    r_x = np.asarray(r_x, dtype=complex)
    if r_x.ndim != 2 or r_x.shape[0] != r_x.shape[1]:
        raise ValueError("expected a square matrix")
    d = np.real(np.diag(r_x))
    if np.any(d <= 0):
        raise ValueError("input covariance has a zero diagonal entry; Bussgang gain is singular")
    n = r_x.shape[0]
    if mode is NoiseModel.SMALL_ANGLE:
        return (1.0 - cfg.zeta_b**2) * np.eye(n)
    s = 1.0 / np.sqrt(d)
    r_hat = r_x * np.outer(s, s)
    np.fill_diagonal(r_hat, 1.0)
    return arcsine_correlation(r_hat, cfg) - cfg.zeta_b**2 * r_hat
