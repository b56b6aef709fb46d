"""Input validation helpers shared by the numerical routines and estimators."""
from __future__ import annotations

import numpy as np


def check_channel(H, name="H") -> np.ndarray:
    """Return ``H`` as a finite complex array of shape ``[n_sc, n_bs, k]``."""
    H = np.asarray(H)
    if H.ndim == 2:
        H = H[None]
    if H.ndim != 3:
        raise ValueError(f"{name} must have shape [n_sc, n_bs, k], got {H.shape}")
    if 0 in H.shape:
        raise ValueError(f"{name} has an empty dimension: {H.shape}")
    H = H.astype(complex, copy=False)
    if not np.all(np.isfinite(H)):
        raise ValueError(f"{name} contains non-finite values")
    return H


def check_beamformers(T, shape=None, atol=1e-10) -> np.ndarray:
    T = np.asarray(T, dtype=complex)
    if T.ndim != 3:
        raise ValueError(f"beamformers must have shape [n_sc, n_bs, k], got {T.shape}")
    if shape is not None and T.shape != tuple(shape):
        raise ValueError(f"beamformer shape {T.shape} does not match channel shape {tuple(shape)}")
    norms = np.linalg.norm(T, axis=1)
    if not np.allclose(norms, 1.0, atol=atol):
        raise ValueError("beamformer columns must have unit 2-norm")
    return T


def check_powers(q, shape, name="q") -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.ndim == 1 and q.size == int(np.prod(shape)):
        q = q.reshape(shape)
    if q.shape != tuple(shape):
        raise ValueError(f"{name} must have shape {tuple(shape)} (or flat length {int(np.prod(shape))})")
    if np.any(q < 0) or not np.all(np.isfinite(q)):
        raise ValueError(f"{name} must be finite and nonnegative")
    return q


def check_targets(targets, shape, allow_zero=False) -> np.ndarray:
    t = np.broadcast_to(np.asarray(targets, dtype=float), shape).copy()
    bad = t < 0 if allow_zero else t <= 0
    if np.any(bad) or not np.all(np.isfinite(t)):
        raise ValueError("SQINR targets must be finite and positive")
    return t


def check_sqinr_table(sqinr) -> np.ndarray:
    s = np.asarray(sqinr, dtype=float)
    if np.any(s < 0) or np.any(np.isnan(s)):
        raise ValueError("SQINR values must be nonnegative")
    return s


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)
