"""Max-min power allocation through the Perron root of the extended coupling matrix."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConvergenceError
from .sqinr import CouplingSystem

EIG_TOL = 1e-10
EIG_MAX_ITER = 10_000


class LinkDirection(str, Enum):
    DL = "dl"
    UL = "ul"


@dataclass
class ExtendedCoupling:
    """Square nonnegative matrix ``Upsilon`` (DL) or ``Lambda`` (UL) of size ``K N + 1``."""

    M: np.ndarray
    kind: LinkDirection
    P_budget: float

    @property
    def size(self) -> int:
        return self.M.shape[0]


@dataclass
class PowerSolution:
    ratio: float
    powers: np.ndarray
    eigenvalue: float
    iterations: int


@dataclass
class FixedTargetResult:
    feasible: bool
    powers: np.ndarray | None
    spectral_radius: float


def build_extended(coupling: CouplingSystem, kind, P_budget: float) -> ExtendedCoupling:
    """Assemble ``[[D A, s D 1], [1^T D A / P, s 1^T D 1 / P]]`` with ``s = sigma^2/zeta^2``.

    ``A = Psi + Phi`` for the downlink and its transpose for the uplink.
    """
    kind = LinkDirection(kind)
    if not P_budget > 0:
        raise ValueError("power budget must be positive")
    DA = coupling.scaled(uplink=kind is LinkDirection.UL)
    d = coupling.d.ravel()
    s = coupling.noise_term
    n = d.size
    M = np.empty((n + 1, n + 1))
    M[:n, :n] = DA
    M[:n, n] = s * d
    M[n, :n] = DA.sum(axis=0) / P_budget
    M[n, n] = s * d.sum() / P_budget
    return ExtendedCoupling(M=M, kind=kind, P_budget=float(P_budget))


def _dense_perron(M):
    w, V = np.linalg.eig(M)
    i = int(np.argmax(w.real))
    v = np.real(V[:, i])
    v = v / v[-1] if v[-1] != 0 else v
    return float(w[i].real), v


def dominant_eigenpair(M, tol=EIG_TOL, max_iter=EIG_MAX_ITER, v0=None, method="power"):
    """Perron eigenpair of a nonnegative matrix, eigenvector scaled so its last entry is 1.

    Power iteration stops once the Collatz-Wielandt bounds
    ``min_i (Mv)_i / v_i <= lambda <= max_i (Mv)_i / v_i`` agree to ``tol``
    (relative).  ``method="dense"`` uses a dense eigensolver instead (oracle
    and debugging path).

    Returns ``(eigenvalue, vector, iterations)``.
    """
    M = np.asarray(M.M if isinstance(M, ExtendedCoupling) else M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 2:
        raise ValueError("need a square matrix of size >= 2")
    if np.any(M < 0):
        raise ValueError("matrix must be elementwise nonnegative")
    if method == "dense":
        lam, v = _dense_perron(M)
        it = 0
    elif method == "power":
        v = np.ones(M.shape[0]) if v0 is None else np.asarray(v0, dtype=float).copy()
        if np.any(v <= 0):
            v = np.ones(M.shape[0])
        lam = np.nan
        for it in range(1, max_iter + 1):
            w = M @ v
            if np.any(w <= 0):
                raise ConvergenceError("power iteration produced a non-positive entry (reducible matrix?)")
            ratios = w / v
            lo, hi = ratios.min(), ratios.max()
            v = w / w[-1]
            if hi - lo <= tol * hi:
                lam = 0.5 * (lo + hi)
                break
        else:
            raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations")
    else:
        raise ValueError(f"unknown method {method!r}")
    if not lam > 0 or np.any(v[:-1] <= 0) or not np.all(np.isfinite(v)):
        raise ConvergenceError("Perron eigenvector is not strictly positive")
    return float(lam), v, it


def solve_power(coupling: CouplingSystem, kind, P_budget: float, method="power", v0=None) -> PowerSolution:
    """Balanced allocation: every achieved/target ratio equals ``1 / lambda_max``."""
    ext = build_extended(coupling, kind, P_budget)
    lam, v, it = dominant_eigenpair(ext, v0=v0, method=method)
    powers = v[:-1].reshape(coupling.d.shape)
    return PowerSolution(ratio=1.0 / lam, powers=powers, eigenvalue=lam, iterations=it)


def spectral_radius(M) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.asarray(M)))))


def fixed_target_power(coupling: CouplingSystem, kind) -> FixedTargetResult:
    """Smallest powers meeting every target exactly, or an infeasible verdict.

    Feasible iff the spectral radius of ``D (Psi + Phi)`` is below one.
    """
    kind = LinkDirection(kind)
    B = coupling.scaled(uplink=kind is LinkDirection.UL)
    rho = spectral_radius(B)
    if not rho < 1.0:
        return FixedTargetResult(False, None, rho)
    rhs = coupling.noise_term * coupling.d.ravel()
    try:
        x = np.linalg.solve(np.eye(B.shape[0]) - B, rhs)
    except np.linalg.LinAlgError:
        return FixedTargetResult(False, None, rho)
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        return FixedTargetResult(False, None, rho)
    return FixedTargetResult(True, x.reshape(coupling.d.shape), rho)
