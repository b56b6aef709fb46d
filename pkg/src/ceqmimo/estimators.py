"""scikit-learn style wrappers around the solvers.

``fit(H)`` designs the precoder for a channel tensor ``[n_sc, n_bs, K]``,
``transform(S)`` precodes frequency-domain symbols ``[n_sym, n_active, K]``
and ``predict(H)`` returns the per-(subcarrier, user) SQINR table that the
fitted precoder achieves on ``H`` (for instance the true channel when the
design used an estimate).  ``score`` is the minimum user rate.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import baselines
from .ceq import NoiseModel, as_config
from .metrics import min_rate
from .solver import DitherConfig, SolverConfig, run
from .sqinr import PerAntennaMode, dl_sqinr_approx, dl_sqinr_eq4
from .system import OfdmSystem
from .validation import check_channel, db_to_linear


class _PrecoderBase(TransformerMixin, BaseEstimator):
    def _system(self, H):
        H = check_channel(H)
        return OfdmSystem.from_channel(H, self.noise_power, as_config(self.b), self.active)

    def _targets(self, system):
        return np.broadcast_to(db_to_linear(self.target_db), system.grid)

    def fit(self, H, y=None):
        system = self._system(H)
        self.system_ = system
        self.solution_ = self._solve(system, self._targets(system))
        self.n_features_in_ = system.n_bs
        return self

    def transform(self, S):
        """Precoded frequency-domain antenna signals ``[n_sym, n_active, n_bs]``."""
        check_is_fitted(self, "solution_")
        S = np.asarray(S, dtype=complex)
        sol = self.solution_
        n_act, n_streams = sol.T.shape[0], sol.T.shape[2]
        K = self.system_.k_users
        if S.ndim == 2:
            S = S[None]
        if S.ndim != 3 or S.shape[1] != n_act or S.shape[2] not in (K, n_streams):
            raise ValueError(f"symbols must have shape [n_sym, {n_act}, {K}]")
        if S.shape[2] < n_streams:
            S = np.concatenate([S, np.zeros(S.shape[:2] + (n_streams - S.shape[2],))], axis=2)
        return np.einsum("nmk,nk,snk->snm", sol.T, np.sqrt(sol.q), S)

    def predict(self, H=None, mode="exact"):
        """SQINR table on ``H`` (defaults to the training channel); ``mode`` is exact or approx."""
        check_is_fitted(self, "solution_")
        system = self.system_ if H is None else self.system_.with_channel(check_channel(H)[self.system_.active])
        sol = self.solution_
        mode = NoiseModel.EXACT if mode == "exact" else NoiseModel.SMALL_ANGLE
        if (
            mode is NoiseModel.SMALL_ANGLE
            and sol.per_antenna == PerAntennaMode.THEOREM1.value
            and sol.dither_cov is None
        ):
            return dl_sqinr_approx(sol.state, system)
        return dl_sqinr_eq4(sol.state, system, mode, q_pa=sol.q_pa, dither_cov=sol.dither_cov)

    def score(self, H=None, y=None):
        return min_rate(self.predict(H))


class MaxMinPrecoder(_PrecoderBase):
    """Max-min SQINR precoder (alternating beamformer/power optimization).

    Parameters
    ----------
    b : int, "inf" or None
        CEQ resolution (None: ideal converter).
    variant : {"joint", "per_subcarrier"}
    per_antenna : {"theorem1", "equal"}
    P_bs, noise_power : float
        Per-sample BS power budget and noise power, in Watts.
    target_db : float or array
        SQINR targets (dB), broadcast to ``[n_active, K]``.
    n_dummy : int
        Dummy users for dithering (0 disables the line search).
    """

    def __init__(
        self,
        b=3,
        variant="joint",
        per_antenna="theorem1",
        P_bs=10.0,
        noise_power=1.0,
        target_db=3.0,
        epsilon=1e-4,
        max_iter=50,
        n_dummy=0,
        dummy_grid_db=(-20.0, -15.0, -10.0, -5.0, 0.0),
        active=None,
        eig_method="power",
    ):
        self.b = b
        self.variant = variant
        self.per_antenna = per_antenna
        self.P_bs = P_bs
        self.noise_power = noise_power
        self.target_db = target_db
        self.epsilon = epsilon
        self.max_iter = max_iter
        self.n_dummy = n_dummy
        self.dummy_grid_db = dummy_grid_db
        self.active = active
        self.eig_method = eig_method

    def _solve(self, system, targets):
        dither = DitherConfig(self.n_dummy, tuple(self.dummy_grid_db)) if self.n_dummy else None
        cfg = SolverConfig(
            epsilon=self.epsilon,
            max_outer_iters=self.max_iter,
            variant=self.variant,
            dither=dither,
            per_antenna_mode=self.per_antenna,
            eig_method=self.eig_method,
        )
        sol, trace = run(system, targets, self.P_bs, cfg)
        self.trace_ = trace
        return sol


class ZFPrecoder(_PrecoderBase):
    """Quantized zero-forcing with balanced DL powers.

    ``power="opt"`` uses power-matching per-antenna amplitudes, ``"equal"`` the
    uniform ones.  ``dither_levels`` enables null-space Gaussian dithering
    (Opt-Pwr only).
    """

    def __init__(self, b=3, power="opt", P_bs=10.0, noise_power=1.0, target_db=3.0, dither_levels=None, active=None):
        self.b = b
        self.power = power
        self.P_bs = P_bs
        self.noise_power = noise_power
        self.target_db = target_db
        self.dither_levels = dither_levels
        self.active = active

    def _solve(self, system, targets):
        if self.power == "equal":
            return baselines.zf_equal_power(system, targets, self.P_bs)
        if self.power != "opt":
            raise ValueError(f"unknown power mode {self.power!r}")
        if self.dither_levels:
            sol, _ = baselines.zf_gaussian_dither(system, targets, self.P_bs, self.dither_levels)
            return sol
        return baselines.zf_opt_power(system, targets, self.P_bs)


class UnquantizedPrecoder(_PrecoderBase):
    """Infinite-resolution ZF or RZF reference (no CEQ in the chain)."""

    def __init__(self, method="zf", power="opt", P_bs=10.0, noise_power=1.0, target_db=3.0, regularization=None, active=None):
        self.method = method
        self.power = power
        self.P_bs = P_bs
        self.noise_power = noise_power
        self.target_db = target_db
        self.regularization = regularization
        self.active = active

    @property
    def b(self):
        return None

    def _solve(self, system, targets):
        return baselines.unquantized(
            system, targets, self.P_bs, method=self.method, regularization=self.regularization, power=self.power
        )
