"""User-facing self-test: invariant suites with measured-vs-allowed error reporting."""
from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .ceq import INFINITE, CeqConfig, arcsine_correlation, quantize
from .power import LinkDirection, dominant_eigenpair, fixed_target_power, solve_power
from .solver import SolverConfig, beamformer_step, interference_matrix, run
from .sqinr import Variant, build_coupling, dl_sqinr_approx, inject_phi_sign_error, ul_sqinr
from .system import OfdmSystem, PrecodingState, total_budget


@dataclass
class CheckResult:
    name: str
    measured: float
    allowed: float
    passed: bool
    note: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<34} measured={self.measured:.3e}  allowed={self.allowed:.1e}  {self.note}"


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_system(rng, K=2, n_bs=8, n_sc=4, b=2, sigma2=1.0) -> OfdmSystem:
    return OfdmSystem.from_channel(_cn(rng, (n_sc, n_bs, K)), sigma2, CeqConfig.from_bits(b) if b else CeqConfig.ideal())


def random_beamformers(rng, shape) -> np.ndarray:
    T = _cn(rng, shape)
    return T / np.linalg.norm(T, axis=1, keepdims=True)


def feasible_targets(state, system, level=0.5):
    """Targets placing the spectral radius of ``D (Psi + Phi)`` at ``level``."""
    ones = np.ones(system.grid)
    c = build_coupling(PrecodingState(T=state.T), system, Variant.FULL, ones)
    rho = np.max(np.abs(np.linalg.eigvals(c.scaled())))
    return ones * level / rho


def check_duality(seed=0, instances=20) -> CheckResult:
    """Fixed-target DL and UL solves: equal total power and every target met in both links."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(instances):
        K, n_bs, n_sc = [(2, 8, 4), (4, 16, 8)][i % 2]
        b = [2, 3, INFINITE][i % 3]
        system = random_system(rng, K, n_bs, n_sc, b)
        T = random_beamformers(rng, system.H.shape)
        targets = feasible_targets(PrecodingState(T=T), system)
        c = build_coupling(PrecodingState(T=T), system, Variant.FULL, targets)
        dl = fixed_target_power(c, LinkDirection.DL)
        ul = fixed_target_power(c, LinkDirection.UL)
        if not (dl.feasible and ul.feasible):
            return CheckResult("duality (||p||1 = ||q||1, targets)", np.inf, 1e-8, False, "infeasible verdict")
        q, p = dl.powers, ul.powers
        err = abs(p.sum() - q.sum()) / q.sum()
        st = PrecodingState(T=T, q=q, p=p)
        err = max(err, np.max(np.abs(dl_sqinr_approx(st, system) / targets - 1)))
        err = max(err, np.max(np.abs(ul_sqinr(st, system) / targets - 1)))
        worst = max(worst, err)
    return CheckResult("duality (||p||1 = ||q||1, targets)", worst, 1e-8, worst <= 1e-8)


def check_balancing(seed=1, instances=10) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        system = random_system(rng, 4, 16, 8, 3)
        T = random_beamformers(rng, system.H.shape)
        targets = 10 ** rng.uniform(-0.5, 0.5, system.grid)
        c = build_coupling(PrecodingState(T=T), system, Variant.FULL, targets)
        P = 10.0
        sol = solve_power(c, LinkDirection.DL, total_budget(system, P))
        ratios = dl_sqinr_approx(PrecodingState(T=T, q=sol.powers), system) / targets
        err = max(np.ptp(ratios) / ratios.mean(), abs(sol.powers.sum() / total_budget(system, P) - 1))
        err = max(err, abs(ratios.mean() * sol.eigenvalue - 1))
        worst = max(worst, err)
    return CheckResult("equal-ratio balancing", worst, 1e-6, worst <= 1e-6)


def check_monotone(seed=2, instances=10) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        system = random_system(rng, 4, 16, 8, 3)
        _, trace = run(system, 2.0, 10.0, SolverConfig(compute_exact=False))
        h = np.asarray(trace.lambda_history)
        if h.size > 1:
            worst = max(worst, float(np.max(np.diff(h))))
    return CheckResult("monotone lambda_max history", max(worst, 0.0), 1e-9, worst <= 1e-9)


def check_arcsine(seed=3, samples=200_000) -> CheckResult:
    """Monte Carlo quantizer correlation vs the arcsine law, in standard errors."""
    rng = np.random.default_rng(seed)
    rho = 0.6 * np.exp(0.7j)
    r_hat = np.array([[1, rho], [np.conj(rho), 1]])
    worst = 0.0
    for b in (2, 3, 4, INFINITE):
        cfg = CeqConfig.from_bits(b)
        a, c = _cn(rng, samples), _cn(rng, samples)
        x = np.stack([a, np.conj(rho) * a + np.sqrt(1 - abs(rho) ** 2) * c], axis=1)
        z = quantize(x, cfg)
        prod = z[:, 0] * z[:, 1].conj()
        emp = prod.mean()
        se_re = prod.real.std() / np.sqrt(samples)
        se_im = prod.imag.std() / np.sqrt(samples)
        ref = arcsine_correlation(r_hat, cfg)[0, 1]
        worst = max(worst, abs(emp.real - ref.real) / se_re, abs(emp.imag - ref.imag) / se_im)
    return CheckResult("arcsine law vs Monte Carlo (SE)", worst, 3.0, worst <= 3.0)


def check_beamformer_oracle(seed=4, instances=10) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        system = random_system(rng, 3, 8, 4, 2)
        p = rng.uniform(0.1, 2.0, system.grid)
        n, k = rng.integers(system.n_active), rng.integers(system.k_users)
        S = interference_matrix(system, p, k, n)
        h = system.H[n, :, k]
        t = beamformer_step(system, p, k=k, n=n)
        u = t.conj()
        value = np.real(abs(u.conj() @ h) ** 2 / (u.conj() @ S @ u))
        oracle = eigh(np.outer(h, h.conj()), S, eigvals_only=True)[-1]
        worst = max(worst, abs(value / oracle - 1))
    return CheckResult("beamformer vs generalized eig", worst, 1e-8, worst <= 1e-8)


def check_ideal_limit(seed=5, instances=5) -> CheckResult:
    """With zeta = 1 the pipeline reduces to classical max-min duality; compare with a dense solve."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        system = random_system(rng, 3, 6, 4, None)
        sol, _ = run(system, 2.0, 5.0, SolverConfig(compute_exact=False))
        T = sol.T
        G = np.abs(np.einsum("nmk,nmi->nki", system.H, T)) ** 2
        n_sc, K = system.grid
        B = np.zeros((n_sc * K, n_sc * K))
        for n in range(n_sc):
            for k in range(K):
                for i in range(K):
                    if i != k:
                        B[n * K + k, n * K + i] = 2.0 / G[n, k, k] * G[n, k, i]
        d = np.full(n_sc * K, 2.0) / np.einsum("nkk->nk", G).ravel()
        P = total_budget(system, 5.0)
        ext = np.zeros((B.shape[0] + 1,) * 2)
        ext[:-1, :-1] = B
        ext[:-1, -1] = system.noise_power * d
        ext[-1, :-1] = B.sum(axis=0) / P
        ext[-1, -1] = system.noise_power * d.sum() / P
        lam = np.max(np.linalg.eigvals(ext).real)
        worst = max(worst, abs(sol.ratio * lam - 1))
    return CheckResult("ideal-resolution limit vs dense", worst, 1e-8, worst <= 1e-8)


def check_power_iteration(seed=6, instances=10) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        M = rng.uniform(0, 1, (6, 6))
        lam, _, _ = dominant_eigenpair(M)
        ref = np.max(np.abs(np.linalg.eigvals(M)))
        worst = max(worst, abs(lam / ref - 1))
    return CheckResult("power iteration vs dense eig", worst, 1e-9, worst <= 1e-9)


CHECKS = (
    ("duality (||p||1 = ||q||1, targets)", check_duality),
    ("equal-ratio balancing", check_balancing),
    ("monotone lambda_max history", check_monotone),
    ("arcsine law vs Monte Carlo (SE)", check_arcsine),
    ("beamformer vs generalized eig", check_beamformer_oracle),
    ("ideal-resolution limit vs dense", check_ideal_limit),
    ("power iteration vs dense eig", check_power_iteration),
)


def run_all(inject_phi_error=False) -> list[CheckResult]:
    ctx = inject_phi_sign_error() if inject_phi_error else contextlib.nullcontext()
    results = []
    with ctx:
        for name, check in CHECKS:
            try:
                results.append(check())
            except Exception as exc:  # a crashing check is a failing check
                results.append(CheckResult(name, np.inf, 0.0, False, f"{type(exc).__name__}: {exc}"))
    return results
