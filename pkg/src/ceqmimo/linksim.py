"""Monte Carlo OFDM downlink simulator.

The transmit chain precodes on the active subcarriers, applies a unitary
IFFT, quantizes every antenna sample with the CEQ, scales by the per-antenna
amplitudes ``Q_pa`` and prepends a cyclic prefix.  The receiver convolves
with the time-domain taps, adds AWGN, drops the prefix and applies a unitary
FFT.  Per (user, subcarrier) a least-squares scalar ``g`` is fitted and the
empirical SQINR is ``|g|^2 E|s|^2 / E|y - g s|^2``.

Symbols are processed in fixed-size chunks whose random streams are spawned
from the master seed, so results do not depend on memory limits.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .ceq import as_config, quantize
from .metrics import min_rate, sum_rate
from .system import BeamformingSolution, OfdmSystem

CHUNK = 2048


class Constellation(str, Enum):
    QPSK = "qpsk"
    QAM16 = "qam16"
    GAUSSIAN = "gaussian"


_QAM16_LEVELS = np.array([-3.0, -1.0, 3.0, 1.0])  # index = 2 Gray bits (b0 b1)


def bits_per_symbol(constellation) -> int:
    return {Constellation.QPSK: 2, Constellation.QAM16: 4, Constellation.GAUSSIAN: 0}[Constellation(constellation)]


def modulate(bits, constellation) -> np.ndarray:
    """Gray-mapped unit-energy symbols; ``bits`` has a trailing axis of length ``bits_per_symbol``."""
    c = Constellation(constellation)
    bits = np.asarray(bits, dtype=np.int8)
    if c is Constellation.QPSK:
        return ((1 - 2 * bits[..., 0]) + 1j * (1 - 2 * bits[..., 1])) / np.sqrt(2.0)
    if c is Constellation.QAM16:
        re = _QAM16_LEVELS[2 * bits[..., 0] + bits[..., 1]]
        im = _QAM16_LEVELS[2 * bits[..., 2] + bits[..., 3]]
        return (re + 1j * im) / np.sqrt(10.0)
    raise ValueError("Gaussian signalling carries no bits")


def demodulate(symbols, constellation) -> np.ndarray:
    """Nearest-point hard decisions back to Gray bits."""
    c = Constellation(constellation)
    symbols = np.asarray(symbols)
    if c is Constellation.QPSK:
        return np.stack([symbols.real < 0, symbols.imag < 0], axis=-1).astype(np.int8)
    if c is Constellation.QAM16:
        out = []
        for axis in (symbols.real, symbols.imag):
            a = axis * np.sqrt(10.0)
            b0 = (a > 0).astype(np.int8)
            b1 = (np.abs(a) < 2).astype(np.int8)
            out += [b0, b1]
        return np.stack(out, axis=-1)
    raise ValueError("Gaussian signalling carries no bits")


def qpsk_awgn_ber(ebn0) -> np.ndarray:
    """Textbook uncoded QPSK bit error rate ``Q(sqrt(2 Eb/N0))``."""
    from scipy.special import erfc

    return 0.5 * erfc(np.sqrt(np.asarray(ebn0, dtype=float)))


@dataclass(frozen=True)
class LinkConfig:
    constellation: Constellation = Constellation.GAUSSIAN
    n_ofdm_symbols: int = 1000
    n_cp: int = 8
    noise_power: float | None = None
    seed: int | None = None
    n_pilot: int = 16
    bypass_quantizer: bool = False

    def __post_init__(self):
        object.__setattr__(self, "constellation", Constellation(self.constellation))
        if self.n_ofdm_symbols < 1:
            raise ValueError("n_ofdm_symbols must be >= 1")
        if self.n_cp < 0:
            raise ValueError("n_cp must be >= 0")
        if self.constellation is not Constellation.GAUSSIAN and self.n_ofdm_symbols <= self.n_pilot:
            raise ValueError("need more OFDM symbols than pilot symbols for BER measurement")


@dataclass
class LinkSimReport:
    empirical_sqinr: np.ndarray
    ber: np.ndarray
    evm: np.ndarray
    n_symbols: int
    active: np.ndarray
    rates: dict = field(default_factory=dict)

    def rows(self, realization_id=0):
        n_act, K = self.empirical_sqinr.shape
        for k in range(K):
            for n in range(n_act):
                yield {
                    "row_type": "sqinr",
                    "realization_id": realization_id,
                    "user": k,
                    "subcarrier": int(self.active[n]),
                    "empirical_sqinr": float(self.empirical_sqinr[n, k]),
                    "ber": "",
                    "evm": "",
                }
        for k in range(K):
            yield {
                "row_type": "user",
                "realization_id": realization_id,
                "user": k,
                "subcarrier": "",
                "empirical_sqinr": "",
                "ber": float(self.ber[k]),
                "evm": float(self.evm[k]),
            }

    def to_csv(self, path, realization_id=0) -> None:
        fields = ["row_type", "realization_id", "user", "subcarrier", "empirical_sqinr", "ber", "evm"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields)
            w.writeheader()
            for row in self.rows(realization_id):
                w.writerow({k: (f"{v:.12g}" if isinstance(v, float) else v) for k, v in row.items()})


def _cn(rng, shape, var=1.0):
    return np.sqrt(var / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _dither_factor(dither_cov):
    w, V = np.linalg.eigh(dither_cov)
    return V * np.sqrt(np.clip(w, 0.0, None))[:, None, :]


def transmit(symbols, solution: BeamformingSolution, system: OfdmSystem, cfg: LinkConfig, rng=None) -> np.ndarray:
    """Time-domain antenna samples ``[n_sym, n_fft + n_cp, n_bs]`` for frequency-domain symbols.

    ``symbols`` has shape ``[n_sym, n_active, n_streams]``.  In bypass mode
    (and for an ideal converter) the quantizer and ``Q_pa`` are skipped,
    leaving the linear chain.
    """
    symbols = np.asarray(symbols, dtype=complex)
    T, q = solution.T, solution.q
    if symbols.shape[1:] != (T.shape[0], T.shape[2]):
        raise ValueError(f"symbols shape {symbols.shape[1:]} does not match precoder {(T.shape[0], T.shape[2])}")
    n_sym = symbols.shape[0]
    X = np.zeros((n_sym, system.n_fft, system.n_bs), dtype=complex)
    X[:, system.active] = np.einsum("nmk,nk,snk->snm", T, np.sqrt(q), symbols)
    if solution.dither_cov is not None:
        rng = np.random.default_rng(rng)
        L = _dither_factor(solution.dither_cov)
        X[:, system.active] += np.einsum("nml,snl->snm", L, _cn(rng, (n_sym, system.n_active, system.n_bs)))
    x = np.fft.ifft(X, axis=1, norm="ortho")
    if not cfg.bypass_quantizer and system.ceq.quantized:
        x = quantize(x, system.ceq) * solution.q_pa
    if cfg.n_cp:
        x = np.concatenate([x[:, -cfg.n_cp :], x], axis=1)
    return x


def propagate(tx, taps, n_cp, noise_power, rng=None) -> np.ndarray:
    """Per-symbol linear convolution with the taps, AWGN, CP removal; returns time samples."""
    tx = np.asarray(tx)
    taps = np.asarray(taps)
    L = taps.shape[0]
    if n_cp < L - 1:
        raise ValueError(f"cyclic prefix {n_cp} shorter than channel memory {L - 1}")
    n_sym, length, _ = tx.shape
    y = np.zeros((n_sym, length, taps.shape[2]), dtype=complex)
    for ell in range(L):
        y[:, ell:] += tx[:, : length - ell] @ taps[ell]
    y = y[:, n_cp:]
    if noise_power:
        y = y + _cn(np.random.default_rng(rng), y.shape, noise_power)
    return y


def receive(tx, taps, system: OfdmSystem, cfg: LinkConfig, noise_power, rng=None) -> np.ndarray:
    """Frequency-domain received samples on the active subcarriers, ``[n_sym, n_active, K]``."""
    y = propagate(tx, taps, cfg.n_cp, noise_power, rng)
    return np.fft.fft(y, axis=1, norm="ortho")[:, system.active]


def _draw_symbols(rng, shape, n_users, constellation):
    data = _cn(rng, shape)  # dummy streams and Gaussian signalling
    bits = None
    if constellation is not Constellation.GAUSSIAN:
        nb = bits_per_symbol(constellation)
        bits = rng.integers(0, 2, size=shape[:-1] + (n_users, nb), dtype=np.int8)
        data[..., :n_users] = modulate(bits, constellation)
    return data, bits


def simulate(solution: BeamformingSolution, system: OfdmSystem, taps, cfg: LinkConfig) -> LinkSimReport:
    """Run ``cfg.n_ofdm_symbols`` OFDM symbols and collect SQINR/BER/EVM statistics.

    ``system`` supplies the FFT grid, the CEQ and (if ``cfg.noise_power`` is
    unset) the noise power; ``taps`` is the true channel ``[L, n_bs, K]``.
    """
    noise = system.noise_power if cfg.noise_power is None else cfg.noise_power
    K = taps.shape[2]
    n_act, n_streams = system.n_active, solution.T.shape[2]
    if n_streams < K:
        raise ValueError("precoder has fewer streams than users")
    const = cfg.constellation
    n_chunks = math.ceil(cfg.n_ofdm_symbols / CHUNK)
    streams = np.random.SeedSequence(cfg.seed).spawn(n_chunks)

    ss = np.zeros((n_act, K))  # sum |s|^2
    sy = np.zeros((n_act, K), dtype=complex)  # sum conj(s) y
    yy = np.zeros((n_act, K))  # sum |y|^2
    pilot_ss = np.zeros((n_act, K))
    pilot_sy = np.zeros((n_act, K), dtype=complex)
    bit_errors = np.zeros(K)
    bit_count = np.zeros(K)
    err_energy = np.zeros(K)
    data_energy = np.zeros(K)
    g_pilot = None

    done = 0
    for c, seq in enumerate(streams):
        rng = np.random.default_rng(seq)
        m = min(CHUNK, cfg.n_ofdm_symbols - done)
        s, bits = _draw_symbols(rng, (m, n_act, n_streams), K, const)
        tx = transmit(s, solution, system, cfg, rng)
        Y = receive(tx, taps, system, cfg, noise, rng)
        su = s[..., :K]
        ss += np.sum(np.abs(su) ** 2, axis=0)
        sy += np.sum(su.conj() * Y, axis=0)
        yy += np.sum(np.abs(Y) ** 2, axis=0)
        if const is not Constellation.GAUSSIAN:
            n_pil = max(0, min(cfg.n_pilot - done, m))
            if n_pil:
                pilot_ss += np.sum(np.abs(su[:n_pil]) ** 2, axis=0)
                pilot_sy += np.sum(su[:n_pil].conj() * Y[:n_pil], axis=0)
            if done + m > cfg.n_pilot:
                if g_pilot is None:
                    g_pilot = pilot_sy / pilot_ss
                eq = Y[n_pil:] / g_pilot
                decided = demodulate(eq, const)
                bit_errors += np.sum(decided != bits[n_pil:], axis=(0, 1, 3))
                bit_count += decided.shape[0] * decided.shape[1] * decided.shape[3]
                err_energy += np.sum(np.abs(eq - su[n_pil:]) ** 2, axis=(0, 1))
                data_energy += np.sum(np.abs(su[n_pil:]) ** 2, axis=(0, 1))
        done += m

    g = sy / ss
    resid = np.maximum(yy - np.abs(sy) ** 2 / ss, 1e-300)
    emp = np.abs(g) ** 2 * ss / resid
    if const is Constellation.GAUSSIAN:
        ber = np.full(K, np.nan)
        evm = np.full(K, np.nan)
    else:
        ber = bit_errors / bit_count
        evm = np.sqrt(err_energy / data_energy)
    rates = {"sum_rate": float(sum_rate(emp)), "min_rate": float(min_rate(emp))}
    return LinkSimReport(
        empirical_sqinr=emp, ber=ber, evm=evm, n_symbols=cfg.n_ofdm_symbols, active=system.active.copy(), rates=rates
    )


def measure_bussgang_gain(solution: BeamformingSolution, system: OfdmSystem, n_ofdm_symbols=4096, seed=None):
    """Empirical per-antenna ``E[z x^*] / E|x|^2`` of the CEQ on the precoded time-domain signal.

    Compare with ``zeta_b / sqrt(diag R_x)``.
    """
    rng = np.random.default_rng(seed)
    cfg = LinkConfig(n_ofdm_symbols=n_ofdm_symbols, n_cp=0, bypass_quantizer=True)
    s = _cn(rng, (n_ofdm_symbols, system.n_active, solution.T.shape[2]))
    x = transmit(s, solution, system, cfg, rng)
    z = quantize(x, as_config(system.ceq))
    cross = np.sum(z * x.conj(), axis=(0, 1))
    power = np.sum(np.abs(x) ** 2, axis=(0, 1))
    return cross / power, power / (x.shape[0] * x.shape[1])
