"""Max-min SQINR precoding for MIMO-OFDM downlinks with constant-envelope quantized DACs."""

__version__ = "0.1.0"

from .baselines import unquantized, zf_equal_power, zf_gaussian_dither, zf_opt_power
from .ceq import INFINITE, CeqConfig, NoiseModel, arcsine_correlation, quantization_noise_covariance, quantize
from .channel import ChannelConfig, ChannelRealization, generate, load_realization, save_realization
from .errors import ConvergenceError, DegeneratePrecoderError, InfeasibleGainError
from .estimators import MaxMinPrecoder, UnquantizedPrecoder, ZFPrecoder
from .linksim import Constellation, LinkConfig, simulate
from .metrics import min_rate, sum_rate, user_rates
from .power import LinkDirection, fixed_target_power, solve_power
from .solver import DitherConfig, SolverConfig, SolverVariant, run
from .sqinr import PerAntennaMode, Variant, build_coupling, dl_sqinr_approx, dl_sqinr_exact, ul_sqinr
from .system import BeamformingSolution, OfdmSystem, PrecodingState

__all__ = [
    "BeamformingSolution",
    "CeqConfig",
    "ChannelConfig",
    "ChannelRealization",
    "Constellation",
    "ConvergenceError",
    "DegeneratePrecoderError",
    "DitherConfig",
    "INFINITE",
    "InfeasibleGainError",
    "LinkConfig",
    "LinkDirection",
    "MaxMinPrecoder",
    "NoiseModel",
    "OfdmSystem",
    "PerAntennaMode",
    "PrecodingState",
    "SolverConfig",
    "SolverVariant",
    "UnquantizedPrecoder",
    "Variant",
    "ZFPrecoder",
    "arcsine_correlation",
    "build_coupling",
    "dl_sqinr_approx",
    "dl_sqinr_exact",
    "fixed_target_power",
    "generate",
    "load_realization",
    "min_rate",
    "quantization_noise_covariance",
    "quantize",
    "run",
    "save_realization",
    "simulate",
    "solve_power",
    "sum_rate",
    "ul_sqinr",
    "unquantized",
    "user_rates",
    "zf_equal_power",
    "zf_gaussian_dither",
    "zf_opt_power",
]
