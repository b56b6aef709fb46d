"""Exception types raised by the numerical core."""


class DegeneratePrecoderError(ValueError):
    """A transmit antenna carries no signal, so the Bussgang gain is singular."""


class InfeasibleGainError(ValueError):
    """A beamformer is orthogonal to its own user's channel (zero direct gain)."""


class ConvergenceError(RuntimeError):
    """An iterative eigen-solver did not reach its tolerance."""
