"""Exception hierarchy shared by all modules."""


class GneSeekError(Exception):
    """Base class for every error raised by the package."""


class NumericError(GneSeekError):
    """Numerical failure during integration or evaluation (CLI exit code 3)."""


class NonFiniteState(NumericError):
    """A state component became NaN/Inf, or a dual variable went clearly negative."""


class ZenoGuardTripped(NumericError):
    """Too many consecutive jumps without elapsed flow time."""


class EmptyJumpMap(GneSeekError):
    """The jump map returned no successor for a state in the jump set."""


class NonFiniteCost(NumericError):
    """A cost or constraint evaluated to NaN/Inf."""


class NegativeLambda(GneSeekError):
    pass


class OracleScaleExceeded(GneSeekError):
    pass


class InvalidReference(GneSeekError):
    """Reference point handed to a Lyapunov monitor is not a KKT point."""


class NotStationary(GneSeekError):
    pass


class EmptyLevelSet(GneSeekError):
    pass


class ZeroAmplitude(GneSeekError):
    """Dither amplitude vanished on a coordinate whose gradient is estimated."""


class BarrierDomain(NumericError):
    """Amplitude coordinate left the open interval on which the log barrier is defined."""


class TailTooShort(GneSeekError):
    pass


class ConfigError(GneSeekError):
    """Invalid scenario configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class UnknownSuite(GneSeekError):
    pass
