"""Exception types raised by the simulator."""


class IabSimError(Exception):
    """Base class for all simulator errors."""


class RankDeficient(IabSimError):
    """A channel stack is not full row rank, so zero forcing is impossible."""


class DegenerateGeometry(IabSimError):
    """Transmitter and receiver coincide."""


class ZeroGain(IabSimError):
    """A candidate link gain underflowed to zero."""


class Infeasible(IabSimError):
    """No base station can serve some user."""


class DecodeError(IabSimError):
    """A PSO variable vector could not be decoded into a deployment."""


class ConfigError(IabSimError):
    """Base class for configuration problems (CLI exit code 2)."""


class ParseError(ConfigError):
    def __init__(self, message: str, location: str = "") -> None:
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class ValidationError(ConfigError):
    def __init__(self, message: str, invariant: str = "") -> None:
        self.invariant = invariant
        super().__init__(message)
