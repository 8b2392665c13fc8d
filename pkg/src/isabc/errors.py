"""Exception types shared across the simulator modules."""


class IsabcError(Exception):
    """Base class for all simulator errors."""


class MissingKey(IsabcError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"missing required config key: {name!r}")


class InvalidValue(IsabcError):
    def __init__(self, name, reason):
        self.name = name
        self.reason = reason
        super().__init__(f"invalid value for {name!r}: {reason}")


class DimensionMismatch(IsabcError):
    pass


class SparsityViolation(IsabcError):
    pass


class InvalidSpread(IsabcError):
    pass


class CapacityExceeded(IsabcError):
    def __init__(self, requested, z_max):
        self.requested = requested
        self.z_max = z_max
        super().__init__(f"requested {requested} devices but plan supports at most {z_max}")


class CpOverflow(IsabcError):
    pass


class OverlapDetected(IsabcError):
    pass


class NumericalFailure(IsabcError):
    pass


class DomainError(IsabcError):
    pass


class SingularPilot(IsabcError):
    pass


class ZeroGainBin(IsabcError):
    pass


class NoPathDetected(IsabcError):
    pass


class TooFewPeaks(IsabcError):
    pass


class EmptyInput(IsabcError):
    pass


class ResumeMismatch(IsabcError):
    pass
