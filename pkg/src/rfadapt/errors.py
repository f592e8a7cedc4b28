"""Exception hierarchy shared by every rfadapt module."""


class RfAdaptError(Exception):
    """Base class for all library errors."""


class ParseError(RfAdaptError):
    pass


class InvariantViolation(RfAdaptError):
    pass


class RangeError(RfAdaptError):
    """Characterization grid does not cover the required bias range."""


class OutOfRange(RfAdaptError, ValueError):
    """Query outside the characterized hull or device rating."""


class SaturationError(OutOfRange):
    pass


class NonConvergence(RfAdaptError):
    pass


class ContaminatedSample(RfAdaptError):
    pass


class AtBound(RfAdaptError):
    pass


class LutMiss(RfAdaptError):
    pass


class SensitivityFloor(RfAdaptError):
    pass


class Unstable(RfAdaptError):
    def __init__(self, message, poles=()):
        super().__init__(message)
        self.poles = tuple(poles)


class NoConvergence(RfAdaptError):
    pass


class NoAdaptation(RfAdaptError):
    pass


class ScenarioError(RfAdaptError):
    pass


class ModelError(RfAdaptError):
    pass
