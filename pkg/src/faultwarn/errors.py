"""Exception hierarchy shared by all modules."""


class FaultWarnError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(FaultWarnError, ValueError):
    """A scalar or structural parameter is out of its valid range."""


class EmptyInputError(FaultWarnError, ValueError):
    pass


class ShapeError(FaultWarnError, ValueError):
    pass


class DegenerateChannelError(FaultWarnError, ValueError):
    pass


class UndefinedPowerError(FaultWarnError, ValueError):
    pass


class AliasingError(FaultWarnError, ValueError):
    pass


class GeometryError(FaultWarnError, ValueError):
    pass


class EmptyMaskError(FaultWarnError, ValueError):
    pass


class InputError(FaultWarnError, ValueError):
    """Input data violate a distributional or grid precondition."""


class InsufficientDataError(FaultWarnError, ValueError):
    pass


class InsufficientTailError(InsufficientDataError):
    """Too few exceedances above the POT level to fit a tail."""


class FitError(FaultWarnError, RuntimeError):
    pass


class ValidityDomainError(FaultWarnError, ValueError):
    """Requested false-alarm intensity lies outside the tail model's domain."""


class StreamOrderError(FaultWarnError, ValueError):
    pass


class BinCalibrationError(FaultWarnError, ValueError):
    def __init__(self, message, bins=()):
        super().__init__(message)
        self.bins = list(bins)


class UndefinedMetricError(FaultWarnError, ValueError):
    pass


class ManifestError(FaultWarnError, ValueError):
    """Malformed manifest; carries the offending location when known."""

    def __init__(self, message, line=None, field=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field {field!r}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.line = line
        self.field = field


class LeakageError(FaultWarnError):
    def __init__(self, violations):
        super().__init__("leakage check failed: " + "; ".join(violations))
        self.violations = list(violations)


class CalibrationRequiredError(FaultWarnError):
    pass
