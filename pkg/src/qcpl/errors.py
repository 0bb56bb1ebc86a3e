"""Exception types raised across the package."""


class QcplError(Exception):
    """Base class for all library errors."""


class FullyDegenerate(QcplError, ValueError):
    pass


class DimensionMismatch(QcplError, ValueError):
    pass


class DegenerateSource(QcplError, ValueError):
    pass


class DegenerateSimplex(QcplError, ValueError):
    pass


class SingularMap(QcplError, ValueError):
    pass


class OutsideTube(QcplError, ValueError):
    pass


class NotTangent(QcplError, ValueError):
    pass


class NotOnManifold(QcplError, ValueError):
    pass


class OffManifold(QcplError, ValueError):
    pass


class InjectivityRadiusExceeded(QcplError, ValueError):
    pass


class UnsupportedManifold(QcplError, ValueError):
    pass


class ParseError(QcplError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DimensionUnsupported(QcplError, ValueError):
    pass


class ScheduleTooCoarse(QcplError, ValueError):
    pass


class NoRegularValue(QcplError, RuntimeError):
    pass


class ConfigError(QcplError, ValueError):
    pass


class CertificationFailed(QcplError, RuntimeError):
    pass


class NumericalGuard(QcplError, RuntimeError):
    """A NaN or unexpected infinity reached an output."""
