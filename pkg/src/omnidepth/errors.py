"""Exception hierarchy shared by every module of the package."""


class OmniDepthError(Exception):
    """Base class for all errors raised by omnidepth."""


class DomainError(OmniDepthError, ValueError):
    """An input lies outside the domain of a mapping (e.g. a column past the pole)."""


class InvalidGeometryError(OmniDepthError, ValueError):
    """Angles or positions that cannot describe a physical configuration."""


class DegeneratePairError(OmniDepthError, ValueError):
    """A stereo pair whose cameras coincide or repeat."""


class InvalidCameraError(OmniDepthError, ValueError):
    """A camera placed inside a solid primitive."""


class ParameterError(OmniDepthError, ValueError):
    """A numeric parameter violates its precondition."""


class FormatError(OmniDepthError, ValueError):
    """Malformed or unsupported file contents."""


class EmptyEvaluationError(OmniDepthError, ValueError):
    """No pixels were left to evaluate."""


class ConfigError(OmniDepthError):
    """Invalid run configuration (bad keys, unknown ids, violated preconditions)."""


class DataError(OmniDepthError):
    """Missing or inconsistent input data for a command."""


class InvariantViolation(OmniDepthError):
    """An internal consistency check failed; indicates a bug."""
