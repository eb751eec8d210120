"""Omnidirectional depth from multiple 360 degree cameras.

Geometry (``sphere``, ``rig``), raster I/O (``raster``), a synthetic scene
renderer (``render``, ``soil``), pairwise stereo on epipolar-rectified
panoramas (``stereo``), spherical sweeping (``sweep``), depth fusion
(``fusion``), metrics (``metrics``) and the command-line pipeline
(``pipeline``, ``cli``).
"""

from .errors import (ConfigError, DataError, DegeneratePairError, DomainError, EmptyEvaluationError, FormatError,
                     InvalidCameraError, InvalidGeometryError, InvariantViolation, OmniDepthError, ParameterError)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "DegeneratePairError", "DomainError", "EmptyEvaluationError", "FormatError",
    "InvalidCameraError", "InvalidGeometryError", "InvariantViolation", "OmniDepthError", "ParameterError",
]
