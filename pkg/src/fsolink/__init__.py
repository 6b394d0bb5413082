"""Fog and pointing-error statistics for threshold-selected multi-beam FSO links."""

from .composite import ChannelModel, Detection, PathFloat
from .errors import ConvergenceError, DegenerateTruncationError, DomainError, SingularGeometryError
from .fog import FogParams, fog_preset
from .montecarlo import McConfig, McEstimate
from .pointing import PointingGeometry, derive_pointing
from .specfun import SeriesControl
from .tmos_acm import AcmCodeTable, TmosConfig

__version__ = "0.1.0"

__all__ = [
    "AcmCodeTable",
    "ChannelModel",
    "ConvergenceError",
    "DegenerateTruncationError",
    "Detection",
    "DomainError",
    "FogParams",
    "McConfig",
    "McEstimate",
    "PathFloat",
    "PointingGeometry",
    "SeriesControl",
    "SingularGeometryError",
    "TmosConfig",
    "derive_pointing",
    "fog_preset",
]
