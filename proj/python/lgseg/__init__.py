"""Language-guided pixel embedding segmentation.

Thin Python layer over the C++ core. Arrays are numpy float64 (H, W, C)
maps, (N, D) matrices and int32 (H, W) label maps.
"""

from ._core import *  # noqa: F401,F403
from ._core import (  # noqa: F401
    AlignmentError,
    ConfigError,
    DegenerateError,
    Error,
    IngestionError,
    NumericError,
    ShapeError,
    UndefinedMetricError,
)

__version__ = "0.1.0"
