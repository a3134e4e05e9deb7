"""Geometry engine for alveolar bone-loss measurement on periapical radiograph annotations."""

__version__ = "0.1.0"

from .errors import AlveolarError
from .geom import Box, Line2D, Point2D, Polyline, UnitVector, minimax_line
from .pattern import PatternConfig, PatternResult, classify_site
from .severity import SideAssessment, compute_severity, nms_merge

__all__ = [
    "AlveolarError",
    "Box",
    "Line2D",
    "PatternConfig",
    "PatternResult",
    "Point2D",
    "Polyline",
    "SideAssessment",
    "UnitVector",
    "classify_site",
    "compute_severity",
    "minimax_line",
    "nms_merge",
]
