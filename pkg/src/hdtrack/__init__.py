"""Planar tracking by homography decomposition."""
from __future__ import annotations

__version__ = "0.1.0"

from .geometry import (
    DegenerateHomographyError,
    PointAtInfinityError,
    TransformParams,
    box_corners,
    build_homography,
    compose,
    decompose,
    invert,
    normalize,
    transport_corners,
)
from .kernels import BACKEND
from .resest import dlt, dlt_from_offsets, refine_residual
from .simest import estimate_similarity
from .tracker import Tracker, TrackerConfig, run_sequence

__all__ = [
    "BACKEND",
    "DegenerateHomographyError",
    "PointAtInfinityError",
    "TransformParams",
    "Tracker",
    "TrackerConfig",
    "box_corners",
    "build_homography",
    "compose",
    "decompose",
    "dlt",
    "dlt_from_offsets",
    "estimate_similarity",
    "invert",
    "normalize",
    "refine_residual",
    "run_sequence",
    "transport_corners",
]
