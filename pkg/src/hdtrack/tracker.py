"""Compositional planar tracker.

The template is rectified once at start-up so the object fills a
``template_size`` square.  ``H_cum`` maps centered template coordinates
to frame pixel coordinates; every frame is resampled through it so the
object always appears near the template pose, the two estimation stages
measure what is left, and their product is appended to ``H_cum``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .condnum import ParamRanges
from .geometry import (
    DegenerateHomographyError,
    PointAtInfinityError,
    box_corners,
    check_quad,
    normalize,
    similarity_matrix,
    transport_corners,
)
from .raster import as_image, centering, warp_homography
from .resest import RefineConfig, dlt, refine_residual
from .simest import DegeneratePatchError, SimilarityConfig, estimate_similarity

log = logging.getLogger(__name__)

_FAILURES = (DegenerateHomographyError, PointAtInfinityError, DegeneratePatchError,
             FloatingPointError, np.linalg.LinAlgError)


@dataclass(frozen=True)
class TrackerConfig:
    template_size: int = 127
    search_size: int = 255
    lost_threshold: float = 0.3
    freeze_on_lost: bool = True
    use_similarity: bool = True
    use_residual: bool = True
    ranges: ParamRanges = field(default_factory=ParamRanges)
    similarity: SimilarityConfig = field(default_factory=SimilarityConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)

    def __post_init__(self) -> None:
        if self.template_size < 8 or self.search_size < self.template_size:
            raise ValueError("need 8 <= template_size <= search_size")
        if not 0.0 <= self.lost_threshold <= 1.0:
            raise ValueError("lost_threshold must lie in [0, 1]")


@dataclass
class FrameRecord:
    h_similarity: np.ndarray
    h_residual: np.ndarray
    confidence: float
    lost: bool
    flags: tuple[str, ...] = ()


@dataclass
class TrackState:
    h_cum: np.ndarray
    template: np.ndarray
    p_t: np.ndarray
    confidence: float = 1.0
    lost: bool = False
    history: list[FrameRecord] = field(default_factory=list)

    @property
    def corners(self) -> np.ndarray:
        return transport_corners(self.h_cum, self.p_t)


@dataclass
class TrackOutput:
    corners: np.ndarray
    h: np.ndarray
    confidence: float
    lost: bool


def _pixel_map(h_cum: np.ndarray, size: int) -> np.ndarray:
    """Pixel-to-pixel warp sampling the frame at ``h_cum q`` for centered ``q`` in a ``size`` square."""
    return h_cum @ np.linalg.inv(centering((size, size)))


def rectifier(h_cum: np.ndarray, size: int) -> np.ndarray:
    """Inverse-warp matrix producing the rectified template from the first frame."""
    return _pixel_map(h_cum, size)


class Tracker:
    def __init__(self, config: TrackerConfig | None = None) -> None:
        self.config = config or TrackerConfig()

    def init(self, frame0: np.ndarray, p0: np.ndarray) -> TrackState:
        cfg = self.config
        frame0 = as_image(frame0)
        p0 = check_quad(p0)
        h, w = frame0.shape
        if np.any(p0 < -0.5) or np.any(p0[:, 0] > w - 0.5) or np.any(p0[:, 1] > h - 0.5):
            raise ValueError("initial quad lies outside the frame")
        p_t = box_corners(cfg.template_size - 1)
        h_cum = dlt(p_t, p0)
        template = warp_homography(frame0, rectifier(h_cum, cfg.template_size),
                                   (cfg.template_size, cfg.template_size))
        template.setflags(write=False)
        self._frame_shape = frame0.shape
        return TrackState(h_cum=h_cum, template=template, p_t=p_t)

    def _similarity(self, state: TrackState, frame: np.ndarray):
        cfg = self.config
        if not cfg.use_similarity:
            return np.eye(3), 1.0, ()
        search = warp_homography(frame, _pixel_map(state.h_cum, cfg.search_size),
                                 (cfg.search_size, cfg.search_size))
        est = estimate_similarity(state.template, search, cfg.similarity)
        r = cfg.ranges
        t1, t2 = np.clip(est.t, [r.t1[0], r.t2[0]], [r.t1[1], r.t2[1]])
        gamma = float(np.clip(est.gamma, *r.gamma))
        theta = float(np.clip(est.theta, *r.theta))
        flags = ()
        if (t1, t2, gamma, theta) != (est.t[0], est.t[1], est.gamma, est.theta):
            flags = ("clamped",)
        return similarity_matrix(t1, t2, gamma, theta), est.confidence, flags

    def _residual(self, state: TrackState, frame: np.ndarray, h_sim: np.ndarray):
        cfg = self.config
        size = cfg.template_size
        aligned = warp_homography(frame, _pixel_map(state.h_cum @ h_sim, size), (size, size))
        refine = cfg.refine
        if not cfg.use_similarity:
            # the scale/rotation slack only corrects a similarity estimate
            refine = replace(refine, max_scale_slack=0.0, max_rotation_slack=0.0)
        res = refine_residual(state.template, aligned, refine)
        return (np.eye(3) if res.lost else res.h), res.correlation

    def step(self, state: TrackState, frame: np.ndarray) -> np.ndarray:
        """Track one frame in place and return the corner estimate."""
        cfg = self.config
        frame = as_image(frame)
        if frame.shape != self._frame_shape:
            raise ValueError(f"frame shape {frame.shape} differs from {self._frame_shape}")
        flags: tuple[str, ...] = ()
        h_sim = h_res = np.eye(3)
        try:
            h_sim, confidence, flags = self._similarity(state, frame)
            if confidence >= cfg.lost_threshold:
                if cfg.use_residual:
                    h_res, corr = self._residual(state, frame, h_sim)
                else:
                    corr = _patch_correlation(state, frame, h_sim, cfg.template_size)
                confidence = min(confidence, corr)
            h_new = normalize(state.h_cum @ h_sim @ h_res)
            transport_corners(h_new, state.p_t)
        except _FAILURES as exc:
            log.debug("frame failed: %s", exc)
            confidence, h_new, flags = 0.0, None, flags + ("failed",)
        lost = h_new is None or not confidence >= cfg.lost_threshold
        if h_new is not None and (not lost or not cfg.freeze_on_lost):
            state.h_cum = h_new
        state.lost = lost
        state.confidence = float(confidence)
        state.history.append(FrameRecord(h_sim, h_res, state.confidence, lost, flags))
        return state.corners

    def run(self, frames, p0: np.ndarray) -> list[TrackOutput]:
        """Initialize on the first frame and track the rest.

        The first output is the initial quad itself with confidence 1.
        """
        frames = iter(frames)
        try:
            first = next(frames)
        except StopIteration:
            raise ValueError("need at least one frame") from None
        state = self.init(first, p0)
        out = [TrackOutput(state.corners, state.h_cum.copy(), 1.0, False)]
        for frame in frames:
            corners = self.step(state, frame)
            out.append(TrackOutput(corners, state.h_cum.copy(), state.confidence, state.lost))
        self.state = state
        return out


def _patch_correlation(state: TrackState, frame: np.ndarray, h: np.ndarray, size: int) -> float:
    aligned = warp_homography(frame, _pixel_map(state.h_cum @ h, size), (size, size))
    a = aligned - aligned.mean()
    b = state.template - state.template.mean()
    den = math.sqrt(float((a * a).sum()) * float((b * b).sum()))
    return float((a * b).sum()) / den if den > 0 else 0.0


def run_sequence(frames, p0: np.ndarray, config: TrackerConfig | None = None) -> list[TrackOutput]:
    return Tracker(config).run(frames, p0)
