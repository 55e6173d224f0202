"""Synthetic sequences with exact ground truth, and tracking metrics.

A sequence is produced by viewing a flat textured ``base`` image through a
smoothly varying homography.  The ground-truth homography of frame ``i``
maps centered template coordinates (the ``template_size`` box) to frame
pixel coordinates, the same convention the tracker reports.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence as SequenceT, TextIO

import numpy as np
from scipy.ndimage import gaussian_filter

from .condnum import ParamRanges
from .geometry import (
    TransformParams,
    box_corners,
    build_homography,
    decompose_params,
    invert,
    normalize,
    transport_corners,
    write_homographies,
)
from .raster import as_image, centering, read_pgm, warp_homography, write_pgm

log = logging.getLogger(__name__)

ALIGNMENT_THRESHOLDS = np.arange(1.0, 51.0)
IOU_THRESHOLDS = np.round(np.arange(0.05, 0.951, 0.05), 2)


def textured_image(size: int | tuple[int, int], seed: int = 0) -> np.ndarray:
    """Band-limited random texture in [0, 1]."""
    shape = (size, size) if isinstance(size, int) else tuple(size)
    rng = np.random.default_rng(seed)
    img = sum(gaussian_filter(rng.standard_normal(shape), s) * s for s in (1.0, 2.0, 4.0))
    img -= img.min()
    return img / img.max()


# -- motion scripts ---------------------------------------------------------------

@dataclass(frozen=True)
class Challenges:
    blur_sigma: float = 0.0
    gain: float = 1.0
    bias: float = 0.0
    noise_sigma: float = 0.0
    occlusion_frames: tuple[int, int] | None = None  # [start, stop)
    occlusion_rect: tuple[float, float, float, float] | None = None  # u0, v0, u1, v1 pixels
    occlusion_margin: float = 12.0  # used when the rectangle is derived from the object
    occlusion_value: float = 0.5

    def __post_init__(self) -> None:
        if self.blur_sigma < 0 or self.noise_sigma < 0 or self.gain <= 0:
            raise ValueError("invalid challenge settings")

    def occluded(self, index: int) -> bool:
        return self.occlusion_frames is not None and self.occlusion_frames[0] <= index < self.occlusion_frames[1]


@dataclass(frozen=True)
class MotionScript:
    """Per-frame parameters interpolated between keyframes with a cosine ease."""
    n_frames: int
    keyframes: tuple[tuple[int, TransformParams], ...] = ((0, TransformParams()),)
    challenges: Challenges = field(default_factory=Challenges)

    def __post_init__(self) -> None:
        if self.n_frames < 1:
            raise ValueError("a script needs at least one frame")
        idx = [k for k, _ in self.keyframes]
        if not idx or idx != sorted(set(idx)) or idx[0] != 0:
            raise ValueError("keyframes must be strictly increasing and start at frame 0")

    def params(self, index: int) -> TransformParams:
        keys = self.keyframes
        if index <= keys[0][0]:
            return keys[0][1]
        for (i0, x0), (i1, x1) in zip(keys, keys[1:]):
            if index <= i1:
                s = (index - i0) / (i1 - i0)
                w = 0.5 - 0.5 * math.cos(math.pi * s)
                return TransformParams.from_array((1 - w) * x0.as_array() + w * x1.as_array())
        return keys[-1][1]

    def path(self) -> list[TransformParams]:
        return [self.params(i) for i in range(self.n_frames)]

    def check_deltas(self, ranges: ParamRanges | None = None) -> None:
        """Raise if some inter-frame motion falls outside ``ranges``."""
        ranges = ranges or ParamRanges()
        hs = [build_homography(x) for x in self.path()]
        for i in range(1, len(hs)):
            delta = decompose_params(invert(hs[i - 1]) @ hs[i])
            if not ranges.contains(delta):
                raise ValueError(f"inter-frame motion at frame {i} outside the allowed ranges: {delta}")


@dataclass(frozen=True)
class MotionAmplitude:
    t: float = 24.0
    gamma: tuple[float, float] = (0.85, 1.18)
    theta: float = 0.5
    k1: float = 0.06
    k2: float = 0.01
    nu: float = 8e-4


def random_script(n_frames: int, seed: int, key_every: int = 20,
                  amplitude: MotionAmplitude | None = None,
                  challenges: Challenges | None = None) -> MotionScript:
    """Keyframes drawn uniformly within ``amplitude``; frame 0 is the identity."""
    a = amplitude or MotionAmplitude()
    rng = np.random.default_rng(seed)
    keys = [(0, TransformParams())]
    for k in range(key_every, n_frames - 1 + key_every, key_every):
        x = TransformParams(
            t1=rng.uniform(-a.t, a.t), t2=rng.uniform(-a.t, a.t),
            gamma=math.exp(rng.uniform(*np.log(a.gamma))), theta=rng.uniform(-a.theta, a.theta),
            k1=1.0 + rng.uniform(-a.k1, a.k1), k2=rng.uniform(-a.k2, a.k2),
            nu1=rng.uniform(-a.nu, a.nu), nu2=rng.uniform(-a.nu, a.nu),
        )
        keys.append((min(k, n_frames - 1), x))
    # keep the index sequence strictly increasing if the last key was clipped
    dedup = dict(keys)
    return MotionScript(n_frames, tuple(sorted(dedup.items())), challenges or Challenges())


# -- synthesis ------------------------------------------------------------------------

@dataclass
class SyntheticSequence:
    frames: list[np.ndarray]
    homographies: list[np.ndarray]  # centered template coords -> frame pixels
    corners: list[np.ndarray]
    template_size: int
    occluded: list[bool]


def synthesize(
    base: np.ndarray,
    script: MotionScript,
    seed: int = 0,
    frame_shape: tuple[int, int] = (255, 255),
    object_size: int = 127,
    template_size: int = 127,
    object_center: tuple[float, float] | None = None,
) -> SyntheticSequence:
    """Render ``script`` over ``base``.

    The object is the ``object_size`` square of ``base`` centered at
    ``object_center`` (pixel coordinates, default the base center).  Frame
    ``i`` shows it at ``H(x_i)`` about the frame center.  Raises
    ``ValueError`` when the object leaves the frame or the view leaves
    ``base``.
    """
    base = as_image(base)
    rng = np.random.default_rng(seed)
    ch = script.challenges
    if object_center is None:
        object_center = ((base.shape[1] - 1) / 2.0, (base.shape[0] - 1) / 2.0)
    s = (object_size - 1) / (template_size - 1)
    scale = np.diag([s, s, 1.0])
    to_base = np.array([[1.0, 0.0, object_center[0]], [0.0, 1.0, object_center[1]], [0.0, 0.0, 1.0]])
    p_t = box_corners(template_size - 1)
    fh, fw = frame_shape
    frame_box = np.array([[0.0, 0.0], [fw - 1.0, 0.0], [fw - 1.0, fh - 1.0], [0.0, fh - 1.0]])
    frames, hs, corners, occluded = [], [], [], []
    for i, x in enumerate(script.path()):
        view = centering(frame_shape) @ build_homography(x)  # object-centered base -> frame pixels
        h_gt = normalize(view @ scale)
        quad = transport_corners(h_gt, p_t)
        if np.any(quad < 0) or np.any(quad[:, 0] > fw - 1) or np.any(quad[:, 1] > fh - 1):
            raise ValueError(f"object leaves the frame at frame {i}")
        inv_view = to_base @ np.linalg.inv(view)  # frame pixels -> base pixels
        seen = transport_corners(inv_view, frame_box)
        if np.any(seen < 0) or np.any(seen[:, 0] > base.shape[1] - 1) or np.any(seen[:, 1] > base.shape[0] - 1):
            raise ValueError(f"view leaves the base image at frame {i}")
        frame = warp_homography(base, inv_view, frame_shape)
        if ch.blur_sigma > 0:
            frame = gaussian_filter(frame, ch.blur_sigma)
        frame = ch.gain * frame + ch.bias
        if ch.occluded(i):
            if ch.occlusion_rect is not None:
                u0, v0, u1, v1 = ch.occlusion_rect
            else:
                m = ch.occlusion_margin
                (u0, v0), (u1, v1) = quad.min(axis=0) - m, quad.max(axis=0) + m
            r0, r1 = max(int(math.floor(v0)), 0), min(int(math.ceil(v1)) + 1, fh)
            c0, c1 = max(int(math.floor(u0)), 0), min(int(math.ceil(u1)) + 1, fw)
            frame[r0:r1, c0:c1] = ch.occlusion_value
        if ch.noise_sigma > 0:
            frame = frame + rng.normal(scale=ch.noise_sigma, size=frame.shape)
        frames.append(np.clip(frame, 0.0, 1.0))
        hs.append(h_gt)
        corners.append(quad)
        occluded.append(ch.occluded(i))
    return SyntheticSequence(frames, hs, corners, template_size, occluded)


# -- metrics ------------------------------------------------------------------------------

def alignment_error(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean Euclidean distance between corresponding corners."""
    pred, gt = np.asarray(pred, dtype=float), np.asarray(gt, dtype=float)
    if pred.shape != (4, 2) or gt.shape != (4, 2):
        raise ValueError("corner quads must be (4, 2) arrays")
    return float(np.mean(np.linalg.norm(pred - gt, axis=1)))


def precision_curve(errors, thresholds=ALIGNMENT_THRESHOLDS) -> np.ndarray:
    """Fraction of frames with error at most each threshold; NaN counts as a miss."""
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        raise ValueError("no errors to evaluate")
    e = np.where(np.isnan(e), np.inf, e)
    return np.array([np.mean(e <= t) for t in np.asarray(thresholds, dtype=float)])


def avg_precision(curve) -> float:
    return float(np.mean(curve))


def grid_points(box: np.ndarray, n: int = 10) -> np.ndarray:
    lo, hi = box.min(axis=0), box.max(axis=0)
    u, v = np.meshgrid(np.linspace(lo[0], hi[0], n), np.linspace(lo[1], hi[1], n))
    return np.stack([u.ravel(), v.ravel()], axis=1)


def homography_discrepancy(h_hat: np.ndarray, h_gt: np.ndarray, box: np.ndarray | None = None,
                           n: int = 10) -> float:
    """Mean distance moved by an ``n`` x ``n`` grid on ``box`` under ``H_gt^-1 H_hat``."""
    box = box_corners(126) if box is None else np.asarray(box, dtype=float)
    pts = grid_points(box, n)
    moved = transport_points(invert(h_gt) @ normalize(h_hat), pts)
    return float(np.mean(np.linalg.norm(moved - pts, axis=1)))


def transport_points(h: np.ndarray, pts: np.ndarray) -> np.ndarray:
    w = h[2, 0] * pts[:, 0] + h[2, 1] * pts[:, 1] + h[2, 2]
    u = (h[0, 0] * pts[:, 0] + h[0, 1] * pts[:, 1] + h[0, 2]) / w
    v = (h[1, 0] * pts[:, 0] + h[1, 1] * pts[:, 1] + h[1, 2]) / w
    return np.stack([u, v], axis=1)


def hsr(scores, thresholds=ALIGNMENT_THRESHOLDS) -> np.ndarray:
    return precision_curve(scores, thresholds)


def polygon_area(poly: np.ndarray) -> float:
    """Signed shoelace area (positive for counter-clockwise in a y-up frame)."""
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(poly: np.ndarray) -> np.ndarray:
    poly = np.asarray(poly, dtype=float)
    a = polygon_area(poly)
    if abs(a) < 1e-12:
        return poly.mean(axis=0)
    x, y = poly[:, 0], poly[:, 1]
    x1, y1 = np.roll(x, -1), np.roll(y, -1)
    cross = x * y1 - x1 * y
    return np.array([np.sum((x + x1) * cross), np.sum((y + y1) * cross)]) / (6.0 * a)


def is_convex(poly: np.ndarray) -> bool:
    """True for a simple convex polygon (no self-intersection, consistent turning)."""
    p = np.asarray(poly, dtype=float)
    d1 = np.roll(p, -1, axis=0) - p
    d2 = np.roll(d1, -1, axis=0)
    cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    if not (np.all(cross > 0) or np.all(cross < 0)):
        return False
    # a star-shaped pentagram turns consistently too; total turning must be one loop
    angles = np.arctan2(cross, np.sum(d1 * d2, axis=1))
    return abs(abs(angles.sum()) - 2 * math.pi) < 1e-6


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Counter-clockwise hull by the monotone chain."""
    pts = sorted(map(tuple, np.asarray(points, dtype=float)))
    if len(pts) <= 2:
        return np.array(pts)

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and _cross(out[-2], out[-1], p) <= 0:
                out.pop()
            out.append(p)
        return out

    lower, upper = half(pts), half(reversed(pts))
    return np.array(lower[:-1] + upper[:-1])


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _ccw(poly: np.ndarray) -> np.ndarray:
    return poly if polygon_area(poly) >= 0 else poly[::-1]


def clip_polygon(subject: np.ndarray, clipper: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clipping of ``subject`` by the convex ``clipper``."""
    out = [tuple(p) for p in _ccw(np.asarray(subject, dtype=float))]
    clip = _ccw(np.asarray(clipper, dtype=float))
    for i in range(len(clip)):
        a, b = clip[i], clip[(i + 1) % len(clip)]
        inp, out = out, []
        if not inp:
            break
        for j in range(len(inp)):
            p, q = inp[j], inp[(j + 1) % len(inp)]
            p_in, q_in = _cross(a, b, p) >= 0, _cross(a, b, q) >= 0
            if p_in:
                out.append(p)
            if p_in != q_in:
                dp, dq = _cross(a, b, p), _cross(a, b, q)
                s = dp / (dp - dq)
                out.append((p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])))
    return np.array(out).reshape(-1, 2)


def iou(a: np.ndarray, b: np.ndarray) -> tuple[float, bool]:
    """Intersection over union of two quads and whether a hull substitute was used.

    Non-convex or self-intersecting quads are replaced by their convex hulls.
    """
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    flagged = False
    if not is_convex(a):
        a, flagged = convex_hull(a), True
    if not is_convex(b):
        b, flagged = convex_hull(b), True
    inter = clip_polygon(a, b)
    area_i = abs(polygon_area(inter)) if len(inter) >= 3 else 0.0
    union = abs(polygon_area(a)) + abs(polygon_area(b)) - area_i
    return (area_i / union if union > 0 else 0.0), flagged


def centroid_precision(preds, gts, thresholds=ALIGNMENT_THRESHOLDS) -> np.ndarray:
    dist = [float(np.linalg.norm(polygon_centroid(p) - polygon_centroid(g))) for p, g in zip(preds, gts)]
    return precision_curve(dist, thresholds)


def success_rate(ious, thresholds=IOU_THRESHOLDS) -> np.ndarray:
    """Fraction of frames whose overlap exceeds each threshold (nonincreasing)."""
    v = np.asarray(ious, dtype=float)
    if v.size == 0:
        raise ValueError("no overlaps to evaluate")
    return np.array([np.mean(v > t) for t in np.asarray(thresholds, dtype=float)])


@dataclass
class RobustnessReport:
    runs: list[int]
    histogram: dict[int, int]
    short_ratio: float  # share of runs shorter than the report length
    report_length: int


def robustness_histogram(ious, fail_threshold: float = 0.2, report_length: int = 10) -> RobustnessReport:
    """Lengths of maximal runs of frames with overlap above ``fail_threshold``."""
    v = np.asarray(ious, dtype=float)
    if v.size == 0:
        raise ValueError("no overlaps to evaluate")
    runs, current = [], 0
    for ok in v > fail_threshold:
        if ok:
            current += 1
        elif current:
            runs.append(current)
            current = 0
    if current:
        runs.append(current)
    short = sum(r < report_length for r in runs) / len(runs) if runs else 0.0
    return RobustnessReport(runs, dict(sorted(Counter(runs).items())), short, report_length)


# -- evaluation reports ---------------------------------------------------------------

@dataclass
class EvalReport:
    errors: np.ndarray
    precision: np.ndarray
    avg_precision: float
    hsr: np.ndarray | None
    avg_hsr: float | None
    centroid: np.ndarray
    avg_centroid: float
    ious: np.ndarray
    success: np.ndarray
    avg_success: float
    robustness: RobustnessReport
    iou_flagged: int = 0

    def curves_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "precision", "hsr", "centroid_precision"])
        for i, t in enumerate(ALIGNMENT_THRESHOLDS):
            w.writerow([repr(float(t)), repr(float(self.precision[i])),
                        "" if self.hsr is None else repr(float(self.hsr[i])),
                        repr(float(self.centroid[i]))])
        w.writerow([])
        w.writerow(["iou_threshold", "success_rate"])
        for t, s in zip(IOU_THRESHOLDS, self.success):
            w.writerow([repr(float(t)), repr(float(s))])
        return buf.getvalue()

    def summary(self) -> str:
        lines = [
            f"frames            {len(self.errors)}",
            f"mean error (px)   {np.mean(self.errors):.3f}",
            f"avg precision     {self.avg_precision:.4f}",
            f"avg HSR (proxy)   {'n/a' if self.avg_hsr is None else f'{self.avg_hsr:.4f}'}",
            f"avg CP            {self.avg_centroid:.4f}",
            f"avg SR            {self.avg_success:.4f}",
            f"runs (IoU > 0.2)  {self.robustness.runs}",
            f"short-run ratio   {self.robustness.short_ratio:.4f}",
        ]
        if self.iou_flagged:
            lines.append(f"hull-substituted IoU frames {self.iou_flagged}")
        return "\n".join(lines)


def evaluate(pred_corners, gt_corners, pred_h=None, gt_h=None, template_size: int = 127) -> EvalReport:
    if len(pred_corners) != len(gt_corners) or not gt_corners:
        raise ValueError("prediction and ground truth lengths differ or are empty")
    errors = np.array([alignment_error(p, g) for p, g in zip(pred_corners, gt_corners)])
    prec = precision_curve(errors)
    hsr_curve = None
    if pred_h is not None and gt_h is not None:
        box = box_corners(template_size - 1)
        hsr_curve = hsr([homography_discrepancy(a, b, box) for a, b in zip(pred_h, gt_h)])
    pairs = [iou(p, g) for p, g in zip(pred_corners, gt_corners)]
    ious = np.array([v for v, _ in pairs])
    cp = centroid_precision(pred_corners, gt_corners)
    sr = success_rate(ious)
    return EvalReport(
        errors=errors, precision=prec, avg_precision=avg_precision(prec),
        hsr=hsr_curve, avg_hsr=None if hsr_curve is None else avg_precision(hsr_curve),
        centroid=cp, avg_centroid=avg_precision(cp),
        ious=ious, success=sr, avg_success=float(np.mean(sr)),
        robustness=robustness_histogram(ious), iou_flagged=sum(f for _, f in pairs),
    )


# -- files ----------------------------------------------------------------------------------

def format_corners(quad: np.ndarray, extra: SequenceT[float] = ()) -> str:
    values = list(np.asarray(quad, dtype=float).ravel()) + list(extra)
    return " ".join(repr(float(v)) for v in values)


def write_ground_truth(stream: TextIO, quads) -> None:
    for q in quads:
        stream.write(format_corners(q) + "\n")


def read_ground_truth(stream: TextIO, columns: int = 8) -> list[np.ndarray]:
    """One quad per line: ``u1 v1 ... u4 v4`` (extra trailing columns allowed via ``columns``)."""
    quads = []
    for lineno, line in enumerate(stream, 1):
        if not line.strip():
            continue
        fields = line.replace(",", " ").split()
        if len(fields) != columns:
            raise ValueError(f"line {lineno}: expected {columns} numbers, got {len(fields)}")
        try:
            values = [float(f) for f in fields]
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric field") from None
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"line {lineno}: non-finite value")
        quads.append(np.array(values[:8]).reshape(4, 2))
    return quads


def list_frames(directory: str | os.PathLike) -> list[Path]:
    paths = sorted(Path(directory).glob("*.pgm"))
    if not paths:
        raise FileNotFoundError(f"no .pgm frames in {directory}")
    return paths


def load_frames(directory: str | os.PathLike) -> list[np.ndarray]:
    return [read_pgm(p) for p in list_frames(directory)]


def save_sequence(seq: SyntheticSequence, directory: str | os.PathLike) -> None:
    """Frames as ``00000.pgm``..., ``groundtruth.txt`` corners and ``homographies.txt``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(seq.frames):
        write_pgm(out / f"{i:05d}.pgm", frame)
    with open(out / "groundtruth.txt", "w") as f:
        write_ground_truth(f, seq.corners)
    with open(out / "homographies.txt", "w") as f:
        write_homographies(f, seq.homographies)

