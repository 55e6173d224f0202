"""Homographies split into a similarity factor and a residual factor.

A homography is parameterized by eight numbers
``x = [t1, t2, gamma, theta, k1, k2, nu1, nu2]`` and built as the product

    H(x) = S(t1, t2, gamma, theta) @ L(k1, k2, nu1, nu2)

with ``S = [[g cos, -g sin, t1], [g sin, g cos, t2], [0, 0, 1]]`` and
``L = [[k1, k2, 0], [0, 1/k1, 0], [nu1, nu2, 1]]``.

Homographies are plain ``(3, 3)`` float arrays normalized so that
``H[2, 2] == 1``.  Corner quads are ``(4, 2)`` arrays ordered left-top,
right-top, right-bottom, left-bottom.
"""
from __future__ import annotations

import math
from dataclasses import astuple, dataclass, replace
from typing import Iterable, TextIO

import numpy as np

EPS_DET = 1e-12
EPS_W = 1e-9

PARAM_NAMES = ("t1", "t2", "gamma", "theta", "k1", "k2", "nu1", "nu2")


class DegenerateHomographyError(ValueError):
    """Matrix is singular, not normalizable, or outside the canonical branch."""


class PointAtInfinityError(ValueError):
    """A mapped point landed on (or next to) the line at infinity."""


@dataclass(frozen=True)
class TransformParams:
    t1: float = 0.0
    t2: float = 0.0
    gamma: float = 1.0
    theta: float = 0.0
    k1: float = 1.0
    k2: float = 0.0
    nu1: float = 0.0
    nu2: float = 0.0

    @classmethod
    def from_array(cls, values: Iterable[float]) -> "TransformParams":
        values = [float(v) for v in values]
        if len(values) != 8:
            raise ValueError(f"expected 8 parameters, got {len(values)}")
        return cls(*values)

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    def similarity(self) -> "TransformParams":
        """Copy keeping only translation, scale and rotation."""
        return TransformParams(self.t1, self.t2, self.gamma, self.theta)

    def residual(self) -> "TransformParams":
        """Copy keeping only anisotropic scale, shear and perspective."""
        return TransformParams(k1=self.k1, k2=self.k2, nu1=self.nu1, nu2=self.nu2)

    def replace(self, **changes: float) -> "TransformParams":
        return replace(self, **changes)


IDENTITY_PARAMS = TransformParams()


def merge_params(similarity: TransformParams, residual: TransformParams) -> TransformParams:
    """Combine the similarity fields of one vector with the residual fields of another."""
    return TransformParams(
        similarity.t1, similarity.t2, similarity.gamma, similarity.theta,
        residual.k1, residual.k2, residual.nu1, residual.nu2,
    )


def _check_params(x: TransformParams) -> None:
    arr = x.as_array()
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite transform parameters: {x}")
    if x.gamma <= 0:
        raise ValueError(f"gamma must be positive, got {x.gamma}")
    if x.k1 == 0:
        raise ValueError("k1 must be non-zero")


def similarity_matrix(t1: float, t2: float, gamma: float, theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array(
        [[gamma * c, -gamma * s, t1], [gamma * s, gamma * c, t2], [0.0, 0.0, 1.0]]
    )


def residual_matrix(k1: float, k2: float, nu1: float, nu2: float) -> np.ndarray:
    return np.array([[k1, k2, 0.0], [0.0, 1.0 / k1, 0.0], [nu1, nu2, 1.0]])


def build_homography(x: TransformParams) -> np.ndarray:
    _check_params(x)
    return similarity_matrix(x.t1, x.t2, x.gamma, x.theta) @ residual_matrix(
        x.k1, x.k2, x.nu1, x.nu2
    )


def normalize(m: np.ndarray, eps_det: float = EPS_DET) -> np.ndarray:
    """Validate a 3x3 matrix and scale it so that ``m[2, 2] == 1``.

    Matrices with a zero (3, 3) entry are returned unscaled; they are valid
    homographies that just cannot take the canonical form.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"homography must be 3x3, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DegenerateHomographyError("homography has non-finite entries")
    if m[2, 2] != 0.0:
        m = m / m[2, 2]
    if abs(np.linalg.det(m)) <= eps_det:
        raise DegenerateHomographyError(f"singular homography (det={np.linalg.det(m):.3g})")
    return m


def decompose(h: np.ndarray, eps: float = 1e-15) -> tuple[TransformParams, TransformParams]:
    """Split ``h`` into ``(similarity, residual)`` parameter vectors.

    Only orientation-preserving matrices are representable (gamma > 0,
    k1 > 0); mirrored or rank-deficient ones raise
    :class:`DegenerateHomographyError`.
    """
    m = np.asarray(h, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"homography must be 3x3, got shape {m.shape}")
    if abs(m[2, 2]) <= eps:
        raise DegenerateHomographyError("H[2,2] is zero: object at infinity")
    m = m / m[2, 2]
    t = m[:2, 2]
    nu = m[2, :2]
    a = m[:2, :2] - np.outer(t, nu)
    det_a = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    if not det_a > 0:
        raise DegenerateHomographyError(
            f"det of the translation-corrected block is {det_a:.3g}; not representable"
        )
    gamma = math.sqrt(det_a)
    theta = math.atan2(a[1, 0], a[0, 0])
    if theta == -math.pi:
        theta = math.pi
    c, s = math.cos(theta), math.sin(theta)
    # R^T A / gamma = [[k1, k2], [0, 1/k1]]
    k1 = math.hypot(a[0, 0], a[1, 0]) / gamma
    k2 = (c * a[0, 1] + s * a[1, 1]) / gamma
    similarity = TransformParams(float(t[0]), float(t[1]), gamma, theta)
    residual = TransformParams(k1=k1, k2=k2, nu1=float(nu[0]), nu2=float(nu[1]))
    return similarity, residual


def decompose_params(h: np.ndarray) -> TransformParams:
    """Full eight-parameter vector of ``h``."""
    return merge_params(*decompose(h))


def compose(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a @ b``, renormalized; maps through ``b`` first."""
    return normalize(np.asarray(a, dtype=float) @ np.asarray(b, dtype=float))


def invert(h: np.ndarray, eps_det: float = EPS_DET) -> np.ndarray:
    h = normalize(h, eps_det)
    return normalize(np.linalg.inv(h), eps_det=0.0)


def translation(tx: float, ty: float) -> np.ndarray:
    return np.array([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])


def apply_homography(h: np.ndarray, points: np.ndarray, eps_w: float = EPS_W) -> np.ndarray:
    """Map ``(..., 2)`` points through ``h`` with projective division."""
    pts = np.asarray(points, dtype=float)
    h = np.asarray(h, dtype=float)
    x = h[0, 0] * pts[..., 0] + h[0, 1] * pts[..., 1] + h[0, 2]
    y = h[1, 0] * pts[..., 0] + h[1, 1] * pts[..., 1] + h[1, 2]
    w = h[2, 0] * pts[..., 0] + h[2, 1] * pts[..., 1] + h[2, 2]
    if np.any(np.abs(w) < eps_w):
        raise PointAtInfinityError("mapped point is at infinity")
    return np.stack([x / w, y / w], axis=-1)


def box_corners(width: float, height: float | None = None) -> np.ndarray:
    """Corners of an axis-aligned box centered at the origin.

    ``width`` is the distance between the first and last pixel centers, so
    a 127-pixel template gives ``box_corners(126)`` with corners at +-63.
    """
    height = width if height is None else height
    hw, hh = width / 2.0, height / 2.0
    return np.array([[-hw, -hh], [hw, -hh], [hw, hh], [-hw, hh]])


def check_quad(quad: np.ndarray, eps: float = 1e-9) -> np.ndarray:
    """Validate a corner quad; raises on non-finite or collinear corners."""
    q = np.asarray(quad, dtype=float)
    if q.shape != (4, 2):
        raise ValueError(f"corner quad must have shape (4, 2), got {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValueError("corner quad has non-finite coordinates")
    scale = max(1.0, float(np.abs(q).max()))
    for i in range(4):
        a, b, c = q[i], q[(i + 1) % 4], q[(i + 2) % 4]
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(cross) <= eps * scale * scale:
            raise DegenerateHomographyError("three corners of the quad are collinear")
    return q


def transport_corners(h: np.ndarray, quad: np.ndarray, eps_w: float = EPS_W) -> np.ndarray:
    q = np.asarray(quad, dtype=float)
    if q.shape != (4, 2) or not np.all(np.isfinite(q)):
        raise ValueError("corner quad must be a finite (4, 2) array")
    return apply_homography(h, q, eps_w)


def to_homogeneous(quad: np.ndarray) -> np.ndarray:
    """``(4, 2)`` quad as a ``(3, 4)`` array of homogeneous columns."""
    q = np.asarray(quad, dtype=float)
    return np.vstack([q.T, np.ones(len(q))])


# -- text serialization: 9 row-major numbers per line ----------------------

def format_homography(h: np.ndarray) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(h, dtype=float).ravel())


def parse_homography(line: str) -> np.ndarray:
    fields = line.split()
    if len(fields) != 9:
        raise ValueError(f"expected 9 numbers per homography line, got {len(fields)}")
    return np.array([float(f) for f in fields]).reshape(3, 3)


def write_homographies(stream: TextIO, homographies: Iterable[np.ndarray]) -> None:
    for h in homographies:
        stream.write(format_homography(h) + "\n")


def read_homographies(stream: TextIO) -> list[np.ndarray]:
    return [parse_homography(line) for line in stream if line.strip()]
