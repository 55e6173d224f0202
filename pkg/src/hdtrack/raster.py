"""Images, bilinear resampling and the rotation-scale equivariant warp.

Images are 2-D float64 arrays with intensities in [0, 1], indexed
``img[row, col]``.  Pixel coordinates are ``(u, v) = (col, row)`` and an
integer coordinate addresses the pixel center, so the identity warp is
exact.  Warps are inverse: output pixel ``q`` reads the source at ``H q``.

*Centered* coordinates put the origin on the image center
``((w - 1) / 2, (h - 1) / 2)``; tracking homographies live in those.
"""
from __future__ import annotations

import math

import numpy as np

from . import kernels
from .geometry import normalize, translation

POLICIES = {
    "zero": kernels.ZERO,
    "clamp": kernels.CLAMP,
    "circular_vertical": kernels.CIRCULAR_VERTICAL,
}


class PGMError(ValueError):
    pass


def as_image(img) -> np.ndarray:
    a = np.ascontiguousarray(img, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"expected a non-empty 2-D image, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("image has non-finite pixels")
    return a


def _policy(policy: str) -> int:
    try:
        return POLICIES[policy]
    except KeyError:
        raise ValueError(f"unknown out-of-bounds policy {policy!r}") from None


def sample_bilinear(img: np.ndarray, u, v, policy: str = "zero"):
    """Bilinear interpolation at pixel coordinates ``(u, v)`` (scalars or arrays)."""
    img = as_image(img)
    out = kernels.sample_bilinear(img, np.asarray(u, float), np.asarray(v, float), _policy(policy))
    return float(out) if np.ndim(out) == 0 else out


def warp_homography(
    img: np.ndarray, h: np.ndarray, out_shape: tuple[int, int] | None = None, policy: str = "zero"
) -> np.ndarray:
    """Inverse warp: ``out[q] = img[h q]`` in pixel coordinates."""
    img = as_image(img)
    h = normalize(h)
    out_h, out_w = img.shape if out_shape is None else out_shape
    return kernels.warp_homography(img, np.ascontiguousarray(h), int(out_h), int(out_w), _policy(policy))


def center_of(shape: tuple[int, int]) -> tuple[float, float]:
    """Pixel coordinates ``(u, v)`` of the image center."""
    return (shape[1] - 1) / 2.0, (shape[0] - 1) / 2.0


def centering(shape: tuple[int, int]) -> np.ndarray:
    """Map from centered coordinates to pixel coordinates."""
    cu, cv = center_of(shape)
    return translation(cu, cv)


def warp_centered(
    img: np.ndarray, h: np.ndarray, out_shape: tuple[int, int] | None = None, policy: str = "zero"
) -> np.ndarray:
    """Inverse warp with ``h`` acting on centered coordinates of both images."""
    img = as_image(img)
    out_shape = img.shape if out_shape is None else out_shape
    pixel_h = centering(img.shape) @ np.asarray(h, dtype=float) @ np.linalg.inv(centering(out_shape))
    return warp_homography(img, pixel_h, out_shape, policy)


def move_centered(img: np.ndarray, h: np.ndarray, out_shape=None, policy: str = "zero") -> np.ndarray:
    """Forward-move content: the result shows ``img[q]`` at ``h q`` (centered coordinates)."""
    return warp_centered(img, np.linalg.inv(h), out_shape, policy)


def crop_centered(img: np.ndarray, size: int, center: tuple[float, float] = (0.0, 0.0),
                  policy: str = "zero") -> np.ndarray:
    """``size`` x ``size`` patch whose center sits at centered offset ``center``."""
    return warp_centered(img, translation(*center), (size, size), policy)


# -- rotation-scale equivariant warping ----------------------------------------

def rsew_point(mu1, mu2, n: float, t_hat=(0.0, 0.0)):
    """Source point for warped coordinate ``(mu1, mu2)`` relative to the center.

    Radius ``(n/4)^(2 mu1 / n)`` and angle ``4 pi mu2 / n`` around ``t_hat``.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    radius = (n / 4.0) ** (2.0 * np.asarray(mu1, float) / n)
    angle = 4.0 * math.pi * np.asarray(mu2, float) / n
    return t_hat[0] + radius * np.cos(angle), t_hat[1] + radius * np.sin(angle)


def rsew_grid(n: int, t_hat=(0.0, 0.0), centered: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Source coordinates ``(u, v)`` for every pixel of an ``n`` x ``n`` warped image.

    Columns index ``mu1`` (log radius) and rows ``mu2`` (angle).  With
    ``centered=True`` column ``j`` carries ``mu1 = j - n // 2`` so scales
    below one are representable; ``centered=False`` uses ``mu1 = j``.
    The coordinates are relative to the object center.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    cols = np.arange(n, dtype=float) - (n // 2 if centered else 0)
    rows = np.arange(n, dtype=float)
    mu1, mu2 = np.meshgrid(cols, rows)
    return rsew_point(mu1, mu2, n, t_hat)


def rsew_warp(img: np.ndarray, t_hat=(0.0, 0.0), centered: bool = True) -> np.ndarray:
    """Rotation-scale equivariant resampling of a square image about its center (+ ``t_hat``).

    A rotation of the content by ``theta`` becomes a circular shift of
    ``n theta / (4 pi)`` rows; a scaling by ``c`` becomes a shift of
    ``(n / 2) ln c / ln(n / 4)`` columns.
    """
    img = as_image(img)
    if img.shape[0] != img.shape[1]:
        raise ValueError(f"equivariant warp needs a square image, got {img.shape}")
    n = img.shape[0]
    u, v = rsew_grid(n, t_hat, centered)
    cu, cv = center_of(img.shape)
    return kernels.sample_bilinear(img, u + cu, v + cv, kernels.ZERO)


def recover_scale_rotation(mu_hat, n: float) -> tuple[float, float]:
    """Scale and rotation corresponding to a shift ``mu_hat`` of the warped image."""
    if n <= 0:
        raise ValueError("n must be positive")
    gamma = (n / 4.0) ** (2.0 * mu_hat[0] / n)
    theta = wrap_angle(4.0 * math.pi * mu_hat[1] / n)
    return gamma, theta


def shift_for_scale_rotation(gamma: float, theta: float, n: float) -> tuple[float, float]:
    """Inverse of :func:`recover_scale_rotation` (theta taken as given, not wrapped)."""
    return (n / 2.0) * math.log(gamma) / math.log(n / 4.0), n * theta / (4.0 * math.pi)


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    t = math.fmod(theta + math.pi, 2.0 * math.pi)
    if t <= 0:
        t += 2.0 * math.pi
    return t - math.pi


def pad_for_correlation(warped: np.ndarray, horizontal: int = 0) -> np.ndarray:
    """Extend a warped image by ``n // 2`` rows circularly on top and bottom
    and by ``horizontal`` zero columns left and right."""
    warped = as_image(warped)
    if warped.shape[0] != warped.shape[1]:
        raise ValueError("expected a square warped image")
    n = warped.shape[0]
    pad = n // 2
    rows = np.arange(-pad, n + pad) % n
    out = warped[rows]
    if horizontal > 0:
        out = np.pad(out, ((0, 0), (horizontal, horizontal)))
    return np.ascontiguousarray(out)


def hamming_window(shape: tuple[int, int]) -> np.ndarray:
    return np.outer(np.hamming(shape[0]), np.hamming(shape[1]))


# -- 8-bit PGM (P5) ----------------------------------------------------------

def _tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, i = [], 0
    while len(tokens) < count:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < len(data) and not data[i : i + 1].isspace() and data[i : i + 1] != b"#":
            i += 1
        if start == i:
            raise PGMError("truncated PGM header")
        tokens.append(data[start:i])
    return tokens, i


def decode_pgm(data: bytes) -> tuple[np.ndarray, int]:
    """Decode a binary P5 image to a uint8 ``(h, w)`` array and its maxval."""
    (magic, w, h, maxval), end = _tokens(data, 4)
    if magic != b"P5":
        raise PGMError(f"not a binary PGM (magic {magic!r})")
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise PGMError("malformed PGM header") from None
    if w <= 0 or h <= 0:
        raise PGMError("PGM has empty dimensions")
    if not 0 < maxval < 256:
        raise PGMError(f"only 8-bit PGM supported (maxval {maxval})")
    if end >= len(data) or not data[end : end + 1].isspace():
        raise PGMError("missing whitespace after PGM header")
    body = data[end + 1 : end + 1 + w * h]
    if len(body) != w * h:
        raise PGMError(f"PGM payload has {len(body)} bytes, expected {w * h}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy(), maxval


def encode_pgm(pixels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8 or pixels.ndim != 2:
        raise ValueError("encode_pgm expects a 2-D uint8 array")
    h, w = pixels.shape
    return b"P5\n%d %d\n255\n" % (w, h) + pixels.tobytes()


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def read_pgm(path_or_file) -> np.ndarray:
    """Read an 8-bit PGM as a float image in [0, 1]."""
    if hasattr(path_or_file, "read"):
        data = path_or_file.read()
    else:
        with open(path_or_file, "rb") as f:
            data = f.read()
    pixels, maxval = decode_pgm(data)
    return pixels.astype(np.float64) / maxval


def write_pgm(path_or_file, img: np.ndarray) -> None:
    data = encode_pgm(to_uint8(img))
    if hasattr(path_or_file, "write"):
        path_or_file.write(data)
    else:
        with open(path_or_file, "wb") as f:
            f.write(data)
