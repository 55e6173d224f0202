"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``."""
from __future__ import annotations

import numpy as np

ZERO, CLAMP, CIRCULAR_VERTICAL = 0, 1, 2


def _fetch(img: np.ndarray, ix: np.ndarray, iy: np.ndarray, policy: int) -> np.ndarray:
    h, w = img.shape
    if policy == CLAMP:
        return img[np.clip(iy, 0, h - 1), np.clip(ix, 0, w - 1)]
    if policy == CIRCULAR_VERTICAL:
        iy = np.mod(iy, h)
    inside = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    out = np.zeros(ix.shape)
    out[inside] = img[iy[inside], ix[inside]]
    return out


def sample_bilinear(img: np.ndarray, u, v, policy: int = ZERO) -> np.ndarray:
    img = np.ascontiguousarray(img, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError("u and v must have the same size")
    shape = u.shape
    u = u.ravel()
    v = v.ravel()
    finite = np.isfinite(u) & np.isfinite(v)
    u = np.where(finite, u, 0.0)
    v = np.where(finite, v, 0.0)
    x0f = np.floor(u)
    y0f = np.floor(v)
    fx = u - x0f
    fy = v - y0f
    x0 = x0f.astype(np.int64)
    y0 = y0f.astype(np.int64)
    out = (1.0 - fy) * ((1.0 - fx) * _fetch(img, x0, y0, policy) + fx * _fetch(img, x0 + 1, y0, policy)) + fy * (
        (1.0 - fx) * _fetch(img, x0, y0 + 1, policy) + fx * _fetch(img, x0 + 1, y0 + 1, policy)
    )
    out[~finite] = 0.0
    return out.reshape(shape)


def warp_homography(img: np.ndarray, H: np.ndarray, out_h: int, out_w: int, policy: int = ZERO) -> np.ndarray:
    H = np.asarray(H, dtype=np.float64)
    rows, cols = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    w = H[2, 0] * cols + H[2, 1] * rows + H[2, 2]
    degenerate = np.abs(w) < 1e-12
    w = np.where(degenerate, 1.0, w)
    x = (H[0, 0] * cols + H[0, 1] * rows + H[0, 2]) / w
    y = (H[1, 0] * cols + H[1, 1] * rows + H[1, 2]) / w
    out = sample_bilinear(img, x, y, policy)
    out[degenerate] = 0.0
    return out
