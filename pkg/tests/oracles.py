"""Independent reference computations used by several test modules."""
from __future__ import annotations

import numpy as np


def bilinear_oracle(img: np.ndarray, u: float, v: float) -> float:
    """Four-term weighted sum with zero outside the image."""
    h, w = img.shape
    x0, y0 = int(np.floor(u)), int(np.floor(v))
    fx, fy = u - x0, v - y0

    def px(x, y):
        return float(img[y, x]) if 0 <= x < w and 0 <= y < h else 0.0

    return ((1 - fx) * (1 - fy) * px(x0, y0) + fx * (1 - fy) * px(x0 + 1, y0)
            + (1 - fx) * fy * px(x0, y0 + 1) + fx * fy * px(x0 + 1, y0 + 1))


def _corr(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    return float((a * b).sum() / np.sqrt((a * a).sum() * (b * b).sum()))


def _parabola(y0: float, y1: float, y2: float) -> float:
    den = y0 - 2 * y1 + y2
    return 0.0 if den >= 0 else 0.5 * (y0 - y2) / den


def row_shift(ref: np.ndarray, moved: np.ndarray, cols: slice) -> float:
    """Circular row shift s (subpixel) with ``moved ~ roll(ref, s, axis=0)``."""
    n = ref.shape[0]
    shifts = np.arange(-(n // 2), n // 2 + 1)
    scores = np.array([_corr(np.roll(ref, s, axis=0)[:, cols], moved[:, cols]) for s in shifts])
    k = int(np.argmax(scores))
    if 0 < k < len(scores) - 1:
        return shifts[k] + _parabola(scores[k - 1], scores[k], scores[k + 1])
    return float(shifts[k])


def col_shift(ref: np.ndarray, moved: np.ndarray, max_shift: int, keep: slice) -> float:
    """Column shift d (subpixel) with ``moved[:, j] ~ ref[:, j - d]`` over columns ``keep`` of ``moved``."""
    idx = np.arange(ref.shape[1])[keep]
    shifts = np.arange(-max_shift, max_shift + 1)
    scores = []
    for d in shifts:
        j = idx[(idx - d >= 0) & (idx - d < ref.shape[1])]
        scores.append(_corr(ref[:, j - d], moved[:, j]))
    scores = np.array(scores)
    k = int(np.argmax(scores))
    if 0 < k < len(scores) - 1:
        return shifts[k] + _parabola(scores[k - 1], scores[k], scores[k + 1])
    return float(shifts[k])
