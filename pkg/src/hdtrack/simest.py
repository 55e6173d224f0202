"""Similarity estimation: translation first, then scale and rotation.

Matching uses zero-normalized cross-correlation (ZNCC).  Translation comes
from a strided response map with per-cell subpixel offsets; scale and
rotation come from correlating the equivariant (log-polar) warps of the
template and of the search patch recentered on the translation estimate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sp_fft

from .geometry import similarity_matrix
from .raster import (
    as_image,
    crop_centered,
    hamming_window,
    move_centered,
    pad_for_correlation,
    recover_scale_rotation,
    rsew_warp,
    warp_centered,
)


class DegeneratePatchError(ValueError):
    """A patch has (numerically) zero variance, so ZNCC is undefined."""


def zncc_stack(search: np.ndarray, templates, weights: np.ndarray | None = None) -> np.ndarray:
    """ZNCC of each template at every fully overlapping placement in ``search``.

    Returns ``(len(templates), rows, cols)``; entry ``[k, i, j]`` scores
    template ``k`` with its top-left pixel on ``search[i, j]``.  All
    templates share one shape and one optional nonnegative ``weights``
    array, which turns the score into a weighted correlation.  Scores lie
    in [-1, 1]; windows of ``search`` without variance score 0.
    """
    search = as_image(search)
    templates = [as_image(t) for t in templates]
    shape = templates[0].shape
    if any(t.shape != shape for t in templates):
        raise ValueError("templates must share one shape")
    if shape[0] > search.shape[0] or shape[1] > search.shape[1]:
        raise ValueError("template must not be larger than the search image")
    w = np.ones(shape) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != shape or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be nonnegative, template-shaped and not all zero")
    w = w / w.sum()
    full = (search.shape[0] + shape[0] - 1, search.shape[1] + shape[1] - 1)
    fshape = [sp_fft.next_fast_len(d, real=True) for d in full]
    valid = (slice(shape[0] - 1, search.shape[0]), slice(shape[1] - 1, search.shape[1]))

    def xcorr(spectrum, kernel):
        k = sp_fft.rfft2(kernel[::-1, ::-1], fshape)
        return sp_fft.irfft2(spectrum * k, fshape)[valid]

    # shift the search so the local sums below do not cancel catastrophically
    s = search - search.mean()
    s_spec = sp_fft.rfft2(s, fshape)
    mean = xcorr(s_spec, w)
    sq = xcorr(sp_fft.rfft2(s * s, fshape), w)
    var = sq - mean * mean
    ok = var > 1e-10 * max(1e-12, float(np.max(np.abs(sq))))
    out = np.zeros((len(templates),) + mean.shape)
    for k, tpl in enumerate(templates):
        t = tpl - np.sum(w * tpl)
        energy = np.sum(w * t * t)
        if energy <= 1e-12 * max(1.0, float(np.abs(tpl).max()) ** 2):
            raise DegeneratePatchError("template has zero variance")
        num = xcorr(s_spec, w * t)
        out[k][ok] = num[ok] / np.sqrt(energy * var[ok])
    return np.clip(out, -1.0, 1.0)


def zncc_map(search: np.ndarray, template: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """Single-template :func:`zncc_stack`."""
    return zncc_stack(search, [template], weights)[0]


def quadratic_offset(y0: float, y1: float, y2: float) -> float:
    """Vertex of the parabola through (-1, y0), (0, y1), (1, y2), clipped to [-0.5, 0.5]."""
    den = y0 - 2.0 * y1 + y2
    if den >= 0:
        return 0.0
    return float(np.clip(0.5 * (y0 - y2) / den, -0.5, 0.5))


def subpixel_peak(scores: np.ndarray, i: int, j: int, wrap_rows: bool = False) -> tuple[float, float]:
    """Subpixel ``(row, col)`` offsets of a peak from independent 1-D quadratic fits."""
    rows, cols = scores.shape
    di = dj = 0.0
    if wrap_rows:
        di = quadratic_offset(scores[(i - 1) % rows, j], scores[i, j], scores[(i + 1) % rows, j])
    elif 0 < i < rows - 1:
        di = quadratic_offset(scores[i - 1, j], scores[i, j], scores[i + 1, j])
    if 0 < j < cols - 1:
        dj = quadratic_offset(scores[i, j - 1], scores[i, j], scores[i, j + 1])
    return di, dj


@dataclass
class ResponseMap:
    """Strided match scores with per-cell subpixel offsets.

    ``scores[r, c]`` belongs to the cell whose grid location is
    ``stride * (c - origin[1], r - origin[0])`` pixels from the search
    center; ``offsets[r, c]`` is ``(dx, dy)`` from that location to the
    best placement inside the cell.
    """

    scores: np.ndarray
    offsets: np.ndarray
    stride: int
    origin: tuple[int, int]

    def __post_init__(self) -> None:
        if self.scores.shape != self.offsets.shape[:2] or self.offsets.shape[2:] != (2,):
            raise ValueError("scores and offsets must share the grid shape")


def _bank_templates(template: np.ndarray, bank) -> tuple[list[np.ndarray], np.ndarray]:
    """Template copies rotated/scaled per ``bank`` plus a shared weight mask
    that keeps only the disk every copy covers."""
    n = template.shape[0]
    templates = [move_centered(template, similarity_matrix(0.0, 0.0, g, th)) for g, th in bank]
    radius = min(1.0, min(g for g, _ in bank)) * (n - 1) / 2.0
    yy, xx = np.mgrid[0:n, 0:n] - (n - 1) / 2.0
    return templates, (np.hypot(xx, yy) <= radius).astype(float)


def correlate(
    template: np.ndarray,
    search: np.ndarray,
    stride: int = 8,
    window: bool = False,
    bank=None,
) -> ResponseMap:
    """Dense ZNCC of ``template`` over ``search`` pooled into ``stride``-pixel cells.

    ``window`` weights the template with a Hamming profile.  ``bank`` is an
    optional sequence of ``(scale, rotation)`` pairs; the template is
    matched in each pose and every placement keeps its best score.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    template = as_image(template)
    if bank:
        templates, weights = _bank_templates(template, bank)
    else:
        templates, weights = [template], np.ones_like(template)
    if window:
        weights = weights * hamming_window(template.shape)
    stack = zncc_stack(search, templates, weights)
    winner = np.argmax(stack, axis=0)
    dense = np.take_along_axis(stack, winner[None], axis=0)[0]
    rows, cols = dense.shape
    cy, cx = (rows - 1) / 2.0, (cols - 1) / 2.0
    # displacement of each placement from the centered one, and its cell index
    cell_r = np.floor((np.arange(rows) - cy) / stride + 0.5).astype(int)
    cell_c = np.floor((np.arange(cols) - cx) / stride + 0.5).astype(int)
    half_r = int(min(-cell_r.min(), cell_r.max()))
    half_c = int(min(-cell_c.min(), cell_c.max()))
    cell_r = np.clip(cell_r, -half_r, half_r)
    cell_c = np.clip(cell_c, -half_c, half_c)
    scores = np.full((2 * half_r + 1, 2 * half_c + 1), -np.inf)
    offsets = np.zeros(scores.shape + (2,))
    for gr in range(-half_r, half_r + 1):
        rsel = np.flatnonzero(cell_r == gr)
        for gc in range(-half_c, half_c + 1):
            csel = np.flatnonzero(cell_c == gc)
            block = dense[rsel[0] : rsel[-1] + 1, csel[0] : csel[-1] + 1]
            bi, bj = np.unravel_index(np.argmax(block), block.shape)
            i, j = rsel[0] + bi, csel[0] + bj
            di, dj = subpixel_peak(stack[winner[i, j]], i, j)
            scores[gr + half_r, gc + half_c] = dense[i, j]
            offsets[gr + half_r, gc + half_c] = (j + dj - cx - stride * gc, i + di - cy - stride * gr)
    return ResponseMap(scores=scores, offsets=offsets, stride=stride, origin=(half_r, half_c))


def estimate_translation(rmap: ResponseMap) -> tuple[np.ndarray, float]:
    """Peak cell location plus its offset, relative to the search center.

    Ties go to the smallest row, then the smallest column.
    """
    r, c = np.unravel_index(np.argmax(rmap.scores), rmap.scores.shape)
    grid = rmap.stride * np.array([c - rmap.origin[1], r - rmap.origin[0]], dtype=float)
    return rmap.offsets[r, c] + grid, float(rmap.scores[r, c])


def _scale_margin(n: int, max_scale: float) -> int:
    return int(math.ceil((n / 2.0) * math.log(max_scale) / math.log(n / 4.0))) + 1


def estimate_scale_rotation(
    template: np.ndarray,
    search: np.ndarray,
    t_hat=(0.0, 0.0),
    max_scale: float = 1.5,
    window: bool = True,
) -> tuple[float, float, float]:
    """Scale and rotation of the object at ``t_hat`` in ``search`` relative to ``template``.

    Both patches are resampled to ``2 * (template edge // 2)`` pixels around
    the object center so the warp radius ``n / 4`` matches the template
    half-width.  Returns ``(gamma, theta, confidence)``.
    """
    template = as_image(template)
    if template.shape[0] != template.shape[1]:
        raise ValueError("template must be square")
    n = 2 * (template.shape[0] // 2)
    tpl = rsew_warp(crop_centered(template, n, policy="clamp"))
    srch = rsew_warp(crop_centered(search, n, center=tuple(t_hat)))
    margin = _scale_margin(n, max_scale)
    core = tpl[:, margin : n - margin]
    weights = np.outer(np.hamming(n), np.hamming(core.shape[1])) if window else None
    # placements beyond +-n/4 rows repeat the same angles, so skip them
    quarter = n // 4
    padded = pad_for_correlation(srch, horizontal=margin)
    half = n // 2
    padded = padded[half - quarter : half + n + quarter]
    try:
        scores = zncc_map(padded, core, weights)
    except DegeneratePatchError:
        raise DegeneratePatchError("warped template has zero variance") from None
    i, j = np.unravel_index(np.argmax(scores), scores.shape)
    di, dj = subpixel_peak(scores, i, j)
    d_mu1 = j + dj - 2 * margin
    d_mu2 = i + di - quarter
    gamma, theta = recover_scale_rotation((d_mu1, d_mu2), n)
    return gamma, theta, float(scores[i, j])


DEFAULT_BANK = tuple(
    (g, th) for g in (0.8, 1.0, 1.25) for th in (-0.6, -0.3, 0.0, 0.3, 0.6)
)


@dataclass(frozen=True)
class SimilarityConfig:
    stride: int = 8
    refinements: int = 1
    max_scale: float = 1.5
    window: bool = True
    bank: tuple[tuple[float, float], ...] = DEFAULT_BANK


@dataclass(frozen=True)
class SimilarityEstimate:
    t: tuple[float, float]
    gamma: float
    theta: float
    confidence: float
    translation_confidence: float = math.nan
    scale_rotation_confidence: float = math.nan

    def matrix(self) -> np.ndarray:
        """Similarity mapping centered template coordinates into centered search coordinates."""
        return similarity_matrix(self.t[0], self.t[1], self.gamma, self.theta)


def estimate_similarity(
    template: np.ndarray, search: np.ndarray, config: SimilarityConfig | None = None
) -> SimilarityEstimate:
    """Translation from the response map, then scale/rotation on the recentered patch.

    The first translation pass matches a small bank of rotated/scaled
    template poses so large in-plane motion does not break it.  Each
    refinement pass undoes the current scale/rotation estimate on the
    search image around ``t``, re-runs the translation stage with the plain
    template and re-estimates scale and rotation.  The confidence is the
    smaller of the two stage peaks from the last pass.
    """
    cfg = config or SimilarityConfig()
    template = as_image(template)
    search = as_image(search)
    if template.shape[0] != template.shape[1] or search.shape[0] != search.shape[1]:
        raise ValueError("template and search must be square")
    t, c_t = estimate_translation(correlate(template, search, cfg.stride, cfg.window, cfg.bank))
    gamma, theta, c_sr = estimate_scale_rotation(template, search, t, cfg.max_scale, cfg.window)
    for _ in range(cfg.refinements):
        undo = similarity_matrix(t[0], t[1], gamma, theta)
        aligned = warp_centered(search, undo, search.shape)
        delta, c_t = estimate_translation(correlate(template, aligned, cfg.stride, cfg.window))
        t = (undo @ np.array([delta[0], delta[1], 1.0]))[:2]
        gamma, theta, c_sr = estimate_scale_rotation(template, search, t, cfg.max_scale, cfg.window)
    return SimilarityEstimate(
        t=(float(t[0]), float(t[1])),
        gamma=float(gamma),
        theta=float(theta),
        confidence=min(c_t, c_sr),
        translation_confidence=c_t,
        scale_rotation_confidence=c_sr,
    )
