"""Residual-group estimation.

``dlt_from_offsets`` turns four corner offsets into a homography.
``refine_residual`` aligns an (already similarity-corrected) search patch
to the template by Levenberg-damped Gauss-Newton over the residual
parameters ``(k1, k2, nu1, nu2)`` plus a bounded similarity slack (translation,
scale and rotation) that absorbs what the similarity stage left over.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from . import kernels
from .condnum import ParamRanges
from .geometry import (
    DegenerateHomographyError,
    TransformParams,
    build_homography,
    check_quad,
    normalize,
)
from .raster import as_image, center_of


def hartley_normalization(points: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to the origin with mean distance sqrt(2)."""
    centroid = points.mean(axis=0)
    mean_dist = np.mean(np.linalg.norm(points - centroid, axis=1))
    if mean_dist <= 0:
        raise DegenerateHomographyError("all points coincide")
    s = math.sqrt(2.0) / mean_dist
    return np.array([[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]])


def dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Homography mapping ``src`` points onto ``dst`` (n >= 4), normalized DLT."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2 or len(src) < 4:
        raise ValueError("need matching (n, 2) point arrays with n >= 4")
    ts, td = hartley_normalization(src), hartley_normalization(dst)
    a = (ts[:2, :2] @ src.T + ts[:2, 2:]).T
    b = (td[:2, :2] @ dst.T + td[:2, 2:]).T
    rows = []
    for (x, y), (u, v) in zip(a, b):
        rows.append([x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u])
        rows.append([0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v])
    m = np.asarray(rows)
    evals, evecs = np.linalg.eigh(m.T @ m)
    if len(src) == 4 and evals[1] <= 1e-12 * evals[-1]:
        raise DegenerateHomographyError("point configuration does not fix a unique homography")
    h = evecs[:, 0].reshape(3, 3)
    return normalize(np.linalg.inv(td) @ h @ ts)


def dlt_from_offsets(p_ref: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Homography taking each reference corner to ``corner + offset``."""
    p_ref = check_quad(p_ref)
    offsets = np.asarray(offsets, dtype=float)
    if offsets.shape != (4, 2) or not np.all(np.isfinite(offsets)):
        raise ValueError("offsets must be a finite (4, 2) array")
    target = check_quad(p_ref + offsets)
    return dlt(p_ref, target)


def corners_to_negative_target(predicted: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pair predicted corner offsets with the all-zero target used for wrong-object inputs."""
    predicted = np.asarray(predicted, dtype=float)
    if predicted.shape != (4, 2):
        raise ValueError("expected (4, 2) corner offsets")
    return predicted, np.zeros_like(predicted)


# -- photometric refinement ----------------------------------------------------

@dataclass(frozen=True)
class RefineConfig:
    max_iters: int = 30
    tol: float = 1e-6
    damping: float = 1e-3
    max_escalations: int = 8
    max_translation: float = 8.0
    max_scale_slack: float = 0.05
    max_rotation_slack: float = 0.05
    smoothing: tuple[float, ...] = (3.0, 1.0)
    min_correlation: float = 0.3
    ranges: ParamRanges = field(default_factory=ParamRanges)

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol <= 0 or self.damping <= 0 or min(self.max_translation, self.max_scale_slack,
                                                      self.max_rotation_slack) < 0:
            raise ValueError("thresholds must be positive")

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        r = self.ranges
        t, g, th = self.max_translation, 1.0 + self.max_scale_slack, self.max_rotation_slack
        lo = [-t, -t, 1.0 / g, -th, r.k1[0], r.k2[0], r.nu1[0], r.nu2[0]]
        hi = [t, t, g, th, r.k1[1], r.k2[1], r.nu1[1], r.nu2[1]]
        return np.array(lo), np.array(hi)


@dataclass
class RefineResult:
    h: np.ndarray
    params: TransformParams
    rms: float
    correlation: float
    iterations: int
    lost: bool
    errors: list[list[float]] = field(default_factory=list)  # per smoothing level

    @property
    def translation_slack(self) -> tuple[float, float]:
        return self.params.t1, self.params.t2

    @property
    def similarity_slack(self) -> tuple[float, float]:
        return self.params.gamma, self.params.theta


# refined vector: the eight parameters in TransformParams order
_IDENTITY = np.array([0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0])


def _params(p: np.ndarray) -> TransformParams:
    return TransformParams(*(float(v) for v in p))


def _unit(i: int, j: int, value: float = 1.0) -> np.ndarray:
    e = np.zeros((3, 3))
    e[i, j] = value
    return e


def _warp_jacobian(p: np.ndarray, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Warped coordinates and their derivatives w.r.t. the refined parameters."""
    _, _, g, th, k1, _, _, _ = p
    c, s = math.cos(th), math.sin(th)
    x_ = _params(p)
    sim = build_homography(x_.similarity())
    res = build_homography(x_.residual())
    d_sim = [
        _unit(0, 2),
        _unit(1, 2),
        np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 0.0]]),
        np.array([[-g * s, -g * c, 0.0], [g * c, -g * s, 0.0], [0.0, 0.0, 0.0]]),
    ]
    d_res = [
        np.array([[1.0, 0.0, 0.0], [0.0, -1.0 / (k1 * k1), 0.0], [0.0, 0.0, 0.0]]),
        _unit(0, 1),
        _unit(2, 0),
        _unit(2, 1),
    ]
    dh = [d @ res for d in d_sim] + [sim @ d for d in d_res]
    h = sim @ res
    pts = np.stack([x, y, np.ones_like(x)])
    a0, a1, a2 = h @ pts
    wx, wy = a0 / a2, a1 / a2
    jx, jy = [], []
    for d in dh:
        d0, d1, d2 = d @ pts
        jx.append((d0 - wx * d2) / a2)
        jy.append((d1 - wy * d2) / a2)
    return wx, wy, np.stack([np.stack(jx, axis=1), np.stack(jy, axis=1)], axis=0)


def _standardize(img: np.ndarray) -> np.ndarray:
    sd = img.std()
    return (img - img.mean()) / sd if sd > 0 else img - img.mean()


def refine_residual(
    template: np.ndarray, warped_search: np.ndarray, config: RefineConfig | None = None
) -> RefineResult:
    """Residual homography ``H`` with ``warped_search(H q) ~ template(q)`` (centered coordinates).

    Runs coarse-to-fine over ``config.smoothing`` blur levels; each level
    stops when the update is below ``config.tol`` or the damping escalates
    ``config.max_escalations`` times in a row.  The result is flagged
    ``lost`` (and reset to the identity) when the patches stop overlapping
    or the aligned patch correlates with the template below
    ``config.min_correlation``.
    """
    cfg = config or RefineConfig()
    template = as_image(template)
    warped_search = as_image(warped_search)
    if template.shape != warped_search.shape:
        raise ValueError("template and search patch must have the same size")
    cu, cv = center_of(template.shape)
    rows, cols = np.mgrid[0 : template.shape[0], 0 : template.shape[1]]
    x = (cols - cu).ravel().astype(float)
    y = (rows - cv).ravel().astype(float)
    lo, hi = cfg.bounds()
    p = _IDENTITY.copy()
    ones = np.ones_like(warped_search)
    scale = max(cu, cv, 1.0)
    # dimensionless update size: corner displacement relative to the half-size
    step_scale = np.array([1 / scale, 1 / scale, 1.0, 1.0, 1.0, 1.0, scale, scale])
    errors: list[list[float]] = []
    iterations = 0
    diverged = False

    for sigma in cfg.smoothing:
        tpl = _standardize(gaussian_filter(template, sigma) if sigma > 0 else template).ravel()
        img = _standardize(gaussian_filter(warped_search, sigma) if sigma > 0 else warped_search)
        gy, gx = np.gradient(img)

        def evaluate(p):
            wx, wy = _warp_coords(p, x, y)
            u, v = wx + cu, wy + cv
            cover = kernels.sample_bilinear(ones, u, v, kernels.ZERO)
            valid = cover > 0.999
            r = kernels.sample_bilinear(img, u, v, kernels.ZERO) - tpl
            return r, valid

        lam = cfg.damping
        r, valid = evaluate(p)
        err = float(np.mean(r[valid] ** 2)) if valid.any() else math.inf
        errors.append([err])
        if not math.isfinite(err):
            diverged = True
            break
        escalations = 0
        for _ in range(cfg.max_iters):
            iterations += 1
            wx, wy, jw = _warp_jacobian(p, x, y)
            u, v = wx + cu, wy + cv
            ix = kernels.sample_bilinear(gx, u, v, kernels.ZERO)
            iy = kernels.sample_bilinear(gy, u, v, kernels.ZERO)
            jac = (ix[:, None] * jw[0] + iy[:, None] * jw[1])[valid]
            rv = r[valid]
            jtj = jac.T @ jac
            g = jac.T @ rv
            accepted = False
            while escalations <= cfg.max_escalations:
                a = jtj + lam * np.diag(np.diag(jtj) + 1e-12)
                try:
                    delta = -np.linalg.solve(a, g)
                except np.linalg.LinAlgError:
                    delta = -np.linalg.lstsq(a, g, rcond=None)[0]
                p_new = np.clip(p + delta, lo, hi)
                r_new, valid_new = evaluate(p_new)
                err_new = float(np.mean(r_new[valid_new] ** 2)) if valid_new.any() else math.inf
                if err_new < err:
                    step = np.linalg.norm((p_new - p) * step_scale)
                    p, r, valid, err = p_new, r_new, valid_new, err_new
                    errors[-1].append(err)
                    lam = max(lam / 10.0, 1e-12)
                    escalations = 0
                    accepted = True
                    break
                lam *= 10.0
                escalations += 1
            if not accepted:
                # damping ran away: no descent direction left at this level
                break
            if step < cfg.tol:
                break

    corr = _correlation(template, warped_search, p, x, y, cu, cv)
    lost = diverged or not (corr >= cfg.min_correlation)
    if lost:
        p = _IDENTITY.copy()
    params = _params(p)
    return RefineResult(
        h=build_homography(params),
        params=params,
        rms=math.sqrt(errors[-1][-1]) if errors and math.isfinite(errors[-1][-1]) else math.inf,
        correlation=corr,
        iterations=iterations,
        lost=lost,
        errors=errors,
    )


def _warp_coords(p: np.ndarray, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h = build_homography(_params(p))
    w = h[2, 0] * x + h[2, 1] * y + h[2, 2]
    return (h[0, 0] * x + h[0, 1] * y + h[0, 2]) / w, (h[1, 0] * x + h[1, 1] * y + h[1, 2]) / w


def _correlation(template, search, p, x, y, cu, cv) -> float:
    """ZNCC between the template and the search patch aligned by ``p`` over the covered pixels."""
    wx, wy = _warp_coords(p, x, y)
    u, v = wx + cu, wy + cv
    valid = kernels.sample_bilinear(np.ones_like(search), u, v, kernels.ZERO) > 0.999
    if valid.sum() < 16:
        return 0.0
    a = kernels.sample_bilinear(search, u, v, kernels.ZERO)[valid]
    b = template.ravel()[valid]
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float(a @ a) * float(b @ b))
    return float(a @ b) / den if den > 0 else 0.0
