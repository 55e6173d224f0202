"""Loss evaluators with analytic gradients.

Each differentiable loss returns a :class:`LossResult` holding the value
and the gradient with respect to the prediction(s).  Nothing here trains
anything; the functions exist so the formulas can be inspected, checked
against finite differences and reused by external training code.

Index sets are flat indices into the label grids.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

CLAMP_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 100.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    lambda4: float = 0.25
    alpha: float = 1.0

    def __post_init__(self) -> None:
        for name in ("lambda1", "lambda2", "lambda3", "lambda4", "alpha"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass
class LossResult:
    value: float
    grad: object = None  # ndarray, or a tuple of ndarrays for several inputs
    flags: tuple[str, ...] = ()


# -- label maps and sample selection ----------------------------------------------

def hamming_profile(d: np.ndarray, radius: float) -> np.ndarray:
    """Hamming window as a function of distance from its peak, zero beyond ``radius``."""
    d = np.abs(np.asarray(d, dtype=float))
    return np.where(d < radius, 0.54 + 0.46 * np.cos(np.pi * d / radius), 0.0)


def hamming_label(shape: tuple[int, int], center: tuple[float, float], radius: float) -> np.ndarray:
    """Separable Hamming label map peaking at ``center = (row, col)``."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    rows = hamming_profile(np.arange(shape[0]) - center[0], radius)
    cols = hamming_profile(np.arange(shape[1]) - center[1], radius)
    return np.clip(np.outer(rows, cols), 0.0, 1.0)


@dataclass
class Selection:
    positives: np.ndarray
    negatives: np.ndarray
    positive_cap: str  # "threshold" or "top_k": which rule limited the positives


def select_samples(
    pred: np.ndarray, label: np.ndarray, k: int = 100, tau: float = 0.7, positive_top_k: int | None = None
) -> Selection:
    """Positives: label above ``tau`` (optionally only the ``positive_top_k`` largest labels).
    Negatives: the ``k`` highest-scoring cells among label-zero cells."""
    pred = np.asarray(pred, dtype=float).ravel()
    label = np.asarray(label, dtype=float).ravel()
    if pred.shape != label.shape:
        raise ValueError("prediction and label grids differ in shape")
    if k <= 0:
        raise ValueError("k must be positive")
    pos = np.flatnonzero(label > tau)
    cap = "threshold"
    if positive_top_k is not None and len(pos) > positive_top_k:
        order = np.argsort(-label[pos], kind="stable")
        pos = np.sort(pos[order[:positive_top_k]])
        cap = "top_k"
    candidates = np.flatnonzero(label == 0)
    if len(candidates) < k:
        raise ValueError(f"only {len(candidates)} negative cells, need {k}")
    order = np.argsort(-pred[candidates], kind="stable")
    neg = np.sort(candidates[order[:k]])
    return Selection(pos, neg, cap)


# -- similarity-branch losses -------------------------------------------------------

def loss_cls(
    pred: np.ndarray,
    label: np.ndarray,
    positives: np.ndarray,
    negatives: np.ndarray,
    k: int | None = None,
    q: int | None = None,
    eps: float = CLAMP_EPS,
) -> LossResult:
    """Negative log term over hard negatives plus L1 over positives."""
    pred = np.asarray(pred, dtype=float)
    label = np.asarray(label, dtype=float)
    flat, lab = pred.ravel(), label.ravel()
    positives = np.asarray(positives, dtype=int)
    negatives = np.asarray(negatives, dtype=int)
    if np.intersect1d(positives, negatives).size:
        raise ValueError("positive and negative index sets overlap")
    k = len(negatives) if k is None else k
    q = len(positives) if q is None else q
    if k <= 0 or q <= 0:
        raise ValueError("sample counts must be positive")
    grad = np.zeros_like(flat)
    flags = []
    neg = flat[negatives]
    if np.any(neg > 1.0 - eps):
        warnings.warn("negative score at 1; clamped below the log singularity", RuntimeWarning, stacklevel=2)
        flags.append("clamped")
    neg_c = np.minimum(neg, 1.0 - eps)
    value = float(-np.sum(np.log1p(-neg_c)) / k)
    np.add.at(grad, negatives, np.where(neg > 1.0 - eps, 0.0, 1.0 / (1.0 - neg_c)) / k)
    diff = flat[positives] - lab[positives]
    value += float(np.sum(np.abs(diff)) / q)
    np.add.at(grad, positives, np.sign(diff) / q)
    return LossResult(value, grad.reshape(pred.shape), tuple(flags))


def smooth_l1(x) -> LossResult:
    """Element-wise smooth-l1; ``value`` and ``grad`` are arrays shaped like ``x``."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    quad = ax <= 1.0
    value = np.where(quad, 0.5 * x * x, ax - 0.5)
    grad = np.where(quad, x, np.sign(x))
    return LossResult(value, grad)


def loss_reg(
    pred: np.ndarray, label: np.ndarray, eligible: np.ndarray, u: int | None = None
) -> LossResult:
    """Mean smooth-l1 of offset errors over ``eligible`` cells.

    ``pred`` and ``label`` are ``(..., 2)`` offset grids; the two components
    of each offset are penalized separately and summed.
    """
    pred = np.asarray(pred, dtype=float)
    label = np.asarray(label, dtype=float)
    if pred.shape != label.shape or pred.shape[-1] != 2:
        raise ValueError("offset grids must share a (..., 2) shape")
    eligible = np.asarray(eligible, dtype=int)
    grad = np.zeros_like(pred)
    if eligible.size == 0:
        return LossResult(0.0, grad, ("empty",))
    u = len(eligible) if u is None else u
    if u <= 0:
        raise ValueError("u must be positive")
    p2 = pred.reshape(-1, 2)
    sl = smooth_l1(p2[eligible] - label.reshape(-1, 2)[eligible])
    g2 = grad.reshape(-1, 2)
    np.add.at(g2, eligible, sl.grad / u)
    return LossResult(float(sl.value.sum() / u), grad)


def cross_entropy(prob: np.ndarray, label: np.ndarray, indices: np.ndarray | None = None,
                  eps: float = CLAMP_EPS) -> LossResult:
    """Two-class cross-entropy averaged over ``indices`` (all cells by default)."""
    prob = np.asarray(prob, dtype=float)
    label = np.asarray(label, dtype=float)
    if prob.shape != label.shape:
        raise ValueError("probability and label grids differ in shape")
    flat, lab = prob.ravel(), label.ravel()
    idx = np.arange(flat.size) if indices is None else np.asarray(indices, dtype=int)
    if idx.size == 0:
        return LossResult(0.0, np.zeros_like(prob), ("empty",))
    p = np.clip(flat[idx], eps, 1.0 - eps)
    y = lab[idx]
    n = len(idx)
    value = float(-np.sum(y * np.log(p) + (1.0 - y) * np.log1p(-p)) / n)
    grad = np.zeros_like(flat)
    np.add.at(grad, idx, (-y / p + (1.0 - y) / (1.0 - p)) / n)
    return LossResult(value, grad.reshape(prob.shape))


def loss_similarity(cls: float, reg: float, cls2: float, reg2: float) -> float:
    return float(cls + reg + cls2 + reg2)


# -- residual-branch losses ---------------------------------------------------------

def loss_triplet(
    anchor: np.ndarray, positive: np.ndarray, negative: np.ndarray,
    m: int | None = None, alpha: float = 1.0,
) -> LossResult:
    """Margin loss on Frobenius distances, scaled by ``1 / m^2``.

    ``grad`` is ``(d_anchor, d_positive, d_negative)``.  Where a distance
    is zero the (non-unique) subgradient of that norm is taken as zero.
    """
    a = np.asarray(anchor, dtype=float)
    p = np.asarray(positive, dtype=float)
    n = np.asarray(negative, dtype=float)
    if not a.shape == p.shape == n.shape:
        raise ValueError("embeddings must share one shape")
    m = a.shape[0] if m is None else m
    if m <= 0:
        raise ValueError("edge length must be positive")
    d_ap = float(np.linalg.norm(a - p))
    d_an = float(np.linalg.norm(n - a))
    margin = d_ap - d_an + alpha
    area = float(m * m)
    zeros = np.zeros_like(a)
    if margin <= 0:
        return LossResult(0.0, (zeros, zeros.copy(), zeros.copy()))
    u_ap = (a - p) / d_ap if d_ap > 0 else zeros
    u_an = (n - a) / d_an if d_an > 0 else zeros
    grad = ((u_ap + u_an) / area, -u_ap / area, -u_an / area)
    return LossResult(margin / area, grad)


def loss_sup_corners(delta_p: np.ndarray, delta_p_hat: np.ndarray) -> LossResult:
    """Mean over the four corners of the l1 offset error; gradient w.r.t. the prediction."""
    gt = np.asarray(delta_p, dtype=float)
    pred = np.asarray(delta_p_hat, dtype=float)
    if gt.shape != (4, 2) or pred.shape != (4, 2):
        raise ValueError("corner offsets must be (4, 2) arrays")
    diff = pred - gt
    return LossResult(float(np.abs(diff).sum() / 4.0), np.sign(diff) / 4.0)


def loss_neg(delta_p_hat: np.ndarray) -> LossResult:
    """Mean over the four corners of the component-wise smooth-l1 of the offsets."""
    pred = np.asarray(delta_p_hat, dtype=float)
    if pred.shape != (4, 2):
        raise ValueError("corner offsets must be a (4, 2) array")
    sl = smooth_l1(pred)
    return LossResult(float(sl.value.sum() / 4.0), sl.grad / 4.0)


def loss_residual_total(neg: float, sup_star: float, sup: float, weights: LossWeights | None = None) -> float:
    w = weights or LossWeights()
    return float(w.lambda2 * neg + w.lambda3 * sup_star + w.lambda4 * sup)


def loss_total(similarity: float, residual: float, lambda1: float = 100.0) -> float:
    if lambda1 < 0:
        raise ValueError("lambda1 must be nonnegative")
    return float(lambda1 * similarity + residual)


# -- finite-difference checking ---------------------------------------------------------

def numeric_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = fn(x)
        flat[i] = orig - step
        lo = fn(x)
        flat[i] = orig
        gf[i] = (hi - lo) / (2.0 * step)
    return g


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic, numeric = np.ravel(analytic), np.ravel(numeric)
    den = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / den)


@dataclass
class CheckResult:
    name: str
    max_error: float
    tolerance: float
    points: int
    errors: list[float] = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return self.points > 0 and self.max_error <= self.tolerance


def _away(values: np.ndarray, kinks: tuple[float, ...], gap: float) -> bool:
    v = np.abs(np.ravel(values))
    return all(np.all(np.abs(v - k) > gap) for k in kinks)


def gradient_check_suite(seed: int = 0, points: int = 100, step: float = 1e-5,
                         gap: float = 1e-3) -> list[CheckResult]:
    """Compare every analytic gradient with central differences at random points.

    Points within ``gap`` of a kink or hinge are redrawn.
    """
    rng = np.random.default_rng(seed)
    results = []

    def run(name, tol, draw, evaluate):
        errs = []
        while len(errs) < points:
            sample = draw()
            if sample is None:
                continue
            x, fn, grad = evaluate(sample)
            errs.append(relative_error(grad, numeric_gradient(fn, x, step)))
        results.append(CheckResult(name, max(errs), tol, len(errs), errs))

    def draw_smooth():
        x = rng.normal(scale=1.5, size=16)
        return x if _away(x, (1.0,), gap) else None

    run("smooth_l1", 1e-6, draw_smooth,
        lambda x: (x, lambda z: float(smooth_l1(z).value.sum()), smooth_l1(x).grad))

    shape = (9, 9)

    def draw_cls():
        label = hamming_label(shape, rng.uniform(2, 6, size=2), 3.0)
        pred = rng.uniform(0.02, 0.98, size=shape)
        sel = select_samples(pred, label, k=10)
        if len(sel.positives) == 0 or not _away(pred.ravel()[sel.positives] - label.ravel()[sel.positives], (0.0,), gap):
            return None
        return pred, label, sel

    def eval_cls(s):
        pred, label, sel = s
        fn = lambda z: loss_cls(z, label, sel.positives, sel.negatives).value
        return pred, fn, loss_cls(pred, label, sel.positives, sel.negatives).grad

    run("loss_cls", 1e-4, draw_cls, eval_cls)

    def draw_reg():
        pred = rng.normal(scale=1.5, size=shape + (2,))
        label = rng.normal(scale=1.5, size=shape + (2,))
        eligible = rng.choice(81, size=12, replace=False)
        diff = pred.reshape(-1, 2)[eligible] - label.reshape(-1, 2)[eligible]
        return (pred, label, eligible) if _away(diff, (1.0,), gap) else None

    def eval_reg(s):
        pred, label, eligible = s
        return pred, lambda z: loss_reg(z, label, eligible).value, loss_reg(pred, label, eligible).grad

    run("loss_reg", 1e-4, draw_reg, eval_reg)

    def draw_ce():
        return rng.uniform(0.02, 0.98, size=shape), (rng.uniform(size=shape) > 0.5).astype(float)

    run("cross_entropy", 1e-4, draw_ce,
        lambda s: (s[0], lambda z: cross_entropy(z, s[1]).value, cross_entropy(*s).grad))

    def draw_triplet():
        a, p, n = (rng.normal(size=(5, 5)) for _ in range(3))
        margin = np.linalg.norm(a - p) - np.linalg.norm(n - a) + 1.0
        return (a, p, n) if abs(margin) > gap else None

    for role, name in enumerate(("anchor", "positive", "negative")):
        def eval_triplet(s, role=role):
            def fn(z):
                args = list(s)
                args[role] = z
                return loss_triplet(*args).value
            return s[role], fn, loss_triplet(*s).grad[role]

        run(f"loss_triplet[{name}]", 1e-4, draw_triplet, eval_triplet)

    def draw_corners():
        gt, pred = rng.normal(scale=3.0, size=(2, 4, 2))
        return (gt, pred) if _away(pred - gt, (0.0,), gap) else None

    run("loss_sup_corners", 1e-4, draw_corners,
        lambda s: (s[1], lambda z: loss_sup_corners(s[0], z).value, loss_sup_corners(*s).grad))

    def draw_neg():
        pred = rng.normal(scale=1.5, size=(4, 2))
        return pred if _away(pred, (1.0,), gap) else None

    run("loss_neg", 1e-4, draw_neg, lambda x: (x, lambda z: loss_neg(z).value, loss_neg(x).grad))

    for r in results:
        log.debug("%s: max relative error %.3g over %d points", r.name, r.max_error, r.points)
    return results


def triplet_value(d_ap: float, d_an: float, m: int, alpha: float = 1.0) -> float:
    """Scalar form of the triplet loss from the two distances."""
    return max(d_ap - d_an + alpha, 0.0) / (m * m)

