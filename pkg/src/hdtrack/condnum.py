"""Conditioning of the corner displacement map ``dp(x) = H(x) p - p``.

The condition number of ``dp`` at ``x`` is

    cond(x) = ||J(x)||_F * ||x|| / |dp(x)|

where ``J`` is the 2 x d Jacobian with respect to the free parameters and
``||x||`` is the Euclidean norm of those parameters.  Parameters are
measured in *offset coordinates*: identical to the eight-vector except
that ``k1`` is taken relative to 1, so the identity transform has zero
translation, rotation, shear and perspective and ``k1 - 1 == 0``.

Everything here is vectorized over a leading sample axis; the scalar
helpers just wrap a batch of one.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .geometry import PARAM_NAMES, TransformParams, box_corners

EPS_DELTA = 1e-8

# Offset-coordinate origin: x_offset = x - _OFFSET_ORIGIN
_OFFSET_ORIGIN = np.array([0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0])
_IDENTITY = np.array([0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0])


class RejectedSample(ValueError):
    """|dp(x)| is below the rejection threshold, so cond(x) is undefined."""


class Subgroup(str, enum.Enum):
    FULL8 = "full8"
    TRANSLATION_KNOWN = "translation_known"
    SIMILARITY_KNOWN = "similarity_known"

    @property
    def free(self) -> tuple[int, ...]:
        return {
            Subgroup.FULL8: tuple(range(8)),
            Subgroup.TRANSLATION_KNOWN: tuple(range(2, 8)),
            Subgroup.SIMILARITY_KNOWN: tuple(range(4, 8)),
        }[self]

    def reduce(self, X: np.ndarray) -> np.ndarray:
        """Remove the known factor so that only the unknown map is left.

        With translation known, ``T^-1 H(x)`` is ``H(x)`` with zero
        translation; with the similarity known, ``S^-1 H(x)`` is the
        residual factor alone.
        """
        X = np.array(X, dtype=float, copy=True)
        if self is Subgroup.TRANSLATION_KNOWN:
            X[..., 0:2] = 0.0
        elif self is Subgroup.SIMILARITY_KNOWN:
            X[..., 0:4] = _IDENTITY[0:4]
        return X


@dataclass(frozen=True)
class ParamRanges:
    """Closed sampling interval per parameter (k1 given as the actual value)."""

    t1: tuple[float, float] = (-32.0, 32.0)
    t2: tuple[float, float] = (-32.0, 32.0)
    gamma: tuple[float, float] = (1 / 1.38, 1.38)
    theta: tuple[float, float] = (-0.7, 0.7)
    k1: tuple[float, float] = (0.9, 1.1)
    k2: tuple[float, float] = (-0.015, 0.015)
    nu1: tuple[float, float] = (-0.0015, 0.0015)
    nu2: tuple[float, float] = (-0.0015, 0.0015)

    def __post_init__(self) -> None:
        for name in PARAM_NAMES:
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError(f"range for {name} is not finite")
            if lo > hi:
                raise ValueError(f"empty range for {name}: [{lo}, {hi}]")
        if self.gamma[0] <= 0:
            raise ValueError("gamma range must lie in (0, inf)")
        if self.k1[0] <= 0:
            raise ValueError("k1 range must lie in (0, inf)")

    @property
    def lower(self) -> np.ndarray:
        return np.array([getattr(self, n)[0] for n in PARAM_NAMES])

    @property
    def upper(self) -> np.ndarray:
        return np.array([getattr(self, n)[1] for n in PARAM_NAMES])

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, 8))

    def clip(self, values: np.ndarray) -> np.ndarray:
        return np.clip(values, self.lower, self.upper)

    def contains(self, x: TransformParams, slack: float = 1e-12) -> bool:
        v = x.as_array()
        return bool(np.all(v >= self.lower - slack) and np.all(v <= self.upper + slack))


def offset_coordinates(X: np.ndarray) -> np.ndarray:
    return np.asarray(X, dtype=float) - _OFFSET_ORIGIN


def homography_batch(X: np.ndarray) -> np.ndarray:
    """``(N, 3, 3)`` stack of ``H(x)`` for an ``(N, 8)`` parameter array."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    t1, t2, g, th, k1, k2, n1, n2 = X.T
    gc, gs = g * np.cos(th), g * np.sin(th)
    h = np.empty((X.shape[0], 3, 3))
    h[:, 0, 0] = gc * k1 + t1 * n1
    h[:, 0, 1] = gc * k2 - gs / k1 + t1 * n2
    h[:, 0, 2] = t1
    h[:, 1, 0] = gs * k1 + t2 * n1
    h[:, 1, 1] = gs * k2 + gc / k1 + t2 * n2
    h[:, 1, 2] = t2
    h[:, 2, 0] = n1
    h[:, 2, 1] = n2
    h[:, 2, 2] = 1.0
    return h


def delta_p_batch(X: np.ndarray, p: Sequence[float]) -> np.ndarray:
    h = homography_batch(X)
    px, py = float(p[0]), float(p[1])
    w = h[:, 2, 0] * px + h[:, 2, 1] * py + h[:, 2, 2]
    x = (h[:, 0, 0] * px + h[:, 0, 1] * py + h[:, 0, 2]) / w
    y = (h[:, 1, 0] * px + h[:, 1, 1] * py + h[:, 1, 2]) / w
    return np.stack([x - px, y - py], axis=-1)


def fd_steps(X: np.ndarray, rel: float = 1e-6, floor: float = 1e-6) -> np.ndarray:
    return np.maximum(floor, rel * np.abs(X))


def jacobian_batch(
    X: np.ndarray, p: Sequence[float], free: Sequence[int] = tuple(range(8)), step_scale: float = 1.0
) -> np.ndarray:
    """Central-difference Jacobian of ``dp`` w.r.t. the ``free`` parameters, ``(N, 2, d)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    steps = fd_steps(X) * step_scale
    cols = []
    for i in free:
        plus, minus = X.copy(), X.copy()
        plus[:, i] += steps[:, i]
        minus[:, i] -= steps[:, i]
        cols.append((delta_p_batch(plus, p) - delta_p_batch(minus, p)) / (2.0 * steps[:, i, None]))
    jac = np.stack(cols, axis=-1)
    if not np.all(np.isfinite(jac)):
        raise FloatingPointError("non-finite difference quotient in Jacobian")
    return jac


def condition_number_batch(
    X: np.ndarray,
    p: Sequence[float],
    free: Sequence[int] = tuple(range(8)),
    eps_delta: float = EPS_DELTA,
) -> np.ndarray:
    """Condition numbers for each row of ``X``; rejected samples come back as NaN."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    free = list(free)
    dp = np.linalg.norm(delta_p_batch(X, p), axis=1)
    jn = np.linalg.norm(jacobian_batch(X, p, free), axis=(1, 2))
    xn = np.linalg.norm(offset_coordinates(X)[:, free], axis=1)
    out = np.full(len(X), np.nan)
    ok = dp >= eps_delta
    out[ok] = jn[ok] * xn[ok] / dp[ok]
    return out


def delta_p(x: TransformParams, p: Sequence[float]) -> np.ndarray:
    d = delta_p_batch(x.as_array()[None], p)[0]
    if not np.all(np.isfinite(d)):
        raise FloatingPointError("mapped point is at infinity")
    return d


def jacobian(x: TransformParams, p: Sequence[float], free: Sequence[int] = tuple(range(8))) -> np.ndarray:
    return jacobian_batch(x.as_array()[None], p, free)[0]


def condition_number(
    x: TransformParams,
    p: Sequence[float],
    free: Sequence[int] = tuple(range(8)),
    eps_delta: float = EPS_DELTA,
) -> float:
    value = condition_number_batch(x.as_array()[None], p, free, eps_delta)[0]
    if math.isnan(value):
        raise RejectedSample(f"|dp| < {eps_delta} at p={tuple(p)}")
    return float(value)


def subgroup_condition_batch(
    X: np.ndarray, p: Sequence[float], subgroup: Subgroup, eps_delta: float = EPS_DELTA
) -> np.ndarray:
    subgroup = Subgroup(subgroup)
    return condition_number_batch(subgroup.reduce(X), p, subgroup.free, eps_delta)


def subgroup_condition(
    x: TransformParams, p: Sequence[float], subgroup: Subgroup, eps_delta: float = EPS_DELTA
) -> float:
    subgroup = Subgroup(subgroup)
    return condition_number(
        TransformParams.from_array(subgroup.reduce(x.as_array())), p, subgroup.free, eps_delta
    )


def default_probes(size: float = 127.0) -> np.ndarray:
    """Corners of a ``size`` x ``size`` template box centered at the origin."""
    return box_corners(size)


# -- Monte-Carlo study -----------------------------------------------------

def _evaluate_chunk(args) -> np.ndarray:
    X, probes, subgroup, eps_delta = args
    return np.stack(
        [subgroup_condition_batch(X, p, subgroup, eps_delta) for p in probes], axis=1
    )


@dataclass
class StudyResult:
    """Samples and per-corner condition numbers (NaN marks a rejected sample)."""

    params: np.ndarray
    probes: np.ndarray
    cond: dict[Subgroup, np.ndarray] = field(default_factory=dict)

    def valid(self, subgroup: Subgroup) -> np.ndarray:
        c = self.cond[Subgroup(subgroup)]
        return c[np.isfinite(c)]

    def rejected(self, subgroup: Subgroup) -> int:
        return int(np.count_nonzero(~np.isfinite(self.cond[Subgroup(subgroup)])))

    def summary(self) -> dict[str, dict[str, float]]:
        out = {}
        for sg in self.cond:
            v = self.valid(sg)
            out[sg.value] = {
                "max": float(v.max()) if v.size else math.nan,
                "p99": float(np.percentile(v, 99)) if v.size else math.nan,
                "median": float(np.median(v)) if v.size else math.nan,
                "rejected": self.rejected(sg),
                "evaluated": int(v.size),
            }
        return out

    def histogram(self, subgroup: Subgroup, bin_width: float = 0.25) -> list[tuple[float, float, int]]:
        """Counts of log10(cond) in bins of ``bin_width`` decades."""
        logs = np.log10(self.valid(subgroup))
        if logs.size == 0:
            return []
        lo = math.floor(logs.min() / bin_width) * bin_width
        hi = math.ceil(logs.max() / bin_width) * bin_width
        if hi <= lo:
            hi = lo + bin_width
        edges = lo + bin_width * np.arange(round((hi - lo) / bin_width) + 1)
        counts, edges = np.histogram(logs, bins=edges)
        return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(len(counts))]

    def write_csv(self, stream, subgroups: Iterable[Subgroup] | None = None) -> int:
        """Write one row per (sample, corner, subgroup); returns the row count.

        Rejected samples are omitted.
        """
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["sample_index", "subgroup", *PARAM_NAMES, "corner_id", "cond"])
        rows = 0
        for sg in subgroups or list(self.cond):
            sg = Subgroup(sg)
            cond = self.cond[sg]
            for i, x in enumerate(self.params):
                xs = [repr(float(v)) for v in x]
                for c in range(cond.shape[1]):
                    if np.isfinite(cond[i, c]):
                        writer.writerow([i, sg.value, *xs, c, repr(float(cond[i, c]))])
                        rows += 1
        return rows

    def csv_text(self, subgroups: Iterable[Subgroup] | None = None) -> str:
        buf = io.StringIO()
        self.write_csv(buf, subgroups)
        return buf.getvalue()


def write_histogram_csv(stream, bins: list[tuple[float, float, int]]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["bin_left", "bin_right", "count"])
    for left, right, count in bins:
        writer.writerow([repr(left), repr(right), count])


def monte_carlo_study(
    ranges: ParamRanges,
    n_samples: int,
    subgroups: Sequence[Subgroup] = tuple(Subgroup),
    seed: int = 0,
    probes: np.ndarray | None = None,
    workers: int = 1,
    chunk_size: int = 20000,
    eps_delta: float = EPS_DELTA,
) -> StudyResult:
    """Uniform per-parameter sampling; every subgroup sees the same draw.

    The draw happens up front from ``seed`` and chunks are merged in index
    order, so the result does not depend on ``workers``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if isinstance(subgroups, (str, Subgroup)):
        subgroups = [subgroups]
    subgroups = [Subgroup(s) for s in subgroups]
    probes = default_probes() if probes is None else np.asarray(probes, dtype=float)
    X = ranges.sample(np.random.default_rng(seed), n_samples)
    result = StudyResult(params=X, probes=probes)
    chunks = [X[i : i + chunk_size] for i in range(0, n_samples, chunk_size)]
    for sg in subgroups:
        jobs = [(c, probes, sg, eps_delta) for c in chunks]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(_evaluate_chunk, jobs))
        else:
            parts = [_evaluate_chunk(j) for j in jobs]
        result.cond[sg] = np.concatenate(parts, axis=0)
    return result


# -- ray study ---------------------------------------------------------------

@dataclass
class RayStudyResult:
    ratios: np.ndarray
    probes: np.ndarray
    cond: dict[Subgroup, np.ndarray]  # (steps, n_probes), NaN where rejected

    def curve(self, subgroup: Subgroup) -> np.ndarray:
        """Mean over probe corners at each ratio (NaN where every corner was rejected)."""
        c = self.cond[Subgroup(subgroup)]
        out = np.full(len(self.ratios), np.nan)
        for i, row in enumerate(c):
            ok = np.isfinite(row)
            if ok.any():
                out[i] = row[ok].mean()
        return out

    def increasing_fraction(self, subgroup: Subgroup) -> float:
        """Share of consecutive valid steps along which the curve does not decrease."""
        v = self.curve(subgroup)
        v = v[np.isfinite(v)]
        if v.size < 2:
            return math.nan
        return float(np.mean(np.diff(v) >= 0))

    def rows(self) -> list[tuple[float, str, float]]:
        return [
            (float(r), sg.value, float(self.curve(sg)[i]))
            for sg in self.cond
            for i, r in enumerate(self.ratios)
        ]


def ray_study(
    steps: int,
    target: TransformParams | None = None,
    subgroups: Sequence[Subgroup] = tuple(Subgroup),
    probes: np.ndarray | None = None,
    ranges: ParamRanges | None = None,
    eps_delta: float = EPS_DELTA,
) -> RayStudyResult:
    """Condition numbers along the straight ray from the identity to ``target``.

    The default target is the upper end of every parameter range, i.e.
    all eight parameters grow together.
    """
    if steps < 2:
        raise ValueError("steps must be >= 2")
    if target is None:
        target = TransformParams.from_array((ranges or ParamRanges()).upper)
    probes = default_probes() if probes is None else np.asarray(probes, dtype=float)
    ratios = np.linspace(0.0, 1.0, steps)
    X = _IDENTITY + ratios[:, None] * (target.as_array() - _IDENTITY)
    cond = {
        Subgroup(sg): np.stack(
            [subgroup_condition_batch(X, p, Subgroup(sg), eps_delta) for p in probes], axis=1
        )
        for sg in subgroups
    }
    return RayStudyResult(ratios=ratios, probes=probes, cond=cond)
