"""Hypothesis strategies shared by the test modules."""
from __future__ import annotations

from hypothesis import strategies as st

from hdtrack.geometry import TransformParams


def _f(lo: float, hi: float):
    return st.floats(lo, hi, allow_nan=False, allow_infinity=False)


params_in_range = st.builds(
    TransformParams,
    t1=_f(-32, 32), t2=_f(-32, 32),
    gamma=_f(1 / 1.38, 1.38), theta=_f(-0.7, 0.7),
    k1=_f(0.9, 1.1), k2=_f(-0.015, 0.015),
    nu1=_f(-0.0015, 0.0015), nu2=_f(-0.0015, 0.0015),
)
