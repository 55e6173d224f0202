"""Backend selection for the resampling kernels.

The Cython extension is used when it was built; otherwise (or when
``HDTRACK_PURE_PYTHON=1`` is set) the numpy fallback is used.  Both expose
``sample_bilinear(img, u, v, policy)`` and
``warp_homography(img, H, out_h, out_w, policy)``.
"""
from __future__ import annotations

import logging
import os

from . import _kernels_py

log = logging.getLogger(__name__)

ZERO, CLAMP, CIRCULAR_VERTICAL = _kernels_py.ZERO, _kernels_py.CLAMP, _kernels_py.CIRCULAR_VERTICAL

_compiled = None
if not os.environ.get("HDTRACK_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        log.debug("compiled kernels unavailable, using numpy fallback")

if _compiled is not None:
    BACKEND = "cython"
    sample_bilinear = _compiled.sample_bilinear
    warp_homography = _compiled.warp_homography
else:
    BACKEND = "python"
    sample_bilinear = _kernels_py.sample_bilinear
    warp_homography = _kernels_py.warp_homography


def backends() -> dict:
    """Every importable backend by name, for parity tests and benchmarks."""
    found = {"python": _kernels_py}
    try:
        from . import _kernels

        found["cython"] = _kernels
    except ImportError:
        pass
    return found
