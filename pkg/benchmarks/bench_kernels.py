"""Time the resampling kernels of every available backend.

    python benchmarks/bench_kernels.py [--repeat 20]

Prints one line per (kernel, backend) with the median time and the
speed-up over the numpy fallback, and checks that both backends agree.
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from hdtrack.bench import textured_image
from hdtrack.geometry import TransformParams, build_homography
from hdtrack.kernels import ZERO, backends


def _median_time(fn, repeat: int) -> float:
    fn()  # warm-up
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--size", type=int, default=255)
    args = parser.parse_args()

    img = textured_image(2 * args.size, seed=0)
    h = build_homography(TransformParams(40.0, -25.0, 1.1, 0.3, 1.02, 0.01, 1e-4, -2e-4))
    rng = np.random.default_rng(0)
    u = rng.uniform(-5, img.shape[1] + 5, size=args.size * args.size)
    v = rng.uniform(-5, img.shape[0] + 5, size=args.size * args.size)

    cases = {
        "warp_homography": lambda k: k.warp_homography(img, h, args.size, args.size, ZERO),
        "sample_bilinear": lambda k: k.sample_bilinear(img, u, v, ZERO),
    }
    found = backends()
    for name, call in cases.items():
        ref = call(found["python"])
        base = None
        for backend, module in found.items():
            out = call(module)
            diff = float(np.max(np.abs(out - ref)))
            t = _median_time(lambda: call(module), args.repeat)
            base = t if backend == "python" else base
            print(f"{name:16s} {backend:7s} {t * 1e3:8.3f} ms  x{base / t:6.1f}  max|diff|={diff:.1e}")


if __name__ == "__main__":
    main()
