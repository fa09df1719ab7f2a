"""Benchmark the compiled Green-symbol kernel against the numpy fallback.

    python -m cnsplab.bench [N]

Reports evaluation throughput for both backends on N (t, xi) pairs and the
maximum disagreement between them.
"""

from __future__ import annotations

import sys
import time

import numpy as np

from . import _green_py

try:
    from . import _green_cy
except ImportError:
    _green_cy = None


def bench(n: int = 2_000_000) -> None:
    rng = np.random.default_rng(0)
    xi2 = (10.0 ** rng.uniform(-3, 3, size=n)) ** 2
    t = 0.7
    impls = [("python", _green_py.green_core)]
    if _green_cy is not None:
        impls.append(("cython", _green_cy.green_core))
    results = {}
    for name, fn in impls:
        fn(t, xi2[:1000], 1.0, 0.0, 1.0, 1.0)  # warm up
        t0 = time.perf_counter()
        results[name] = fn(t, xi2, 1.0, 0.0, 1.0, 1.0)
        dt = time.perf_counter() - t0
        print(f"{name:8s} {n / dt / 1e6:8.2f} Mmodes/s   ({dt * 1e3:.1f} ms)")
    if len(results) == 2:
        worst = max(float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
                    for a, b in zip(results["python"], results["cython"]))
        print(f"max |python - cython| = {worst:.3e}")
    else:
        print("compiled backend not available; built only the fallback")


if __name__ == "__main__":
    bench(int(sys.argv[1]) if len(sys.argv) > 1 else 2_000_000)
