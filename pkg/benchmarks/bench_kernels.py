"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Both implementations are imported directly, so the comparison does not
depend on ``MEMETRON_PURE_PYTHON``. Results are checked for equality
before timing.
"""

from __future__ import annotations

import argparse
import random
import timeit

from memetron import _pykernels

try:
    from memetron import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def workloads(rng: random.Random) -> dict[str, tuple[str, tuple]]:
    s1 = "".join(rng.choice("ACGT") for _ in range(400))
    s2 = "".join(rng.choice("ACGT") for _ in range(400))
    a = [rng.gauss(0, 1) for _ in range(300)]
    b = [rng.gauss(0.2, 1) for _ in range(300)]
    return {
        "levenshtein 400x400": ("levenshtein", (s1, s2)),
        "dominance_counts 300x300": ("dominance_counts", (a, b)),
        "mann_whitney_null_counts m=n=25": ("mann_whitney_null_counts", (25, 25)),
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if _ckernels is None:
        print("compiled kernels unavailable; run `pip install -e . --no-build-isolation` with Cython installed")
    print(f"{'kernel':34s} {'python (ms)':>12s} {'cython (ms)':>12s} {'speedup':>8s}")
    for label, (name, call_args) in workloads(random.Random(args.seed)).items():
        py = getattr(_pykernels, name)
        py_t = min(timeit.repeat(lambda: py(*call_args), number=1, repeat=args.repeat)) * 1e3
        if _ckernels is None:
            print(f"{label:34s} {py_t:12.2f} {'-':>12s} {'-':>8s}")
            continue
        cy = getattr(_ckernels, name)
        assert cy(*call_args) == py(*call_args), f"{name}: backends disagree"
        cy_t = min(timeit.repeat(lambda: cy(*call_args), number=1, repeat=args.repeat)) * 1e3
        print(f"{label:34s} {py_t:12.2f} {cy_t:12.2f} {py_t / cy_t:7.1f}x")


if __name__ == "__main__":
    main()
