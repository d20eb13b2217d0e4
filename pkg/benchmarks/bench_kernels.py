"""Compare the compiled phase-3 kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one line per (kernel, size) with the best wall time of each backend
and checks that both return identical arrays.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from cryptofolk import _kernels
from cryptofolk.crypto.prf import KIND_CODES

SIZES = (1_000, 10_000, 100_000, 1_000_000)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--nbits", type=int, default=12)
    args = parser.parse_args()
    if _kernels.compiled is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")

    kind = KIND_CODES["reference"]
    cumulative = np.array([1 << (args.nbits - 2), 1 << (args.nbits - 1), 3 << (args.nbits - 2),
                           1 << args.nbits], dtype=np.int64)
    print(f"{'kernel':<14}{'count':>10}{'cython ms':>12}{'numpy ms':>12}{'speedup':>9}")
    for name in ("prf_stream", "draw_outcomes"):
        for count in SIZES:
            call = {"prf_stream": (kind, 7, args.nbits, 3, count),
                    "draw_outcomes": (kind, 7, args.nbits, 3, count, cumulative)}[name]
            fast_fn = getattr(_kernels.compiled, name)
            slow_fn = getattr(_kernels.fallback, name)
            assert np.array_equal(fast_fn(*call), slow_fn(*call))
            fast = min(timeit.repeat(lambda: fast_fn(*call), number=1, repeat=args.repeat))
            slow = min(timeit.repeat(lambda: slow_fn(*call), number=1, repeat=args.repeat))
            print(f"{name:<14}{count:>10}{fast * 1e3:>12.3f}{slow * 1e3:>12.3f}{slow / fast:>8.1f}x")


if __name__ == "__main__":
    main()
