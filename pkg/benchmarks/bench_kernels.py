"""Compare the compiled kernels with the numpy fallback on desk-scale streams.

    python3 benchmarks/bench_kernels.py [--rate HZ] [--duration S] [--repeat N]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from fransonsim._kernels import _pykernels
from fransonsim.source import PS_PER_S, poisson_times

try:
    from fransonsim._kernels import _ckernels
except ImportError:
    _ckernels = None


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rate", type=float, default=2e5, help="clicks per second per channel")
    parser.add_argument("--duration", type=float, default=1.0, help="stream length in s")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(0)
    dur = int(args.duration * PS_PER_S)
    a = poisson_times(args.rate, dur, rng)
    b = poisson_times(args.rate, dur, rng) + 3500
    b.sort()
    lo, bw, nbins = 1288, 75, 59
    print(f"streams: {a.size} and {b.size} tags over {args.duration:g} s")

    backends = {"python": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    else:
        print("compiled kernels not built; timing the fallback only")

    results = {}
    for name, mod in backends.items():
        h = min(timeit.repeat(lambda: mod.cross_histogram(a, b, lo, bw, nbins), number=1, repeat=args.repeat))
        d = min(timeit.repeat(lambda: mod.dead_time_mask(a, 30_000), number=1, repeat=args.repeat))
        results[name] = (h, d)
        print(f"{name:>7}: cross_histogram {1e3 * h:8.2f} ms   dead_time_mask {1e3 * d:8.2f} ms")
    if len(results) == 2:
        (ph, pd), (ch, cd) = results["python"], results["cython"]
        print(f"speed-up: cross_histogram x{ph / ch:.1f}, dead_time_mask x{pd / cd:.1f}")
        assert np.array_equal(_pykernels.cross_histogram(a, b, lo, bw, nbins), _ckernels.cross_histogram(a, b, lo, bw, nbins))
        assert np.array_equal(_pykernels.dead_time_mask(a, 30_000), _ckernels.dead_time_mask(a, 30_000))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
