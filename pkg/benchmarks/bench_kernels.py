"""Compare the compiled kernels with the pure-Python fallback.

    python benchmarks/bench_kernels.py [--length 2000] [--steps 20] [--repeat 3]

Both backends are imported directly, so the environment switch that picks the
package default does not matter here.  Results are checked for equality before
timing is reported.
"""
import argparse
import time

import numpy as np

from boxball import _pykernels

try:
    from boxball import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(L, steps, rng):
    single = (rng.random(L) < 0.3).astype(np.uint8)
    lanes = (rng.random((64, L)) < 0.3).astype(np.uint8)
    bonds = np.arange(0, L, max(1, L // 8), dtype=np.int64)

    def periodic_sweep(k):
        def run():
            s = single.copy()
            loads = np.zeros(L, dtype=np.int32)
            for _ in range(steps):
                u = k.periodic_load(s, 4)
                k.sweep(s, 4, u, True, loads)
            return s

        return run

    def lane_evolve(k):
        def run():
            w = k.pack_lanes(lanes)
            acc = np.zeros((bonds.size, 64), dtype=np.int64)
            k.lane_evolve(w, 4, steps, bonds, acc)
            return acc

        return run

    def solitons(k):
        return lambda: k.soliton_rounds(single, 40)

    return {
        f"T_4 sweep, one ring, {steps} steps": periodic_sweep,
        f"T_4 lane kernel, 64 rings, {steps} steps": lane_evolve,
        "soliton rounds (energies E_1..E_40)": solitons,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--length", type=int, default=2000, help="ring length (sites)")
    ap.add_argument("--steps", type=int, default=20, help="time steps per run")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':45s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>9s}")
    for name, make in cases(args.length, args.steps, rng).items():
        tp, rp = best_of(make(_pykernels), args.repeat)
        tc, rc = best_of(make(_kernels), args.repeat)
        if not np.array_equal(np.asarray(rp), np.asarray(rc)):
            raise SystemExit(f"backends disagree on {name!r}")
        print(f"{name:45s} {tp:11.4f} {tc:11.4f} {tp / tc:9.0f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
