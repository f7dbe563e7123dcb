"""Compare the numba and pure-numpy noise kernels.

Usage: python benchmarks/bench_noise.py [--samples N] [--octaves K] [--repeat R]

Times perlin2 and fbm on the same random sample batch with both execution
paths, verifies the outputs agree, and prints a small table. Run with
WORLDSIM_NUMBA=0 to confirm the numpy fallback is the only path compiled in.
"""

import argparse
import time

import numpy as np

from worldsim.noise import fbm, numba_enabled, perlin2


def bench(fn, repeat):
    fn()  # warmup / jit compile
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--samples", type=int, default=1_000_000)
    parser.add_argument("--octaves", type=int, default=5)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    xs = rng.uniform(-1000, 1000, args.samples)
    ys = rng.uniform(-1000, 1000, args.samples)

    cases = [
        ("perlin2", lambda force: perlin2(1, xs, ys, force_numpy=force)),
        ("fbm", lambda force: fbm(1, xs, ys, octaves=args.octaves,
                                    force_numpy=force)),
    ]

    print(f"samples={args.samples:,}  octaves={args.octaves}  "
          f"repeat={args.repeat}  numba={'on' if numba_enabled() else 'off'}")
    print(f"{'kernel':<10} {'numpy':>10} {'numba':>10} {'speedup':>9}")
    for name, run in cases:
        t_numpy = bench(lambda: run(True), args.repeat)
        if numba_enabled():
            t_numba = bench(lambda: run(False), args.repeat)
            assert np.allclose(run(True), run(False), atol=1e-12)
            print(f"{name:<10} {t_numpy * 1e3:>8.1f}ms {t_numba * 1e3:>8.1f}ms"
                  f" {t_numpy / t_numba:>8.2f}x")
        else:
            print(f"{name:<10} {t_numpy * 1e3:>8.1f}ms {'n/a':>10} {'n/a':>9}")


if __name__ == "__main__":
    main()
