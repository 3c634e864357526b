"""Compare the compiled and numpy GMM accumulation kernels.

Usage: python3 benchmarks/benchmark_kernels.py [--frames N] [--components C]
                                               [--dim D] [--repeats R]
"""

import argparse
import time

import numpy as np

from ssd_screen.ivector.kernels import available_backends


def run(frames, components, dim, repeats):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((frames, dim))
    weights = np.full(components, 1.0 / components)
    means = rng.standard_normal((components, dim)) * 2
    variances = rng.uniform(0.5, 2.0, (components, dim))

    backends = available_backends()
    results = {}
    reference = None
    for name, accumulate in sorted(backends.items()):
        accumulate(x, weights, means, variances)  # warm up
        times = []
        for _ in range(repeats):
            start = time.perf_counter()
            out = accumulate(x, weights, means, variances)
            times.append(time.perf_counter() - start)
        if reference is None:
            reference = out
        else:
            assert np.allclose(out[0], reference[0], rtol=1e-10)
        results[name] = min(times)

    frames_per_sec = {n: frames / t for n, t in results.items()}
    print(f"gmm_accumulate: {frames} frames, {components} components, "
          f"dim {dim}, best of {repeats}")
    for name in sorted(results):
        print(f"  {name:8s} {results[name] * 1e3:8.2f} ms "
              f"({frames_per_sec[name] / 1e6:6.2f} M frames/s)")
    if len(results) == 2:
        speedup = results["numpy"] / results["cython"]
        print(f"  cython speedup over numpy: {speedup:.2f}x")
    else:
        print("  compiled extension not built; numpy lane only")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--frames", type=int, default=20000)
    parser.add_argument("--components", type=int, default=64)
    parser.add_argument("--dim", type=int, default=20)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    run(args.frames, args.components, args.dim, args.repeats)


if __name__ == "__main__":
    main()
