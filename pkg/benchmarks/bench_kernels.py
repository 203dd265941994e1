"""Micro-benchmark: numba kernels against the pure-numpy fallbacks.

Runs each loss+gradient kernel on a few representative batch shapes and
reports per-call time for both backends, the speedup, and the largest
absolute disagreement between the two implementations.

    python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from gradsched import kernels


def _time_call(fn, args, repeats):
    fn(*args)  # warm JIT and caches before timing
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def _max_diff(a, b):
    loss_a, grad_a = a
    loss_b, grad_b = b
    return max(abs(loss_a - loss_b), float(np.max(np.abs(grad_a - grad_b))))


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="compare gradsched kernel backends")
    parser.add_argument("--repeats", type=int, default=2000,
                        help="timed calls per case (default 2000)")
    args = parser.parse_args(argv)

    rng = np.random.default_rng(0)
    cases = []
    for batch, dim, classes in ((100, 20, 10), (100, 784, 10)):
        X = rng.normal(size=(batch, dim))
        y = rng.integers(0, classes, size=batch)
        w = rng.normal(scale=0.1, size=(dim + 1) * classes)
        cases.append((f"softmax {batch}x{dim} C={classes}",
                      "softmax_loss_grad", (w, X, y, classes)))
    for batch, dim, hidden, classes in ((100, 20, 64, 10), (100, 784, 100, 10)):
        X = rng.normal(size=(batch, dim))
        y = rng.integers(0, classes, size=batch)
        w = rng.normal(scale=0.1,
                       size=(dim + 1) * hidden + (hidden + 1) * classes)
        cases.append((f"mlp1 {batch}x{dim} H={hidden} C={classes}",
                      "mlp_loss_grad", (w, X, y, hidden, classes)))

    names = kernels.available_backends()
    print(f"backends: {', '.join(names)}; repeats per case: {args.repeats}")
    header = f"{'case':<30}" + "".join(f"{n + ' us/call':>16}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10}{'max diff':>12}"
    print(header)
    for label, kernel, call_args in cases:
        per = {}
        out = {}
        for name in names:
            fn = kernels.get_backend(name)[kernel]
            out[name] = fn(*call_args)
            per[name] = _time_call(fn, call_args, args.repeats)
        row = f"{label:<30}" + "".join(f"{per[n] * 1e6:>16.1f}" for n in names)
        if len(names) == 2:
            row += f"{per['numpy'] / per['numba']:>10.2f}"
            row += f"{_max_diff(out['numba'], out['numpy']):>12.2e}"
        print(row)


if __name__ == "__main__":
    main()
