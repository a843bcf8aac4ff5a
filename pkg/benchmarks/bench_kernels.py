#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Times the im2col/col2im lowering in both backends plus a full conv2d
forward+backward step through the engine, and prints a speedup table.

    python3 benchmarks/bench_kernels.py [--repeats 30]
"""

import argparse
import statistics
import time

import numpy as np

from han_sr.kernels import native_backend, numpy_backend


def time_call(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return statistics.median(times)


CASES_2D = [
    ("batch4 c16 32x32 k3", (4, 16, 32, 32), 3, 1, 1),
    ("batch16 c16 32x32 k3", (16, 16, 32, 32), 3, 1, 1),
    ("batch1 c64 48x48 k3", (1, 64, 48, 48), 3, 1, 1),
    ("batch4 c16 32x32 k3 s2", (4, 16, 32, 32), 3, 1, 2),
]

CASES_3D = [
    ("batch4 vol 16x32x32", (4, 1, 16, 32, 32), 1),
    ("batch1 vol 64x48x48", (1, 1, 64, 48, 48), 1),
]


def bench_backend(backend, repeats):
    rows = {}
    rng = np.random.default_rng(0)
    for name, shape, k, pad, stride in CASES_2D:
        x = rng.standard_normal(shape).astype(np.float32)
        rows[f"im2col_2d {name}"] = time_call(
            lambda: backend.im2col_2d(x, k, k, pad, stride), repeats)
        col = backend.im2col_2d(x, k, k, pad, stride)
        rows[f"col2im_2d {name}"] = time_call(
            lambda: backend.col2im_2d(col, shape, k, k, pad, stride), repeats)
    for name, shape, pad in CASES_3D:
        x = rng.standard_normal(shape).astype(np.float32)
        rows[f"im2col_3d {name}"] = time_call(
            lambda: backend.im2col_3d(x, 3, 3, 3, pad), repeats)
        col = backend.im2col_3d(x, 3, 3, 3, pad)
        rows[f"col2im_3d {name}"] = time_call(
            lambda: backend.col2im_3d(col, shape, 3, 3, 3, pad), repeats)
    return rows


def bench_conv_step(repeats):
    """Full conv2d forward+backward through the engine, per active backend."""
    from han_sr import ops
    from han_sr.tensor import Tape, Tensor

    rng = np.random.default_rng(1)
    x = Tensor(rng.standard_normal((4, 16, 32, 32)).astype(np.float32),
               requires_grad=True)
    w = Tensor(rng.standard_normal((16, 16, 3, 3)).astype(np.float32) * 0.05,
               requires_grad=True)
    b = Tensor(np.zeros(16, np.float32), requires_grad=True)

    def step():
        with Tape() as tape:
            out = ops.conv2d(x, w, b, padding=1)
            loss = ops.tensor_sum(out)
        tape.backward(loss)
        x.grad = w.grad = b.grad = None

    return time_call(step, repeats)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=30)
    args = parser.parse_args()

    native = native_backend()
    numpy_rows = bench_backend(numpy_backend, args.repeats)
    native_rows = bench_backend(native, args.repeats) if native else {}

    width = max(len(k) for k in numpy_rows)
    header = f"{'kernel':{width}}  {'numpy':>10}  {'native':>10}  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for key, numpy_t in numpy_rows.items():
        if native:
            native_t = native_rows[key]
            print(f"{key:{width}}  {numpy_t * 1e3:8.3f}ms  {native_t * 1e3:8.3f}ms"
                  f"  {numpy_t / native_t:7.2f}x")
        else:
            print(f"{key:{width}}  {numpy_t * 1e3:8.3f}ms  {'-':>10}  {'-':>8}")

    print()
    import han_sr.kernels as kernels
    step_time = bench_conv_step(args.repeats)
    print(f"conv2d forward+backward step ({kernels.BACKEND} backend): "
          f"{step_time * 1e3:.3f} ms")
    if not native:
        print("compiled kernels not built; showing the fallback only")


if __name__ == "__main__":
    main()
