#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Times the individual kernels and a full model forward+backward step at a few
embedding sizes. Run after installing the package:

    python3 benchmarks/bench_backends.py
"""

import time

import numpy as np

from hoso_adapter import numerics as nm
from hoso_adapter.model import AdapterModel, init_adapter


def timeit(fn, repeats=200):
    fn()  # warmup
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats * 1e6  # us


def bench_kernels(k, batch, dim, classes, rng):
    x = rng.normal(size=(batch, dim))
    w = rng.normal(size=(dim // 4, dim))
    b = rng.normal(size=dim // 4)
    dy = rng.normal(size=(batch, dim // 4))
    z = rng.normal(size=(batch, classes))
    labels = rng.integers(0, classes, batch).astype(np.intp)
    y, norms = k.l2norm_rows(x)
    p = k.softmax_rows(z)
    return {
        "linear_fwd": timeit(lambda: k.linear_forward(x, w, b)),
        "linear_bwd": timeit(lambda: k.linear_backward(x, w, dy)),
        "relu_fwd": timeit(lambda: k.relu_forward(x)),
        "l2norm": timeit(lambda: k.l2norm_rows(x)),
        "l2norm_bwd": timeit(lambda: k.l2norm_rows_backward(y, norms, x)),
        "softmax": timeit(lambda: k.softmax_rows(z)),
        "xent": timeit(lambda: k.xent_rows(p, labels)),
    }


def bench_model_step(kernels, batch, dim, classes, rng):
    proto = rng.normal(size=(classes, dim))
    proto /= np.linalg.norm(proto, axis=1, keepdims=True)
    model = AdapterModel(proto, 10.0, init_adapter(dim, seed=0), kernels=kernels)
    x = rng.normal(size=(batch, dim))
    labels = rng.integers(0, classes, batch)

    def step():
        logits, tape = model.forward(x)
        _, dz = nm.softmax_xent_batch(logits, labels, kernels)
        model.backward(tape, dz)

    return timeit(step, repeats=100)


def main():
    backends = nm.get_backends()
    if "cython" not in backends:
        print("compiled kernels not built; run pip install -e . first")
    rng = np.random.default_rng(0)
    batch, classes = 32, 100
    for dim in (32, 256, 1024):
        print(f"\n== batch={batch}, dim={dim}, classes={classes} (microseconds/call) ==")
        results = {name: bench_kernels(k, batch, dim, classes, rng)
                   for name, k in backends.items()}
        ops = next(iter(results.values())).keys()
        print(f"{'op':<12}" + "".join(f"{name:>12}" for name in results))
        for op in ops:
            print(f"{op:<12}" + "".join(f"{results[name][op]:>12.1f}" for name in results))
        print(f"{'model_step':<12}" + "".join(
            f"{bench_model_step(k, batch, dim, classes, rng):>12.1f}"
            for k in backends.values()))


if __name__ == "__main__":
    main()
