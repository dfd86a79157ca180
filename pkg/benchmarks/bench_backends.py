#!/usr/bin/env python3
"""Benchmark the numba kernel backend against the pure-numpy fallback.

Times the convolution/pooling kernels, a full training step, and batched
detection features at the published network size, then prints a side-by-
side table.  Select what the package itself uses via AMBC_BACKEND
(numba | numpy | auto).

Usage: python benchmarks/bench_backends.py [--batch 128] [--m 16] [--repeat 10]
"""

import argparse
import time

import numpy as np

from ambc.cmnet import CmnetArch, init_params, backward
from ambc.cmnet import backend
from ambc.cmnet.network import conv_features


def time_call(fn, repeat):
    fn()  # warm up (JIT compile / cache load)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_backend(name, arch, params, batch, repeat):
    backend.set_backend(name)
    kern = backend.get_kernels()
    rng = np.random.default_rng(0)
    m = arch.m
    x = rng.standard_normal((batch, 2, m, m))
    labels = rng.integers(0, 2, size=batch)
    a1 = rng.standard_normal((batch, arch.conv1_filters, arch.conv1_out, arch.conv1_out))
    dz2 = rng.standard_normal((batch, arch.conv2_filters, arch.conv2_out, arch.conv2_out))
    big = rng.standard_normal((2000, 2, m, m))

    results = {
        "conv1 fwd": time_call(lambda: kern.conv_fwd(x, params.conv1_w, params.conv1_b), repeat),
        "conv2 fwd": time_call(lambda: kern.conv_fwd(a1, params.conv2_w, params.conv2_b), repeat),
        "conv2 dw": time_call(lambda: kern.conv_bwd_dw(a1, dz2), repeat),
        "conv2 dx": time_call(lambda: kern.conv_bwd_dx(dz2, params.conv2_w), repeat),
        "maxpool fwd": time_call(lambda: kern.maxpool_fwd(dz2), repeat),
        "train step (fwd+bwd)": time_call(
            lambda: backward(params, x, labels, rng=np.random.default_rng(1), mode="train"),
            repeat,
        ),
        "features x2000 (detect)": time_call(lambda: conv_features(params, big), max(2, repeat // 3)),
    }
    backend.set_backend(None)
    return results


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--batch", type=int, default=128)
    ap.add_argument("--m", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=10)
    args = ap.parse_args()

    arch = CmnetArch.for_antennas(args.m)
    params = init_params(arch, np.random.default_rng(42))
    print(f"M={args.m} ({arch.padding} padding, flatten {arch.flatten_len}), "
          f"batch={args.batch}, best of {args.repeat}\n")

    tables = {}
    for name in ("numpy", "numba"):
        try:
            tables[name] = bench_backend(name, arch, params, args.batch, args.repeat)
        except ImportError:
            print(f"{name} backend unavailable, skipping")

    keys = list(next(iter(tables.values())))
    width = max(len(k) for k in keys)
    header = f"{'kernel':<{width}}  " + "  ".join(f"{n:>12}" for n in tables)
    if len(tables) == 2:
        header += f"  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for key in keys:
        row = f"{key:<{width}}  " + "  ".join(
            f"{tables[n][key] * 1000:>10.1f}ms" for n in tables
        )
        if len(tables) == 2:
            row += f"  {tables['numpy'][key] / tables['numba'][key]:>7.2f}x"
        print(row)


if __name__ == "__main__":
    main()
