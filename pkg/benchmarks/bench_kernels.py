"""Compare the numba and pure-numpy convolution kernels.

    python benchmarks/bench_kernels.py [--repeat N]

Times forward and backward convolution at a few representative shapes, then
one full training step per backend (including the default per-call ``auto``
choice) for a narrow and a full-width (C=64) network.
"""

import argparse
import timeit

import numpy as np

from rcan import kernels, network, optim
from rcan._accel import HAS_NUMBA
from rcan.optim import AdamHyper, AdamState

SHAPES = [
    # (batch, in_c, out_c, k, h, w)
    (16, 64, 64, 3, 48, 48),
    (2, 8, 8, 3, 48, 48),
    (2, 64, 4, 1, 1, 1),
    (1, 64, 256, 3, 24, 24),
]


def best_of(fn, repeat, number=3):
    for _ in range(2):  # compile and warm caches
        fn()
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def bench_conv(backends, repeat):
    rng = np.random.default_rng(0)
    print(f"{'shape (n,cin,cout,k,h,w)':<28}" + "".join(f"{b + ' fwd':>13}{b + ' bwd':>13}" for b in backends))
    for n, ci, co, k, h, w in SHAPES:
        x = rng.standard_normal((n, ci, h, w), dtype=np.float32)
        wt = rng.standard_normal((co, ci, k, k), dtype=np.float32)
        b = np.zeros(co, np.float32)
        gy = rng.standard_normal((n, co, h, w), dtype=np.float32)
        cells = []
        for be in backends:
            fwd = best_of(lambda: kernels.conv2d_forward(x, wt, b, backend=be), repeat)
            bwd = best_of(lambda: kernels.conv2d_backward(gy, x, wt, backend=be), repeat)
            cells += [fwd, bwd]
        print(f"{str((n, ci, co, k, h, w)):<28}" + "".join(f"{1e3 * c:11.2f}ms" for c in cells))


STEP_CONFIGS = [
    ("tiny G2 B2 C8", network.RcanConfig(G=2, B=2, C=8, r=4, scale=2), 2),
    ("full width G1 B2 C64", network.RcanConfig(G=1, B=2, C=64, r=16, scale=2), 4),
]


def bench_step(backends, repeat):
    """One forward + backward + Adam update on a 48x48 LR batch."""
    rng = np.random.default_rng(1)
    saved = kernels.BACKEND
    try:
        for label, cfg, batch in STEP_CONFIGS:
            lr = rng.uniform(size=(batch, 3, 48, 48)).astype(np.float32)
            hr = rng.uniform(size=(batch, 3, 96, 96)).astype(np.float32)
            for be in backends:
                kernels.BACKEND = be
                params = network.build(cfg, 0, dtype=np.float32)
                state = AdamState()

                def step():
                    optim.train_step(params, cfg, lr, hr, state, AdamHyper(), 1e-4)

                ms = 1e3 * best_of(step, repeat)
                print(f"train step, {label:<22} batch {batch}  {be:<6} {ms:8.1f} ms")
    finally:
        kernels.BACKEND = saved


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = ["numba", "numpy"] if HAS_NUMBA else ["numpy"]
    if not HAS_NUMBA:
        print("numba not installed; timing the numpy backend only")
    bench_conv(backends, args.repeat)
    print()
    bench_step(["auto", *backends] if HAS_NUMBA else backends, args.repeat)


if __name__ == "__main__":
    main()
