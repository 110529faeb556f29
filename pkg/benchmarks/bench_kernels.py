"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 50]

Numba timings exclude the first (compiling) call.
"""

import argparse
import time

import numpy as np

from ssfeedback import _kernels
from ssfeedback.probing import dft_codebook


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def cases(rng):
    h64 = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    dico = dft_codebook(64, 4).beams
    basis = rng.standard_normal((64, 8)) + 1j * rng.standard_normal((64, 8))
    p1 = np.linalg.qr(rng.standard_normal((16, 4)) + 1j * rng.standard_normal((16, 4)))[0]
    p2 = np.linalg.qr(rng.standard_normal((16, 4)) + 1j * rng.standard_normal((16, 4)))[0]
    m = p1 @ p1.conj().T - p2 @ p2.conj().T
    x0 = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    us = rng.uniform(-0.5, 0.5, 256)
    return {
        "greedy_select N_t=64 O_D=4 q=4": lambda k: k.greedy_select(h64, dico, 4, 1e-10),
        "mgs 64x8": lambda k: k.mgs(basis, 1e-8),
        "power_iteration 16x16": lambda k: k.power_iteration(m, x0, 1000, 1e-13),
        "steering 256 x N_t=64": lambda k: k.steering(us, 64),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args(argv)
    if _kernels.numba_impl is None:
        raise SystemExit("numba is not installed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'numpy [us]':>12s} {'numba [us]':>12s} {'speedup':>8s}")
    for name, call in cases(rng).items():
        call(_kernels.numba_impl)  # compile
        t_np = best_of(lambda: call(_kernels.numpy_impl), args.repeat)
        t_nb = best_of(lambda: call(_kernels.numba_impl), args.repeat)
        print(f"{name:34s} {t_np * 1e6:12.1f} {t_nb * 1e6:12.1f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
