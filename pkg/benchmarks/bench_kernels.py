"""Compare the numba and numpy Monte Carlo kernels.

    python3 benchmarks/bench_kernels.py [--n 200000] [--repeat 5]
"""
import argparse
import time

import numpy as np

from pairpurify import _kernels as k
from pairpurify.channels import FluctuationProcess, pair_coefficients


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--steps", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    P, a12, b12, a34, b34 = pair_coefficients(FluctuationProcess.uniform().sample(args.n, rng))
    x0 = rng.standard_normal(args.n // 10)
    noise = rng.standard_normal((args.n // 10, args.steps))

    cases = {
        "pair_density": (lambda: k.pair_density_numpy(a12, b12, a34, b34, P),
                         lambda: k.pair_density_numba(a12, b12, a34, b34, P)),
        "ou_paths": (lambda: k.ou_paths_numpy(x0, 0.9, 0.4, noise),
                     lambda: k.ou_paths_numba(x0, 0.9, 0.4, noise)),
    }
    print(f"{'kernel':>14} {'numpy [ms]':>12} {'numba [ms]':>12} {'speedup':>8} {'max |diff|':>12}")
    for name, (np_fn, nb_fn) in cases.items():
        if k.NUMBA_AVAILABLE:
            nb_fn()  # compile
        t_np, r_np = best_of(np_fn, args.repeat)
        if k.NUMBA_AVAILABLE:
            t_nb, r_nb = best_of(nb_fn, args.repeat)
            diff = float(np.max(np.abs(r_np - r_nb)))
            print(f"{name:>14} {1e3 * t_np:12.3f} {1e3 * t_nb:12.3f} {t_np / t_nb:8.2f} {diff:12.3g}")
        else:
            print(f"{name:>14} {1e3 * t_np:12.3f} {'n/a':>12} {'n/a':>8} {'':>12}")


if __name__ == "__main__":
    main()
