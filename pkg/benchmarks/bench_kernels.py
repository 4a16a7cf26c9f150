"""Time the numba and pure-numpy flavours of each hot kernel.

    python benchmarks/bench_kernels.py [--repeat 5] [--quick]

Both flavours are called directly, so the CANARY_DISABLE_NUMBA flag does not
matter here. Results are checked for agreement before timings are printed.
"""

import argparse
import time

import numpy as np

from canary import kernels
from canary._accel import NUMBA_INSTALLED


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(quick):
    rng = np.random.default_rng(0)
    scale = 0.1 if quick else 1.0

    n = int(20000 * scale)
    k = rng.integers(0, 100_000, size=n).astype(np.float64)
    nn = np.full(n, 100_000.0)
    p = rng.uniform(0.01, 0.99, size=n)
    yield (
        f"binom_logtail ({n} tails, n=1e5)",
        lambda: kernels._binom_logtail_nb(k, nn, p, True),
        lambda: kernels._binom_logtail_np(k, nn, p, True),
    )

    reps, steps = int(2000 * scale), 2000
    counts = rng.poisson(19.5, size=(reps, steps)).astype(np.int64)
    c0 = np.zeros(reps)
    yield (
        f"cusum_advance ({reps}x{steps})",
        lambda: kernels._cusum_advance_nb(c0, counts, 24.0, 1e9),
        lambda: kernels._cusum_advance_np(c0, counts, 24.0, 1e9),
    )

    reps, steps = int(200 * scale), 1000
    counts = rng.poisson(15.7, size=(reps, steps)).astype(np.int64)
    yield (
        f"glr_paths NB direct ({reps}x{steps}, W=52)",
        lambda: kernels._glr_paths_nb(counts, 15.7, 10.0, 52),
        lambda: kernels._glr_paths_np(counts, 15.7, 10.0, 52),
    )
    table = kernels._llr_table(int(counts.max()) * 52, 15.7, 10.0, 52)
    yield (
        f"glr_paths NB table ({reps}x{steps}, W=52)",
        lambda: kernels._glr_paths_table_nb(counts, table, 52),
        lambda: kernels._glr_paths_table_np(counts, table, 52),
    )

    w = rng.uniform(0.0, 0.05, size=int(5000 * scale))
    yield (
        f"bernoulli_convolve (n={w.size})",
        lambda: kernels._bernoulli_convolve_nb(w),
        lambda: kernels._bernoulli_convolve_np(w),
    )
    yield (
        f"bernoulli_poisson_diff (n={w.size})",
        lambda: kernels._poisson_diff_nb(w),
        lambda: kernels._poisson_diff_np(w),
    )


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="smaller inputs")
    args = ap.parse_args()
    if not NUMBA_INSTALLED:
        print("numba is not installed; nothing to compare")
        return

    print(f"{'kernel':44s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s}")
    for name, fast, slow in cases(args.quick):
        fast()  # compile outside the timing
        t_nb, r_nb = best_of(fast, args.repeat)
        t_np, r_np = best_of(slow, max(1, args.repeat // 2))
        if isinstance(r_nb, tuple):
            same = all(np.allclose(a, b, rtol=1e-12, atol=0) for a, b in zip(r_nb, r_np))
        else:
            same = np.allclose(r_nb, r_np, rtol=1e-10, atol=1e-12)
        flag = "" if same else "  MISMATCH"
        print(f"{name:44s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:7.1f}x{flag}")


if __name__ == "__main__":
    main()
