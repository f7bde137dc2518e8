"""Compare the numba and pure-numpy TT contraction paths.

Run with the package installed:

    python3 benchmarks/bench_contraction.py

TTLORA_BACKEND only affects the in-package dispatch; this script calls
both implementations directly.
"""

import time

import numpy as np

from ttlora.kernels import _tt_apply_numpy, _tt_apply_packed, pack_cores
from ttlora.tt_core import TTRanks, TensorizationMap, tt_random_init

CASES = [
    # (m, n, row_modes, col_modes, rank, batch)
    (64, 64, (8, 8), (8, 8), 4, 32),
    (256, 256, (4, 8, 8), (8, 8, 4), 8, 32),
    (768, 2304, (12, 8, 8), (3, 8, 8, 12), 5, 32),
    (1024, 1024, (4, 4, 8, 8), (8, 8, 4, 4), 10, 8),
]


def timeit(fn, reps=200):
    fn()  # warmup / JIT
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - t0) / reps


def main():
    print(f"{'case':>28} {'numpy (us)':>12} {'numba (us)':>12} {'speedup':>8}")
    for m, n, rm, cm, rank, batch in CASES:
        tmap = TensorizationMap(m, n, rm, cm)
        cores = tt_random_init(tmap.shape, TTRanks.uniform(tmap.shape, rank),
                               seed=0, scheme="gaussian", sigma=0.5)
        x = np.random.default_rng(1).normal(size=(batch, n))
        flat, rl, kk, rr, off = pack_cores(cores.cores)
        p = len(rm)

        t_np = timeit(lambda: _tt_apply_numpy(cores.cores, p, x))
        t_nb = timeit(lambda: _tt_apply_packed(flat, rl, kk, rr, off, p, x))

        y_np = _tt_apply_numpy(cores.cores, p, x)
        y_nb = _tt_apply_packed(flat, rl, kk, rr, off, p, x)
        assert np.allclose(y_np, y_nb, rtol=1e-12, atol=1e-12)

        label = f"{m}x{n} r{rank} b{batch}"
        print(f"{label:>28} {t_np * 1e6:>12.1f} {t_nb * 1e6:>12.1f} "
              f"{t_np / t_nb:>7.2f}x")


if __name__ == "__main__":
    main()
