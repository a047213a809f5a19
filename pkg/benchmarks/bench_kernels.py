"""Benchmark the compiled GMM kernels against the pure-numpy fallback.

Usage:
    python3 benchmarks/bench_kernels.py [--repeats R]

Times gmm_score_batch and gmm_logpdf_batch on a range of batch sizes and
mixture sizes.  Both paths are always timed directly (the ALPS_NO_NUMBA env
var only controls which one the library dispatches to at import time).
"""

import argparse
import time

import numpy as np

from alps import _kernels
from alps.domain import draw_cn


def make_case(rng, n, d, K):
    x = draw_cn(rng, (n, d))
    log_w = np.log(rng.dirichlet(np.ones(K)))
    means = draw_cn(rng, (K, d))
    variances = rng.uniform(0.05, 2.0, K)
    return x, log_w, means, variances


def time_fn(fn, args, repeats):
    fn(*args)  # warm-up (triggers JIT compilation on the compiled path)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if not _kernels.USE_NUMBA:
        print("note: numba unavailable or disabled; compiled timings skipped")

    rng = np.random.default_rng(0)
    cases = [(256, 2, 3), (4096, 2, 3), (4096, 16, 8), (65536, 1, 3), (65536, 8, 16)]
    print(f"{'batch':>7} {'dim':>4} {'K':>4} {'kernel':<8} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for n, d, K in cases:
        case = make_case(rng, n, d, K)
        for name, fast, slow in (
            ("score", _kernels._gmm_score_njit, _kernels._gmm_score_numpy),
            ("logpdf", _kernels._gmm_logpdf_njit, _kernels._gmm_logpdf_numpy),
        ):
            t_np = time_fn(slow, case, args.repeats)
            if _kernels.USE_NUMBA:
                t_nb = time_fn(fast, case, args.repeats)
                print(
                    f"{n:>7} {d:>4} {K:>4} {name:<8} {t_np * 1e3:>8.2f}ms "
                    f"{t_nb * 1e3:>8.2f}ms {t_np / t_nb:>7.1f}x"
                )
            else:
                print(f"{n:>7} {d:>4} {K:>4} {name:<8} {t_np * 1e3:>8.2f}ms {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
