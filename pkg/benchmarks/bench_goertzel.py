"""Compare the numba and numpy Goertzel kernel paths.

Both implementations run the recurrence in the same order, so before timing
anything the script checks they agree bit for bit. Timings cover the three
shapes that show up in practice: one bank over one window (the per-probe
cost in the simulator), a full half-circle spectrum of one window, and a
batch of windows against the full spectrum (the bulk-verification shape).

Run as: python3 benchmarks/bench_goertzel.py [--repeats N]
"""

import argparse
import time

import numpy as np

from dutysim import _kernels
from dutysim.detect import DEFAULT_WINDOW, default_bank


def _coeffs(bins: np.ndarray, n: int) -> np.ndarray:
    return 2.0 * np.cos(2.0 * np.pi * bins / n)


def _best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5, help="timing repeats, best-of")
    args = ap.parse_args()

    if not _kernels._HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare against")

    n = DEFAULT_WINDOW
    rng = np.random.default_rng(0)
    window = rng.normal(size=n)
    batch = rng.normal(size=(100, n))

    bank_bins = np.asarray(default_bank().target_bins, dtype=np.float64)
    full_bins = np.arange(0, n // 2 + 1, dtype=np.float64)
    bank_c = _coeffs(bank_bins, n)
    full_c = _coeffs(full_bins, n)

    # Warm the JIT before any timing and check agreement while at it.
    cases = [
        ("bank x 1 window (13 bins)", window, bank_c),
        ("spectrum x 1 window (801 bins)", window, full_c),
    ]
    for name, x, c in cases:
        a = _kernels.goertzel_many_numba(x, c)
        b = _kernels.goertzel_many_numpy(x, c)
        if not np.array_equal(a, b):
            raise SystemExit(f"paths disagree on {name}")
    ab = _kernels.goertzel_batch_numba(batch, full_c)
    bb = _kernels.goertzel_batch_numpy(batch, full_c)
    if not np.array_equal(ab, bb):
        raise SystemExit("paths disagree on the batch case")
    print("agreement: numba and numpy outputs are bit-identical on all cases")
    print(f"timings: best of {args.repeats}")

    rows = []
    for name, x, c in cases:
        t_nb = _best_of(lambda: _kernels.goertzel_many_numba(x, c), args.repeats)
        t_np = _best_of(lambda: _kernels.goertzel_many_numpy(x, c), args.repeats)
        rows.append((name, t_nb, t_np))
    t_nb = _best_of(lambda: _kernels.goertzel_batch_numba(batch, full_c), args.repeats)
    t_np = _best_of(lambda: _kernels.goertzel_batch_numpy(batch, full_c), args.repeats)
    rows.append(("batch 100 windows x 801 bins", t_nb, t_np))

    width = max(len(r[0]) for r in rows)
    print(f"{'case':<{width}}  {'numba':>10}  {'numpy':>10}  {'speedup':>8}")
    for name, nb, np_ in rows:
        print(f"{name:<{width}}  {nb * 1e3:>8.3f}ms  {np_ * 1e3:>8.3f}ms  {np_ / nb:>7.1f}x")


if __name__ == "__main__":
    main()
