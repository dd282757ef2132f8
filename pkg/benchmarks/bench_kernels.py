"""Compiled vs fallback timings for the hot kernels.

Usage::

    python benchmarks/bench_kernels.py [--n 200000] [--repeat 5]

Both variants are called on the same inputs and their results compared
before any timing is reported.  The switched-system integrator falls back
to an interpreted loop (it has no vectorised form), so it runs on a
shorter horizon.
"""

import argparse
import time

import numpy as np

from hybridts import _kernels as K


def best_of(fn, args, repeat):
    fn(*args)  # warm-up (triggers compilation on the numba side)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def cases(n):
    rng = np.random.default_rng(0)
    t = np.cumsum(rng.uniform(1e-4, 2e-3, n))
    d = np.exp(-0.3 * t) * (1.0 + 0.2 * np.sin(7 * t)) * 3.0
    V = d * d
    beta = 1.5 * d
    mats = np.stack([np.array([[0.0, 10.0], [0.0, 0.0]]), np.array([[1.5, 2.0], [-2.0, -0.5]])])
    l1, l2 = np.array([1.0, 4.0]), np.array([1.0, -2.0])
    return {
        "prefix_bound": (beta, d, 1e-9, 1e-9),
        "late_exceedance": (t, d, 5.0, 2.0),
        "first_corridor": (t, d, 0.5, 2.0, 3.0),
        "corridor_decrease": (t, d, V, 0.2, 5.0, 1.0, 1e-3, 1e-9, 1e-9),
        "switched_planar": (mats, l1, l2, np.array([3.0, 1.0]), 1e-4, 2.0, 1e-12, 1e-9),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not K.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'kernel':<20}{'numba [ms]':>12}{'fallback [ms]':>15}{'speed-up':>10}")
    for name, inp in cases(args.n).items():
        fast, slow = K.compiled(name), K.fallback(name)
        ra, rb = fast(*inp), slow(*inp)
        if name == "switched_planar":
            n = ra[4]
            ok = ra[4] == rb[4] and np.array_equal(ra[0][:n], rb[0][:n]) and np.array_equal(ra[1][:n], rb[1][:n])
        else:
            ok = same(ra, rb)
        if not ok:
            raise SystemExit(f"{name}: compiled and fallback results differ")
        tf = best_of(fast, inp, args.repeat)
        ts = best_of(slow, inp, max(1, args.repeat // 2) if name == "switched_planar" else args.repeat)
        print(f"{name:<20}{tf * 1e3:>12.2f}{ts * 1e3:>15.2f}{ts / tf:>9.1f}x")


if __name__ == "__main__":
    main()
