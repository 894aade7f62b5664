"""Times the compiled and numpy kernel backends on the same inputs.

    python benchmarks/bench_kernels.py [--lam 9 16 25] [--repeat 20]
"""

import argparse
import timeit

import numpy as np

from nsasym import kernels
from nsasym.bilinear import bilinear_B, bs_real_matrix
from nsasym.field import SpectralField
from nsasym.modes import enumerate_modes


def bench(lam: float, repeat: int, rng: np.random.Generator) -> list[tuple[str, str, float]]:
    ms = enumerate_modes(3, lam)
    ms.triads()  # cached; keep enumeration out of the timings
    u, v = SpectralField.random(ms, rng), SpectralField.random(ms, rng)
    rows = []
    for backend in kernels.available_backends():
        for name, fn in [("convolve", lambda: bilinear_B(u, v, backend)),
                         ("linearize", lambda: bs_real_matrix(v, backend))]:
            fn()
            t = min(timeit.repeat(fn, number=1, repeat=repeat))
            rows.append((name, backend, t))
    return rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lam", type=float, nargs="+", default=[9, 16, 25])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    if "cython" not in kernels.available_backends():
        print("compiled kernels not built; timing the numpy backend only")
    print(f"{'Lambda':>7} {'modes':>6} {'kernel':>10} {'backend':>8} {'best ms':>10} {'speedup':>8}")
    for lam in args.lam:
        rows = bench(lam, args.repeat, rng)
        ref = {name: t for name, b, t in rows if b == "python"}
        n = len(enumerate_modes(3, lam))
        for name, backend, t in rows:
            print(f"{lam:7g} {n:6d} {name:>10} {backend:>8} {1e3 * t:10.3f} {ref[name] / t:7.1f}x")


if __name__ == "__main__":
    main()
