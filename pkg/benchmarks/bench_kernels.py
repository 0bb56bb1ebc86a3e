"""Time the numba and numpy kernel backends on the same inputs.

    python3 benchmarks/bench_kernels.py [--cells N] [--repeat R]

JIT compilation is excluded by a warm-up call on a small slice.
"""
import argparse
import time

import numpy as np

from qcpl import kernels


def _cases(n, rng):
    # shapes of the S^3 x S^3 workload: 7 vertices in R^8, 6 base vectors
    pts = rng.standard_normal((n, 7, 8))
    base = pts[:, 1:] - pts[:, :1]
    frames = rng.standard_normal((n, 6, 8))
    simp = rng.standard_normal((n, 7, 6))
    bs = np.array([0, 4, 8], dtype=np.int64)
    radii = np.array([1.0, 1.0])
    return {
        "simplex_volumes": (base,),
        "vertex_diameters": (pts,),
        "projected_dets": (frames, base),
        "origin_barycentric": (simp,),
        "hull_max_distance": (pts, bs, radii),
    }


def _best(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cells", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    cases = _cases(args.cells, rng)
    np_be, nb_be = kernels.get_backend("numpy"), kernels.get_backend("numba")
    print(f"cells={args.cells} repeat={args.repeat} (best of)")
    print(f"{'kernel':<20} {'numpy s':>10} {'numba s':>10} {'speedup':>8}  max|diff|")
    for name, inputs in cases.items():
        f_np, f_nb = getattr(np_be, name), getattr(nb_be, name)
        f_nb(*[a[:8] if a.ndim == 3 else a for a in inputs])  # compile
        t_np = _best(f_np, inputs, args.repeat)
        t_nb = _best(f_nb, inputs, args.repeat)
        diff = np.nanmax(np.abs(f_np(*inputs) - f_nb(*inputs)))
        print(f"{name:<20} {t_np:>10.4f} {t_nb:>10.4f} {t_np / t_nb:>7.1f}x  {diff:.1e}")


if __name__ == "__main__":
    main()
