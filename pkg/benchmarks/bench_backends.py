"""Compare the numba and numpy implementations of the hot kernels.

Both implementations are importable side by side, so one process times
them on identical inputs after a warm-up call that triggers compilation.

    python3 benchmarks/bench_backends.py --repeats 5 --out bench_backends.json
"""
import argparse
import json
import platform
import time

import numpy as np

from dasdag import _kernels
from dasdag.graph import sample_er

KERNELS = {
    "rbf_gram": (_kernels.rbf_gram_numpy, _kernels.rbf_gram_numba),
    "descendants": (_kernels.descendants_numpy, _kernels.descendants_numba),
    "sid_matrix": (_kernels.sid_matrix_python, _kernels.sid_matrix_numba),
}


def best_time(fn, args, repeats):
    """Minimum wall time over ``repeats`` calls."""
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    for n in (500, 1000, 2000):
        X = rng.standard_normal((n, 10))
        yield "rbf_gram", f"n={n}, d=10", (X, 1.0)
    for d in (50, 200):
        g = sample_er(d, 4 * d, rng)
        yield "descendants", f"d={d} ER4", (g.adj,)
    for d in (20, 50, 100):
        t, e = sample_er(d, 2 * d, rng), sample_er(d, 2 * d, rng)
        yield "sid_matrix", f"d={d} ER2", (t.adj, e.adj)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", help="optional JSON output path")
    args = ap.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rows = []
    for name, label, inputs in cases(np.random.default_rng(args.seed)):
        ref, fast = KERNELS[name]
        fast(*inputs)  # compile outside the timed region
        np.testing.assert_allclose(np.asarray(fast(*inputs), float), np.asarray(ref(*inputs), float), rtol=1e-10, atol=1e-12)
        t_ref = best_time(ref, inputs, args.repeats)
        t_fast = best_time(fast, inputs, args.repeats)
        rows.append({"kernel": name, "case": label, "numpy_s": t_ref, "numba_s": t_fast, "speedup": t_ref / t_fast})
        print(f"{name:12s} {label:14s} numpy {t_ref * 1e3:9.2f} ms  numba {t_fast * 1e3:9.2f} ms  x{t_ref / t_fast:6.1f}")

    if args.out:
        meta = {"python": platform.python_version(), "numpy": np.__version__, "repeats": args.repeats}
        with open(args.out, "w") as fh:
            json.dump({"meta": meta, "results": rows}, fh, indent=2)


if __name__ == "__main__":
    main()
