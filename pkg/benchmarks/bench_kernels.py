"""Time the compiled kernels against the numpy fallback on the same inputs.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``. Each row is
the best of N runs; outputs of the two backends are also checked for
bitwise equality.
"""

import argparse
import timeit

import numpy as np

from implicit_sdf import _kernels_py

try:
    from implicit_sdf import _kernels as compiled
except ImportError:
    compiled = None


def cases():
    rng = np.random.default_rng(0)
    cloud = rng.standard_normal((4000, 3))
    probes = rng.standard_normal((20000, 3))
    pre = rng.standard_normal((512, 128)) * 0.05
    ev = np.array([0.0, 0.5, 1.0])
    q0 = rng.standard_normal(3)
    return [
        ("min_sq_dist 20000x4000 d=3", "min_sq_dist", (probes, cloud)),
        ("kth_sq_dist 4000 pts k=50", "kth_sq_dist", (cloud, 50)),
        ("linear_gd d=3 to tol 1e-8", "linear_gd", (ev, 0.1, q0, 0.01, 1_000_000, 1e-8, False)),
        ("softplus_pair 512x128", "softplus_pair", (pre, 100.0)),
    ]


def same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if compiled is None:
        print("compiled kernels are not built; only the fallback is available")
    print(f"{'kernel':32s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}  equal")
    for label, name, call_args in cases():
        py_fn = getattr(_kernels_py, name)
        t_py = min(timeit.repeat(lambda: py_fn(*call_args), number=1, repeat=args.repeat)) * 1e3
        if compiled is None:
            print(f"{label:32s} {t_py:10.2f} {'-':>10s} {'-':>8s}  -")
            continue
        c_fn = getattr(compiled, name)
        t_c = min(timeit.repeat(lambda: c_fn(*call_args), number=1, repeat=args.repeat)) * 1e3
        equal = same(py_fn(*call_args), c_fn(*call_args))
        print(f"{label:32s} {t_py:10.2f} {t_c:10.2f} {t_py / t_c:7.1f}x  {equal}")


if __name__ == "__main__":
    main()
