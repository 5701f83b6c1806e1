"""Compiled core versus numpy fallback on the two hot kernels.

    python3 benchmarks/bench_core.py [--sizes 64 128 256] [--threads 1 4] [--repeat 3]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from wke import _core_py

try:
    from wke import _core
except ImportError:  # pragma: no cover - depends on build
    _core = None


def lattice_case(n: int, rng: np.random.Generator):
    m = rng.uniform(0.0, 1.0, n)
    m[rng.uniform(size=n) < 0.3] = 0.0
    return (m, 0.0, 1.0 / n, 0.0, 1.0, 1.0)


def mild_case(n: int, rng: np.random.Generator):
    x = np.linspace(0.0, 8.0, n)
    wq = np.full(n, x[1])
    wq[[0, -1]] *= 0.5
    f = np.exp(-((x - 2.0) ** 2)) * (1 + 0.1 * rng.uniform(size=n))
    return (x, wq, f, 0.1, True)


def best(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--threads", type=int, nargs="+", default=[1, 4])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    if _core is None:
        print("compiled core not built; run `python3 setup.py build_ext --inplace`")
    head = f"{'kernel':16s} {'n':>5s} {'python s':>10s}" + "".join(f" {'ext t=' + str(t):>10s}" for t in args.threads)
    print(head + f" {'speedup':>8s} {'max rel diff':>13s}")
    for name, make, py, ext in (
            ("collision_rates", lattice_case, _core_py.collision_rates,
             None if _core is None else _core.collision_rates),
            ("mild_rates", mild_case, _core_py.mild_rates, None if _core is None else _core.mild_rates)):
        for n in args.sizes:
            case = make(n, rng)
            tp = best(lambda: py(*case), args.repeat)
            ref = py(*case)[0]
            row = f"{name:16s} {n:5d} {tp:10.4f}"
            te, diff = [], float("nan")
            if ext is not None:
                for t in args.threads:
                    te.append(best(lambda: ext(*case, t), args.repeat))
                    row += f" {te[-1]:10.4f}"
                out = ext(*case, args.threads[0])[0]
                diff = float(np.max(np.abs(out - ref)) / max(float(np.max(np.abs(ref))), 1e-300))
            speed = tp / min(te) if te else float("nan")
            print(row + f" {speed:8.1f} {diff:13.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
