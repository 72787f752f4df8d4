"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat N] [--json out.json]
"""
import argparse
import json
import math
import timeit

import numpy as np

from rotorkit import kernels
from rotorkit.basis import build_basis
from rotorkit.classical import ClassicalState, InertiaSpec, integrate_euler
from rotorkit.hamiltonian import _cached_multipole, cos_product


def case_three_j():
    for j1 in range(0, 12):
        for j2 in range(0, 12):
            for j3 in range(abs(j1 - j2), j1 + j2 + 1):
                kernels.three_j(j1, j2, j3, 0, 0, 0)


def case_small_d():
    theta = np.linspace(0, math.pi, 64)
    for j in range(0, 16):
        for m in range(-j, j + 1):
            kernels.small_d(j, m, 0, theta)


def case_multipole():
    _cached_multipole.cache_clear()
    cos_product(build_basis("asymmetric", 12), "X", "Z")


def case_rigid_body():
    integrate_euler(InertiaSpec(2.0, 1.5, 1.0), ClassicalState(np.array([0.05, 0.997, 0.05])),
                    np.linspace(0, 200, 401), tol=1e-10)


CASES = {"three_j": case_three_j, "small_d": case_small_d, "multipole": case_multipole,
         "rigid_body": case_rigid_body}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", default=None, help="write timings to this file")
    args = ap.parse_args()
    backends = kernels.available_backends()
    previous = kernels.BACKEND
    results = {}
    for name, fn in CASES.items():
        results[name] = {}
        for b in backends:
            kernels.use_backend(b)
            results[name][b] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
    kernels.use_backend(previous)
    _cached_multipole.cache_clear()
    print(f"{'kernel':<12}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, t in results.items():
        speed = t["python"] / t["compiled"] if "compiled" in t else float("nan")
        print(f"{name:<12}" + "".join(f"{t[b]:>11.4f}s" for b in backends) + f"{speed:>9.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
