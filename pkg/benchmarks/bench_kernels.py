"""Compare the compiled and pure-Python kernels.

Usage::

    python3 benchmarks/bench_kernels.py --n 10 --repeat 5
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from ctqo import kernels
from ctqo.dynamics import Schedule, evolve
from ctqo.operators import DriverSpec, HamiltonianSpec
from ctqo.problems import make_problem
from ctqo.protocols import plus_state


def cases(n: int):
    prob = make_problem("maxcut", n, 2024)
    ci = np.array([c[0] for c in prob.couplings])
    cj = np.array([c[1] for c in prob.couplings])
    cw = np.array([c[2] for c in prob.couplings])
    empty_i, empty_f = np.zeros(0, dtype=np.int64), np.zeros(0)
    diag = np.asarray(prob.energies, dtype=float)
    rng = np.random.default_rng(0)
    psi = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    block = np.ascontiguousarray(np.tile(psi[:, None], (1, 8)))
    h = HamiltonianSpec(1.0, 0.0, DriverSpec.transverse_field(n), prob)
    ramp = [Schedule.linear("A", 1.0, 0.1, 4.0), Schedule.linear("B", 0.1, 1.0, 4.0)]
    psi0 = plus_state(n)
    return {
        "ising_energies": lambda impl: kernels.ising_energies(n, ci, cj, cw, empty_i, empty_f,
                                                              impl=impl),
        "apply (vector)": lambda impl: kernels.hamiltonian_apply(psi, n, 0.7, diag, impl=impl),
        "apply (8 columns)": lambda impl: kernels.hamiltonian_apply(block, n, 0.7, diag,
                                                                    impl=impl),
        "evolve (ramp t=4)": lambda impl: evolve(h, ramp, psi0, [0.0, 4.0], impl=impl),
    }


def best_time(fn, repeat: int) -> float:
    fn()  # warm-up
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=10, help="number of qubits")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    try:
        kernels.implementation("cython")
        impls = ["cython", "python"]
    except ImportError:
        print("compiled kernels not built; timing the Python fallback only")
        impls = ["python"]
    print(f"n={args.n}, best of {args.repeat}")
    print(f"{'kernel':20s}" + "".join(f"{i:>12s}" for i in impls)
          + ("     speed-up" if len(impls) == 2 else ""))
    for name, fn in cases(args.n).items():
        ts = [best_time(lambda: fn(i), args.repeat) for i in impls]
        row = f"{name:20s}" + "".join(f"{t * 1e3:10.2f}ms" for t in ts)
        if len(ts) == 2:
            row += f"{ts[1] / ts[0]:12.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
