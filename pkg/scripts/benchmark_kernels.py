"""Benchmark the compiled kernels against the pure-numpy fallback.

Builds the fourth-order system matrix on a sequence of meshes and times
matrix-vector products and symmetric Gauss-Seidel sweeps with both backends.
"""

import argparse
import time

import numpy as np

from morleyfem import assembly
from morleyfem._kernels import _pykernels
from morleyfem.mesh import uniform_unit_square
from morleyfem.spaces import BCVariant, SpaceTag, dof_space

try:
    from morleyfem._kernels import _ckernels
except ImportError:
    _ckernels = None


def system(n, eps=1e-2):
    space = dof_space(uniform_unit_square(n), SpaceTag.MORLEY, BCVariant.VH0)
    return assembly.assemble_ah(space).scale(eps**2).add(assembly.assemble_bh(space))


def time_kernel(func, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        func(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--levels", type=int, nargs="+", default=[4, 5, 6, 7],
                        help="mesh levels k, meshes n = 2^k")
    parser.add_argument("--repeats", type=int, default=20,
                        help="timing repetitions; the best run is reported")
    args = parser.parse_args()

    if _ckernels is None:
        print("compiled extension not built; timing the fallback only")
    backends = [("python", _pykernels)]
    if _ckernels is not None:
        backends.append(("compiled", _ckernels))

    print(f"{'kernel':<22}{'n':>6}{'dofs':>9}" +
          "".join(f"{name + ' [ms]':>16}" for name, _ in backends) +
          ("" if _ckernels is None else f"{'speedup':>10}"))
    rng = np.random.default_rng(0)
    for level in args.levels:
        n = 2**level
        A = system(n)
        x = rng.standard_normal(A.shape[1])
        out = np.empty(A.shape[0])
        b = rng.standard_normal(A.shape[0])
        csr = (A.indptr, A.indices, A.data)
        jobs = [
            ("csr_matvec", lambda impl: impl.csr_matvec(*csr, x, out)),
            ("gauss_seidel_forward",
             lambda impl: impl.gauss_seidel_forward(*csr, b, x.copy())),
            ("gauss_seidel_backward",
             lambda impl: impl.gauss_seidel_backward(*csr, b, x.copy())),
        ]
        for name, job in jobs:
            times = [time_kernel(job, (impl,), args.repeats)
                     for _, impl in backends]
            row = f"{name:<22}{n:>6}{A.shape[0]:>9}"
            row += "".join(f"{1e3 * t:>16.3f}" for t in times)
            if len(times) == 2:
                row += f"{times[0] / times[1]:>10.1f}x"
            print(row)


if __name__ == "__main__":
    main()
