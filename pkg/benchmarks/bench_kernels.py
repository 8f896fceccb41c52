"""Compare the compiled and pure-Python kernel backends.

Usage::

    python benchmarks/bench_kernels.py [--refinements 2] [--repeat 5]

Each kernel is timed on the fine level of the default 8 x 4 composite
domain. Timings are the best of ``--repeat`` runs.
"""
import argparse
import timeit

import numpy as np

from cellshape import kernels
from cellshape.fem import MaterialTable, assemble_elasticity
from cellshape.mesh import generate_composite_domain
from cellshape.mgsolve import block_diagonal_inverse


def kernel_cases(mesh, rng):
    V = np.ascontiguousarray(mesh.vertices, dtype=np.float64)
    T = np.ascontiguousarray(mesh.triangles, dtype=np.int64)
    field = 1e-3 * rng.standard_normal((mesh.n_vertices, 2))
    py = kernels.get_backend("python")
    grads, area = py.triangle_geometry(V, T)
    area = np.abs(area)
    vgrad = py.nodal_gradients(grads, T, field)
    lam = rng.uniform(0.5, 2.0, len(T))
    mu = rng.uniform(0.1, 1.0, len(T))
    A = assemble_elasticity(mesh, MaterialTable.graded(8), 0.1).matrix.tocsr()
    A.sort_indices()
    dinv = block_diagonal_inverse(A)
    ip, ix = A.indptr.astype(np.int32), A.indices.astype(np.int32)
    rhs = rng.standard_normal(A.shape[0])

    def jacobi(be):
        be.block_jacobi(ip, ix, A.data, dinv, np.zeros(A.shape[0]), rhs, 0.66, 3)

    return {
        "triangle_geometry": lambda be: be.triangle_geometry(V, T),
        "nodal_gradients": lambda be: be.nodal_gradients(grads, T, field),
        "elasticity_blocks": lambda be: be.elasticity_blocks(grads, area, lam, mu),
        "penalty_blocks": lambda be: be.penalty_blocks(grads, area, vgrad, 1e-3, 5e4),
        "block_jacobi (3 sweeps)": jacobi,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--refinements", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    mesh = generate_composite_domain(8, 4, 0.3, args.refinements).finest
    cases = kernel_cases(mesh, np.random.default_rng(0))
    names = ["python"] + (["cython"] if kernels._compiled is not None else [])
    backends = {n: kernels.get_backend(n) for n in names}
    print(f"mesh: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles; backends: {', '.join(names)}")
    print(f"{'kernel':<26}" + "".join(f"{n + ' [ms]':>14}" for n in names) + (f"{'speedup':>10}" if len(names) > 1 else ""))
    for label, fn in cases.items():
        t = {n: 1e3 * min(timeit.repeat(lambda: fn(be), number=1, repeat=args.repeat)) for n, be in backends.items()}
        row = f"{label:<26}" + "".join(f"{t[n]:>14.3f}" for n in names)
        if len(names) > 1:
            row += f"{t['python'] / t['cython']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
