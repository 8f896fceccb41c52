"""Backend selection for the hot kernels.

The compiled ``cellshape._core`` extension is used when it is importable,
otherwise the numpy fallback. Setting ``CELLSHAPE_PURE_PYTHON=1`` forces the
fallback.
"""
import os

import numpy as np

from . import _kernels_py

_compiled = None
if os.environ.get("CELLSHAPE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def get_backend(name=None):
    """Return the kernel module for ``name`` ("cython", "python") or the active one."""
    if name is None:
        name = BACKEND
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled extension cellshape._core is not available")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


_impl = get_backend()


def triangle_geometry(vertices, triangles):
    """Barycentric gradients ``(T, 3, 2)`` and signed areas ``(T,)``."""
    return _impl.triangle_geometry(
        np.ascontiguousarray(vertices, dtype=np.float64),
        np.ascontiguousarray(triangles, dtype=np.int64),
    )


def nodal_gradients(grads, triangles, field):
    """Elementwise constant Jacobian ``(T, 2, 2)`` of a P1 vector field."""
    return _impl.nodal_gradients(
        np.ascontiguousarray(grads),
        np.ascontiguousarray(triangles, dtype=np.int64),
        np.ascontiguousarray(field, dtype=np.float64),
    )


def elasticity_blocks(grads, area, lam, mu):
    return _impl.elasticity_blocks(
        np.ascontiguousarray(grads),
        np.ascontiguousarray(area, dtype=np.float64),
        np.ascontiguousarray(lam, dtype=np.float64),
        np.ascontiguousarray(mu, dtype=np.float64),
    )


def penalty_blocks(grads, area, vgrad, bound, nu):
    return _impl.penalty_blocks(
        np.ascontiguousarray(grads),
        np.ascontiguousarray(area, dtype=np.float64),
        np.ascontiguousarray(vgrad, dtype=np.float64),
        float(bound),
        float(nu),
    )


def block_jacobi(A, dinv, x, rhs, omega, sweeps):
    """Damped 2x2 block-Jacobi sweeps on CSR ``A``; updates ``x`` in place."""
    return _impl.block_jacobi(
        A.indptr.astype(np.int32, copy=False),
        A.indices.astype(np.int32, copy=False),
        A.data,
        np.ascontiguousarray(dinv),
        x,
        np.ascontiguousarray(rhs, dtype=np.float64),
        float(omega),
        int(sweeps),
    )
