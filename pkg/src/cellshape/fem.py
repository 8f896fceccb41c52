"""P1 plane-strain linear elasticity and the three objective terms.

Degrees of freedom are interleaved per vertex: ``2*i`` is the x component and
``2*i + 1`` the y component of vertex ``i``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import ConfigurationError
from .mesh import BoundaryTag, Mesh

# bulk material (subdomain 0) and the top/bottom cell rows
OUTER_MATERIAL = (1.0, 0.1)
CELL_TOP = (1.2, 0.12)
CELL_BOTTOM = (2.0, 0.2)


@dataclass(frozen=True)
class MaterialTable:
    """Per-subdomain Lamé pairs ``{k: (lam_k, mu_k)}``."""

    params: dict

    def __post_init__(self):
        for k, (lam, mu) in self.params.items():
            if mu <= 0 or lam + mu <= 0:
                raise ConfigurationError(f"material {k}: need mu > 0 and lam + mu > 0, got ({lam}, {mu})")

    @classmethod
    def uniform(cls, lam, mu, ids=(0,)):
        return cls({int(k): (float(lam), float(mu)) for k in ids})

    @classmethod
    def graded(cls, n_rows, outer=OUTER_MATERIAL, top=CELL_TOP, bottom=CELL_BOTTOM):
        """Bulk material plus ``n_rows`` cell types, stiffening linearly top to bottom."""
        params = {0: tuple(map(float, outer))}
        for k in range(1, n_rows + 1):
            s = (k - 1) / (n_rows - 1) if n_rows > 1 else 0.0
            lam = (1.0 - s) * top[0] + s * bottom[0]
            mu = (1.0 - s) * top[1] + s * bottom[1]
            params[k] = (lam, mu)
        return cls(params)

    def per_triangle(self, subdomain_id):
        ids = np.asarray(subdomain_id)
        missing = set(np.unique(ids).tolist()) - set(self.params)
        if missing:
            raise ConfigurationError(f"no material for subdomain ids {sorted(missing)}")
        keys = np.array(sorted(self.params))
        table = np.array([self.params[k] for k in keys])
        idx = np.searchsorted(keys, ids)
        return table[idx, 0], table[idx, 1]


@dataclass
class LinearSystem:
    """Constrained system: rows/columns of ``constrained`` dofs are identity rows."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    constrained: np.ndarray
    values: np.ndarray
    stiffness: sp.csr_matrix  # before constraints


@dataclass(frozen=True)
class ObjectiveBreakdown:
    J_elast: float
    J_vol: float
    J_peri: float
    total: float


def element_dofs(triangles):
    """Global dof indices ``(T, 6)`` of each triangle."""
    return np.stack([2 * triangles, 2 * triangles + 1], axis=-1).reshape(-1, 6)


def scatter_matrix(triangles, blocks, n_dofs):
    dofs = element_dofs(triangles)
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    return sp.csr_matrix((blocks.ravel(), (rows, cols)), shape=(n_dofs, n_dofs))


def scatter_vector(triangles, local, n_dofs):
    return np.bincount(element_dofs(triangles).ravel(), weights=local.ravel(), minlength=n_dofs)


def assemble_stiffness(mesh: Mesh, lam, mu) -> sp.csr_matrix:
    """Unconstrained P1 matrix of ``a(u, w) = int sigma(u) : grad w``.

    ``lam`` and ``mu`` are per-triangle arrays (or scalars).
    """
    grads, area = mesh.geometry
    nt = mesh.n_triangles
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), (nt,))
    mu = np.broadcast_to(np.asarray(mu, dtype=np.float64), (nt,))
    blocks = kernels.elasticity_blocks(grads, np.abs(area), lam, mu)
    return scatter_matrix(mesh.triangles, blocks, 2 * mesh.n_vertices)


def apply_constraints(K, rhs, constrained, values=None):
    """Symmetric elimination; constrained rows/columns become identity rows."""
    n = K.shape[0]
    constrained = np.asarray(constrained, dtype=np.int64)
    values = np.zeros(len(constrained)) if values is None else np.asarray(values, dtype=np.float64)
    x_fixed = np.zeros(n)
    x_fixed[constrained] = values
    rhs = np.asarray(rhs, dtype=np.float64) - K @ x_fixed
    keep = np.ones(n)
    keep[constrained] = 0.0
    D = sp.diags(keep)
    A = (D @ K @ D).tocsr()
    A = A + sp.diags(1.0 - keep)
    rhs[constrained] = values
    A = A.tocsr()
    A.sort_indices()
    return A, rhs


def traction_vector(mesh: Mesh, traction) -> np.ndarray:
    """Consistent load vector of a constant traction ``(0, traction)`` on TOP edges.

    For constant traction and P1 traces each edge endpoint receives half of
    ``f * length``.
    """
    f = np.zeros(2 * mesh.n_vertices)
    top = mesh.boundary_edges[mesh.boundary_tags == BoundaryTag.TOP]
    if len(top) == 0:
        return f
    length = np.linalg.norm(mesh.vertices[top[:, 1]] - mesh.vertices[top[:, 0]], axis=1)
    w = 0.5 * float(traction) * length
    np.add.at(f, 2 * top[:, 0] + 1, w)
    np.add.at(f, 2 * top[:, 1] + 1, w)
    return f


def dirichlet_dofs(mesh: Mesh) -> np.ndarray:
    """Both components of every BOTTOM vertex."""
    b = mesh.boundary_vertices(BoundaryTag.BOTTOM)
    return np.sort(np.concatenate([2 * b, 2 * b + 1]))


def assemble_elasticity(mesh: Mesh, mat: MaterialTable, traction: float) -> LinearSystem:
    """State problem: stiffness, TOP traction load, homogeneous Dirichlet on BOTTOM."""
    lam, mu = mat.per_triangle(mesh.subdomain_id)
    K = assemble_stiffness(mesh, lam, mu)
    f = traction_vector(mesh, traction)
    fixed = dirichlet_dofs(mesh)
    A, rhs = apply_constraints(K, f, fixed)
    return LinearSystem(A, rhs, fixed, np.zeros(len(fixed)), K)


def displacement_gradients(mesh: Mesh, u) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64).reshape(mesh.n_vertices, 2)
    return kernels.nodal_gradients(mesh.geometry[0], mesh.triangles, u)


def stress(Du, lam, mu):
    """``sigma = lam tr(Du) I + mu (Du + Du^T)`` for stacked ``(T, 2, 2)`` gradients."""
    tr = Du[:, 0, 0] + Du[:, 1, 1]
    sig = mu[:, None, None] * (Du + np.transpose(Du, (0, 2, 1)))
    sig[:, 0, 0] += lam * tr
    sig[:, 1, 1] += lam * tr
    return sig


def compute_compliance(mesh: Mesh, mat: MaterialTable, u) -> float:
    """``1/2 int sigma(u) : grad u`` with one-point (exact) quadrature."""
    lam, mu = mat.per_triangle(mesh.subdomain_id)
    Du = displacement_gradients(mesh, u)
    sig = stress(Du, lam, mu)
    return 0.5 * float(np.sum(mesh.signed_areas * np.einsum("tab,tab->t", sig, Du)))


def compute_volume_objective(mesh: Mesh) -> float:
    return float(mesh.signed_areas[mesh.subdomain_id == 0].sum())


def compute_perimeter_objective(mesh: Mesh) -> float:
    e = mesh.interface_edges
    return float(np.linalg.norm(mesh.vertices[e[:, 1]] - mesh.vertices[e[:, 0]], axis=1).sum())


def evaluate_objective(mesh: Mesh, mat: MaterialTable, u, weights) -> ObjectiveBreakdown:
    nu_elast, nu_vol, nu_peri = weights
    je = compute_compliance(mesh, mat, u)
    jv = compute_volume_objective(mesh)
    jp = compute_perimeter_objective(mesh)
    return ObjectiveBreakdown(je, jv, jp, nu_elast * je + nu_vol * jv + nu_peri * jp)


def solve_direct(system: LinearSystem) -> np.ndarray:
    """Sparse LU solve; reference path for tests and finite-difference oracles."""
    from scipy.sparse.linalg import spsolve

    return spsolve(system.matrix.tocsc(), system.rhs)
