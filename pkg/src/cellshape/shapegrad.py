"""Discrete shape derivatives of the compliance, bulk-area and perimeter terms.

Each assembler returns the dual vector ``dJ[phi]`` for every nodal basis
field ``phi = phi_i e_a``, stored as a ``(V, 2)`` array. All three are exact
directional derivatives of the discrete objective under the node update
``x -> x + t v`` (traction edges held fixed), which is what the
finite-difference suite checks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import MaterialTable, displacement_gradients, stress
from .mesh import Mesh


@dataclass(frozen=True)
class ShapeGradient:
    values: np.ndarray  # (V, 2)
    active_mask: np.ndarray  # (V,) bool

    def pair(self, v) -> float:
        """``dJ[v]`` for a nodal field ``v``."""
        return float(np.sum(self.values * np.asarray(v).reshape(self.values.shape)))

    def as_vector(self) -> np.ndarray:
        return self.values.ravel()


def _scatter(mesh: Mesh, local):
    """Sum per-triangle ``(T, 3, 2)`` contributions onto vertices."""
    out = np.zeros((mesh.n_vertices, 2))
    np.add.at(out, mesh.triangles.ravel(), local.reshape(-1, 2))
    return out


def _all_active(mesh):
    return np.ones(mesh.n_vertices, dtype=bool)


def elastic_shape_tensor(mesh: Mesh, mat: MaterialTable, u) -> np.ndarray:
    """Per-element ``1/2 (sigma(u) : grad u) I - grad(u)^T sigma(u)``."""
    lam, mu = mat.per_triangle(mesh.subdomain_id)
    Du = displacement_gradients(mesh, u)
    sig = stress(Du, lam, mu)
    energy = np.einsum("tab,tab->t", sig, Du)
    M = -np.einsum("tba,tbc->tac", Du, sig)
    M[:, 0, 0] += 0.5 * energy
    M[:, 1, 1] += 0.5 * energy
    return M


def assemble_elastic_shape_derivative(mesh: Mesh, mat: MaterialTable, u) -> ShapeGradient:
    """Derivative of the compliance at the discrete state ``u``.

    The tensor ``M = 1/2 (sigma:grad u) I - grad(u)^T sigma`` paired with
    ``grad v`` is the rate of the stored energy with the displacement
    transported along the deformation. At the state solution the compliance
    moves by exactly the negative of that rate, hence the sign below.
    """
    grads, area = mesh.geometry
    M = elastic_shape_tensor(mesh, mat, u)
    # M : grad(phi_i e_a) = (M grad phi_i)_a
    local = -area[:, None, None] * np.einsum("tal,til->tia", M, grads)
    return ShapeGradient(_scatter(mesh, local), _all_active(mesh))


def assemble_volume_shape_derivative(mesh: Mesh) -> ShapeGradient:
    """Rate of the bulk area, ``int_{Omega_out} div v`` (volumetric form)."""
    grads, area = mesh.geometry
    out = mesh.subdomain_id == 0
    local = np.where(out[:, None, None], area[:, None, None] * grads, 0.0)
    return ShapeGradient(_scatter(mesh, local), _all_active(mesh))


def volume_derivative_surface_form(mesh: Mesh, v) -> float:
    """Same quantity as a boundary integral, ``-int_{Gamma_int} v . n ds``.

    Only equal to the volumetric form when ``v . n = 0`` on the outer boundary.
    """
    v = np.asarray(v).reshape(mesh.n_vertices, 2)
    e = mesh.interface_edges
    d = mesh.vertices[e[:, 1]] - mesh.vertices[e[:, 0]]
    normal_len = np.column_stack([d[:, 1], -d[:, 0]])  # n * length
    vm = 0.5 * (v[e[:, 0]] + v[e[:, 1]])
    return -float(np.sum(vm * normal_len))


def assemble_perimeter_shape_derivative(mesh: Mesh) -> ShapeGradient:
    """Rate of the interface length: ``tau . (v_j - v_i)`` per edge ``i -> j``."""
    e = mesh.interface_edges
    d = mesh.vertices[e[:, 1]] - mesh.vertices[e[:, 0]]
    tau = d / np.linalg.norm(d, axis=1)[:, None]
    vals = np.zeros((mesh.n_vertices, 2))
    np.add.at(vals, e[:, 1], tau)
    np.add.at(vals, e[:, 0], -tau)
    return ShapeGradient(vals, _all_active(mesh))


def interface_support_mask(mesh: Mesh) -> np.ndarray:
    """Vertices whose basis-function support contains an interface edge.

    A vertex is active iff it belongs to a triangle having an interface edge
    among its three edges.
    """
    # both triangles adjacent to each interface edge
    tris = mesh.edge_triangles[_interface_edge_ids(mesh)].ravel()
    tris = tris[tris >= 0]
    mask = np.zeros(mesh.n_vertices, dtype=bool)
    mask[mesh.triangles[tris].ravel()] = True
    return mask


def _interface_edge_ids(mesh: Mesh):
    edge_tris = mesh.edge_triangles
    t0, t1 = edge_tris[:, 0], edge_tris[:, 1]
    inner = t1 >= 0
    s0 = mesh.subdomain_id[t0]
    s1 = mesh.subdomain_id[np.maximum(t1, 0)]
    return np.nonzero(inner & ((s0 == 0) != (s1 == 0)))[0]


def combine_and_reset(mesh: Mesh, parts, weights) -> ShapeGradient:
    """Weighted sum of the parts, zeroed away from the interface support."""
    vals = np.zeros((mesh.n_vertices, 2))
    for part, w in zip(parts, weights):
        vals += w * np.asarray(part.values)
    mask = interface_support_mask(mesh)
    vals[~mask] = 0.0
    return ShapeGradient(vals, mask)


def shape_gradient(mesh: Mesh, mat: MaterialTable, u, weights) -> ShapeGradient:
    """Assemble and reset the full weighted shape derivative."""
    parts = (
        assemble_elastic_shape_derivative(mesh, mat, u),
        assemble_volume_shape_derivative(mesh),
        assemble_perimeter_shape_derivative(mesh),
    )
    return combine_and_reset(mesh, parts, weights)
