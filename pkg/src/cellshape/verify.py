"""Finite-difference oracle for the assembled shape derivative.

The reduced objective ``J(x + t v)`` is evaluated by re-meshing the node
positions and solving the state problem directly; the central difference
``(J(t) - J(-t)) / 2t`` is compared with ``dJ[v]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import splu

from .descent import apply_slip_bc
from .fem import MaterialTable, assemble_elasticity, evaluate_objective, solve_direct
from .mesh import Mesh, deform, generate_composite_domain
from .shapegrad import interface_support_mask, shape_gradient

DEFAULT_WEIGHTS = (100.0, 1.0, 0.01)


def reduced_objective(mesh: Mesh, mat: MaterialTable, weights, traction=0.1) -> float:
    u = solve_direct(assemble_elasticity(mesh, mat, traction)).reshape(-1, 2)
    return evaluate_objective(mesh, mat, u, weights).total


def _refined_state(mesh: Mesh, mat: MaterialTable, traction):
    system = assemble_elasticity(mesh, mat, traction)
    lu = splu(system.matrix.tocsc())
    u = lu.solve(system.rhs)
    for _ in range(2):
        u += lu.solve(system.rhs - system.matrix @ u)
    return u, system.rhs


def _interface_lengths(mesh: Mesh):
    e = mesh.interface_edges
    return np.linalg.norm(mesh.vertices[e[:, 1]] - mesh.vertices[e[:, 0]], axis=1)


def objective_difference(plus: Mesh, minus: Mesh, mat: MaterialTable, weights, traction=0.1) -> float:
    """``J(plus) - J(minus)`` for two meshes of identical connectivity.

    Differences are taken element by element (areas, edge lengths) before
    summing and the compliance uses the work identity ``1/2 f . u`` with
    refined solves, which keeps the cancellation error near machine
    precision of the difference rather than of ``J`` itself.
    """
    nu_elast, nu_vol, nu_peri = weights
    up, fp = _refined_state(plus, mat, traction)
    um, fm = _refined_state(minus, mat, traction)
    d_elast = 0.5 * (fp @ (up - um) + (fp - fm) @ um)
    out = plus.subdomain_id == 0
    d_vol = float(np.sum(plus.signed_areas[out] - minus.signed_areas[out]))
    d_peri = float(np.sum(_interface_lengths(plus) - _interface_lengths(minus)))
    return nu_elast * d_elast + nu_vol * d_vol + nu_peri * d_peri


def random_interface_field(mesh: Mesh, rng, scale=1.0, kind="smooth", modes=16) -> np.ndarray:
    """O(1) random field on the reset support, compatible with the slip conditions.

    ``kind="smooth"`` sums random Fourier modes up to wavenumber ``modes``
    (a descent-like field); ``kind="rough"`` draws independent nodal values.
    """
    if kind == "rough":
        v = scale * rng.standard_normal((mesh.n_vertices, 2))
    elif kind == "smooth":
        x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
        v = np.zeros((mesh.n_vertices, 2))
        for kx in range(modes + 1):
            for ky in range(modes + 1):
                c = rng.standard_normal((1, 2))
                ph = rng.uniform(0.0, 2.0 * np.pi, 2)
                basis = np.cos(np.pi * kx * x + ph[0]) * np.cos(np.pi * ky * y + ph[1])
                v += basis[:, None] * c[0]
        v *= scale / np.sqrt((modes + 1) ** 2)
    else:
        raise ValueError(f"unknown field kind {kind!r}")
    v[~interface_support_mask(mesh)] = 0.0
    return apply_slip_bc(mesh).project(v)


@dataclass
class FDSample:
    pairing: float
    fd: dict  # t -> central difference
    errors: dict = field(default_factory=dict)  # t -> relative error

    @property
    def order(self) -> float:
        ts = sorted(self.errors, reverse=True)
        e0, e1 = self.errors[ts[0]], self.errors[ts[-1]]
        if e1 == 0.0:
            return np.inf
        return float(np.log(e0 / e1) / np.log(ts[0] / ts[-1]))


def fd_check(mesh: Mesh, mat: MaterialTable, v, weights=DEFAULT_WEIGHTS, steps=(1e-4, 1e-5), traction=0.1) -> FDSample:
    u = solve_direct(assemble_elasticity(mesh, mat, traction)).reshape(-1, 2)
    pairing = shape_gradient(mesh, mat, u, weights).pair(v)
    sample = FDSample(pairing, {})
    for t in steps:
        d = objective_difference(deform(mesh, v, t), deform(mesh, v, -t), mat, weights, traction) / (2.0 * t)
        sample.fd[t] = d
        sample.errors[t] = abs(d - pairing) / max(abs(pairing), 1e-300)
    return sample


def gradient_oracle_suite(
    n_fields=10, seed=0, rows=1, cols=2, refinements=2, weights=DEFAULT_WEIGHTS, steps=(1e-4, 1e-5), kind="smooth"
):
    """Run :func:`fd_check` for ``n_fields`` random interface fields on a small mesh."""
    mesh = generate_composite_domain(rows, cols, 0.3, refinements).finest
    mat = MaterialTable.graded(rows)
    rng = np.random.default_rng(seed)
    return mesh, [fd_check(mesh, mat, random_interface_field(mesh, rng, kind=kind), weights, steps) for _ in range(n_fields)]


def run_check(n_fields=10, seed=0, rel_tol=1e-4, min_order=1.5, out=print) -> bool:
    """Print one line per sample and a verdict; used by ``cellshape check``."""
    mesh, samples = gradient_oracle_suite(n_fields, seed)
    out(f"gradient oracle: {mesh.n_vertices} vertices, {2 * mesh.n_vertices} dofs, {len(samples)} fields")
    ok = True
    for i, s in enumerate(samples):
        errs = " ".join(f"err(t={t:g})={e:.2e}" for t, e in sorted(s.errors.items(), reverse=True))
        ts = sorted(s.errors, reverse=True)
        good = max(s.errors.values()) <= rel_tol and s.errors[ts[-1]] <= s.errors[ts[0]]
        ok &= good
        out(f"  field {i}: dJ[v]={s.pairing:+.10e} {errs} order={s.order:.2f} {'ok' if good else 'FAIL'}")
    med = float(np.median([s.order for s in samples]))
    conv = med >= min_order
    out(f"  median observed order {med:.2f} (need >= {min_order}) {'ok' if conv else 'FAIL'}")
    return ok and conv
