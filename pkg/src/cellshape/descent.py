"""Gradient-penalized descent directions via semi-smooth Newton.

The direction ``v`` minimizes

    j(v) = 1/2 a(v, v) - dJ[v] + nu/4 int ((grad v : grad v - b^2)^+)^2

over nodal fields satisfying the slip conditions, where ``a`` is the
elasticity bilinear form with the constant metric Lamé pair. Its
first-order condition ``a(v, w) + nu int (|grad v|^2 - b^2)^+ grad v : grad w
= dJ[w]`` is solved by an undamped Newton iteration on the generalized
Jacobian, each linearization by multigrid-preconditioned BiCGStab.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import NonConvergence
from .fem import apply_constraints, assemble_stiffness, scatter_matrix, scatter_vector
from .mesh import BoundaryTag, Mesh, MeshHierarchy
from .mgsolve import KrylovConfig, MGConfig, MultigridPreconditioner, TransferOperators, galerkin_coarsen, krylov_solve

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PenaltyConfig:
    nu_penalty: float = 5e4
    b: float = 1e-3
    lam_m: float = 0.1
    mu_m: float = 1.0

    def __post_init__(self):
        if self.nu_penalty <= 0 or self.b <= 0 or self.mu_m <= 0 or self.lam_m + self.mu_m <= 0:
            raise ValueError(f"invalid penalty configuration {self}")


@dataclass(frozen=True)
class NewtonConfig:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-9
    max_steps: int = 200
    inner: KrylovConfig = KrylovConfig(rel_tol=1e-3, abs_tol=1e-300, max_iter=2000)
    mg: MGConfig = MGConfig()


@dataclass
class NewtonReport:
    iterations: int = 0
    linear_iterations: list = field(default_factory=list)
    residual_norms: list = field(default_factory=list)
    converged: bool = False

    @property
    def final_residual(self) -> float:
        return self.residual_norms[-1] if self.residual_norms else float("nan")

    @property
    def mean_linear_iterations(self) -> float:
        return float(np.mean(self.linear_iterations)) if self.linear_iterations else 0.0


@dataclass(frozen=True)
class SlipConstraints:
    x_fixed: np.ndarray  # vertices with zero x component (SIDE)
    y_fixed: np.ndarray  # vertices with zero y component (TOP, BOTTOM)

    @property
    def dofs(self) -> np.ndarray:
        return np.unique(np.concatenate([2 * self.x_fixed, 2 * self.y_fixed + 1]))

    def project(self, v):
        """Zero the constrained components of a ``(V, 2)`` or flat field."""
        v = np.array(v, dtype=np.float64)
        flat = v.reshape(-1)
        flat[self.dofs] = 0.0
        return v


def apply_slip_bc(mesh: Mesh) -> SlipConstraints:
    """Nodes may slide along the outer boundary but not leave it."""
    side = mesh.boundary_vertices(BoundaryTag.SIDE)
    tb = np.union1d(mesh.boundary_vertices(BoundaryTag.TOP), mesh.boundary_vertices(BoundaryTag.BOTTOM))
    return SlipConstraints(side, tb)


def metric_stiffness(mesh: Mesh, cfg: PenaltyConfig) -> sp.csr_matrix:
    """Unconstrained matrix of ``a(., .)`` with the constant metric Lamé pair."""
    return assemble_stiffness(mesh, cfg.lam_m, cfg.mu_m)


def metric_matrix(mesh: Mesh, cfg: PenaltyConfig) -> sp.csr_matrix:
    """``a(., .)`` with slip constraints as identity rows."""
    A, _ = apply_constraints(metric_stiffness(mesh, cfg), np.zeros(2 * mesh.n_vertices), apply_slip_bc(mesh).dofs)
    return A


def _penalty_terms(mesh: Mesh, v, cfg: PenaltyConfig):
    grads, area = mesh.geometry
    vgrad = kernels.nodal_gradients(grads, mesh.triangles, np.asarray(v, dtype=np.float64).reshape(-1, 2))
    res, jac, active = kernels.penalty_blocks(grads, np.abs(area), vgrad, cfg.b, cfg.nu_penalty)
    return vgrad, res, jac, active


def active_indicator(mesh: Mesh, v, cfg: PenaltyConfig) -> np.ndarray:
    """Per-triangle flag: ``|grad v|_F^2 - b^2 > 0``."""
    grads, _ = mesh.geometry
    vgrad = kernels.nodal_gradients(grads, mesh.triangles, np.asarray(v, dtype=np.float64).reshape(-1, 2))
    return np.einsum("tal,tal->t", vgrad, vgrad) - cfg.b**2 > 0.0


def _dual(dJ):
    if hasattr(dJ, "as_vector"):
        return dJ.as_vector()
    return np.asarray(dJ, dtype=np.float64).ravel()


class MetricProblem:
    """Residual/Jacobian evaluator for one mesh; caches the metric stiffness."""

    def __init__(self, mesh: Mesh, cfg: PenaltyConfig):
        self.mesh = mesh
        self.cfg = cfg
        self.slip = apply_slip_bc(mesh)
        self.fixed = self.slip.dofs
        self.A = metric_stiffness(mesh, cfg)
        self.n = 2 * mesh.n_vertices
        keep = np.ones(self.n)
        keep[self.fixed] = 0.0
        self.keep = keep

    def residual(self, v, dJ):
        v = np.asarray(v, dtype=np.float64).ravel()
        _, res, _, _ = _penalty_terms(self.mesh, v, self.cfg)
        r = self.A @ v + scatter_vector(self.mesh.triangles, res, self.n) - _dual(dJ)
        return r * self.keep

    def jacobian(self, v, constrained=True):
        _, _, jac, _ = _penalty_terms(self.mesh, v, self.cfg)
        J = self.A + scatter_matrix(self.mesh.triangles, jac, self.n)
        if constrained:
            J, _ = apply_constraints(J, np.zeros(self.n), self.fixed)
        return J.tocsr()

    def penalty_jacobian(self, v):
        """Penalty part of the Jacobian with constrained rows/columns removed."""
        _, _, jac, _ = _penalty_terms(self.mesh, v, self.cfg)
        D = sp.diags(self.keep)
        return (D @ scatter_matrix(self.mesh.triangles, jac, self.n) @ D).tocsr()

    def objective(self, v, dJ):
        v = np.asarray(v, dtype=np.float64).ravel()
        vgrad, _, _, _ = _penalty_terms(self.mesh, v, self.cfg)
        s = np.maximum(np.einsum("tal,tal->t", vgrad, vgrad) - self.cfg.b**2, 0.0)
        pen = 0.25 * self.cfg.nu_penalty * float(np.sum(np.abs(self.mesh.signed_areas) * s * s))
        return 0.5 * float(v @ (self.A @ v)) - float(_dual(dJ) @ v) + pen


def metric_residual(mesh: Mesh, v, cfg: PenaltyConfig, dJ) -> np.ndarray:
    """``a(v, w) + dj2(v)[w] - dJ[w]`` for every basis field ``w``; zero on slip dofs."""
    return MetricProblem(mesh, cfg).residual(v, dJ)


def metric_jacobian(mesh: Mesh, v, cfg: PenaltyConfig, constrained=True) -> sp.csr_matrix:
    """Generalized Jacobian of :func:`metric_residual` (active set from ``v``)."""
    return MetricProblem(mesh, cfg).jacobian(v, constrained=constrained)


def penalized_objective(mesh: Mesh, v, cfg: PenaltyConfig, dJ) -> float:
    return MetricProblem(mesh, cfg).objective(v, dJ)


class DescentSolver:
    """Semi-smooth Newton with a multigrid hierarchy for the metric problem.

    Coarse levels re-discretize ``a(., .)``; the penalty Jacobian, which only
    exists on the finest level, is coarsened by Galerkin products.
    """

    def __init__(self, hierarchy, cfg: PenaltyConfig = PenaltyConfig(), newton: NewtonConfig = NewtonConfig()):
        if isinstance(hierarchy, Mesh):
            hierarchy = MeshHierarchy((hierarchy,), ())
        self.hierarchy = hierarchy
        self.cfg = cfg
        self.newton = newton
        self.problem = MetricProblem(hierarchy.finest, cfg)
        fixed = [apply_slip_bc(m).dofs for m in hierarchy.levels]
        self.transfer = TransferOperators.build(hierarchy, fixed)
        self.metric_levels = [metric_matrix(m, cfg) for m in hierarchy.levels]

    def level_matrices(self, v):
        pen = self.problem.penalty_jacobian(v)
        pen_levels = galerkin_coarsen(pen, self.transfer.prolongations)
        return [(A + P).tocsr() for A, P in zip(self.metric_levels, pen_levels)]

    def solve(self, dJ):
        newton = self.newton
        problem = self.problem
        v = np.zeros(problem.n)
        report = NewtonReport()
        r = problem.residual(v, dJ)
        r0 = np.linalg.norm(r)
        report.residual_norms.append(r0)
        tol = max(newton.rel_tol * r0, newton.abs_tol)
        while np.linalg.norm(r) > tol:
            if report.iterations >= newton.max_steps:
                raise NonConvergence(
                    f"semi-smooth Newton exceeded {newton.max_steps} steps "
                    f"(residual {np.linalg.norm(r):.3e}, target {tol:.3e})",
                    report=report,
                )
            mats = self.level_matrices(v)
            M = MultigridPreconditioner(mats, self.transfer.prolongations, newton.mg)
            delta, info = krylov_solve(mats[-1], M, -r, newton.inner)
            v = v + delta
            r = problem.residual(v, dJ)
            report.iterations += 1
            report.linear_iterations.append(info.iterations)
            report.residual_norms.append(float(np.linalg.norm(r)))
            logger.debug("newton %d: |r| = %.3e (%d linear)", report.iterations, report.residual_norms[-1], info.iterations)
        report.converged = True
        return v.reshape(-1, 2), report


def solve_descent(hierarchy, dJ, cfg: PenaltyConfig = PenaltyConfig(), newton_cfg: NewtonConfig = NewtonConfig()):
    """Solve ``g(v, w) = dJ[w]`` from ``v = 0``.

    Returns ``(v, report)`` with ``v`` of shape ``(V, 2)``. ``v`` is the
    gradient representative, so ``dJ[v] > 0``; the descent step moves nodes
    by ``-t v``.
    """
    return DescentSolver(hierarchy, cfg, newton_cfg).solve(dJ)
