"""Geometric multigrid V-cycle and preconditioned BiCGStab.

All level matrices keep constrained dofs as identity rows. Prolongations
drop constrained rows and columns so coarse corrections never touch them.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import kernels
from .errors import Breakdown, NonConvergence, SingularCoarseMatrix
from .mesh import MeshHierarchy

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MGConfig:
    pre_smooth: int = 3
    post_smooth: int = 3
    omega: float = 0.66
    cycle: str = "V"

    def __post_init__(self):
        if self.pre_smooth < 1 or self.post_smooth < 1:
            raise ValueError("smoothing counts must be >= 1")
        if not 0.0 < self.omega <= 1.0:
            raise ValueError("block-Jacobi damping must lie in (0, 1]")
        if self.cycle != "V":
            raise ValueError("only V-cycles are supported")


@dataclass(frozen=True)
class KrylovConfig:
    method: str = "bicgstab"
    rel_tol: float = 1e-10
    abs_tol: float = 1e-10
    max_iter: int = 2000

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.method not in ("bicgstab", "cg"):
            raise ValueError(f"unknown Krylov method {self.method!r}")


@dataclass
class SolveInfo:
    iterations: int
    residuals: list = field(default_factory=list)


# -- transfer operators ---------------------------------------------------------


def prolongation(parent_map, n_coarse: int) -> sp.csr_matrix:
    """Vector-valued P1 interpolation from a level to its red refinement.

    Fine vertex ``i < n_coarse`` copies coarse vertex ``i``; fine vertex
    ``n_coarse + e`` averages the endpoints of coarse edge ``e``.
    """
    parent_map = np.asarray(parent_map)
    ne = len(parent_map)
    n_fine = n_coarse + ne
    rows = np.concatenate([np.arange(n_coarse), np.repeat(np.arange(n_coarse, n_fine), 2)])
    cols = np.concatenate([np.arange(n_coarse), parent_map.ravel()])
    vals = np.concatenate([np.ones(n_coarse), np.full(2 * ne, 0.5)])
    rows2 = np.concatenate([2 * rows, 2 * rows + 1])
    cols2 = np.concatenate([2 * cols, 2 * cols + 1])
    vals2 = np.concatenate([vals, vals])
    return sp.csr_matrix((vals2, (rows2, cols2)), shape=(2 * n_fine, 2 * n_coarse))


def mask_prolongation(P, fine_fixed, coarse_fixed) -> sp.csr_matrix:
    """Zero rows of constrained fine dofs and columns of constrained coarse dofs."""
    rkeep = np.ones(P.shape[0])
    rkeep[np.asarray(fine_fixed, dtype=np.int64)] = 0.0
    ckeep = np.ones(P.shape[1])
    ckeep[np.asarray(coarse_fixed, dtype=np.int64)] = 0.0
    Pm = (sp.diags(rkeep) @ P @ sp.diags(ckeep)).tocsr()
    Pm.eliminate_zeros()
    return Pm


@dataclass
class TransferOperators:
    prolongations: list  # prolongations[l]: level l -> l+1

    @property
    def restrictions(self):
        return [P.T.tocsr() for P in self.prolongations]

    @classmethod
    def build(cls, hierarchy: MeshHierarchy, constrained=None):
        """``constrained`` is an optional per-level list of fixed dof arrays."""
        Ps = []
        for level, pmap in enumerate(hierarchy.parent_maps):
            P = prolongation(pmap, hierarchy.levels[level].n_vertices)
            if constrained is not None:
                P = mask_prolongation(P, constrained[level + 1], constrained[level])
            Ps.append(P)
        return cls(Ps)


def build_hierarchy_matrices(hierarchy: MeshHierarchy, assembler) -> list:
    """Re-discretize on every level; ``assembler(mesh)`` returns a CSR matrix."""
    return [assembler(mesh).tocsr() for mesh in hierarchy.levels]


def galerkin_coarsen(fine_matrix, prolongations) -> list:
    """``[A_0, ..., A_L]`` with ``A_l = P_l^T A_{l+1} P_l`` and ``A_L`` the input."""
    mats = [fine_matrix.tocsr()]
    for P in reversed(prolongations):
        mats.append((P.T @ mats[-1] @ P).tocsr())
    return mats[::-1]


# -- smoother and V-cycle -------------------------------------------------------


def block_diagonal_inverse(A) -> np.ndarray:
    """Inverses of the 2x2 per-vertex diagonal blocks, shape ``(n/2, 2, 2)``."""
    d = A.diagonal()
    up = A.diagonal(1)
    lo = A.diagonal(-1)
    a, dd = d[0::2], d[1::2]
    b, c = up[0::2], lo[0::2]
    det = a * dd - b * c
    if np.any(det == 0.0):
        raise SingularCoarseMatrix("singular 2x2 diagonal block in block-Jacobi smoother")
    inv = np.empty((len(a), 2, 2))
    inv[:, 0, 0] = dd / det
    inv[:, 0, 1] = -b / det
    inv[:, 1, 0] = -c / det
    inv[:, 1, 1] = a / det
    return inv


class MultigridPreconditioner:
    """One V(pre, post)-cycle with zero initial guess; a fixed linear operator."""

    def __init__(self, matrices, prolongations, cfg: MGConfig = MGConfig()):
        if len(matrices) != len(prolongations) + 1:
            raise ValueError("need one prolongation per level pair")
        self.cfg = cfg
        self.matrices = [A.tocsr() for A in matrices]
        for A in self.matrices:
            A.sort_indices()
        self.prolongations = [P.tocsr() for P in prolongations]
        self.restrictions = [P.T.tocsr() for P in self.prolongations]
        self.dinv = [block_diagonal_inverse(A) for A in self.matrices[1:]]
        coarse = self.matrices[0].toarray()
        with warnings.catch_warnings():
            warnings.simplefilter("error", sla.LinAlgWarning)
            try:
                self.coarse_lu = sla.lu_factor(coarse, check_finite=True)
            except (sla.LinAlgWarning, ValueError, np.linalg.LinAlgError) as exc:
                raise SingularCoarseMatrix(f"coarse LU failed: {exc}") from exc
        if np.any(np.diag(self.coarse_lu[0]) == 0.0):
            raise SingularCoarseMatrix("coarse matrix is singular")

    @property
    def n_levels(self):
        return len(self.matrices)

    def _cycle(self, level, rhs):
        if level == 0:
            return sla.lu_solve(self.coarse_lu, rhs)
        A = self.matrices[level]
        dinv = self.dinv[level - 1]
        cfg = self.cfg
        x = np.zeros_like(rhs)
        kernels.block_jacobi(A, dinv, x, rhs, cfg.omega, cfg.pre_smooth)
        res = rhs - A @ x
        x += self.prolongations[level - 1] @ self._cycle(level - 1, self.restrictions[level - 1] @ res)
        kernels.block_jacobi(A, dinv, x, rhs, cfg.omega, cfg.post_smooth)
        return x

    def __call__(self, rhs):
        return self._cycle(self.n_levels - 1, np.asarray(rhs, dtype=np.float64))


def vcycle(levels, rhs, cfg: MGConfig = MGConfig()):
    """Apply one V-cycle; ``levels`` is ``(matrices, prolongations)`` or a preconditioner."""
    if not isinstance(levels, MultigridPreconditioner):
        matrices, prolongations = levels
        levels = MultigridPreconditioner(matrices, prolongations, cfg)
    return levels(rhs)


# -- Krylov solvers -------------------------------------------------------------


def _as_operator(A):
    if callable(A):
        return A
    return lambda x: A @ x


def bicgstab(apply_A, apply_M, rhs, cfg: KrylovConfig = KrylovConfig(), x0=None):
    """Right-preconditioned BiCGStab.

    Stops when ``||r|| <= max(rel_tol ||r_0||, abs_tol)``.

    Returns
    -------
    x, info : ndarray, SolveInfo

    Raises
    ------
    Breakdown
        On vanishing ``rho`` or ``omega``.
    NonConvergence
        When ``max_iter`` is exceeded.
    """
    A = _as_operator(apply_A)
    M = (lambda x: x) if apply_M is None else _as_operator(apply_M)
    b = np.asarray(rhs, dtype=np.float64)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - A(x) if x0 is not None else b.copy()
    rnorm = np.linalg.norm(r)
    tol = max(cfg.rel_tol * rnorm, cfg.abs_tol)
    info = SolveInfo(0, [rnorm])
    if rnorm <= tol:
        return x, info
    rhat = r.copy()
    rhat_norm = rnorm
    rho_old = alpha = omega = 1.0
    p = np.zeros_like(b)
    v = np.zeros_like(b)
    tiny = np.finfo(float).eps ** 2
    for it in range(1, cfg.max_iter + 1):
        rho = rhat @ r
        if abs(rho) <= tiny * rhat_norm * np.linalg.norm(r):
            raise Breakdown(f"rho vanished at iteration {it}")
        if it == 1:
            p = r.copy()
        else:
            beta = (rho / rho_old) * (alpha / omega)
            p = r + beta * (p - omega * v)
        phat = M(p)
        v = A(phat)
        denom = rhat @ v
        if denom == 0.0:
            raise Breakdown(f"rhat.v vanished at iteration {it}")
        alpha = rho / denom
        s = r - alpha * v
        snorm = np.linalg.norm(s)
        if snorm <= tol:
            x += alpha * phat
            info.iterations = it
            info.residuals.append(snorm)
            return x, info
        shat = M(s)
        t = A(shat)
        tt = t @ t
        if tt == 0.0:
            raise Breakdown(f"A M s vanished at iteration {it}")
        omega = (t @ s) / tt
        x += alpha * phat + omega * shat
        r = s - omega * t
        rnorm = np.linalg.norm(r)
        info.residuals.append(rnorm)
        info.iterations = it
        if rnorm <= tol:
            return x, info
        if omega == 0.0:
            raise Breakdown(f"omega vanished at iteration {it}")
        rho_old = rho
    raise NonConvergence(
        f"BiCGStab did not reach {tol:.3e} in {cfg.max_iter} iterations (residual {rnorm:.3e})",
        report=info,
    )


def cg(apply_A, apply_M, rhs, cfg: KrylovConfig = KrylovConfig(), x0=None):
    """Preconditioned conjugate gradients, same stopping rule as :func:`bicgstab`."""
    A = _as_operator(apply_A)
    M = (lambda x: x) if apply_M is None else _as_operator(apply_M)
    b = np.asarray(rhs, dtype=np.float64)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - A(x) if x0 is not None else b.copy()
    rnorm = np.linalg.norm(r)
    tol = max(cfg.rel_tol * rnorm, cfg.abs_tol)
    info = SolveInfo(0, [rnorm])
    if rnorm <= tol:
        return x, info
    z = M(r)
    p = z.copy()
    rz = r @ z
    for it in range(1, cfg.max_iter + 1):
        q = A(p)
        alpha = rz / (p @ q)
        x += alpha * p
        r -= alpha * q
        rnorm = np.linalg.norm(r)
        info.residuals.append(rnorm)
        info.iterations = it
        if rnorm <= tol:
            return x, info
        z = M(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise NonConvergence(f"CG did not reach {tol:.3e} in {cfg.max_iter} iterations", report=info)


def krylov_solve(A, M, rhs, cfg: KrylovConfig, x0=None):
    solver = bicgstab if cfg.method == "bicgstab" else cg
    return solver(A, M, rhs, cfg, x0=x0)


def solve_multilevel(matrices, prolongations, rhs, krylov: KrylovConfig, mg: MGConfig = MGConfig(), x0=None):
    """Krylov solve of ``matrices[-1] x = rhs`` preconditioned by a V-cycle."""
    M = MultigridPreconditioner(matrices, prolongations, mg)
    x, info = krylov_solve(matrices[-1], M, rhs, krylov, x0=x0)
    logger.debug("multigrid Krylov solve: %d iterations", info.iterations)
    return x, info
