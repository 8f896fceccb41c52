import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse.linalg import spsolve

from cellshape import Breakdown, NonConvergence
from cellshape.errors import SingularCoarseMatrix
from cellshape.fem import MaterialTable, assemble_elasticity, dirichlet_dofs
from cellshape.mesh import generate_composite_domain
from cellshape.mgsolve import (
    KrylovConfig,
    MGConfig,
    MultigridPreconditioner,
    TransferOperators,
    bicgstab,
    block_diagonal_inverse,
    cg,
    galerkin_coarsen,
    prolongation,
    solve_multilevel,
    vcycle,
)


def elasticity_levels(h, rows):
    mat = MaterialTable.graded(rows)
    systems = [assemble_elasticity(m, mat, 0.1) for m in h.levels]
    transfer = TransferOperators.build(h, [dirichlet_dofs(m) for m in h.levels])
    return systems, transfer.prolongations


@pytest.fixture(scope="module")
def three_level():
    h = generate_composite_domain(2, 2, 0.3, 2)
    return h, *elasticity_levels(h, 2)


@pytest.mark.parametrize("nref", [1, 2])
def test_prolongation_patch_test(nref, rng):
    h = generate_composite_domain(2, 2, 0.3, nref)
    G, c = rng.standard_normal((2, 2)), rng.standard_normal(2)
    for lvl, pmap in enumerate(h.parent_maps):
        coarse, fine = h.levels[lvl], h.levels[lvl + 1]
        P = prolongation(pmap, coarse.n_vertices)
        uc = (coarse.vertices @ G.T + c).ravel()
        uf = (fine.vertices @ G.T + c).ravel()
        np.testing.assert_allclose(P @ uc, uf, atol=1e-14)


def test_transfers_are_topological(small_hierarchy, rng):
    # deformation does not change the transfer operators
    X = small_hierarchy.finest.vertices + 1e-3 * rng.standard_normal(small_hierarchy.finest.vertices.shape)
    moved = small_hierarchy.with_fine_vertices(X)
    for P0, P1 in zip(TransferOperators.build(small_hierarchy).prolongations, TransferOperators.build(moved).prolongations):
        assert (P0 != P1).nnz == 0


def test_masked_prolongation_respects_constraints(three_level):
    h, systems, Ps = three_level
    for lvl, P in enumerate(Ps):
        fine_fixed = systems[lvl + 1].constrained
        coarse_fixed = systems[lvl].constrained
        assert P[fine_fixed].nnz == 0
        assert P[:, coarse_fixed].nnz == 0


def test_galerkin_coarsening_symmetric(three_level):
    _, systems, Ps = three_level
    mats = galerkin_coarsen(systems[-1].matrix, Ps)
    assert len(mats) == 3
    for A in mats:
        assert abs(A - A.T).max() < 1e-12


def test_vcycle_is_linear(three_level, rng):
    _, systems, Ps = three_level
    M = MultigridPreconditioner([s.matrix for s in systems], Ps)
    n = systems[-1].matrix.shape[0]
    r1, r2 = rng.standard_normal(n), rng.standard_normal(n)
    a, b = 0.7, -2.3
    lhs = M(a * r1 + b * r2)
    rhs = a * M(r1) + b * M(r2)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)
    np.testing.assert_array_equal(vcycle(M, r1), M(r1))


def test_vcycle_contracts_energy_error(three_level, rng):
    _, systems, Ps = three_level
    mats = [s.matrix for s in systems]
    A = mats[-1]
    M = MultigridPreconditioner(mats, Ps)

    def energy(e):
        return np.sqrt(e @ (A @ e))

    for _ in range(3):
        b = rng.standard_normal(A.shape[0])
        x = spsolve(A.tocsc(), b)
        x0 = np.zeros_like(b)
        x1 = x0 + M(b - A @ x0)
        assert energy(x - x1) <= 0.5 * energy(x - x0)


def test_bicgstab_zero_rhs():
    x, info = bicgstab(sp.eye(3).tocsr(), None, np.zeros(3))
    assert np.all(x == 0.0) and info.iterations == 0


def test_bicgstab_diagonal_two_steps():
    A = sp.diags([2.0, 5.0]).tocsr()
    b = np.array([1.0, -3.0])
    x, info = bicgstab(A, None, b, KrylovConfig(rel_tol=1e-14, abs_tol=1e-300))
    assert info.iterations <= 2
    np.testing.assert_allclose(x, [0.5, -0.6], rtol=1e-14)


def test_bicgstab_breakdown_on_skew_system():
    A = sp.csr_matrix(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    with pytest.raises(Breakdown):
        bicgstab(A, None, np.array([1.0, 0.0]))


def test_bicgstab_iteration_cap(three_level):
    _, systems, _ = three_level
    with pytest.raises(NonConvergence) as exc:
        bicgstab(systems[-1].matrix, None, systems[-1].rhs, KrylovConfig(max_iter=3))
    assert exc.value.report.iterations == 3


@pytest.mark.parametrize("method", ["bicgstab", "cg"])
def test_multigrid_krylov_matches_direct(three_level, method):
    _, systems, Ps = three_level
    A, b = systems[-1].matrix, systems[-1].rhs
    assert A.shape[0] <= 2000
    x, info = solve_multilevel([s.matrix for s in systems], Ps, b, KrylovConfig(method=method))
    ref = np.linalg.solve(A.toarray(), b)
    assert np.abs(x - ref).max() <= 1e-8 * np.abs(ref).max()
    assert info.iterations < 60


def test_h_robust_iteration_counts():
    counts = []
    for nref in (1, 2, 3):
        h = generate_composite_domain(2, 2, 0.3, nref)
        systems, Ps = elasticity_levels(h, 2)
        _, info = solve_multilevel([s.matrix for s in systems], Ps, systems[-1].rhs, KrylovConfig())
        counts.append(info.iterations)
    assert max(counts) <= 2 * min(counts), counts


def test_cg_agrees_with_bicgstab(three_level):
    _, systems, Ps = three_level
    M = MultigridPreconditioner([s.matrix for s in systems], Ps)
    A, b = systems[-1].matrix, systems[-1].rhs
    x1, _ = bicgstab(A, M, b)
    x2, _ = cg(A, M, b)
    np.testing.assert_allclose(x1, x2, atol=1e-9 * np.abs(x1).max())


def test_block_diagonal_inverse(rng):
    n = 4
    blocks = rng.standard_normal((n, 2, 2)) + 3 * np.eye(2)
    A = sp.block_diag(list(blocks)).tocsr()
    inv = block_diagonal_inverse(A)
    np.testing.assert_allclose(inv, np.linalg.inv(blocks), rtol=1e-12)


def test_singular_coarse_matrix_detected():
    A0 = sp.csr_matrix((4, 4))
    with pytest.raises(SingularCoarseMatrix):
        MultigridPreconditioner([A0], [])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_mg_preconditioned_residual_drops(seed):
    h = generate_composite_domain(1, 2, 0.3, 1)
    systems, Ps = elasticity_levels(h, 1)
    b = np.random.default_rng(seed).standard_normal(systems[-1].matrix.shape[0])
    x, info = solve_multilevel([s.matrix for s in systems], Ps, b, KrylovConfig(rel_tol=1e-10))
    r = b - systems[-1].matrix @ x
    assert np.linalg.norm(r) <= max(1e-10 * np.linalg.norm(b), 1e-10) * (1 + 1e-6)


def test_mg_config_validation():
    with pytest.raises(ValueError):
        MGConfig(omega=1.5)
    with pytest.raises(ValueError):
        KrylovConfig(method="gmres")
