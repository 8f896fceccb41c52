"""End-to-end acceptance checks.

Each test prints one ``ACCEPTANCE <n> PASS|FAIL`` line with the measured
quantities, then asserts. The three optimization runs (b = 0.001, 0.1, 1.0
on the 8 x 4 domain, two refinements) are shared through session fixtures
and use the same step budget.
"""
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from cellshape.driver import OptimConfig, read_history, run_optimization
from cellshape.fem import MaterialTable, assemble_elasticity, dirichlet_dofs
from cellshape.mesh import generate_composite_domain
from cellshape.mgsolve import KrylovConfig, TransferOperators, solve_multilevel
from cellshape.verify import gradient_oracle_suite

pytestmark = pytest.mark.slow

STEP_BUDGET = 51  # steps 0..50
HERE = os.path.dirname(os.path.abspath(__file__))


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}")


class TimedRun:
    def __init__(self, b, out):
        cfg = OptimConfig(b=b, max_steps=STEP_BUDGET, output_dir=str(out), snapshot_steps="0,25,50")
        t0 = time.perf_counter()
        self.result = run_optimization(cfg)
        self.seconds = time.perf_counter() - t0
        self.history = read_history(os.path.join(out, "history.csv"))
        self.count = self.result.completed_steps


@pytest.fixture(scope="session")
def run_factory(tmp_path_factory):
    cache = {}

    def get(b):
        if b not in cache:
            cache[b] = TimedRun(b, tmp_path_factory.mktemp(f"run_b{b:g}"))
        return cache[b]

    return get


def test_criterion_1_gradient_oracle(capsys):
    t0 = time.perf_counter()
    mesh, samples = gradient_oracle_suite(n_fields=10, seed=0, rows=1, cols=2, refinements=2)
    secs = time.perf_counter() - t0
    dofs = 2 * mesh.n_vertices
    worst = max(max(s.errors.values()) for s in samples)
    decreasing = all(s.errors[1e-5] < s.errors[1e-4] for s in samples)
    orders = np.array([s.order for s in samples])
    med = float(np.median(orders))
    ok = dofs <= 5000 and worst <= 1e-4 and decreasing and med >= 1.5 and secs <= 60.0
    report(
        capsys,
        1,
        ok,
        f"{len(samples)} fields, 1 x 2 inclusions, {dofs} dofs, max rel err {worst:.2e} (<= 1e-4), "
        f"error decreasing for all fields: {decreasing}, median order {med:.2f} (>= 1.5), "
        f"orders {np.round(orders, 2).tolist()}, {secs:.1f} s (<= 60)",
    )
    assert ok


def test_criterion_2_descent_behavior(capsys, run_factory):
    run = run_factory(1e-3)
    h = run.history
    J, Jv = h["J_total"], h["J_vol"]
    dofs = 2 * generate_composite_domain(8, 4, 0.3, 2).finest.n_vertices
    have = len(J) >= 51
    drop = 1.0 - J[50] / J[0] if have else float("nan")
    vol_strict = bool(np.all(np.diff(Jv[:11]) < 0)) if have else False
    frac = float(np.mean(np.diff(J[:51]) <= 0)) if have else 0.0
    ok = have and drop >= 0.20 and vol_strict and frac >= 0.95 and run.seconds <= 900 and dofs <= 50_000
    report(
        capsys,
        2,
        ok,
        f"{len(J)} steps on {dofs} dofs, J_total {J[0]:.6f} -> {J[min(50, len(J) - 1)]:.6f} "
        f"(decrease {100 * drop:.1f}% >= 20%), J_vol strictly decreasing over steps 0..10: {vol_strict}, "
        f"nonincreasing fraction {frac:.2f} (>= 0.95), runtime {run.seconds:.0f} s (<= 900)",
    )
    assert ok


def test_criterion_3_penalty_ordering(capsys, run_factory):
    runs = {b: run_factory(b) for b in (1e-3, 0.1, 1.0)}
    c = {b: r.count for b, r in runs.items()}
    term = {b: r.result.termination for b, r in runs.items()}
    ok = c[1e-3] >= c[0.1] >= c[1.0] and c[1e-3] >= 30 and c[1.0] <= 15
    report(
        capsys,
        3,
        ok,
        f"completed steps (budget {STEP_BUDGET}): b=0.001 {c[1e-3]} ({term[1e-3]}), b=0.1 {c[0.1]} ({term[0.1]}), "
        f"b=1.0 {c[1.0]} ({term[1.0]})",
    )
    assert ok


def test_criterion_4_newton_effort(capsys, run_factory):
    h = run_factory(1e-3).history
    newton = h["newton_iters"][:30]
    lin = h["avg_lin_iters"][:30]
    med = float(np.median(newton))
    ok = len(newton) == 30 and 5 <= med <= 40 and newton.max() <= 200 and lin.max() <= 60
    report(
        capsys,
        4,
        ok,
        f"first 30 steps: median Newton {med:.1f} (in [5, 40]), max Newton {int(newton.max())} (<= 200), "
        f"mean inner iterations {lin.min():.1f}..{lin.max():.1f} (<= 60)",
    )
    assert ok


def test_criterion_5_multigrid_h_robustness(capsys):
    t0 = time.perf_counter()
    counts = []
    for nref in (1, 2, 3):
        h = generate_composite_domain(8, 4, 0.3, nref)
        mat = MaterialTable.graded(8)
        systems = [assemble_elasticity(m, mat, 0.1) for m in h.levels]
        P = TransferOperators.build(h, [dirichlet_dofs(m) for m in h.levels]).prolongations
        _, info = solve_multilevel([s.matrix for s in systems], P, systems[-1].rhs, KrylovConfig())
        counts.append(info.iterations)
    # direct comparison on a hierarchy with <= 2000 fine dofs
    h = generate_composite_domain(2, 2, 0.3, 2)
    mat = MaterialTable.graded(2)
    systems = [assemble_elasticity(m, mat, 0.1) for m in h.levels]
    P = TransferOperators.build(h, [dirichlet_dofs(m) for m in h.levels]).prolongations
    x, _ = solve_multilevel([s.matrix for s in systems], P, systems[-1].rhs, KrylovConfig())
    A = systems[-1].matrix.toarray()
    ref = np.linalg.solve(A, systems[-1].rhs)
    err = float(np.abs(x - ref).max() / np.abs(ref).max())
    secs = time.perf_counter() - t0
    ratio = max(counts) / min(counts)
    ok = ratio <= 2.0 and err <= 1e-8 and A.shape[0] <= 2000 and secs <= 120
    report(
        capsys,
        5,
        ok,
        f"BiCGStab+GMG iterations at refinements 1/2/3: {counts} (ratio {ratio:.2f} <= 2), "
        f"direct-solve agreement {err:.1e} on {A.shape[0]} dofs (<= 1e-8), {secs:.1f} s (<= 120)",
    )
    assert ok


def test_criterion_6_quality_trend(capsys, run_factory):
    lo, hi = run_factory(1e-3).history, run_factory(0.1).history
    q_lo = lo["quality_max"][10] if len(lo["step"]) > 10 else np.nan
    q_hi = hi["quality_max"][10] if len(hi["step"]) > 10 else np.inf
    med0 = lo["quality_median"][0]
    med30 = lo["quality_median"][30] if len(lo["step"]) > 30 else np.inf
    ok = q_hi >= q_lo and med0 / 3.0 <= med30 <= 3.0 * med0
    report(
        capsys,
        6,
        ok,
        f"quality max at step 10: b=0.001 {q_lo:.3f}, b=0.1 {q_hi:.3f} (nondecreasing in b); "
        f"b=0.001 median quality step 0 {med0:.3f}, step 30 {med30:.3f} (within 3x)",
    )
    assert ok


def test_criterion_7_invariant_suites(capsys):
    files = sorted(
        os.path.join(HERE, f) for f in os.listdir(HERE) if f.startswith("test_") and f.endswith(".py") and f != "test_acceptance.py"
    )
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *files], capture_output=True, text=True)
    secs = time.perf_counter() - t0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()[-200:]
    ok = proc.returncode == 0 and secs <= 300
    report(capsys, 7, ok, f"{len(files)} invariant suites: {tail}; {secs:.0f} s (<= 300)")
    assert ok, proc.stdout[-3000:]
