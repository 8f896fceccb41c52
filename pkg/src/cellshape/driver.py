"""Optimization loop, configuration and experiment artifacts."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .descent import DescentSolver, NewtonConfig, NewtonReport, PenaltyConfig
from .errors import Breakdown, ConfigurationError, ElementInversion, NonConvergence
from .fem import MaterialTable, ObjectiveBreakdown, assemble_elasticity, dirichlet_dofs, evaluate_objective
from .io import write_mesh, write_vtk
from .mesh import MeshHierarchy, deform, generate_composite_domain, mesh_quality
from .mgsolve import KrylovConfig, MGConfig, TransferOperators, solve_multilevel
from .shapegrad import shape_gradient

logger = logging.getLogger(__name__)

CSV_HEADER = [
    "step",
    "J_elast",
    "J_vol",
    "J_peri",
    "J_total",
    "newton_iters",
    "avg_lin_iters",
    "elast_iters",
    "quality_max",
    "quality_median",
]


@dataclass
class OptimConfig:
    # objective weights
    nu_elast: float = 100.0
    nu_vol: float = 1.0
    nu_peri: float = 0.01
    # penalized metric
    nu_penalty: float = 5e4
    b: float = 1e-3
    metric_lambda: float = 0.1
    metric_mu: float = 1.0
    # step
    step_size: float = 1.0
    max_steps: int = 100
    # domain
    rows: int = 8
    cols: int = 4
    cell_radius_fraction: float = 0.3
    refinements: int = 2
    # materials and load
    outer_lambda: float = 1.0
    outer_mu: float = 0.1
    lambda_top: float = 1.2
    lambda_bottom: float = 2.0
    mu_top: float = 0.12
    mu_bottom: float = 0.2
    traction: float = 0.1
    # solvers
    krylov_method: str = "bicgstab"
    elast_rel_tol: float = 1e-10
    elast_abs_tol: float = 1e-10
    elast_max_iter: int = 2000
    newton_rel_tol: float = 1e-9
    newton_abs_tol: float = 1e-9
    newton_max_steps: int = 200
    inner_rel_tol: float = 1e-3
    inner_max_iter: int = 2000
    pre_smooth: int = 3
    post_smooth: int = 3
    smoother_omega: float = 0.66
    # output
    output_dir: str = "cellshape_out"
    snapshot_steps: str = "0,25,50,75,100"
    write_vtk: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.step_size > 0:
            raise ConfigurationError("step_size must be > 0")
        if self.max_steps < 0:
            raise ConfigurationError("max_steps must be >= 0")
        if not self.nu_elast > 0 or self.nu_vol < 0 or self.nu_peri < 0:
            raise ConfigurationError("weights need nu_elast > 0 and nu_vol, nu_peri >= 0")
        if self.nu_penalty <= 0 or self.b <= 0:
            raise ConfigurationError("nu_penalty and b must be > 0")
        if self.refinements < 0 or self.rows < 1 or self.cols < 1:
            raise ConfigurationError("rows, cols >= 1 and refinements >= 0 required")
        if not 0.0 < self.cell_radius_fraction < 0.5:
            raise ConfigurationError("cell_radius_fraction must lie in (0, 0.5)")
        try:
            self.snapshots
            self.materials()
            self.penalty()
            self.newton()
            self.elasticity_solver()
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc

    @property
    def weights(self):
        return (self.nu_elast, self.nu_vol, self.nu_peri)

    @property
    def snapshots(self):
        if not self.snapshot_steps.strip():
            return set()
        return {int(s) for s in self.snapshot_steps.split(",")}

    def materials(self) -> MaterialTable:
        return MaterialTable.graded(
            self.rows,
            outer=(self.outer_lambda, self.outer_mu),
            top=(self.lambda_top, self.mu_top),
            bottom=(self.lambda_bottom, self.mu_bottom),
        )

    def penalty(self) -> PenaltyConfig:
        return PenaltyConfig(self.nu_penalty, self.b, self.metric_lambda, self.metric_mu)

    def mg(self) -> MGConfig:
        return MGConfig(self.pre_smooth, self.post_smooth, self.smoother_omega)

    def elasticity_solver(self) -> KrylovConfig:
        return KrylovConfig(self.krylov_method, self.elast_rel_tol, self.elast_abs_tol, self.elast_max_iter)

    def newton(self) -> NewtonConfig:
        inner = KrylovConfig(self.krylov_method, self.inner_rel_tol, 1e-300, self.inner_max_iter)
        return NewtonConfig(self.newton_rel_tol, self.newton_abs_tol, self.newton_max_steps, inner, self.mg())

    def replace(self, **changes) -> "OptimConfig":
        return dataclasses.replace(self, **changes)

    # -- text format ------------------------------------------------------------

    @classmethod
    def from_pairs(cls, pairs, base=None) -> "OptimConfig":
        """Build from ``(key, value-string)`` pairs on top of ``base`` (default config)."""
        values = dataclasses.asdict(base) if base is not None else {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for key, raw in pairs:
            key = key.strip()
            if key not in types:
                raise ConfigurationError(f"unknown configuration key {key!r}")
            values[key] = _coerce(types[key], raw.strip(), key)
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    @classmethod
    def from_file(cls, path, overrides=()) -> "OptimConfig":
        pairs = []
        try:
            with open(path) as fh:
                for lineno, raw in enumerate(fh, 1):
                    line = raw.split("#", 1)[0].strip()
                    if not line:
                        continue
                    if "=" not in line:
                        raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
                    key, value = line.split("=", 1)
                    pairs.append((key, value))
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        pairs += [split_override(o) for o in overrides]
        return cls.from_pairs(pairs)

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in dataclasses.asdict(self).items())


def split_override(item):
    if "=" not in item:
        raise ConfigurationError(f"override {item!r} is not key=value")
    return tuple(item.split("=", 1))


def _coerce(typ, raw, key):
    typ = typ if isinstance(typ, str) else typ.__name__
    try:
        if typ == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key}: {raw!r}") from exc


@dataclass
class StepRecord:
    step: int
    objective: ObjectiveBreakdown
    newton_iters: int
    avg_lin_iters: float
    elast_iters: int
    quality_max: float
    quality_median: float
    termination: str = "ok"  # ok | inversion | nonconvergence | breakdown
    message: str = ""

    @property
    def completed(self) -> bool:
        return self.termination == "ok"

    def csv_row(self):
        o = self.objective
        return [
            self.step,
            repr(float(o.J_elast)),
            repr(float(o.J_vol)),
            repr(float(o.J_peri)),
            repr(float(o.total)),
            self.newton_iters,
            repr(float(self.avg_lin_iters)),
            self.elast_iters,
            repr(float(self.quality_max)),
            repr(float(self.quality_median)),
        ]


@dataclass
class RunResult:
    records: list
    termination: str
    message: str = ""
    output_dir: str | None = None
    snapshots: list = field(default_factory=list)
    final_quality: object = None  # QualityReport of the last mesh

    @property
    def completed_steps(self) -> int:
        return sum(r.completed for r in self.records)

    @property
    def early_termination(self) -> bool:
        return self.termination != "ok"


def solve_state(hierarchy: MeshHierarchy, mat: MaterialTable, traction, krylov: KrylovConfig, mg: MGConfig):
    """Elasticity solve on the finest level with a multigrid-preconditioned Krylov method."""
    systems = [assemble_elasticity(m, mat, traction) for m in hierarchy.levels]
    transfer = TransferOperators.build(hierarchy, [dirichlet_dofs(m) for m in hierarchy.levels])
    u, info = solve_multilevel([s.matrix for s in systems], transfer.prolongations, systems[-1].rhs, krylov, mg)
    return u.reshape(-1, 2), info


class _Writer:
    def __init__(self, cfg: OptimConfig):
        self.dir = cfg.output_dir
        self.vtk = cfg.write_vtk
        self.snapshots = []
        os.makedirs(self.dir, exist_ok=True)
        self.csv_path = os.path.join(self.dir, "history.csv")
        with open(self.csv_path, "w", newline="") as fh:
            csv.writer(fh).writerow(CSV_HEADER)
        with open(os.path.join(self.dir, "config.txt"), "w") as fh:
            fh.write(cfg.to_text())

    def record(self, rec: StepRecord):
        if not rec.completed:
            return
        with open(self.csv_path, "a", newline="") as fh:
            csv.writer(fh).writerow(rec.csv_row())

    def snapshot(self, step, mesh, u=None, v=None):
        if not self.vtk:
            return
        fields = {}
        if u is not None:
            fields["u"] = u
        if v is not None:
            fields["v"] = v
        path = os.path.join(self.dir, f"snapshot_{step:04d}.vtk")
        write_vtk(path, mesh, fields, title=f"cellshape step {step}")
        self.snapshots.append(path)

    def finish(self, result: RunResult, initial_mesh, final_mesh):
        write_mesh(os.path.join(self.dir, "mesh_initial.txt"), initial_mesh)
        write_mesh(os.path.join(self.dir, "mesh_final.txt"), final_mesh)
        summary = {
            "termination": result.termination,
            "message": result.message,
            "completed_steps": result.completed_steps,
            "final_quality_max": result.final_quality.max,
            "final_quality_median": result.final_quality.median,
            "snapshots": [os.path.basename(p) for p in self.snapshots],
        }
        with open(os.path.join(self.dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2)


def run_optimization(cfg: OptimConfig, hierarchy: MeshHierarchy | None = None, write=True) -> RunResult:
    """Gradient-penalized shape optimization with a fixed step budget.

    Per step: solve the state problem, assemble and reset the shape
    derivative, compute the penalized gradient ``v`` by semi-smooth Newton,
    and move all nodes by ``-t v``. Element inversion or solver failure ends
    the run early; the failing step is recorded with its termination flag.
    """
    if hierarchy is None:
        hierarchy = generate_composite_domain(cfg.rows, cfg.cols, cfg.cell_radius_fraction, cfg.refinements)
    mat = cfg.materials()
    penalty, newton = cfg.penalty(), cfg.newton()
    elast_cfg, mg = cfg.elasticity_solver(), cfg.mg()
    writer = _Writer(cfg) if write else None
    snapshots = cfg.snapshots
    initial = hierarchy.finest
    records = []
    termination, message = "ok", ""
    written_final = False

    for k in range(cfg.max_steps):
        mesh = hierarchy.finest
        written_final = False
        try:
            u, einfo = solve_state(hierarchy, mat, cfg.traction, elast_cfg, mg)
        except (NonConvergence, Breakdown) as exc:
            termination = "breakdown" if isinstance(exc, Breakdown) else "nonconvergence"
            message = f"elasticity solve: {exc}"
            q = mesh_quality(mesh)
            nan = float("nan")
            records.append(
                StepRecord(k, ObjectiveBreakdown(nan, nan, nan, nan), 0, 0.0, -1, q.max, q.median, termination, message)
            )
            break
        obj = evaluate_objective(mesh, mat, u, cfg.weights)
        quality = mesh_quality(mesh)
        dJ = shape_gradient(mesh, mat, u, cfg.weights)
        rec = StepRecord(k, obj, 0, 0.0, einfo.iterations, quality.max, quality.median)
        try:
            v, report = DescentSolver(hierarchy, penalty, newton).solve(dJ)
        except (NonConvergence, Breakdown) as exc:
            report = getattr(exc, "report", None)
            if isinstance(report, NewtonReport):
                rec.newton_iters = report.iterations
                rec.avg_lin_iters = report.mean_linear_iterations
            rec.termination = "breakdown" if isinstance(exc, Breakdown) else "nonconvergence"
            rec.message = f"descent solve: {exc}"
            records.append(rec)
            termination, message = rec.termination, rec.message
            break
        rec.newton_iters = report.iterations
        rec.avg_lin_iters = report.mean_linear_iterations
        if writer is not None and k in snapshots:
            writer.snapshot(k, mesh, u, v)
            written_final = True
        try:
            moved = deform(mesh, v, -cfg.step_size)
        except ElementInversion as exc:
            rec.termination, rec.message = "inversion", str(exc)
            records.append(rec)
            termination, message = "inversion", str(exc)
            break
        records.append(rec)
        if writer is not None:
            writer.record(rec)
        logger.info(
            "step %d: J=%.6g (elast %.4g, vol %.4g, peri %.4g) newton=%d lin=%.1f elast=%d q=%.3g/%.3g",
            k, obj.total, obj.J_elast, obj.J_vol, obj.J_peri, rec.newton_iters, rec.avg_lin_iters,
            rec.elast_iters, quality.max, quality.median,
        )
        hierarchy = hierarchy.with_fine_vertices(moved.vertices)
        written_final = False

    result = RunResult(records, termination, message, cfg.output_dir if write else None)
    result.final_quality = mesh_quality(hierarchy.finest)
    if writer is not None:
        step = records[-1].step + (1 if termination == "ok" else 0) if records else 0
        if not written_final:
            writer.snapshot(step, hierarchy.finest)
        result.snapshots = list(writer.snapshots)
        writer.finish(result, initial, hierarchy.finest)
    if termination != "ok":
        logger.warning("run stopped at step %d: %s", records[-1].step, message)
    return result


@dataclass
class SweepSummary:
    b: float
    completed_steps: int
    termination: str
    quality_max_at_10: float
    quality_max_final: float
    quality_median_final: float


def b_sweep(cfg: OptimConfig, b_values, write=True):
    """Run the optimization once per Frobenius bound ``b``."""
    b_values = list(b_values)
    if not b_values:
        raise ConfigurationError("b_sweep needs at least one b value")
    out = []
    for b in b_values:
        sub = cfg.replace(b=float(b), output_dir=os.path.join(cfg.output_dir, f"b_{b:g}"))
        res = run_optimization(sub, write=write)
        out.append(summarize(float(b), res))
    if write:
        os.makedirs(cfg.output_dir, exist_ok=True)
        with open(os.path.join(cfg.output_dir, "sweep.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f.name for f in dataclasses.fields(SweepSummary)])
            for s in out:
                w.writerow([repr(float(x)) if isinstance(x, float) else x for x in dataclasses.astuple(s)])
    return out


def summarize(b, result: RunResult) -> SweepSummary:
    recs = result.records
    at10 = next((r.quality_max for r in recs if r.step == 10), math.nan)
    q = result.final_quality
    return SweepSummary(
        b,
        result.completed_steps,
        result.termination,
        at10,
        q.max if q is not None else math.nan,
        q.median if q is not None else math.nan,
    )


def write_outputs(records, meshes, output_dir, fields=None):
    """Write ``history.csv`` for the completed records and one VTK file per mesh.

    ``meshes`` maps step index to mesh; ``fields`` optionally maps the same
    step index to a dict of point fields (``u``, ``v``).
    """
    os.makedirs(output_dir, exist_ok=True)
    with open(os.path.join(output_dir, "history.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for rec in records:
            if rec.completed:
                w.writerow(rec.csv_row())
    paths = []
    for step, mesh in sorted(meshes.items()):
        path = os.path.join(output_dir, f"snapshot_{step:04d}.vtk")
        write_vtk(path, mesh, (fields or {}).get(step), title=f"cellshape step {step}")
        paths.append(path)
    return paths


def read_history(path):
    """Parse ``history.csv`` into a dict of numpy columns."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in CSV_HEADER}
