"""Pipeline: build -> assemble -> solve -> post-process -> write."""

import logging
import math
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .assembly import apply_moment_load, apply_periodic, assemble, clamp_nodes, make_dofmap
from .errors import CurvlamError, StageError
from .materials import MaterialTable
from .mesh import amplitude_for_angle, build_mesh, max_wrinkle_angle
from .postprocess import (PROFILE_COLUMNS, FailureAllowables, evaluate_failure, extract_line,
                          failure_summary_row, nodal_failure, recover_stress)
from .schwarz import log_row, setup_preconditioner
from .solvers import cg

log = logging.getLogger("curvlam.run")

SWEEP_PARAMETERS = ("angle", "contrast", "n_sub", "refinement")


@dataclass
class RunResult:
    config: object
    converged: bool
    iterations: int
    failure: object = None
    summary: dict = field(default_factory=dict)
    solve_row: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    out_dir: Path | None = None
    mesh: object = None
    system: object = None
    u: np.ndarray = None
    report: object = None


class _Stage:
    def __init__(self, name, timings):
        self.name, self.timings = name, timings

    def __enter__(self):
        log.info("stage %s: start", self.name)
        self.t0 = time.perf_counter()

    def __exit__(self, exc_type, exc, tb):
        dt = time.perf_counter() - self.t0
        self.timings[self.name] = dt
        if exc is None:
            log.info("stage %s: done in %.2f s", self.name, dt)
            return False
        if isinstance(exc, StageError):
            return False
        log.error("stage %s: failed: %s", self.name, exc)
        raise StageError(self.name, exc) from exc


def wrinkle_for(cfg, geometry):
    """WrinkleParams for the config (None when the block is empty)."""
    w = cfg.wrinkle
    if not w.active:
        return None
    template = cfg.wrinkle_template()
    if w.angle is not None:
        amp = 0.0 if w.angle == 0 else amplitude_for_angle(w.angle, template, geometry)
        template = template.__class__(**{**template.__dict__, "amplitude": amp})
    return template.resolve(geometry)


def make_mesh(cfg, timings=None):
    timings = {} if timings is None else timings
    with _Stage("build", timings):
        geometry = cfg.corner_geometry()
        mesh = build_mesh(geometry, cfg.mesh_spec(), cfg.stacking_sequence(), wrinkle_for(cfg, geometry))
        log.info("mesh: %d elements, %d nodes, shape %s", mesh.n_elements, mesh.n_nodes, mesh.shape)
    return mesh


def build_system(cfg, workers=1, timings=None):
    """Mesh and constrained, loaded linear system for a config."""
    timings = {} if timings is None else timings
    mesh = make_mesh(cfg, timings)
    with _Stage("assemble", timings):
        materials = MaterialTable(cfg.catalog(), mesh.stacking)
        dofmap = apply_periodic(mesh) if cfg.boundary.periodic else make_dofmap(mesh)
        system = assemble(mesh, materials, dofmap=dofmap, workers=workers)
        system = clamp_nodes(system, mesh.node_set("clamped"))
        system = apply_moment_load(system, mesh, cfg.boundary.moment)
    return mesh, system


def solve_system(cfg, system, workers=1, timings=None):
    timings = {} if timings is None else timings
    s = cfg.solver
    with _Stage("precondition", timings):
        P, info = setup_preconditioner(system, s.preconditioner, s.n_sub, s.overlap, s.axis,
                                       s.n_ev, s.threshold, workers)
    with _Stage("solve", timings):
        u, report = cg(system.K, system.f, P, s.tol, s.maxit, criterion=s.criterion,
                       name=s.preconditioner)
    if P is not None:
        P.close()
    row = report.as_row()
    row.update({k: v for k, v in log_row(info, report, timings["solve"]).items()
                if k not in ("setup_time", "solve_time", "iterations")})
    return u, report, row, info


def run(cfg, out_dir=None, workers=1, write=True):
    """Execute one configured run; returns a RunResult.

    CSV outputs hold only deterministic quantities. Wall-clock timings go
    to ``timings.csv``.
    """
    t_start = time.perf_counter()
    timings = {}
    out = Path(out_dir if out_dir is not None else cfg.output.directory)
    mesh, system = build_system(cfg, workers, timings)
    u, report, solve_row, info = solve_system(cfg, system, workers, timings)

    allow = FailureAllowables(cfg.output.s33, cfg.output.s13)
    with _Stage("postprocess", timings):
        field_ = recover_stress(u, system)
        M_kN = cfg.boundary.moment / 1e3
        failure = evaluate_failure(field_, allow, M_kN, cfg.output.failure_region)
        angle = max_wrinkle_angle(mesh.wrinkle, mesh.geometry) if mesh.wrinkle is not None else 0.0
        summary = failure_summary_row(failure, angle, u, system.dofmap)
        summary["converged"] = int(report.converged)
        summary["iterations"] = report.iterations
        profiles = {}
        for deg in cfg.output.profiles:
            profiles[deg] = extract_line(field_, deg, cfg.output.profile_width, allow)

    result = RunResult(cfg, report.converged, report.iterations, failure, summary, solve_row,
                       timings, out, mesh, system, u, report)
    if write:
        with _Stage("write", timings):
            out.mkdir(parents=True, exist_ok=True)
            io.write_csv(out / "solve.csv", [solve_row])
            io.write_csv(out / "residuals.csv",
                         [{"iteration": i, "residual": r} for i, r in enumerate(report.history)])
            io.write_csv(out / "failure.csv", [summary])
            for deg, rec in profiles.items():
                io.write_csv(out / f"profile_{_tag(deg)}.csv", rec, PROFILE_COLUMNS)
            if cfg.output.vtk:
                cell_stress = field_.local.mean(axis=1)
                io.write_vtk(out / "solution.vtk", mesh,
                             point_data={"displacement": system.dofmap.node_values(u)},
                             cell_data={"F_max": nodal_failure(field_, allow),
                                        **{n: cell_stress[:, c] for c, n in enumerate(
                                            ("sigma_s", "sigma_l", "sigma_r", "tau_rl", "tau_rs", "tau_sl"))}})
    timings["total"] = time.perf_counter() - t_start
    if write:
        io.write_csv(out / "timings.csv", [{"stage": k, "seconds": round(v, 3)} for k, v in timings.items()])
    log.info("run finished: converged=%s iterations=%d F_max=%.4f M_fail=%.4f kN mm/mm",
             report.converged, report.iterations, failure.F_max, failure.M_fail)
    return result


def _tag(value):
    return f"{value:g}".replace("-", "m").replace(".", "p")


def refinement_level(cfg, per_layer, base_per_layer=None):
    """Scale in-plane counts with the through-thickness count.

    ``per_layer`` may be an int or an (arc, width, per_layer) triple.
    """
    if isinstance(per_layer, (tuple, list)):
        arc, width, n = (int(v) for v in per_layer)
    else:
        n = int(per_layer)
        arc, width = cfg.mesh.n_elems_arc, cfg.mesh.n_elems_width
    return cfg.replace(**{"mesh.n_elems_arc": arc, "mesh.n_elems_width": width,
                          "mesh.n_elems_per_ply": n, "mesh.n_elems_per_interface": n})


def configure(cfg, parameter, value):
    """Config for one sweep point."""
    if parameter == "angle":
        return cfg.replace(**{"wrinkle.angle": float(value), "wrinkle.amplitude": None})
    if parameter == "contrast":
        # contrast = ply fibre modulus / interface modulus
        return cfg.replace(**{"materials.interface_E": cfg.materials.E11 / float(value)})
    if parameter == "n_sub":
        return cfg.replace(**{"solver.n_sub": int(value)})
    if parameter == "refinement":
        return refinement_level(cfg, value)
    raise ValueError(f"unknown sweep parameter {parameter!r} (choose from {SWEEP_PARAMETERS})")


def _sweep_point(point, parameter, value, prec, run_dir, workers, write):
    row = {"parameter": parameter, "value": _value_text(value), "preconditioner": prec}
    try:
        res = run(point, run_dir, workers, write=write)
        row.update({"status": "ok", "iterations": res.iterations, "converged": int(res.converged),
                    "coarse_dim": res.solve_row.get("coarse_dim", 0),
                    "n_dofs": res.system.n_dofs})
        row.update({k: v for k, v in res.summary.items() if k not in ("converged", "iterations")})
    except CurvlamError as exc:
        log.error("sweep point %s=%s failed: %s", parameter, value, exc)
        row.update({"status": f"error: {exc}"})
    return row


def sweep(cfg, parameter, values, out_dir=None, workers=1, preconditioners=None, write_runs=False,
          concurrent=1):
    """One run per value; returns the aggregated rows and writes sweep_<parameter>.csv.

    Failed runs are recorded with their error and the sweep continues. Each
    point owns the directory ``<parameter>_<value>_<preconditioner>``, so
    ``concurrent > 1`` runs points in separate processes without sharing
    output. Rows keep the input order either way.

    For the refinement sweep ``relative_error`` is the peak-criterion error
    against the finest level and ``relative_error_next`` the error against
    the following level.
    """
    out = Path(out_dir if out_dir is not None else cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    precs = preconditioners or [cfg.solver.preconditioner]
    jobs = []
    for value in values:
        for prec in precs:
            point = configure(cfg, parameter, value).replace(**{"solver.preconditioner": prec})
            run_dir = out / f"{parameter}_{_value_text(value)}_{prec}"
            jobs.append((point, parameter, value, prec, run_dir, workers, write_runs))
    if concurrent > 1 and len(jobs) > 1:
        # spawn: a forked child can inherit locks held by the parent's BLAS or worker threads
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=concurrent, mp_context=ctx) as pool:
            rows = list(pool.map(_sweep_point, *zip(*jobs)))
    else:
        rows = [_sweep_point(*job) for job in jobs]
    if parameter == "refinement":
        _relative_errors(rows)
    columns = []
    for r in rows:
        columns += [k for k in r if k not in columns]
    io.write_csv(out / f"sweep_{parameter}.csv", rows, columns)
    return rows


def _value_text(value):
    if isinstance(value, (tuple, list)):
        return "x".join(str(v) for v in value)
    return f"{value:g}" if isinstance(value, float) else str(value)


def _relative_errors(rows):
    for prec in dict.fromkeys(r["preconditioner"] for r in rows):
        sub = [r for r in rows if r["preconditioner"] == prec]
        ok = [r for r in sub if r.get("status") == "ok"]
        ref = ok[-1]["F_max"] if ok else 0.0
        for i, r in enumerate(sub):
            r["relative_error"] = r["relative_error_next"] = math.nan
            if r.get("status") != "ok":
                continue
            if ref:
                r["relative_error"] = abs(r["F_max"] - ref) / abs(ref)
            nxt = sub[i + 1] if i + 1 < len(sub) else None
            if nxt is not None and nxt.get("status") == "ok" and nxt["F_max"]:
                r["relative_error_next"] = abs(r["F_max"] - nxt["F_max"]) / abs(nxt["F_max"])
