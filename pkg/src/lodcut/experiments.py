"""Experiment drivers: sweeps over H producing CSV reports.

Every driver returns an :class:`ExperimentReport`.  The CSV bodies depend
only on the configuration (no timings, no timestamps); run metadata goes to
a separate JSON file.
"""
from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from . import __version__
from .analysis import (
    condition_number,
    condition_scaling,
    loglog_slope,
    measure_decay,
    pf_path_bound,
    pf_rayleigh,
    shape_mesh,
)
from .clement import build_clement
from .config import ExperimentConfig
from .corrector import CorrectorBasis, CorrectorProblem, build_basis, default_layers, export_diagnostics_csv
from .geometry import Circular, DomainShape, Horizontal, build_shape
from .mesh import MeshHierarchy, build_hierarchy, check_interior_vertex_assumption
from .solver import export_solution_csv, relative_energy_error, solve_lod, solve_reference
from .space import EnrichedSpace, build_space

FREE_NODE_RULE = (
    "free coarse nodes: vertices of active cells, minus nodes carrying a Dirichlet "
    "boundary piece of the mixed mesh, minus nodes whose hat vanishes at every "
    "non-Dirichlet mixed node ('support'); 'interior' further keeps only nodes "
    "inside the open domain"
)


@dataclass
class PointResult:
    """One (shape, H) configuration solved by the localized method."""

    hierarchy: MeshHierarchy
    space: EnrichedSpace
    basis: CorrectorBasis
    layers: int | None
    error: float
    cond: float
    reference_residual: float
    assumption_violations: int
    seconds: float
    reference: np.ndarray = field(repr=False, default=None)
    lod: np.ndarray = field(repr=False, default=None)
    Khat: np.ndarray = field(repr=False, default=None)
    clement: object = field(repr=False, default=None)

    @property
    def H(self) -> float:
        return self.hierarchy.H


def solve_point(
    shape: DomainShape,
    m: int,
    n: int,
    k: int = 2,
    enrichment: str = "cut",
    L: int | None = None,
    c2: float = 1.5,
    f: float = 1.0,
    box_halfwidth: float | None = None,
    strict_assumption: bool = False,
    workers: int = 1,
    free_rule: str = "support",
) -> PointResult:
    t0 = time.perf_counter()
    hier = build_hierarchy(shape, m, n, k, enrichment, box_halfwidth)
    bad = check_interior_vertex_assumption(hier, strict=strict_assumption)
    space = build_space(hier, free_rule)
    clem = build_clement(space, workers)
    problem = CorrectorProblem(space, clem)
    layers = default_layers(hier.H, c2) if L is None else L
    basis = build_basis(problem, layers, workers)
    ref = solve_reference(space, f)
    lod = solve_lod(space, basis, f)
    err = relative_energy_error(lod.fine, ref.fine, space.K)
    cond = condition_number(lod.matrix)
    return PointResult(
        hier, space, basis, layers, err, cond, ref.residual, len(bad),
        time.perf_counter() - t0, ref.fine, lod.fine, lod.matrix, clem,
    )


@dataclass
class ExperimentReport:
    name: str
    columns: list[str]
    rows: list[list]
    summary: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)  # extra CSVs: name -> (columns, rows)

    def col(self, name: str) -> list:
        """Values of one column of the main table."""
        j = self.columns.index(name)
        return [r[j] for r in self.rows]

    def csv_text(self, columns=None, rows=None) -> str:
        columns = self.columns if columns is None else columns
        rows = self.rows if rows is None else rows
        lines = [",".join(columns)]
        for r in rows:
            lines.append(",".join(_fmt(v) for v in r))
        return "\n".join(lines) + "\n"

    def summary_text(self) -> str:
        lines = ["metric,value"]
        for k in sorted(self.summary):
            lines.append(f"{k},{_fmt(self.summary[k])}")
        return "\n".join(lines) + "\n"

    def write(self, out) -> list[Path]:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / f"{self.name}.csv", out / f"{self.name}_summary.csv", out / f"{self.name}_meta.json"]
        paths[0].write_text(self.csv_text())
        paths[1].write_text(self.summary_text())
        paths[2].write_text(json.dumps(self.metadata, indent=2, sort_keys=True, default=str) + "\n")
        for name, (cols, rows) in sorted(self.tables.items()):
            p = out / f"{name}.csv"
            p.write_text(self.csv_text(cols, rows))
            paths.append(p)
        return paths


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    if v is None:
        return ""
    return str(v)


def _metadata(cfg: ExperimentConfig, points=(), extra=None) -> dict:
    meta = {
        "version": __version__,
        "config": cfg.source,
        "config_sha256": hashlib.sha256(cfg.source.encode()).hexdigest(),
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "free_node_rule": FREE_NODE_RULE,
        "free_rule": cfg.free_rule,
        "points": [
            {
                "H": p.H,
                "seconds": round(p.seconds, 3),
                "reference_residual": p.reference_residual,
                "max_constraint_residual": p.basis.max_constraint_residual,
                "max_saddle_residual": max((d.residual for d in p.basis.diagnostics), default=0.0),
                "assumption_violations": p.assumption_violations,
            }
            for p in points
        ],
    }
    if extra:
        meta.update(extra)
    return meta


def _sweep(cfg: ExperimentConfig, fn, items):
    """Map over sweep items with the configured pool; results in item order."""
    if cfg.workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _dump(cfg: ExperimentConfig, out, tag: str, p: PointResult, dump_matrices: bool) -> None:
    if out is None:
        return
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if dump_matrices:
        scipy.io.mmwrite(out / f"{tag}_Khat.mtx", sp.coo_matrix(p.Khat), symmetry="symmetric")
        scipy.io.mmwrite(out / f"{tag}_Phi.mtx", p.basis.Phi)
        scipy.io.mmwrite(out / f"{tag}_Lambda.mtx", p.clement.Lambda)
        export_diagnostics_csv(p.basis, out / f"{tag}_correctors.csv")
    if cfg.export_solutions:
        export_solution_csv(p.space, p.lod, out / f"{tag}_lod.csv")
        export_solution_csv(p.space, p.reference, out / f"{tag}_reference.csv")


SWEEP_COLUMNS = ["experiment", "variant", "H", "h", "L", "k", "n_free", "n_dof", "error_rel", "cond"]


def _row(name, variant, p: PointResult) -> list:
    return [
        name, variant, p.H, p.hierarchy.h, p.layers, p.hierarchy.k,
        len(p.space.free_nodes), p.space.ndof, p.error, p.cond,
    ]


def _slopes(prefix: str, points) -> dict:
    H = [p.H for p in points]
    return {
        f"{prefix}error_slope": loglog_slope(H, [p.error for p in points]),
        f"{prefix}cond_slope": condition_scaling(H, [p.cond for p in points]),
    }


def run_fractal(cfg: ExperimentConfig, out=None, dump_matrices=False) -> ExperimentReport:
    """H sweep on the square fractal with Robin boundary; correctors everywhere."""
    shape = build_shape("Fractal", 2.0**-cfg.n, levels=cfg.levels, kappa=cfg.kappa)
    enr = cfg.enrichment or "full"
    pts = _sweep(cfg, lambda m: _solve(cfg, shape, m, enr), list(cfg.m))
    for m, p in zip(cfg.m, pts):
        _dump(cfg, out, f"fractal_m{m}", p, dump_matrices)
    rows = [_row("fractal", f"levels={cfg.levels}", p) for p in pts]
    summary = _slopes("", pts) if len(pts) >= 3 else {}
    return ExperimentReport("fractal", SWEEP_COLUMNS, rows, summary, _metadata(cfg, pts, {"enrichment": enr}))


def _solve(cfg: ExperimentConfig, shape: DomainShape, m: int, enrichment: str) -> PointResult:
    return solve_point(
        shape, m, cfg.n, cfg.k, enrichment, cfg.L, cfg.c2, cfg.f, _halfwidth(cfg, m),
        cfg.strict_assumption, free_rule=cfg.free_rule,
    )


def _halfwidth(cfg: ExperimentConfig, m: int) -> float | None:
    if cfg.box_halfwidth is None:
        return None
    return cfg.box_halfwidth * 2.0**-m


def run_singularity(cfg: ExperimentConfig, out=None, dump_matrices=False) -> ExperimentReport:
    """Corner (L-shape) or slit domain with correctors only near the singular point."""
    kind = {"corner": "LShape", "slit": "Slit"}[cfg.experiment]
    shape = build_shape(kind, 2.0**-cfg.n)
    enr = cfg.enrichment or "box"
    pts = _sweep(cfg, lambda m: _solve(cfg, shape, m, enr), list(cfg.m))
    rows = [_row(cfg.experiment, "lod", p) for p in pts]
    summary = _slopes("", pts) if len(pts) >= 3 else {}
    for m, p in zip(cfg.m, pts):
        _dump(cfg, out, f"{cfg.experiment}_m{m}", p, dump_matrices)
    tables = {}
    if cfg.baseline:
        # plain coarse hats without correctors, measured against the fully
        # resolved fine solution so the singular rate is not masked by a
        # reference that is itself coarse away from the box
        base, base_rows = [], []
        for m in cfg.m:
            full = build_space(build_hierarchy(shape, m, cfg.n, 0, "full"), cfg.free_rule)
            ref = solve_reference(full, cfg.f)
            sol = solve_lod(full, CorrectorBasis(full.lifted_hats.tocsc(), 0, []), cfg.f)
            err = relative_energy_error(sol.fine, ref.fine, full.K)
            base.append(err)
            base_rows.append([cfg.experiment, "baseline", 2.0**-m, 2.0**-cfg.n, 0, 0,
                         len(full.free_nodes), full.ndof, err, condition_number(sol.matrix)])
        tables[f"{cfg.experiment}_baseline"] = (SWEEP_COLUMNS, base_rows)
        if len(base) >= 3:
            summary["baseline_error_slope"] = loglog_slope([2.0**-m for m in cfg.m], base)
    return ExperimentReport(cfg.experiment, SWEEP_COLUMNS, rows, summary,
                            _metadata(cfg, pts, {"enrichment": enr, "box_halfwidth_H": cfg.box_halfwidth or 4.0}),
                            tables)


def run_sawtooth(cfg: ExperimentConfig, out=None, dump_matrices=False) -> ExperimentReport:
    """Saw-tooth boundary with Dirichlet or Neumann teeth."""
    enr = cfg.enrichment or "cut"
    rows, summary, allpts = [], {}, []
    for bc in cfg.teeth_bc:
        shape = build_shape("SawTooth", 2.0**-cfg.n, teeth_exponent=cfg.teeth_exponent,
                            tooth_length=cfg.tooth_length, teeth_bc=bc)
        pts = _sweep(cfg, lambda m: _solve(cfg, shape, m, enr), list(cfg.m))
        for m, p in zip(cfg.m, pts):
            _dump(cfg, out, f"sawtooth_{bc}_m{m}", p, dump_matrices)
        rows += [_row("sawtooth", f"teeth={bc}", p) for p in pts]
        if len(pts) >= 3:
            summary.update(_slopes(f"{bc}_", pts))
        allpts += pts
    return ExperimentReport("sawtooth", SWEEP_COLUMNS, rows, summary, _metadata(cfg, allpts, {"enrichment": enr}))


def cut_spec(label: str, H: float, h: float):
    """Cuts ``1a/1b/1c`` (straight, r = h, H/2, H-h) and ``2a/2b/2c`` (ball, r = h, H/2, H)."""
    family, which = label[0], label[1:]
    idx = "abc".index(which)
    if family == "1":
        return Horizontal((h, H / 2, H - h)[idx])
    if family == "2":
        return Circular((0.5, 0.5), (h, H / 2, H)[idx])
    raise ValueError(f"unknown cut label {label!r}")


CUT_COLUMNS = ["bc", "cut", "r", "H", "h", "L", "k", "error_rel", "cond"]


def run_cut_table(cfg: ExperimentConfig, out=None, dump_matrices=False) -> ExperimentReport:
    """Cut L-shape at fixed H; one row per boundary-condition pair and cut."""
    m = cfg.m[0]
    H, h = 2.0**-m, 2.0**-cfg.n
    enr = cfg.enrichment or "cut"
    items = [(bc, c) for bc in cfg.bc for c in cfg.cuts]

    def one(item):
        bc, c = item
        cut = cut_spec(c, H, h)
        shape = build_shape("CutLShape", h, cut=cut, bc=bc)
        return _solve(cfg, shape, m, enr)

    pts = _sweep(cfg, one, items)
    rows, tables = [], {}
    for (bc, c), p in zip(items, pts):
        _dump(cfg, out, f"cut_{c}_{bc}", p, dump_matrices)
        r = cut_spec(c, H, h).r
        row = [bc, c, r, H, h, p.layers, p.hierarchy.k, p.error, p.cond]
        rows.append(row)
        tables.setdefault(f"cut_table{c[0]}", (CUT_COLUMNS, []))[1].append(row)
    summary = {}
    for bc in cfg.bc:
        errs = [r[7] for r in rows if r[0] == bc]
        conds = [r[8] for r in rows if r[0] == bc]
        summary[f"{bc}_error_spread"] = max(errs) / min(errs)
        summary[f"{bc}_cond_min"] = min(conds)
        summary[f"{bc}_cond_max"] = max(conds)
    return ExperimentReport("cut_table", CUT_COLUMNS, rows, summary, _metadata(cfg, pts, {"enrichment": enr}), tables)


DECAY_COLUMNS = ["node", "x", "y", "L", "error"]


def run_decay(cfg: ExperimentConfig, out=None, dump_matrices=False) -> ExperimentReport:
    """Localization error of single correctors on the L-shape."""
    m = cfg.m[0]
    shape = build_shape("LShape", 2.0**-cfg.n)
    hier = build_hierarchy(shape, m, cfg.n, cfg.k, cfg.enrichment or "box", _halfwidth(cfg, m))
    space = build_space(hier, cfg.free_rule)
    problem = CorrectorProblem(space, build_clement(space))
    rows, summary = [], {}
    for spec in cfg.nodes:
        x, y = (float(t) for t in spec.split(":"))
        node = node_at(hier, x, y)
        rep = measure_decay(problem, node, cfg.L_max)
        rows += [[node, x, y, int(L), e] for L, e in zip(rep.layers, rep.errors)]
        summary[f"node{node}_slope"] = rep.slope
        summary[f"node{node}_strictly_decreasing"] = rep.strictly_decreasing()
    return ExperimentReport("decay", DECAY_COLUMNS, rows, summary, _metadata(cfg))


def node_at(hier: MeshHierarchy, x: float, y: float) -> int:
    x0, y0, _ = hier.box
    i, j = (x - x0) / hier.H, (y - y0) / hier.H
    if abs(i - round(i)) > 1e-9 or abs(j - round(j)) > 1e-9:
        raise ValueError(f"({x}, {y}) is not a coarse node")
    return int(round(i)) + (hier.nc + 1) * int(round(j))


PF_COLUMNS = ["shape", "parameter", "h", "s_max", "r_max", "bound", "rayleigh"]


def run_pf(cfg: ExperimentConfig, out=None, dump_matrices=False) -> ExperimentReport:
    """Path bound and Rayleigh estimate across fractal levels, teeth and necks."""
    rows, summary = [], {}
    h = 2.0**-cfg.n
    ray = []
    for lv in cfg.pf_levels:
        shape = build_shape("Fractal", h, levels=lv)
        mesh = shape_mesh(shape)
        g = mesh.facets_on(shape.gamma)
        est = pf_path_bound(mesh, g)
        c = pf_rayleigh(mesh, g)
        ray.append(c)
        rows.append(["fractal", lv, h, est.s_max, est.r_max, est.bound, c])
    if ray:
        summary["fractal_rayleigh_ratio"] = max(ray) / min(ray)
    smax = []
    for ks in cfg.pf_teeth:
        # the partition lives at the teeth scale
        eta = 2.0**-ks
        shape = build_shape("SawTooth", eta, teeth_exponent=ks, tooth_length=cfg.tooth_length)
        mesh = shape_mesh(shape)
        est = pf_path_bound(mesh, mesh.facets_on(shape.gamma))
        smax.append(est.s_max / 2**ks)
        rows.append(["sawtooth", ks, eta, est.s_max, est.r_max, est.bound, None])
    if smax:
        summary["sawtooth_smax_over_2k_ratio"] = max(smax) / min(smax)
    neck = []
    for w in cfg.pf_necks:
        shape = build_shape("Dumbbell", h, neck_width=w)
        mesh = shape_mesh(shape)
        g = mesh.facets_on(shape.gamma)
        c = pf_rayleigh(mesh, g)
        neck.append(c)
        rows.append(["dumbbell", w, h, None, None, None, c])
    if neck:
        summary["dumbbell_increasing"] = bool(np.all(np.diff(neck) > 0))
    return ExperimentReport("pf", PF_COLUMNS, rows, summary, _metadata(cfg))


RUNNERS = {
    "fractal": run_fractal,
    "corner": run_singularity,
    "slit": run_singularity,
    "sawtooth": run_sawtooth,
    "cut_table": run_cut_table,
    "decay": run_decay,
    "pf": run_pf,
}


def run_experiment(cfg: ExperimentConfig, out=None, dump_matrices: bool = False) -> ExperimentReport:
    report = RUNNERS[cfg.experiment](cfg, out, dump_matrices)
    if out is not None:
        report.write(out)
    return report
