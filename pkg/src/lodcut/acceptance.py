"""Executable acceptance criteria.

Each criterion is a function returning a :class:`CriterionResult`; the CLI
(``lodcut check``) and ``tests/test_acceptance.py`` both run them from
:data:`CRITERIA`.  Expensive sweeps shared by several criteria are cached
for the lifetime of the process.
"""
from __future__ import annotations

import functools
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .analysis import TriMesh, measure_decay, pf_path_bound
from .assembly import assemble_load, assemble_stiffness, energy_norm
from .clement import build_clement
from .config import parse_config
from .corrector import CorrectorProblem, build_basis
from .experiments import node_at, run_experiment
from .geometry import build_shape
from .mesh import build_hierarchy, grid_cells, grid_nodes
from .solver import solve_lod
from .space import build_space

@dataclass
class CriterionResult:
    number: str
    name: str
    passed: bool | None  # None: skipped
    measured: dict = field(default_factory=dict)
    detail: str = ""

    @property
    def status(self) -> str:
        return {True: "PASS", False: "FAIL", None: "SKIP"}[self.passed]

    def line(self) -> str:
        vals = ", ".join(f"{k}={_short(v)}" for k, v in self.measured.items())
        text = f"[{self.status}] criterion {self.number} ({self.name}): {vals}"
        return text + (f" -- {self.detail}" if self.detail else "")


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(str(_short(x)) for x in v) + "]"
    return str(v)


@functools.lru_cache(maxsize=None)
def lshape_problem(m: int = 3, n: int = 5, k: int = 2):
    """L-shape with correctors near the re-entrant corner (no cut cells)."""
    hier = build_hierarchy(build_shape("LShape", 2.0**-n), m, n, k, "box")
    space = build_space(hier)
    clem = build_clement(space)
    return hier, space, clem, CorrectorProblem(space, clem)


def check_constraint() -> CriterionResult:
    t0 = time.perf_counter()
    _, space, clem, problem = lshape_problem()
    worst = 0.0
    for i in range(len(space.free_nodes)):
        res = problem.solve(i, 3)
        q = problem.correction_mixed(res)
        ratio = np.abs(clem.Lambda.T @ q).max() / max(np.abs(q).max(), 1e-300)
        worst = max(worst, float(ratio))
    secs = time.perf_counter() - t0
    ok = worst <= 1e-10 and secs < 30
    return CriterionResult("1", "constraint exactness", ok,
                           {"max_ratio": worst, "columns": len(space.free_nodes), "seconds": secs})


def check_orthogonality(samples: int = 200, seed: int = 0) -> CriterionResult:
    _, space, clem, problem = lshape_problem()
    basis = build_basis(problem, None)
    K = space.K
    C = clem.C.toarray()
    W = sla.null_space(C.T)  # DOF coordinates spanning the fine space
    rng = np.random.default_rng(seed)
    cols = rng.choice(W.shape[1], size=min(samples // 2, W.shape[1]), replace=False)
    gens = [W[:, j] for j in cols] + [W @ rng.standard_normal(W.shape[1]) for _ in range(samples - len(cols))]
    Phi = basis.Phi.toarray()
    KPhi = K @ Phi
    norms = np.sqrt(np.einsum("ij,ij->j", Phi, KPhi))
    worst = 0.0
    for w in gens:
        nw = energy_norm(w, K)
        worst = max(worst, float(np.max(np.abs(KPhi.T @ w) / (norms * nw))))
    return CriterionResult("2", "orthogonality", worst <= 1e-8,
                           {"max_scaled_a": worst, "generators": len(gens), "fine_dim": W.shape[1]})


def check_resolved(m: int = 4) -> CriterionResult:
    shape = build_shape("UnitSquare", 2.0**-m)
    hier = build_hierarchy(shape, m, m, 2, "cut")
    space = build_space(hier)
    problem = CorrectorProblem(space, build_clement(space))
    lod = solve_lod(space, build_basis(problem, 2))
    # independent standard coarse FEM on the same grid
    nc = 2**m
    nodes, cells = grid_nodes(0, 0, 1, nc), grid_cells(nc)
    K = assemble_stiffness(nodes, cells)
    b = assemble_load(nodes, cells, 1.0)
    interior = np.flatnonzero((nodes > 1e-12).all(axis=1) & (nodes < 1 - 1e-12).all(axis=1))
    u = np.zeros(len(nodes))
    u[interior] = spla.spsolve(K[interior][:, interior].tocsc(), b[interior])
    lod_nodal = np.zeros(len(nodes))
    lod_nodal[_lattice_to_coarse(hier, space.node_lattice)] = space.to_mixed(lod.fine)
    diff = energy_norm(lod_nodal - u, K)
    rel = diff / energy_norm(u, K)
    return CriterionResult("3", "resolved-domain degeneracy", rel <= 1e-12,
                           {"energy_diff_rel": rel, "energy_diff": diff, "zone_cells": int(hier.zone.sum())})


def _lattice_to_coarse(hier, lattice):
    J, I = np.divmod(np.asarray(lattice), hier.nf + 1)
    r = hier.ratio
    return I // r + (hier.nc + 1) * (J // r)


@functools.lru_cache(maxsize=None)
def _report(text: str):
    t0 = time.perf_counter()
    rep = run_experiment(parse_config(text))
    return rep, time.perf_counter() - t0


FRACTAL_CONFIG = "experiment = fractal\nm = 1 2 3 4 5\nn = 7\nk = 2\nlevels = 3\nkappa = 10\n"


def check_fractal_convergence() -> CriterionResult:
    rep, secs = _report(FRACTAL_CONFIG)
    slope = rep.summary["error_slope"]
    errs = rep.col("error_rel")
    return CriterionResult("4", "fractal convergence", slope >= 0.9 and secs < 600,
                           {"slope": slope, "errors": errs, "seconds": secs})


def check_condition_scaling() -> CriterionResult:
    rep, _ = _report(FRACTAL_CONFIG)
    slope = rep.summary["cond_slope"]
    conds = rep.col("cond")
    H = rep.col("H")
    tail = float(-np.polyfit(np.log2(H[-3:]), np.log2(conds[-3:]), 1)[0])
    return CriterionResult("5", "condition scaling", 1.6 <= slope <= 2.4,
                           {"slope": slope, "conds": conds, "slope_last3": tail})


CUT_CONFIG = "experiment = cut_table\nm = 3\nn = {n}\nk = 2\n"


def check_cut_tables() -> CriterionResult:
    rep, _ = _report(CUT_CONFIG.format(n=6))
    tab = {key: v for key, v in zip(zip(rep.col("bc"), rep.col("cut")), zip(rep.col("error_rel"), rep.col("cond")))}
    spreads = {}
    for bc in ("DD", "DN", "ND"):
        for fam in "12":
            errs = [tab[(bc, f"{fam}{c}")][0] for c in "abc"]
            spreads[f"{bc}{fam}"] = max(errs) / min(errs)
    ok_i = all(v < 2 for v in spreads.values())
    cond = {key: v[1] for key, v in tab.items()}
    in_band = all(3 <= cond[(bc, f"{f}{c}")] <= 50 for bc in ("DD", "ND") for f in "12" for c in "abc")
    # D/N versus the other rows, column by column, on the cut-1 table whose
    # pattern the criterion quotes
    ratios = [cond[("DN", f"1{c}")] / max(cond[("DD", f"1{c}")], cond[("ND", f"1{c}")]) for c in "abc"]
    ok_ii = in_band and min(ratios) >= 5
    measured = {"error_spreads": {k: round(v, 3) for k, v in spreads.items()},
                "cond_DD_ND_in_[3,50]": in_band, "DN_over_others_cut1": ratios}
    parts = [f"(i) {'pass' if ok_i else 'fail'}", f"(ii) {'pass' if ok_ii else 'fail'}"]
    ok = ok_i and ok_ii
    # (iii) only needs the D/D cut-1 row, cheap enough to run at h = 2^-8
    full, _ = _report(CUT_CONFIG.format(n=8) + "bc = DD\ncuts = 1a 1b 1c\n")
    errs = full.col("error_rel")
    ok_iii = all(abs(e - t) <= 0.02 for e, t in zip(errs, (0.059, 0.057, 0.056)))
    measured["DD_cut1_errors_h2^-8"] = errs
    parts.append(f"(iii) {'pass' if ok_iii else 'fail'}")
    ok = ok and ok_iii
    return CriterionResult("6", "cut tables", ok, measured, "; ".join(parts))


def check_decay() -> CriterionResult:
    hier, _, _, problem = lshape_problem()
    rep = measure_decay(problem, node_at(hier, 0.5, 0.625), 5)
    ok = rep.strictly_decreasing() and rep.slope < -0.3
    return CriterionResult("7", "corrector decay", ok,
                           {"errors": rep.errors.tolist(), "slope_per_layer": rep.slope})


def check_singularity() -> CriterionResult:
    corner, _ = _report("experiment = corner\nbaseline = false\n")
    slit, _ = _report("experiment = slit\n")
    c, s, b = corner.summary["error_slope"], slit.summary["error_slope"], slit.summary["baseline_error_slope"]
    return CriterionResult("8", "singularity experiments", c >= 0.9 and s >= 0.9 and b <= 0.7,
                           {"corner_slope": c, "slit_slope": s, "slit_baseline_slope": b})


def check_clement(trials: int = 100, seed: int = 1) -> CriterionResult:
    _, space, clem, _ = lshape_problem()
    rng = np.random.default_rng(seed)
    proj, repro = 0.0, 0.0
    for _ in range(trials):
        v = space.to_mixed(rng.standard_normal(space.ndof))
        c1 = clem.apply(v)
        c2 = clem.apply(clem.lift(c1))
        proj = max(proj, float(np.abs(c2 - c1).max()))
        vh = np.zeros(len(c1))
        vh[space.free_nodes] = rng.standard_normal(len(space.free_nodes))
        repro = max(repro, float(np.abs(clem.apply(clem.lift(vh)) - vh).max()))
    return CriterionResult("9", "Clement properties", proj <= 1e-12 and repro <= 1e-12,
                           {"projectivity": proj, "reproduction": repro, "trials": trials})


def check_pf() -> CriterionResult:
    tri = TriMesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))
    est = pf_path_bound(tri, np.array([[0, 1]]))
    single_ok = est.s_max == 1 and est.r_max == 1 and est.bound <= 1 + 1e-12
    rep, _ = _report("experiment = pf\nn = 6\npf_teeth = 3\n")
    frac = [c for s, c in zip(rep.col("shape"), rep.col("rayleigh")) if s == "fractal"]
    neck = [c for s, c in zip(rep.col("shape"), rep.col("rayleigh")) if s == "dumbbell"]
    frac_ok = max(frac) / min(frac) < 2
    neck_ok = len(neck) == 3 and bool(np.all(np.diff(neck) > 0))
    return CriterionResult("10", "Poincare-Friedrichs module", single_ok and frac_ok and neck_ok,
                           {"simplex_bound": est.bound, "fractal_C": frac, "dumbbell_C": neck})


CRITERIA = {
    "1": ("constraint", check_constraint),
    "2": ("orthogonality", check_orthogonality),
    "3": ("resolved", check_resolved),
    "4": ("fractal-convergence", check_fractal_convergence),
    "5": ("condition-scaling", check_condition_scaling),
    "6": ("cut-tables", check_cut_tables),
    "7": ("decay", check_decay),
    "8": ("singularity", check_singularity),
    "9": ("clement", check_clement),
    "10": ("pf", check_pf),
}


def resolve(name: str) -> list[str]:
    """Criterion numbers for a CLI name: a number, a slug or ``all``."""
    if name == "all":
        return list(CRITERIA)
    if name in CRITERIA:
        return [name]
    for num, (slug, _) in CRITERIA.items():
        if name == slug:
            return [num]
    raise KeyError(name)


def run_criterion(number: str) -> CriterionResult:
    slug, fn = CRITERIA[number]
    try:
        return fn()
    except Exception as err:  # report, do not hide, crashes as failures
        return CriterionResult(number, slug, False, {}, f"error: {type(err).__name__}: {err}")
