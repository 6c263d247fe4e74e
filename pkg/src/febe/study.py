"""Convergence studies: solve on a mesh sequence and tabulate the results."""
from dataclasses import dataclass, field, asdict
import csv
import logging
import math
from pathlib import Path
import time

import numpy as np

from . import fem
from .estimator import compute_indicators, dump_indicators, localize_for_marking
from .mesh import dump_mesh, mark_fraction, refine_adaptive
from .problems import check_compatibility
from .solver import CoupledSystem, SolverConfig, SolverError, uzawa_solve

log = logging.getLogger(__name__)

CSV_COLUMNS = ["dof", "err_w1p", "rate_w1p", "err_q", "rate_q", "eta", "eff_u", "eff_q",
               "J_h", "dJ", "uzawa_its", "newton_its", "time_s"]


@dataclass
class StudyRow:
    dof: int
    err_w1p: float = math.nan
    rate_w1p: float = math.nan
    err_q: float = math.nan
    rate_q: float = math.nan
    eta: float = math.nan
    eff_u: float = math.nan
    eff_q: float = math.nan
    J_h: float = math.nan
    dJ: float = math.nan
    uzawa_its: int = 0
    newton_its: int = 0
    time_s: float = math.nan
    # not written to the CSV
    extra: dict = field(default_factory=dict, repr=False)


@dataclass
class StudyConfig:
    levels: int = 4
    mode: str = "uniform"
    mark_fraction: float = 0.1
    solver: SolverConfig = field(default_factory=SolverConfig)
    dump_meshes: str = None
    dump_indicators: bool = False
    estimate: bool = True


class StudyError(RuntimeError):
    """A study aborted at some level; ``rows`` holds the completed levels."""

    def __init__(self, message, rows):
        super().__init__(message)
        self.rows = rows


def convergence_rate(e_prev, e, n_prev, n):
    """``ln(e / e_prev) / ln(n / n_prev)``."""
    if not (e_prev > 0 and e > 0) or n == n_prev:
        return math.nan
    return math.log(e / e_prev) / math.log(n / n_prev)


def solve_level(spec, mesh, config=None):
    """Solve on one mesh and evaluate errors and the estimator.

    Returns ``(row, system, solution, indicators)`` where ``solution`` is
    ``(u, v, FrictionState, phi, SolveReport)``.
    """
    cfg = config or StudyConfig()
    t0 = time.perf_counter()
    system = CoupledSystem(spec, mesh)
    sol = uzawa_solve(system, cfg.solver)
    u, v, state, phi, report = sol
    row = StudyRow(dof=system.dof, J_h=report.energy, uzawa_its=report.uzawa_iterations,
                   newton_its=max(report.newton_iterations))
    row.extra["newton_per_uzawa"] = list(report.newton_iterations)
    row.extra["fallback_used"] = report.fallback_used
    if spec.exact_grad is not None:
        _, row.err_w1p = fem.w1p_error(mesh, u, spec.exact_u, spec.exact_grad, spec.law.p,
                                       spec.singular_point)
        row.err_q = fem.quasi_norm_error(spec.law, mesh, u, spec.exact_grad, spec.singular_point)
    ind = None
    if cfg.estimate or cfg.mode == "adaptive":
        ind = compute_indicators(system, u, v, phi)
        row.eta = ind.eta
        row.eff_u = row.err_w1p / row.eta
        row.eff_q = row.err_q / row.eta
        row.extra.update(ind.parts())
    row.time_s = time.perf_counter() - t0
    return row, system, sol, ind


def run_study(spec, mode="uniform", levels=4, config=None, callback=None):
    """Solve on ``levels`` meshes, refining uniformly or adaptively.

    Level 0 is the coarse L-shape mesh.  In adaptive mode the
    ``mark_fraction`` share of triangles with the largest localised
    indicators is refined.  ``callback(level, row, mesh)`` is called after
    each level.  Raises :class:`StudyError` carrying the completed rows if a
    solve fails.
    """
    cfg = config or StudyConfig(levels=levels, mode=mode)
    cfg.mode = mode
    if mode not in ("uniform", "adaptive"):
        raise ValueError(f"unknown mode {mode!r}")
    check_compatibility(spec)
    rows = []
    mesh = spec.initial_mesh(0)
    for level in range(levels):
        if cfg.dump_meshes:
            Path(cfg.dump_meshes).mkdir(parents=True, exist_ok=True)
            dump_mesh(mesh, Path(cfg.dump_meshes) / f"mesh_{level:02d}.txt")
        try:
            row, system, sol, ind = solve_level(spec, mesh, cfg)
        except SolverError as exc:
            raise StudyError(f"level {level}: {exc}", rows) from exc
        if rows:
            prev = rows[-1]
            row.rate_w1p = convergence_rate(prev.err_w1p, row.err_w1p, prev.dof, row.dof)
            row.rate_q = convergence_rate(prev.err_q, row.err_q, prev.dof, row.dof)
        rows.append(row)
        log.info("level %d: dof %d, err %.4g, eta %.4g, J %.6f, newton %s", level, row.dof,
                 row.err_w1p, row.eta, row.J_h, row.extra.get("newton_per_uzawa"))
        if cfg.dump_meshes and ind is not None and cfg.dump_indicators:
            dump_indicators(ind, mesh, Path(cfg.dump_meshes) / f"indicators_{level:02d}.csv")
        if callback is not None:
            callback(level, row, mesh)
        if level + 1 < levels:
            if mode == "uniform":
                mesh = mesh.refine_uniform()
            else:
                marks = mark_fraction(localize_for_marking(ind, mesh), cfg.mark_fraction)
                mesh = refine_adaptive(mesh, marks)
    fill_energy_errors(rows)
    return rows


def extrapolate_energy(values, dofs):
    """Limit of ``J = J_inf + C N^alpha`` fitted exactly to the last three points.

    Falls back to Aitken's delta-squared on the last three values when the
    triple is not strictly monotone or the fit is degenerate.
    """
    J = np.asarray(values, dtype=float)[-3:]
    N = np.asarray(dofs, dtype=float)[-3:]
    if len(J) < 3:
        raise ValueError("need at least three values")
    d1, d2 = J[1] - J[0], J[2] - J[1]
    if d1 == 0 and d2 == 0:
        return float(J[-1])
    monotone = d1 * d2 > 0
    if monotone:
        from scipy.optimize import brentq

        # d2/d1 = (N2^a - N1^a) / (N1^a - N0^a) determines alpha
        ratio = d2 / d1

        def h(a):
            return (N[2] ** a - N[1] ** a) - ratio * (N[1] ** a - N[0] ** a)

        lo, hi = -10.0, -1e-8
        if h(lo) * h(hi) < 0:
            a = brentq(h, lo, hi, xtol=1e-15, rtol=1e-15)
            C = d1 / (N[1] ** a - N[0] ** a)
            return float(J[2] - C * N[2] ** a)
    denom = d2 - d1
    if denom == 0:
        return float(J[-1])
    return float(J[2] - d2 * d2 / denom)


def fill_energy_errors(rows):
    """Set ``dJ = J_h - J_inf`` once three energies are available."""
    vals = [r.J_h for r in rows if np.isfinite(r.J_h)]
    if len(vals) < 3:
        return None
    j_inf = extrapolate_energy([r.J_h for r in rows], [r.dof for r in rows])
    for r in rows:
        r.dJ = r.J_h - j_inf
    return j_inf


def _fmt(v):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{v:.7g}"


def emit_csv(rows, path):
    """Write ``rows`` with the fixed column set, 7 significant digits."""
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(CSV_COLUMNS)
            for r in rows:
                d = asdict(r)
                wr.writerow([_fmt(d[c]) for c in CSV_COLUMNS])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_csv(path):
    """Parse a file written by :func:`emit_csv` into dicts (floats, NaN for empty)."""
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            out.append({k: (float(v) if v != "" else math.nan) for k, v in rec.items()})
    return out
