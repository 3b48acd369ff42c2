# convergence.py - Convergence studies on the manufactured problems
"""
Per-level solve, measure and estimate for uniform and adaptive ladders,
with experimental orders of convergence between consecutive levels.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from src.core.config import RunConfig
from src.core.errors import ParameterError
from src.core.logger import get_logger
from src.fem.mesh import refine_marked, refine_uniform, unit_square
from src.fem.spaces import (
    build_space,
    norm_lp,
    prolongate,
    sample_analytic,
    sample_pressure,
    sample_velocity,
)
from src.control.estimators import (
    adaptive_loop,
    conjugate_mu,
    divergence_term,
    estimate_level,
    estimate_state,
    mark_dorfler,
)
from src.control.ocp import QuadControl, bang_bang_from_adjoint, solve_ocp
from src.control.solvers import solve_state
from src.bench.problems import ManufacturedNS, ManufacturedOCP

CSV_COLUMNS = (
    "level", "h", "h_min", "ndof_v", "ndof_p", "err_u_L1", "err_y_L2", "err_z_Linf",
    "eta_st2", "eta_stp", "eta_adj_inf", "div_term", "total_bound", "eoc_u", "eoc_y", "wall_s",
)


@dataclass
class RunRecord:
    """One row of a convergence table"""
    level: int
    h: float
    h_min: float
    ndof_v: int
    ndof_p: int
    err_u_L1: float = math.nan
    err_y_L2: float = math.nan
    err_z_Linf: float = math.nan
    eta_st2: float = math.nan
    eta_stp: float = math.nan
    eta_adj_inf: float = math.nan
    div_term: float = math.nan
    total_bound: float = math.nan
    eoc_u: float = math.nan
    eoc_y: float = math.nan
    wall_s: float = 0.0
    extras: dict = field(default_factory=dict)

    def as_row(self):
        return {name: getattr(self, name) for name in CSV_COLUMNS}


def eoc(e_prev, e, h_prev, h):
    """log(e_prev / e) / log(h_prev / h); NaN when undefined"""
    values = (e_prev, e, h_prev, h)
    if any(not math.isfinite(v) or v <= 0 for v in values) or h_prev == h:
        return math.nan
    return math.log(e_prev / e) / math.log(h_prev / h)


def fill_eocs(records, pairs=(("err_u_L1", "eoc_u"), ("err_y_L2", "eoc_y"))):
    """Set the EOC columns of every record from its predecessor"""
    for prev, rec in zip(records, records[1:]):
        for err, col in pairs:
            setattr(rec, col, eoc(getattr(prev, err), getattr(rec, err), prev.h, rec.h))
    return records


def _extra_eocs(records, key, eoc_key):
    for prev, rec in zip(records, records[1:]):
        rec.extras[eoc_key] = eoc(prev.extras.get(key, math.nan), rec.extras.get(key, math.nan), prev.h, rec.h)


def _base_record(level, space, wall):
    mesh = space.mesh
    return RunRecord(level=level, h=mesh.h, h_min=mesh.h_min, ndof_v=space.ndof_velocity,
                     ndof_p=space.ndof_pressure, wall_s=wall)


def _state_errors(space, state, problem):
    vel_err = sample_velocity(state) - sample_analytic(space, problem.velocity)
    p_err = sample_pressure(state) - sample_analytic(space, problem.pressure)
    return norm_lp(vel_err, 2.0), norm_lp(p_err, 2.0)


def _ns_level(level, space, problem, config, init):
    start = time.perf_counter()
    zero = QuadControl.constant(space, (0.0, 0.0))
    state, report = solve_state(space, zero, extra_f=problem.forcing, nu=problem.nu, init=init,
                                tol=config.solver.newton_tol, max_iter=config.solver.newton_max)
    est = config.estimator
    eta_2 = estimate_state(space, state, zero, est.t_prime, problem.nu, problem.forcing)
    eta_p = estimate_state(space, state, zero, est.p, problem.nu, problem.forcing)
    err_y, err_p = _state_errors(space, state, problem)

    record = _base_record(level, space, 0.0)
    record.err_y_L2 = err_y
    record.eta_st2 = eta_2.aggregate
    record.eta_stp = eta_p.aggregate
    record.div_term = divergence_term(state, conjugate_mu(est.p))
    record.extras.update(err_p_L2=err_p, newton_iterations=report.iterations, fields={"state": state})
    record.wall_s = time.perf_counter() - start
    return record, state, eta_2


def _ocp_errors(space, final, problem):
    exact_u = _exact_control(space, problem)
    err_u = float(np.einsum("tq,tq->", space.quad_weights,
                            np.abs(final.control.values - exact_u).sum(axis=-1)))
    err_y, err_p = _state_errors(space, final.state, problem)
    z_err = sample_velocity(final.adjoint) - sample_analytic(space, problem.adjoint_velocity)
    return err_u, err_y, norm_lp(z_err, math.inf), err_p


def _exact_control(space, problem):
    """Exact control at the quadrature points of `space`"""
    return sample_analytic(space, problem.control).quad


def _ocp_record(level, space, final, history, problem, config, wall, estimates=None):
    est = config.estimator
    if estimates is None:
        estimates = estimate_level(space, final, problem.data(), est.t_prime, est.p, est.gamma)
    eta_2, eta_p, eta_adj, div, bound = estimates
    err_u, err_y, err_z, err_p = _ocp_errors(space, final, problem)

    record = _base_record(level, space, wall)
    record.err_u_L1 = err_u
    record.err_y_L2 = err_y
    record.err_z_Linf = err_z
    record.eta_st2 = eta_2.aggregate
    record.eta_stp = eta_p.aggregate
    record.eta_adj_inf = eta_adj.aggregate
    record.div_term = div
    record.total_bound = bound
    record.extras.update(
        err_p_L2=err_p,
        outer_iterations=final.iteration,
        gap=final.gap,
        cost=final.cost,
        interior_measure=final.control.interior_measure(problem.bounds),
        history=history,
        fields={"state": final.state, "adjoint": final.adjoint},
    )
    return record


def _log_record(record):
    get_logger().system(
        f"Level {record.level}: h={record.h:.4e} ndof_v={record.ndof_v} "
        f"err_u_L1={record.err_u_L1:.4e} err_y_L2={record.err_y_L2:.4e} "
        f"eoc_u={record.eoc_u:.3f} eoc_y={record.eoc_y:.3f} wall={record.wall_s:.2f}s"
    )


def _initial_mesh(config):
    return unit_square(config.mesh.n)


def _run_ns(problem, levels, mode, config):
    records = []
    mesh = _initial_mesh(config)
    init = None
    for level in range(levels):
        space = build_space(mesh)
        if init is not None:
            init = prolongate(init, space)
        record, state, eta = _ns_level(level, space, problem, config, init)
        records.append(record)
        fill_eocs(records)
        _extra_eocs(records, "err_p_L2", "eoc_p")
        _log_record(records[-1])
        if level == levels - 1:
            break
        if mode == "uniform":
            mesh = refine_uniform(mesh)
        else:
            mesh = refine_marked(mesh, mark_dorfler(eta, config.ladder.theta))
        init = state
    return records


def _run_ocp_uniform(problem, levels, config):
    records = []
    data = problem.data(config.solver.newton_tol, config.solver.newton_max, config.ocp.line_search_evals)
    space = build_space(_initial_mesh(config))
    init_control = init_state = None
    for level in range(levels):
        start = time.perf_counter()
        history, final = solve_ocp(space, data, gap_tol=config.ocp.gap_tol, max_outer=config.ocp.max_outer,
                                   init_control=init_control, init_state=init_state)
        records.append(_ocp_record(level, space, final, history, problem, config, 0.0))
        records[-1].wall_s = time.perf_counter() - start
        fill_eocs(records)
        _log_record(records[-1])
        if level == levels - 1:
            break
        space = build_space(refine_uniform(space.mesh))
        init_state = prolongate(final.state, space)
        init_control = bang_bang_from_adjoint(prolongate(final.adjoint, space), data.bounds)
    return records


def _run_ocp_adaptive(problem, levels, config):
    data = problem.data(config.solver.newton_tol, config.solver.newton_max, config.ocp.line_search_evals)
    est = config.estimator
    loop = adaptive_loop(_initial_mesh(config), data, theta=config.ladder.theta, levels=levels,
                         gap_tol=config.ocp.gap_tol, max_outer=config.ocp.max_outer,
                         marking=est.marking, t_prime=est.t_prime, p=est.p, gamma=est.gamma)
    records = []
    for entry in loop:
        estimates = (entry.eta_st2, entry.eta_stp, entry.eta_adj, entry.div_term, entry.total_bound)
        records.append(_ocp_record(entry.level, entry.space, entry.final, entry.history, problem,
                                   config, entry.wall_s, estimates))
        records[-1].extras["marked"] = len(entry.marked)
        fill_eocs(records)
        _log_record(records[-1])
    return records


def run_convergence(problem, levels, mode="uniform", config=None):
    """Convergence ladder on a manufactured problem; one RunRecord per level"""
    config = config if config is not None else RunConfig()
    if levels < 1:
        raise ParameterError(f"levels must be at least 1, got {levels}")
    if mode not in ("uniform", "adaptive"):
        raise ParameterError(f"mode must be 'uniform' or 'adaptive', got '{mode}'")

    logger = get_logger()
    logger.system(f"Convergence run: {type(problem).__name__}, {levels} levels, {mode}")
    if isinstance(problem, ManufacturedNS):
        records = _run_ns(problem, levels, mode, config)
    elif isinstance(problem, ManufacturedOCP):
        if mode == "uniform":
            records = _run_ocp_uniform(problem, levels, config)
        else:
            records = _run_ocp_adaptive(problem, levels, config)
    else:
        raise ParameterError(f"unsupported problem type {type(problem).__name__}")
    return records


def effectivity_constants(records):
    """Per-level err_u_L1 / total_bound"""
    return [r.err_u_L1 / r.total_bound if r.total_bound > 0 else math.nan for r in records]
