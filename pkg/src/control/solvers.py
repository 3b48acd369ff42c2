# solvers.py - Discrete Navier-Stokes state, linearized and adjoint solves
"""
Newton's method for the discrete stationary Navier-Stokes equations

    nu (grad y, grad v) + b(y; y, v) - (p, div v) = (u + f, v)
    (q, div y) = 0,   int p = 0

started from the Stokes solution and globalized by residual-monotone step
halving, plus the single saddle-point solves with the Newton Jacobian
(linearized state) and with its transpose (adjoint state).
"""

import time
from dataclasses import dataclass, field

import numpy as np

from src.core.errors import NewtonDiverged, ParameterError
from src.core.logger import get_logger
from src.fem.assembly import (
    assemble_adjoint_operator,
    assemble_convection,
    assemble_load,
    assemble_newton_jacobian,
    assemble_stokes,
    embed_velocity,
    saddle_matrix,
)
from src.fem.sparse import factorize, solve_direct
from src.fem.spaces import THFunction

MAX_HALVINGS = 8


@dataclass
class NewtonReport:
    """Iteration record of one state solve; iteration 1 is the Stokes solve"""
    iterations: int = 0
    residuals: list = field(default_factory=list)
    converged: bool = False
    damping: list = field(default_factory=list)
    tolerance: float = 0.0
    wall_s: float = 0.0


def _blocks_for(space, nu, blocks):
    if blocks is None:
        return assemble_stokes(space, nu)
    if blocks.space is not space:
        raise ParameterError("system blocks belong to a different space")
    return blocks


def state_rhs(space, u, extra_f=None):
    """Full right-hand side for control u plus optional extra forcing"""
    load = assemble_load(space, u)
    if extra_f is not None:
        load = load + assemble_load(space, extra_f)
    return embed_velocity(space, load)


def state_residual(blocks, stokes, coefficients, rhs):
    """Algebraic residual of the pinned nonlinear system"""
    space = blocks.space
    y = THFunction(space, coefficients)
    convection = assemble_convection(space, y) @ coefficients[:space.ndof_velocity]
    return stokes @ coefficients + embed_velocity(space, convection) - rhs


def solve_state(space, u, extra_f=None, nu=1.0, init=None, tol=1e-10, max_iter=30, blocks=None):
    """Solve the discrete state equation for control u; returns (THFunction, NewtonReport)"""
    logger = get_logger()
    if not tol > 0:
        raise ParameterError(f"Newton tolerance must be positive, got {tol}")
    if max_iter < 1:
        raise ParameterError(f"max_iter must be at least 1, got {max_iter}")

    start = time.perf_counter()
    blocks = _blocks_for(space, nu, blocks)
    stokes = saddle_matrix(blocks)
    rhs = state_rhs(space, u, extra_f)
    threshold = tol * max(np.linalg.norm(rhs), 1.0)
    report = NewtonReport(tolerance=threshold)

    if init is None:
        x = solve_direct(stokes, rhs)
        report.iterations = 1
    else:
        x = init.coefficients.copy()
        x[space.dirichlet_mask] = 0.0

    residual = state_residual(blocks, stokes, x, rhs)
    norm = float(np.linalg.norm(residual))
    report.residuals.append(norm)
    logger.debug(f"Newton start: residual {norm:.3e} (threshold {threshold:.3e})")

    while True:
        if not np.isfinite(norm):
            report.wall_s = time.perf_counter() - start
            raise NewtonDiverged(f"non-finite Newton residual after {report.iterations} iterations", report)
        if norm <= threshold:
            report.converged = True
            break
        if report.iterations >= max_iter:
            report.wall_s = time.perf_counter() - start
            raise NewtonDiverged(
                f"Newton did not converge in {max_iter} iterations (residual {norm:.3e})", report)

        y = THFunction(space, x)
        jacobian = saddle_matrix(blocks, assemble_newton_jacobian(space, y))
        step = solve_direct(jacobian, -residual)
        report.iterations += 1

        # Residual-monotone damping
        damping = 1.0
        for _ in range(MAX_HALVINGS + 1):
            trial = x + damping * step
            trial_residual = state_residual(blocks, stokes, trial, rhs)
            trial_norm = float(np.linalg.norm(trial_residual))
            if np.isfinite(trial_norm) and trial_norm < norm:
                break
            damping *= 0.5
        else:
            report.wall_s = time.perf_counter() - start
            raise NewtonDiverged(
                f"damping floor reached at iteration {report.iterations} (residual {norm:.3e})", report)

        if damping < 1.0:
            logger.debug(f"Newton iteration {report.iterations}: damped step {damping:g}")
        x, residual, norm = trial, trial_residual, trial_norm
        report.damping.append(damping)
        report.residuals.append(norm)
        logger.debug(f"Newton iteration {report.iterations}: residual {norm:.3e}")

    report.wall_s = time.perf_counter() - start
    logger.info(f"Newton converged in {report.iterations} iterations, residual {norm:.3e}")
    return THFunction(space, x), report


def solve_linearized(space, y, g, nu=1.0, blocks=None):
    """phi = S'(u) g: one saddle solve with the Newton Jacobian at y"""
    blocks = _blocks_for(space, nu, blocks)
    jacobian = saddle_matrix(blocks, assemble_newton_jacobian(space, y))
    rhs = embed_velocity(space, assemble_load(space, g))
    return THFunction(space, solve_direct(jacobian, rhs))


def solve_adjoint(space, transport_y, rhs_field, nu=1.0, blocks=None):
    """Adjoint pair (z, r) for transport field y and right-hand side rhs_field (e.g. y - y_Omega)"""
    blocks = _blocks_for(space, nu, blocks)
    operator = saddle_matrix(blocks, assemble_adjoint_operator(space, transport_y))
    rhs = embed_velocity(space, assemble_load(space, rhs_field))
    return THFunction(space, factorize(operator).solve(rhs))
