# ocp.py - Bang-bang optimal control of the discrete Navier-Stokes state
"""
Variational discretization of

    min J(u) = 1/2 ||y_u - y_Omega||^2   subject to  a <= u <= b,

where the control is never discretized: it lives at the volume quadrature
points, the only places where it meets discrete test functions. The
conditional-gradient loop uses the bang-bang map of the adjoint as its
vertex oracle, so the stopping gap is exactly the residual of the
variational inequality (z, v - u) >= 0.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from src.core.errors import MaxOuterIterations, ParameterError
from src.core.logger import get_logger
from src.fem.assembly import assemble_stokes, quadrature_values, trilinear_value
from src.fem.spaces import SampledField, THFunction, sample_velocity
from src.control.solvers import solve_adjoint, solve_linearized, solve_state

BOUND_SLACK = 1e-12
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class ControlBounds:
    """Componentwise box [a_i, b_i]"""
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if a.shape != (2,) or b.shape != (2,):
            raise ParameterError("control bounds need two components")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ParameterError("control bounds must be finite")
        if np.any(a > b):
            raise ParameterError(f"control bounds must satisfy a <= b, got a={a}, b={b}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def midpoint(self):
        return 0.5 * (self.a + self.b)

    @property
    def width(self):
        return self.b - self.a

    @property
    def degenerate(self):
        return bool(np.all(self.a == self.b))


@dataclass(eq=False)
class QuadControl:
    """Control values (T, Q, 2) at every volume quadrature point"""
    space: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.space.n_elements, self.space.n_quad, 2)
        if self.values.shape != expected:
            raise ParameterError(f"control has shape {self.values.shape}, expected {expected}")

    @classmethod
    def constant(cls, space, value):
        value = np.asarray(value, dtype=float).reshape(2)
        return cls(space, np.broadcast_to(value, (space.n_elements, space.n_quad, 2)).copy())

    @classmethod
    def from_function(cls, space, func):
        """Sample an analytic control (callable on (P, 2) points)"""
        return cls(space, quadrature_values(space, func))

    def within(self, bounds, slack=BOUND_SLACK):
        return bool(np.all(self.values >= bounds.a - slack) and np.all(self.values <= bounds.b + slack))

    def interior_measure(self, bounds, tol=1e-10):
        """Quadrature measure of points where some component is strictly inside its interval"""
        inside = (self.values > bounds.a + tol) & (self.values < bounds.b - tol)
        return float(np.sum(self.space.quad_weights * inside.any(axis=-1)))

    def __add__(self, other):
        return QuadControl(self.space, self.values + other.values)

    def __sub__(self, other):
        return QuadControl(self.space, self.values - other.values)

    def __mul__(self, scalar):
        return QuadControl(self.space, float(scalar) * self.values)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class OcpData:
    """Problem data of one optimal control run"""
    nu: float
    bounds: ControlBounds
    y_omega: object                      # callable, SampledField or (T, Q, 2) array
    extra_f: object = None               # optional forcing added to the control
    newton_tol: float = 1e-10
    newton_max: int = 30
    line_search_evals: int = 20

    def __post_init__(self):
        if not self.nu > 0:
            raise ParameterError(f"viscosity must be positive, got {self.nu}")
        if self.line_search_evals < 2:
            raise ParameterError("line search needs at least two evaluations")


@dataclass(frozen=True, eq=False)
class OcpIterate:
    """Snapshot of one conditional-gradient iteration"""
    iteration: int
    control: QuadControl
    state: THFunction
    adjoint: THFunction
    cost: float
    gap: float
    step: float
    newton_iterations: int = 0


@dataclass
class CostEvaluation:
    cost: float
    state: THFunction
    adjoint: THFunction = None
    report: object = None


@dataclass
class _Context:
    """Per-space quantities shared by the evaluations of one run"""
    space: object
    data: OcpData
    blocks: object
    target: np.ndarray
    evaluations: int = 0
    newton_iterations: list = field(default_factory=list)


def _adjoint_samples(z):
    if isinstance(z, THFunction):
        return sample_velocity(z).quad
    if isinstance(z, SampledField):
        return z.quad
    return np.asarray(z, dtype=float)


def bang_bang_from_adjoint(z, bounds):
    """a_i where z_i > 0, b_i where z_i < 0, the midpoint where z_i = 0"""
    if not isinstance(z, THFunction):
        raise ParameterError("bang_bang_from_adjoint needs a THFunction adjoint")
    values = _adjoint_samples(z)
    if not np.all(np.isfinite(values)):
        raise ParameterError("adjoint is not finite")
    control = np.where(values > 0.0, bounds.a, np.where(values < 0.0, bounds.b, bounds.midpoint))
    return QuadControl(z.space, control)


def first_variation(z, g):
    """(z, g) in L^2 evaluated with the volume rule"""
    values = _adjoint_samples(z)
    if values.shape != g.values.shape:
        raise ParameterError("adjoint and direction layouts differ")
    return float(np.einsum("tq,tqc,tqc->", g.space.quad_weights, values, g.values))


def vi_gap(z, u, bounds):
    """(z, u - v*) with v* the bang-bang minimizer of v -> (z, v)"""
    return first_variation(z, u - bang_bang_from_adjoint(z, bounds))


def _context(space, data, blocks=None):
    if blocks is None:
        blocks = assemble_stokes(space, data.nu)
    return _Context(space=space, data=data, blocks=blocks, target=quadrature_values(space, data.y_omega))


def _evaluate(ctx, u, init=None, adjoint=True):
    data = ctx.data
    state, report = solve_state(ctx.space, u, extra_f=data.extra_f, nu=data.nu, init=init,
                                tol=data.newton_tol, max_iter=data.newton_max, blocks=ctx.blocks)
    ctx.evaluations += 1
    ctx.newton_iterations.append(report.iterations)

    misfit = sample_velocity(state).quad - ctx.target
    value = 0.5 * float(np.einsum("tq,tqc,tqc->", ctx.space.quad_weights, misfit, misfit))
    evaluation = CostEvaluation(cost=value, state=state, report=report)
    return _with_adjoint(ctx, evaluation) if adjoint else evaluation


def _with_adjoint(ctx, evaluation):
    """Attach the adjoint of an evaluated state; the state is not solved again"""
    if evaluation.adjoint is None:
        misfit = sample_velocity(evaluation.state).quad - ctx.target
        evaluation.adjoint = solve_adjoint(ctx.space, evaluation.state, misfit, nu=ctx.data.nu, blocks=ctx.blocks)
    return evaluation


def cost(space, u, data, init=None, blocks=None):
    """(J_h(u), state, adjoint) with J_h = 1/2 ||y_h - y_Omega||^2"""
    evaluation = _evaluate(_context(space, data, blocks), u, init=init)
    return evaluation.cost, evaluation.state, evaluation.adjoint


def second_variation(space, u, g, data, blocks=None):
    """J''(u)[g, g] = ||phi_g||^2 - 2 b(phi_g; phi_g, z_u)"""
    ctx = _context(space, data, blocks)
    if not np.any(g.values):
        return 0.0
    evaluation = _evaluate(ctx, u)
    phi = solve_linearized(space, evaluation.state, g, nu=data.nu, blocks=ctx.blocks)
    phi_values = sample_velocity(phi).quad
    norm2 = float(np.einsum("tq,tqc,tqc->", space.quad_weights, phi_values, phi_values))
    return norm2 - 2.0 * trilinear_value(space, phi, phi, evaluation.adjoint)


def _gap(evaluation, u, bounds):
    if bounds.degenerate:
        return 0.0
    return max(first_variation(evaluation.adjoint, u - bang_bang_from_adjoint(evaluation.adjoint, bounds)), 0.0)


def _line_search(ctx, u, direction, current, budget, gap_tol):
    """Golden-section search for alpha in [0, 1]; alpha = 1 is always tried, alpha = 0 is the fallback.

    A full step that descends and already meets the gap tolerance is taken
    without searching further.
    """
    evaluated = {}

    def trial(alpha):
        if alpha not in evaluated:
            evaluated[alpha] = _evaluate(ctx, u + alpha * direction, init=current.state, adjoint=False)
        return evaluated[alpha].cost

    full = u + direction
    if trial(1.0) < current.cost:
        step = _with_adjoint(ctx, evaluated[1.0])
        if _gap(step, full, ctx.data.bounds) <= gap_tol * (1.0 + abs(step.cost)):
            return 1.0, step

    lo, hi = 0.0, 1.0
    c = hi - GOLDEN * (hi - lo)
    d = lo + GOLDEN * (hi - lo)
    fc, fd = trial(c), trial(d)
    while len(evaluated) < budget:
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - GOLDEN * (hi - lo)
            fc = trial(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + GOLDEN * (hi - lo)
            fd = trial(d)

    alpha = min(evaluated, key=lambda a: evaluated[a].cost)
    if evaluated[alpha].cost >= current.cost:
        return 0.0, current
    return alpha, evaluated[alpha]


def solve_ocp(space, data, gap_tol=1e-8, max_outer=50, init_control=None, init_state=None, blocks=None):
    """Conditional-gradient loop; returns (history, final iterate).

    Stops when vi_gap <= gap_tol * (1 + |J_h|). Raises MaxOuterIterations
    (with the history attached) when max_outer iterations do not suffice.
    """
    logger = get_logger()
    if not gap_tol > 0 or max_outer < 1:
        raise ParameterError("gap_tol must be positive and max_outer at least 1")

    ctx = _context(space, data, blocks)
    bounds = data.bounds
    if bounds.degenerate:
        u = QuadControl.constant(space, bounds.a)
    elif init_control is not None:
        u = QuadControl(space, np.clip(init_control.values, bounds.a, bounds.b))
    else:
        u = QuadControl.constant(space, bounds.midpoint)

    current = _evaluate(ctx, u, init=init_state)
    history = []
    step = 0.0

    for k in range(max_outer + 1):
        vertex = bang_bang_from_adjoint(current.adjoint, bounds)
        gap = _gap(current, u, bounds)
        iterate = OcpIterate(
            iteration=k,
            control=u,
            state=current.state,
            adjoint=current.adjoint,
            cost=current.cost,
            gap=gap,
            step=step,
            newton_iterations=current.report.iterations,
        )
        history.append(iterate)
        logger.info(f"Conditional gradient {k}: J={current.cost:.10e} gap={gap:.3e} step={step:.4f}")

        if gap <= gap_tol * (1.0 + abs(current.cost)):
            logger.info(f"Optimal control found after {k} iterations ({ctx.evaluations} state solves)")
            return history, iterate
        if k == max_outer:
            break

        alpha, trial = _line_search(ctx, u, vertex - u, current, data.line_search_evals, gap_tol)
        if alpha == 0.0:
            logger.warning(f"Line search found no descent at iteration {k} (gap {gap:.3e})")
            raise MaxOuterIterations(f"conditional gradient stalled at gap {gap:.3e}", history, iterate)

        u = u + alpha * (vertex - u)
        current = _with_adjoint(ctx, trial)
        step = alpha

    raise MaxOuterIterations(
        f"conditional gradient did not reach gap tolerance in {max_outer} iterations", history, history[-1])


@dataclass(frozen=True)
class GrowthFit:
    """Diagnostics of a growth-exponent fit"""
    eps: tuple
    measures: tuple
    slope: float
    intercept: float
    residual: float
    flags: tuple


def growth_exponent(z, eps_grid, component=0, region=None, space=None):
    """Least-squares slope of log |{|z_i| <= eps}| against log eps.

    z is a THFunction, a SampledField or an array of quadrature values (then
    `space` supplies the weights). `region` restricts the measure to an
    element mask. Returns (gamma_hat, GrowthFit).
    """
    if isinstance(z, (THFunction, SampledField)):
        space = z.space
    if space is None:
        raise ParameterError("growth_exponent needs a space for raw quadrature values")
    values = _adjoint_samples(z)
    if values.ndim == 3:
        values = values[..., component]
    eps = np.asarray(eps_grid, dtype=float).ravel()
    if eps.size < 2 or np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise ParameterError("eps grid must hold at least two decreasing positive values")

    weights = space.quad_weights
    if region is not None:
        mask = np.asarray(region)
        if mask.dtype != bool:
            full = np.zeros(space.n_elements, dtype=bool)
            full[mask] = True
            mask = full
        weights = weights * mask[:, None]

    magnitude = np.abs(values)
    measures = np.array([np.sum(weights * (magnitude <= e)) for e in eps])
    flags = []
    sup = float(magnitude[weights > 0].max()) if np.any(weights > 0) else 0.0
    if eps[0] >= sup and sup > 0:
        flags.append("eps above range")

    if np.all(measures == 0):
        flags.append("no active set")
        return math.nan, GrowthFit(tuple(eps), tuple(measures), math.nan, math.nan, math.nan, tuple(flags))
    if np.all(measures == measures[0]):
        flags.append("degenerate")
        return 0.0, GrowthFit(tuple(eps), tuple(measures), 0.0, math.log(measures[0]), 0.0, tuple(flags))

    positive = measures > 0
    if np.count_nonzero(positive) < 2:
        flags.append("too few points")
        return math.nan, GrowthFit(tuple(eps), tuple(measures), math.nan, math.nan, math.nan, tuple(flags))
    if not np.all(positive):
        flags.append("empty levels dropped")

    x = np.log(eps[positive])
    y = np.log(measures[positive])
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return float(slope), GrowthFit(tuple(eps), tuple(measures), float(slope), float(intercept), residual, tuple(flags))
