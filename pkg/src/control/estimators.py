# estimators.py - Residual a posteriori indicators and the adaptive loop
"""
Residual indicators for the discrete state (L^t' framework) and the
discrete adjoint (maximum-norm framework), the total reliability bound for
the control error, Dorfler marking and the SOLVE -> ESTIMATE -> MARK ->
REFINE loop.

Interior edge jumps count in full for both neighbouring elements. The
velocity Laplacian and the pressure gradient are elementwise constants.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from src.core.errors import ParameterError
from src.core.logger import get_logger
from src.fem.assembly import quadrature_values
from src.fem.mesh import refine_marked
from src.fem.quadrature import edge_rule
from src.fem.spaces import (
    SampledField,
    build_space,
    evaluate_elements,
    norm_lp,
    element_lp,
    prolongate,
    sample_analytic,
    sample_divergence,
    sample_velocity,
    sample_velocity_gradient,
)
from src.control.ocp import bang_bang_from_adjoint, solve_ocp

SPACE_DIM = 2


@dataclass(frozen=True, eq=False)
class IndicatorField:
    """Per-element indicators eta_T and their aggregate"""
    values: np.ndarray
    aggregate: float
    t_prime: float
    n: int = SPACE_DIM
    parameters: dict = field(default_factory=dict)

    @property
    def n_elements(self):
        return self.values.shape[0]

    def recompute_aggregate(self):
        if math.isinf(self.t_prime):
            return float(self.values.max()) if self.values.size else 0.0
        return float(np.sum(self.values ** self.t_prime) ** (1.0 / self.t_prime))


def _indicator(values, t_prime, **parameters):
    values = np.maximum(np.asarray(values, dtype=float), 0.0)
    if math.isinf(t_prime):
        aggregate = float(values.max()) if values.size else 0.0
    else:
        aggregate = float(np.sum(values ** t_prime) ** (1.0 / t_prime))
    return IndicatorField(values=values, aggregate=aggregate, t_prime=t_prime, parameters=parameters)


def _velocity_laplacian(f):
    """(T, 2) elementwise constant Laplacian of the P2 velocity"""
    space = f.space
    local = f.velocity[:, space.element_nodes]                 # (2, T, 6)
    return np.einsum("ti,cti->tc", space.node_laplacians, local)


def _pressure_gradient(f):
    """(T, 2) elementwise constant gradient of the P1 pressure"""
    space = f.space
    local = f.pressure[space.mesh.triangles]                   # (T, 3)
    return np.einsum("tkd,tk->td", space.lambda_grads, local)


def _constant_field(space, per_element):
    """SampledField of elementwise constant values (T, ...)"""
    quad = np.broadcast_to(per_element[:, None], (space.n_elements, space.n_quad) + per_element.shape[1:])
    nodes = np.broadcast_to(per_element[:, None], (space.n_elements, 6) + per_element.shape[1:])
    return SampledField(space, quad.copy(), nodes.copy())


def _as_sampled(space, f):
    """Velocity-shaped SampledField from a callable, SampledField, QuadControl or array"""
    if f is None:
        return SampledField(space, np.zeros((space.n_elements, space.n_quad, 2)),
                            np.zeros((space.n_elements, 6, 2)))
    if isinstance(f, SampledField):
        return f
    if callable(f):
        return sample_analytic(space, f)
    # Quadrature-point data only: the L^inf max runs over quadrature points
    return SampledField(space, quadrature_values(space, f), None)


def _edge_traces(f, params):
    """Evaluate f on both sides of every interior edge at edge parameters s.

    Returns (interior edge ids, first-side PointValues, second-side PointValues).
    """
    space = f.space
    mesh = space.mesh
    topo = mesh.edges()
    interior = np.flatnonzero(topo.interior)
    a = mesh.vertices[topo.edges[interior, 0]]
    b = mesh.vertices[topo.edges[interior, 1]]
    points = a[:, None, :] + params[None, :, None] * (b - a)[:, None, :]

    sides = []
    for k in range(2):
        elements = topo.adjacent[interior, k]
        ref = space.physical_to_reference(elements, points)
        sides.append(evaluate_elements(f, elements, ref))
    return interior, sides[0], sides[1]


def _flux_jump(f, params, nu):
    """|[[(nu grad v - q I) n]]| at edge parameters for every interior edge, shape (E_int, P)"""
    space = f.space
    topo = space.mesh.edges()
    interior, first, second = _edge_traces(f, params)
    normals = topo.normals[interior][:, None, :]               # (E, 1, 2)

    def flux(side):
        sigma = nu * side.gradient - side.pressure[..., None, None] * np.eye(2)
        return np.einsum("epcd,ed->epc", sigma, normals[:, 0, :])

    jump = flux(first) - flux(second)
    return interior, np.linalg.norm(jump, axis=-1)


def _scatter_edges(space, interior, per_edge, reduce):
    """Accumulate per-interior-edge values onto both neighbouring elements"""
    topo = space.mesh.edges()
    out = np.zeros(space.n_elements)
    for k in range(2):
        elements = topo.adjacent[interior, k]
        if reduce == "sum":
            np.add.at(out, elements, per_edge)
        else:
            np.maximum.at(out, elements, per_edge)
    return out


def estimate_state(space, yp, u, t_prime=2.0, nu=1.0, extra_f=None):
    """State indicators eta_st,t',T for (y, p) = yp and control u"""
    logger = get_logger()
    if not 2.0 <= t_prime <= 4.0:
        raise ParameterError(f"t' must lie in [2, 4], got {t_prime}")
    if yp.space is not space:
        raise ParameterError("state lives on a different space")

    h = space.mesh.diameters
    velocity = sample_velocity(yp)
    gradient = sample_velocity_gradient(yp)
    convection = SampledField(
        space,
        np.einsum("tqcd,tqd->tqc", gradient.quad, velocity.quad),
        np.einsum("ticd,tid->tic", gradient.nodes, velocity.nodes),
    )
    residual = (_as_sampled(space, u) + _as_sampled(space, extra_f)
                + _constant_field(space, nu * _velocity_laplacian(yp))
                - convection - _constant_field(space, _pressure_gradient(yp)))

    element_term = h ** (2 * t_prime) * element_lp(residual, t_prime)
    div_term = h ** t_prime * element_lp(sample_divergence(yp), t_prime)

    rule = edge_rule(6)
    interior, jump = _flux_jump(yp, rule.points, nu)
    lengths = space.mesh.edges().lengths[interior]
    edge_power = lengths * np.sum(rule.weights[None, :] * jump ** t_prime, axis=1)
    jump_term = h ** (t_prime + 1) * _scatter_edges(space, interior, edge_power, "sum")

    values = (element_term + div_term + jump_term) ** (1.0 / t_prime)
    indicator = _indicator(values, t_prime, kind="state", nu=nu)
    logger.info(f"State estimator eta_st,{t_prime:g} = {indicator.aggregate:.6e}")
    return indicator


def estimate_adjoint(space, y, zr, y_omega, nu=1.0):
    """Adjoint indicators eta_adj,T with the max aggregate"""
    logger = get_logger()
    if y.space is not space or zr.space is not space:
        raise ParameterError("state and adjoint must share the space")

    h = space.mesh.diameters
    y_val = sample_velocity(y)
    y_grad = sample_velocity_gradient(y)
    y_div = sample_divergence(y)
    z_val = sample_velocity(zr)
    z_grad = sample_velocity_gradient(zr)

    def combine(op, *fields):
        quad = op(*(f.quad for f in fields))
        nodes = op(*(f.nodes for f in fields))
        return SampledField(space, quad, nodes)

    transposed = combine(lambda g, z: np.einsum("...dc,...d->...c", g, z), y_grad, z_val)
    transport = combine(lambda g, v: np.einsum("...cd,...d->...c", g, v), z_grad, y_val)
    reaction = combine(lambda d, z: d[..., None] * z, y_div, z_val)

    residual = (y_val - _as_sampled(space, y_omega)
                + _constant_field(space, nu * _velocity_laplacian(zr))
                - transposed + transport + reaction
                - _constant_field(space, _pressure_gradient(zr)))

    element_term = h ** 2 * element_lp(residual, math.inf)
    div_term = h * element_lp(sample_divergence(zr), math.inf)

    # Edge maximum over Gauss points, endpoints and midpoint
    params = np.unique(np.concatenate([edge_rule(6).points, [0.0, 0.5, 1.0]]))

    interior, first, second = _edge_traces(zr, params)
    _, y_first, y_second = _edge_traces(y, params)
    normals = space.mesh.edges().normals[interior]

    def flux(z_side, y_side):
        sigma = (nu * z_side.gradient
                 + np.einsum("epc,epd->epcd", y_side.velocity, z_side.velocity)
                 - z_side.pressure[..., None, None] * np.eye(2))
        return np.einsum("epcd,ed->epc", sigma, normals)

    jump = np.linalg.norm(flux(first, y_first) - flux(second, y_second), axis=-1).max(axis=1)
    jump_term = 0.5 * h * _scatter_edges(space, interior, jump, "max")

    values = element_term + div_term + jump_term
    indicator = _indicator(values, math.inf, kind="adjoint", nu=nu)
    logger.info(f"Adjoint estimator eta_adj,inf = {indicator.aggregate:.6e}")
    return indicator


def divergence_term(y, mu):
    """||div y||_{L^mu}"""
    return norm_lp(sample_divergence(y), mu)


def conjugate_mu(p, n=SPACE_DIM):
    """mu = n p / (n + p)"""
    return n * p / (n + p)


def total_reliability_bound(eta_st2, eta_stp, eta_adj_inf, div_term, h_min, n=SPACE_DIM, p=3.0, gamma=1.0):
    """(eta_st,2 + eta_st,p + |log h_min|^(4/n) eta_adj,inf + ||div y||_{L^mu})^gamma"""
    if not p > n:
        raise ParameterError(f"p must exceed n = {n}, got {p}")
    if not n / (n + 2.0) < gamma <= 1.0:
        raise ParameterError(f"gamma must lie in ({n}/{n + 2}, 1], got {gamma}")
    if not h_min > 0:
        raise ParameterError(f"h_min must be positive, got {h_min}")
    terms = (eta_st2, eta_stp, eta_adj_inf, div_term)
    if any(t < 0 or not math.isfinite(t) for t in terms):
        raise ParameterError("estimator inputs must be finite and nonnegative")
    log_weight = abs(math.log(h_min)) ** (4.0 / n)
    total = eta_st2 + eta_stp + log_weight * eta_adj_inf + div_term
    return total ** gamma


def mark_dorfler(ind, theta):
    """Smallest set of elements carrying a theta-fraction of the indicator power"""
    if not 0.0 < theta <= 1.0:
        raise ParameterError(f"theta must lie in (0, 1], got {theta}")
    values = ind.values
    nonzero = np.flatnonzero(values > 0)
    if nonzero.size == 0:
        return set()

    if math.isinf(ind.t_prime):
        cutoff = (1.0 - theta) * values.max()
        return {int(i) for i in nonzero if values[i] >= cutoff}
    if theta >= 1.0:
        return {int(i) for i in nonzero}

    powers = values ** ind.t_prime
    order = np.argsort(-powers, kind="stable")
    cumulative = np.cumsum(powers[order])
    target = theta * cumulative[-1]
    count = int(np.searchsorted(cumulative, target * (1.0 - 1e-12))) + 1
    return {int(i) for i in order[:count]}


@dataclass
class AdaptiveLevel:
    """Everything computed on one level of the adaptive loop"""
    level: int
    mesh: object
    space: object
    final: object
    history: list
    eta_st2: IndicatorField
    eta_stp: IndicatorField
    eta_adj: IndicatorField
    div_term: float
    total_bound: float
    marked: set
    wall_s: float


def estimate_level(space, iterate, data, t_prime=2.0, p=3.0, gamma=1.0):
    """All estimator quantities of a converged OCP iterate"""
    if not SPACE_DIM < p <= 4.0:
        raise ParameterError(f"p must lie in ({SPACE_DIM}, 4], got {p}")
    state_2 = estimate_state(space, iterate.state, iterate.control, t_prime, data.nu, data.extra_f)
    state_p = estimate_state(space, iterate.state, iterate.control, p, data.nu, data.extra_f)
    adjoint = estimate_adjoint(space, iterate.state, iterate.adjoint, data.y_omega, data.nu)
    div = divergence_term(iterate.state, conjugate_mu(p))
    bound = total_reliability_bound(state_2.aggregate, state_p.aggregate, adjoint.aggregate, div,
                                    space.mesh.h_min, SPACE_DIM, p, gamma)
    return state_2, state_p, adjoint, div, bound


def adaptive_loop(mesh, data, theta=0.5, levels=4, gap_tol=1e-8, max_outer=50,
                  marking="adjoint", t_prime=2.0, p=3.0, gamma=1.0):
    """SOLVE -> ESTIMATE -> MARK -> REFINE; returns one AdaptiveLevel per level.

    data.y_omega and data.extra_f must be analytic (callables) so that they
    can be evaluated on every refined mesh.
    """
    logger = get_logger()
    if levels < 1:
        raise ParameterError(f"levels must be at least 1, got {levels}")
    if marking not in ("adjoint", "state"):
        raise ParameterError(f"marking must be 'adjoint' or 'state', got '{marking}'")
    if not SPACE_DIM < p <= 4.0:
        raise ParameterError(f"p must lie in ({SPACE_DIM}, 4], got {p}")

    records = []
    init_control = None
    init_state = None
    space = build_space(mesh)
    for level in range(levels):
        start = time.perf_counter()
        history, final = solve_ocp(space, data, gap_tol=gap_tol, max_outer=max_outer,
                                   init_control=init_control, init_state=init_state)
        state_2, state_p, adjoint, div, bound = estimate_level(space, final, data, t_prime, p, gamma)

        last = level == levels - 1
        marked = set()
        if not last:
            indicator = adjoint if marking == "adjoint" else state_2
            marked = mark_dorfler(indicator, theta)

        records.append(AdaptiveLevel(
            level=level, mesh=mesh, space=space, final=final, history=history,
            eta_st2=state_2, eta_stp=state_p, eta_adj=adjoint, div_term=div, total_bound=bound,
            marked=marked, wall_s=time.perf_counter() - start,
        ))
        logger.system(
            f"Adaptive level {level}: {space.ndof_velocity} velocity dofs, eta_adj={adjoint.aggregate:.3e}, "
            f"bound={bound:.3e}, marked {len(marked)}/{mesh.n_triangles}"
        )
        if last or not marked:
            break

        mesh = refine_marked(mesh, marked)
        space = build_space(mesh)
        init_state = prolongate(final.state, space)
        init_control = bang_bang_from_adjoint(prolongate(final.adjoint, space), data.bounds)
    return records


@dataclass(frozen=True)
class AssumptionReport:
    """Smallness checks on the discrete state"""
    grad_l2: float
    grad_l125: float
    nu: float
    c_b: float
    c_l125: float
    state_condition: bool        # ||grad y||_L2 < nu / C_b
    adjoint_condition: bool      # 2 ||grad y||_L2 < nu / C_b
    l125_condition: bool         # ||grad y||_L^{12/5} <= C


def check_assumptions(y, nu, c_b=0.5, c_l125=math.inf):
    """Evaluate the smallness conditions on grad y"""
    if not nu > 0 or not c_b > 0:
        raise ParameterError("nu and C_b must be positive")
    grad = sample_velocity_gradient(y)
    grad_l2 = norm_lp(grad, 2.0)
    grad_l125 = norm_lp(grad, 12.0 / 5.0)
    limit = nu / c_b
    report = AssumptionReport(
        grad_l2=grad_l2,
        grad_l125=grad_l125,
        nu=float(nu),
        c_b=float(c_b),
        c_l125=float(c_l125),
        state_condition=grad_l2 < limit,
        adjoint_condition=2.0 * grad_l2 < limit,
        l125_condition=grad_l125 <= c_l125,
    )
    get_logger().info(
        f"Assumptions: |grad y|_L2={grad_l2:.4e}, |grad y|_L12/5={grad_l125:.4e}, nu/C_b={limit:.4e}"
    )
    return report
