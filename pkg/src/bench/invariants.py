# invariants.py - Property checks run by the check-invariants command
"""
Structural and algebraic properties of the discretization on one mesh:
mesh invariants, quadrature exactness, the trilinear skew identity, the
Jacobian/adjoint transposition and linearized/adjoint duality.
"""

from dataclasses import dataclass
from math import factorial

import numpy as np

from src.core.logger import get_logger
from src.fem.assembly import (
    assemble_adjoint_operator,
    assemble_load,
    assemble_newton_jacobian,
    assemble_stokes,
    trilinear_value,
)
from src.fem.quadrature import triangle_rule
from src.fem.spaces import THFunction, build_space, sample_divergence, sample_velocity
from src.control.solvers import solve_adjoint, solve_linearized


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def random_velocity(space, rng, scale=1.0):
    """Random discrete velocity with zero boundary trace and no pressure"""
    f = THFunction.zeros(space)
    values = scale * rng.standard_normal(space.ndof_velocity)
    values[space.dirichlet_mask[:space.ndof_velocity]] = 0.0
    f.coefficients[:space.ndof_velocity] = values
    return f


def check_mesh(mesh):
    topo = mesh.edges()
    positive = bool(np.all(mesh.signed_areas > 0))
    euler = mesh.euler_characteristic() == 1
    handshake = 3 * mesh.n_triangles == 2 * topo.n_interior + topo.n_boundary
    conforming = mesh.check_conformity()
    passed = positive and euler and handshake and conforming
    detail = (f"positive areas={positive}, V-E+T=1: {euler}, handshake={handshake}, "
              f"conforming={conforming}")
    return CheckResult("mesh", passed, detail)


def monomial_integral(a, b):
    """Exact integral of x^a y^b over the reference triangle"""
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def check_quadrature(degree=6):
    rule = triangle_rule(degree)
    x, y = rule.points[:, 0], rule.points[:, 1]
    worst = 0.0
    for total in range(rule.exact_degree + 1):
        for a in range(total + 1):
            b = total - a
            worst = max(worst, abs(np.sum(rule.weights * x ** a * y ** b) - monomial_integral(a, b)))
    return CheckResult("quadrature", worst <= 1e-13, f"max monomial error {worst:.2e} up to degree {rule.exact_degree}")


def skew_defect(space, w, v2, v3):
    """b(w; v2, v3) + b(w; v3, v2) + int div(w) (v2 . v3)"""
    div = sample_divergence(w).quad
    dot = np.sum(sample_velocity(v2).quad * sample_velocity(v3).quad, axis=-1)
    correction = float(np.sum(space.quad_weights * div * dot))
    return trilinear_value(space, w, v2, v3) + trilinear_value(space, w, v3, v2) + correction


def check_skew(space, rng, samples=20):
    worst = 0.0
    for _ in range(samples):
        w, v2, v3 = (random_velocity(space, rng) for _ in range(3))
        worst = max(worst, abs(skew_defect(space, w, v2, v3)))
    return CheckResult("trilinear skew identity", worst <= 1e-12, f"max defect {worst:.2e} over {samples} triples")


def check_transposition(space, rng):
    w = random_velocity(space, rng)
    jac = assemble_newton_jacobian(space, w)
    adj = assemble_adjoint_operator(space, w)
    diff = abs(jac.T - adj)
    worst = float(diff.max()) if diff.nnz else 0.0
    return CheckResult("adjoint = Jacobian^T", worst <= 1e-12, f"max entry difference {worst:.2e}")


def check_duality(space, nu, rng, pairs=5):
    blocks = assemble_stokes(space, nu)
    y = random_velocity(space, rng, scale=0.1)
    worst = 0.0
    shape = (space.n_elements, space.n_quad, 2)
    for _ in range(pairs):
        g = rng.standard_normal(shape)
        h = rng.standard_normal(shape)
        phi = solve_linearized(space, y, g, nu=nu, blocks=blocks)
        z = solve_adjoint(space, y, h, nu=nu, blocks=blocks)
        lhs = phi.coefficients[:space.ndof_velocity] @ assemble_load(space, h)
        rhs = z.coefficients[:space.ndof_velocity] @ assemble_load(space, g)
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
    return CheckResult("linearized/adjoint duality", worst <= 1e-9, f"max relative defect {worst:.2e}")


def run_invariant_checks(mesh, nu=1.0, seed=0):
    """Run every check on `mesh`; returns a list of CheckResult"""
    logger = get_logger()
    rng = np.random.default_rng(seed)
    space = build_space(mesh)
    results = [
        check_mesh(mesh),
        check_quadrature(),
        check_skew(space, rng),
        check_transposition(space, rng),
        check_duality(space, nu, rng),
    ]
    for r in results:
        if r.passed:
            logger.info(f"[PASS] {r.name}: {r.detail}")
        else:
            logger.warning(f"[FAIL] {r.name}: {r.detail}")
    return results
