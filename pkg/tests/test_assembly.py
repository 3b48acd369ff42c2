#!/usr/bin/env python3
# test_assembly.py - Tests for the discrete forms
"""
Tests for assembly.py: Stokes blocks, convection and its Newton derivative,
the adjoint operator, load vectors and the pinned saddle-point matrix.
"""

import os
import sys

import numpy as np

# Add project root to sys.path to allow for src imports
project_root = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from src.core.errors import ParameterError
from src.fem.assembly import (
    assemble_adjoint_operator,
    assemble_convection,
    assemble_load,
    assemble_newton_jacobian,
    assemble_stokes,
    embed_velocity,
    quadrature_values,
    saddle_matrix,
    trilinear_value,
)
from src.fem.mesh import unit_square
from src.fem.spaces import THFunction, build_space, sample_constant
from src.bench.invariants import check_skew, check_transposition, random_velocity, skew_defect
from tests.test_utils import LoggedTestCase, nodal_function, run_suite


def rotation(x):
    return np.column_stack([x[:, 1], -x[:, 0]])


def quadratic_field(x):
    return np.column_stack([x[:, 1] ** 2 - x[:, 0] * x[:, 1], 2.0 * x[:, 0] ** 2 + x[:, 1]])


def quadratic_gradient(x):
    grad = np.empty((x.shape[0], 2, 2))
    grad[:, 0, 0] = -x[:, 1]
    grad[:, 0, 1] = 2.0 * x[:, 1] - x[:, 0]
    grad[:, 1, 0] = 4.0 * x[:, 0]
    grad[:, 1, 1] = 1.0
    return grad


def dense(matrix):
    return matrix.toarray()


class TestStokesBlocks(LoggedTestCase):
    patched_modules = ("src.fem.assembly",)

    def setUp(self):
        super().setUp()
        self.space = build_space(unit_square(3))
        self.blocks = assemble_stokes(self.space, nu=1.0)

    def test_symmetry(self):
        for block in (self.blocks.A, self.blocks.M):
            d = dense(block)
            np.testing.assert_allclose(d, d.T, atol=1e-12)

    def test_viscosity_scaling(self):
        scaled = assemble_stokes(self.space, nu=0.25)
        np.testing.assert_allclose(dense(scaled.A), 0.25 * dense(self.blocks.A), atol=1e-14)

    def test_constants_in_kernel_of_laplacian(self):
        n = self.space.n_nodes
        for c in range(2):
            ones = np.zeros(self.space.ndof_velocity)
            ones[c * n:(c + 1) * n] = 1.0
            np.testing.assert_allclose(self.blocks.A @ ones, 0.0, atol=1e-12)
            self.assertAlmostEqual(ones @ (self.blocks.M @ ones), 1.0, places=13)

    def test_divergence_block(self):
        rot = nodal_function(self.space, velocity=rotation)
        v = rot.coefficients[:self.space.ndof_velocity]
        np.testing.assert_allclose(self.blocks.B @ v, 0.0, atol=1e-13)
        ident = nodal_function(self.space, velocity=lambda x: x)
        v = ident.coefficients[:self.space.ndof_velocity]
        np.testing.assert_allclose(self.blocks.B @ v, 2.0 * self.blocks.mean, atol=1e-13)

    def test_pressure_mean_vector(self):
        self.assertAlmostEqual(self.blocks.mean.sum(), 1.0, places=14)
        p = nodal_function(self.space, pressure=lambda x: x[:, 0])
        self.assertAlmostEqual(self.blocks.mean @ p.pressure, p.pressure_mean(), places=14)

    def test_invalid_viscosity(self):
        with self.assertRaises(ParameterError):
            assemble_stokes(self.space, nu=0.0)


class TestConvection(LoggedTestCase):
    patched_modules = ("src.fem.assembly",)

    def setUp(self):
        super().setUp()
        self.space = build_space(unit_square(3))
        self.rng = np.random.default_rng(11)

    def _vec(self, f):
        return f.coefficients[:self.space.ndof_velocity]

    def test_zero_transport(self):
        zero = THFunction.zeros(self.space)
        self.assertEqual(np.abs(dense(assemble_convection(self.space, zero))).max(), 0.0)
        self.assertEqual(np.abs(dense(assemble_newton_jacobian(self.space, zero))).max(), 0.0)

    def test_matrix_matches_trilinear_form(self):
        w, v, u = (random_velocity(self.space, self.rng) for _ in range(3))
        N = assemble_convection(self.space, w)
        lhs = self._vec(u) @ (N @ self._vec(v))
        self.assertAlmostEqual(lhs, trilinear_value(self.space, w, v, u), delta=1e-11 * max(1.0, abs(lhs)))

    def test_skew_identity(self):
        w, v2, v3 = (random_velocity(self.space, self.rng) for _ in range(3))
        self.assertLess(abs(skew_defect(self.space, w, v2, v3)), 1e-12)
        self.assertTrue(check_skew(self.space, self.rng, samples=5).passed)

    def test_divergence_free_transport(self):
        rot = nodal_function(self.space, velocity=rotation)
        v = random_velocity(self.space, self.rng)
        self.assertLess(abs(trilinear_value(self.space, rot, v, v)), 1e-11)

    def test_jacobian_directional_derivative(self):
        w = random_velocity(self.space, self.rng)
        v = random_velocity(self.space, self.rng)
        jv = assemble_newton_jacobian(self.space, w) @ self._vec(v)

        def residual(t):
            shifted = w + v * t
            fw = assemble_convection(self.space, w) @ self._vec(w)
            fs = assemble_convection(self.space, shifted) @ self._vec(shifted)
            return np.linalg.norm((fs - fw) / t - jv)

        coarse, fine = residual(1e-3), residual(1e-4)
        self.assertLess(fine, 0.2 * coarse)

    def test_reaction_term(self):
        w = nodal_function(self.space, velocity=quadratic_field)
        c = np.array([0.3, -1.2])
        reaction = assemble_newton_jacobian(self.space, w) - assemble_convection(self.space, w)
        n = self.space.n_nodes
        const = np.concatenate([np.full(n, c[0]), np.full(n, c[1])])
        expected = assemble_load(self.space, lambda x: quadratic_gradient(x) @ c)
        np.testing.assert_allclose(reaction @ const, expected, atol=1e-13)

    def test_adjoint_is_transpose(self):
        w = random_velocity(self.space, self.rng)
        jac = dense(assemble_newton_jacobian(self.space, w))
        adj = dense(assemble_adjoint_operator(self.space, w))
        np.testing.assert_allclose(adj, jac.T, atol=1e-12)
        self.assertTrue(check_transposition(self.space, self.rng).passed)

    def test_trilinear_checks(self):
        zero = THFunction.zeros(self.space)
        v = random_velocity(self.space, self.rng)
        self.assertEqual(trilinear_value(self.space, zero, v, v), 0.0)
        other = THFunction.zeros(build_space(unit_square(2)))
        with self.assertRaises(ParameterError):
            trilinear_value(self.space, other, v, v)


class TestLoadsAndSaddle(LoggedTestCase):
    patched_modules = ("src.fem.assembly",)

    def setUp(self):
        super().setUp()
        self.space = build_space(unit_square(3))
        self.blocks = assemble_stokes(self.space, nu=1.0)

    def test_zero_and_constant_loads(self):
        np.testing.assert_array_equal(assemble_load(self.space, None), 0.0)
        load = assemble_load(self.space, lambda x: np.tile([2.0, -1.0], (len(x), 1)))
        n = self.space.n_nodes
        self.assertAlmostEqual(load[:n].sum(), 2.0, places=13)
        self.assertAlmostEqual(load[n:].sum(), -1.0, places=13)

    def test_load_representations_agree(self):
        func = lambda x: np.column_stack([np.sin(x[:, 0]), x[:, 1] ** 3])  # noqa: E731
        from_callable = assemble_load(self.space, func)
        samples = func(self.space.quad_points.reshape(-1, 2)).reshape(self.space.n_elements, self.space.n_quad, 2)
        np.testing.assert_allclose(assemble_load(self.space, samples), from_callable)
        constant = assemble_load(self.space, sample_constant(self.space, [1.0, 0.5]))
        np.testing.assert_allclose(constant, assemble_load(self.space, lambda x: np.tile([1.0, 0.5], (len(x), 1))))

    def test_zero_dirichlet(self):
        load = assemble_load(self.space, lambda x: np.ones_like(x), zero_dirichlet=True)
        mask = self.space.dirichlet_mask[:self.space.ndof_velocity]
        self.assertTrue(np.all(load[mask] == 0.0))
        self.assertGreater(np.abs(load[~mask]).max(), 0.0)

    def test_invalid_loads(self):
        with self.assertRaises(ParameterError):
            quadrature_values(self.space, np.zeros((self.space.n_elements, self.space.n_quad)))
        bad = np.zeros((self.space.n_elements, self.space.n_quad, 2))
        bad[0, 0, 0] = np.inf
        with self.assertRaises(ParameterError):
            assemble_load(self.space, bad)

    def test_saddle_structure(self):
        K = saddle_matrix(self.blocks)
        self.assertEqual(K.shape, (self.space.dim, self.space.dim))
        for i in np.flatnonzero(self.space.dirichlet_mask)[:10]:
            row = K.getrow(i).toarray().ravel()
            expected = np.zeros(self.space.dim)
            expected[i] = 1.0
            np.testing.assert_array_equal(row, expected)
        d = dense(K)
        np.testing.assert_allclose(d, d.T, atol=1e-12)

    def test_zero_state_jacobian_gives_stokes(self):
        zero = THFunction.zeros(self.space)
        diff = saddle_matrix(self.blocks, assemble_newton_jacobian(self.space, zero)) - saddle_matrix(self.blocks)
        self.assertEqual(np.abs(dense(diff)).max(), 0.0)

    def test_embed_velocity(self):
        rhs = embed_velocity(self.space, np.ones(self.space.ndof_velocity))
        self.assertEqual(rhs.shape, (self.space.dim,))
        self.assertTrue(np.all(rhs[self.space.dirichlet_mask] == 0.0))
        self.assertTrue(np.all(rhs[self.space.pressure_offset:] == 0.0))


def run_all_tests():
    return run_suite("Assembly Tests", [TestStokesBlocks, TestConvection, TestLoadsAndSaddle])


if __name__ == "__main__":
    sys.exit(0 if run_all_tests() else 1)
