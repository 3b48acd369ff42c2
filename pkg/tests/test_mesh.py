#!/usr/bin/env python3
# test_mesh.py - Tests for triangulations and refinement
"""
Tests for mesh.py: structured meshes, edge topology, red refinement and
newest-vertex bisection.
"""

import os
import sys

import numpy as np

# Add project root to sys.path to allow for src imports
project_root = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from src.core.errors import ParameterError
from src.fem.mesh import build_structured, make_mesh, refine_marked, refine_uniform, unit_square
from tests.test_utils import LoggedTestCase, run_suite


def centroids(mesh):
    return mesh.vertices[mesh.triangles].mean(axis=1)


class TestStructuredMesh(LoggedTestCase):
    patched_modules = ("src.fem.mesh",)

    def test_counts(self):
        for n in (1, 2, 5):
            mesh = unit_square(n)
            self.assertEqual(mesh.n_vertices, (n + 1) ** 2)
            self.assertEqual(mesh.n_triangles, 2 * n * n)
            self.assertEqual(mesh.euler_characteristic(), 1)

    def test_positive_areas_and_total(self):
        mesh = build_structured(3, 2, (0.0, 2.0, -1.0, 0.5))
        self.assertTrue(np.all(mesh.signed_areas > 0))
        self.assertAlmostEqual(mesh.area, 3.0, places=14)

    def test_refinement_edge_is_diagonal(self):
        mesh = unit_square(2)
        p = mesh.vertices[mesh.triangles]
        refinement = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
        np.testing.assert_allclose(refinement, mesh.diameters)

    def test_boundary_flags(self):
        mesh = unit_square(3)
        x, y = mesh.vertices.T
        on_boundary = (x == 0) | (x == 1) | (y == 0) | (y == 1)
        np.testing.assert_array_equal(mesh.boundary_flags, on_boundary)

    def test_mesh_size(self):
        mesh = unit_square(4)
        self.assertAlmostEqual(mesh.h, np.sqrt(2) / 4, places=15)
        self.assertAlmostEqual(mesh.min_angle(), np.pi / 4, places=12)

    def test_invalid_arguments(self):
        with self.assertRaises(ParameterError):
            build_structured(0, 1)
        with self.assertRaises(ParameterError):
            build_structured(1, 1, (1.0, 0.0, 0.0, 1.0))

    def test_make_mesh_flips_clockwise(self):
        mesh = make_mesh([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])
        self.assertGreater(mesh.signed_areas[0], 0)

    def test_make_mesh_rejects_degenerate(self):
        with self.assertRaises(ParameterError):
            make_mesh([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]])
        with self.assertRaises(ParameterError):
            make_mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 3]])


class TestEdgeTopology(LoggedTestCase):
    patched_modules = ("src.fem.mesh",)

    def test_single_cell(self):
        topo = unit_square(1).edges()
        self.assertEqual(topo.n_edges, 5)
        self.assertEqual(topo.n_interior, 1)
        self.assertEqual(topo.n_boundary, 4)

    def test_handshake(self):
        mesh = unit_square(4)
        topo = mesh.edges()
        self.assertEqual(3 * mesh.n_triangles, 2 * topo.n_interior + topo.n_boundary)

    def test_normals(self):
        mesh = unit_square(3)
        topo = mesh.edges()
        np.testing.assert_allclose(np.linalg.norm(topo.normals, axis=1), 1.0)
        c = centroids(mesh)
        first, second = topo.adjacent[topo.interior].T
        towards_second = np.sum(topo.normals[topo.interior] * (c[second] - c[first]), axis=1)
        self.assertTrue(np.all(towards_second > 0))
        boundary = ~topo.interior
        mid = 0.5 * (mesh.vertices[topo.edges[boundary, 0]] + mesh.vertices[topo.edges[boundary, 1]])
        outward = np.sum(topo.normals[boundary] * (mid - c[topo.adjacent[boundary, 0]]), axis=1)
        self.assertTrue(np.all(outward > 0))

    def test_triangle_edges_opposite_vertex(self):
        mesh = unit_square(2)
        topo = mesh.edges()
        for t, tri in enumerate(mesh.triangles):
            for k in range(3):
                edge = set(topo.edges[topo.triangle_edges[t, k]])
                self.assertEqual(edge, set(tri) - {tri[k]})

    def test_cache(self):
        mesh = unit_square(2)
        self.assertIs(mesh.edges(), mesh.edges())


class TestRefinement(LoggedTestCase):
    patched_modules = ("src.fem.mesh",)

    def test_uniform_counts(self):
        mesh = unit_square(2)
        topo = mesh.edges()
        fine = refine_uniform(mesh)
        self.assertEqual(fine.n_triangles, 4 * mesh.n_triangles)
        self.assertEqual(fine.n_vertices, mesh.n_vertices + topo.n_edges)
        fine_topo = fine.edges()
        self.assertEqual(fine_topo.n_edges, 2 * topo.n_edges + 3 * mesh.n_triangles)
        self.assertEqual(fine_topo.n_interior, 2 * topo.n_interior + 3 * mesh.n_triangles)
        self.assertEqual(fine.level, 1)
        np.testing.assert_array_equal(np.bincount(fine.parents), np.full(mesh.n_triangles, 4))

    def test_uniform_halves_mesh_size(self):
        mesh = unit_square(3)
        fine = refine_uniform(mesh)
        self.assertAlmostEqual(fine.h / mesh.h, 0.5, places=14)
        self.assertAlmostEqual(fine.area, 1.0, places=14)
        self.assertTrue(fine.check_conformity())
        self.assertEqual(fine.euler_characteristic(), 1)

    def test_children_inside_parent(self):
        mesh = unit_square(2)
        fine = refine_uniform(mesh)
        np.testing.assert_allclose(np.bincount(fine.parents, weights=fine.areas), mesh.areas)

    def test_empty_marking_returns_same_mesh(self):
        mesh = unit_square(2)
        self.assertIs(refine_marked(mesh, set()), mesh)

    def test_marking_out_of_range(self):
        mesh = unit_square(2)
        with self.assertRaises(ParameterError):
            refine_marked(mesh, {mesh.n_triangles})
        with self.assertRaises(ParameterError):
            refine_marked(mesh, [-1])

    def test_single_mark_closure(self):
        mesh = unit_square(2)
        fine = refine_marked(mesh, {0})
        self.assertTrue(fine.check_conformity())
        # the diagonal neighbour shares the refinement edge and is bisected too
        self.assertEqual(fine.n_triangles, mesh.n_triangles + 2)
        self.assertTrue(np.all(fine.signed_areas > 0))

    def test_all_marked_bisects_everything(self):
        mesh = unit_square(2)
        fine = refine_marked(mesh, range(mesh.n_triangles))
        self.assertTrue(np.all(np.bincount(fine.parents, minlength=mesh.n_triangles) >= 2))

    def test_random_marking_sequence(self):
        rng = np.random.default_rng(7)
        mesh = unit_square(3)
        angle0 = mesh.min_angle()
        for level in range(5):
            count = max(1, mesh.n_triangles // 3)
            marked = set(rng.choice(mesh.n_triangles, size=count, replace=False).tolist())
            fine = refine_marked(mesh, marked)
            self.assertEqual(fine.level, mesh.level + 1)
            self.assertTrue(fine.check_conformity())
            self.assertEqual(fine.euler_characteristic(), 1)
            self.assertTrue(np.all(fine.signed_areas > 0))
            self.assertAlmostEqual(fine.area, 1.0, places=13)
            self.assertGreaterEqual(fine.min_angle(), 0.5 * angle0)
            np.testing.assert_allclose(np.bincount(fine.parents, weights=fine.areas), mesh.areas)
            mesh = fine

    def test_hanging_node_detected(self):
        vertices = [[0, 0], [2, 0], [0, 2], [2, 2], [1, 1]]
        triangles = [[0, 1, 2], [1, 3, 4], [4, 3, 2]]
        mesh = make_mesh(vertices, triangles)
        self.assertFalse(mesh.check_conformity())


def run_all_tests():
    return run_suite("Mesh Tests", [TestStructuredMesh, TestEdgeTopology, TestRefinement])


if __name__ == "__main__":
    sys.exit(0 if run_all_tests() else 1)
