# mesh.py - Conforming triangulations of convex polygons
"""
Triangular meshes with edge topology, red (uniform) refinement and
newest-vertex bisection.

Every triangle is stored counterclockwise as (v0, v1, v2) with the
refinement edge v0-v1 and the newest vertex v2. Local edge k is the edge
opposite vertex k.
"""

from dataclasses import dataclass, field

import numpy as np

from src.core.errors import ParameterError
from src.core.logger import get_logger


@dataclass(frozen=True, eq=False)
class EdgeSet:
    """Edge topology of a TriMesh.

    edges[e]          sorted vertex pair
    adjacent[e]       (first, second) adjacent triangle, second = -1 on the boundary
    normals[e]        unit normal pointing out of the first adjacent triangle
    lengths[e]        edge length
    interior[e]       True when two triangles share the edge
    triangle_edges    (T, 3) global edge index of local edge k (opposite vertex k)
    """
    edges: np.ndarray
    adjacent: np.ndarray
    normals: np.ndarray
    lengths: np.ndarray
    interior: np.ndarray
    triangle_edges: np.ndarray

    @property
    def n_edges(self):
        return self.edges.shape[0]

    @property
    def n_interior(self):
        return int(np.count_nonzero(self.interior))

    @property
    def n_boundary(self):
        return self.n_edges - self.n_interior


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Conforming triangulation; immutable, refinement returns a new mesh"""
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_flags: np.ndarray
    level: int = 0
    parents: np.ndarray = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @property
    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def areas(self):
        return np.abs(self.signed_areas)

    @property
    def edge_lengths(self):
        """(T, 3) length of local edge k (opposite vertex k)"""
        p = self.vertices[self.triangles]
        return np.stack([
            np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
            np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
            np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
        ], axis=1)

    @property
    def diameters(self):
        """h_T = diam(T), the longest edge"""
        return self.edge_lengths.max(axis=1)

    @property
    def h(self):
        return float(self.diameters.max())

    @property
    def h_min(self):
        return float(self.diameters.min())

    @property
    def area(self):
        return float(self.areas.sum())

    def min_angle(self):
        """Smallest interior angle over all triangles, in radians"""
        p = self.vertices[self.triangles]
        angles = []
        for k in range(3):
            a = p[:, (k + 1) % 3] - p[:, k]
            b = p[:, (k + 2) % 3] - p[:, k]
            cos = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles.append(np.arccos(np.clip(cos, -1.0, 1.0)))
        return float(np.min(angles))

    def edges(self):
        """Cached edge topology"""
        if "edges" not in self._cache:
            self._cache["edges"] = edge_topology(self)
        return self._cache["edges"]

    def euler_characteristic(self):
        return self.n_vertices - self.edges().n_edges + self.n_triangles

    def check_conformity(self, tol=1e-12):
        """True when the mesh has no hanging nodes.

        Every edge must be shared by at most two triangles, and no vertex may
        lie in the relative interior of an edge (hanging node test).
        """
        topo = self.edges()
        counts = np.bincount(topo.triangle_edges.ravel(), minlength=topo.n_edges)
        if np.any(counts > 2):
            return False

        # A hanging node sits strictly inside some edge of a neighbouring triangle
        a = self.vertices[topo.edges[:, 0]]
        b = self.vertices[topo.edges[:, 1]]
        direction = b - a
        length2 = np.sum(direction ** 2, axis=1)
        for i, x in enumerate(self.vertices):
            t = np.sum((x - a) * direction, axis=1) / length2
            inside = (t > tol) & (t < 1.0 - tol)
            if not np.any(inside):
                continue
            foot = a[inside] + t[inside, None] * direction[inside]
            if np.any(np.linalg.norm(foot - x, axis=1) < tol * np.sqrt(length2[inside])):
                return False
        return True


def _boundary_flags(triangles, n_vertices):
    """Flag the vertices of edges that belong to exactly one triangle"""
    local = triangles[:, [[1, 2], [2, 0], [0, 1]]].reshape(-1, 2)
    local = np.sort(local, axis=1)
    unique, counts = np.unique(local, axis=0, return_counts=True)
    flags = np.zeros(n_vertices, dtype=bool)
    flags[unique[counts == 1].ravel()] = True
    return flags


def _orient_longest_edge(vertices, triangles):
    """Rotate each triangle so that its longest edge is the refinement edge v0-v1"""
    p = vertices[triangles]
    lengths = np.stack([
        np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
        np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
        np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
    ], axis=1)
    # Vertex opposite the longest edge becomes v2; cyclic shifts keep the orientation
    k = np.argmax(lengths, axis=1)
    rows = np.arange(triangles.shape[0])
    return np.stack([
        triangles[rows, (k + 1) % 3],
        triangles[rows, (k + 2) % 3],
        triangles[rows, k],
    ], axis=1)


def make_mesh(vertices, triangles, level=0, parents=None):
    """Build a TriMesh, flipping clockwise triangles and checking areas"""
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
    if triangles.size and (triangles.min() < 0 or triangles.max() >= vertices.shape[0]):
        raise ParameterError("triangle vertex index out of range")

    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    signed = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    clockwise = signed < 0
    if np.any(clockwise):
        triangles[clockwise] = triangles[clockwise][:, [1, 0, 2]]
    if np.any(signed == 0):
        raise ParameterError("degenerate triangle with zero area")

    return TriMesh(
        vertices=vertices,
        triangles=triangles,
        boundary_flags=_boundary_flags(triangles, vertices.shape[0]),
        level=level,
        parents=None if parents is None else np.asarray(parents, dtype=np.int64),
    )


def build_structured(nx, ny, rect=(0.0, 1.0, 0.0, 1.0)):
    """Structured mesh of the rectangle (x0, x1, y0, y1).

    Each cell is split along its lower-left to upper-right diagonal, which is
    the refinement edge of both halves.
    """
    if nx < 1 or ny < 1:
        raise ParameterError(f"nx and ny must be positive, got {nx}, {ny}")
    x0, x1, y0, y1 = rect
    if not (x1 > x0 and y1 > y0):
        raise ParameterError(f"invalid rectangle {rect}")

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    i = i.ravel()
    j = j.ravel()
    p00 = j * (nx + 1) + i
    p10 = p00 + 1
    p01 = p00 + nx + 1
    p11 = p01 + 1

    # (p11, p00, p10) and (p00, p11, p01): diagonal first, both counterclockwise
    lower = np.column_stack([p11, p00, p10])
    upper = np.column_stack([p00, p11, p01])
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    mesh = make_mesh(vertices, triangles)
    get_logger().debug(f"Structured mesh {nx}x{ny}: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles")
    return mesh


def unit_square(n):
    """n x n structured mesh of the unit square"""
    return build_structured(n, n, (0.0, 1.0, 0.0, 1.0))


def edge_topology(mesh):
    """Edge list with adjacency, outward normals of the first neighbour, lengths and interior flags"""
    tris = mesh.triangles
    n_tri = tris.shape[0]

    # local edge k runs from vertex k+1 to vertex k+2 (counterclockwise)
    starts = tris[:, [1, 2, 0]].ravel()
    ends = tris[:, [2, 0, 1]].ravel()
    keys = np.sort(np.column_stack([starts, ends]), axis=1)

    edges, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    n_edges = edges.shape[0]

    owner = np.arange(3 * n_tri) // 3
    adjacent = np.full((n_edges, 2), -1, dtype=np.int64)
    adjacent[:, 0] = owner[first]
    second = np.ones(3 * n_tri, dtype=bool)
    second[first] = False
    adjacent[inverse[second], 1] = owner[second]

    # Normal from the first triangle's own (counterclockwise) orientation of the edge
    a = mesh.vertices[starts[first]]
    b = mesh.vertices[ends[first]]
    tangent = b - a
    lengths = np.linalg.norm(tangent, axis=1)
    normals = np.column_stack([tangent[:, 1], -tangent[:, 0]]) / lengths[:, None]

    return EdgeSet(
        edges=edges,
        adjacent=adjacent,
        normals=normals,
        lengths=lengths,
        interior=adjacent[:, 1] >= 0,
        triangle_edges=inverse.reshape(n_tri, 3),
    )


def refine_uniform(mesh):
    """Red refinement: four congruent children per triangle through the edge midpoints"""
    topo = mesh.edges()
    nv = mesh.n_vertices
    midpoints = 0.5 * (mesh.vertices[topo.edges[:, 0]] + mesh.vertices[topo.edges[:, 1]])
    vertices = np.vstack([mesh.vertices, midpoints])

    a, b, c = mesh.triangles.T
    # midpoint opposite vertex k
    ma, mb, mc = (nv + topo.triangle_edges[:, k] for k in range(3))

    children = np.stack([
        np.column_stack([a, mc, mb]),
        np.column_stack([mc, b, ma]),
        np.column_stack([mb, ma, c]),
        np.column_stack([ma, mb, mc]),
    ], axis=1).reshape(-1, 3)
    children = _orient_longest_edge(vertices, children)
    parents = np.repeat(np.arange(mesh.n_triangles), 4)

    refined = make_mesh(vertices, children, level=mesh.level + 1, parents=parents)
    get_logger().debug(f"Uniform refinement to level {refined.level}: {refined.n_triangles} triangles")
    return refined


def _bisect(triangle, midpoint_of):
    """Recursively bisect along the refinement edge while it carries a midpoint"""
    a, b, c = triangle
    m = midpoint_of.get((a, b) if a < b else (b, a))
    if m is None:
        return [triangle]
    return _bisect((c, a, m), midpoint_of) + _bisect((b, c, m), midpoint_of)


def refine_marked(mesh, marked):
    """Newest-vertex bisection of the marked triangles plus conformity closure"""
    marked = np.unique(np.asarray(list(marked), dtype=np.int64))
    if marked.size and (marked.min() < 0 or marked.max() >= mesh.n_triangles):
        raise ParameterError("marked triangle index out of range")
    if marked.size == 0:
        return mesh

    topo = mesh.edges()
    tri_edges = topo.triangle_edges
    edge_marks = np.zeros(topo.n_edges, dtype=bool)
    edge_marks[tri_edges[marked, 2]] = True

    # Closure: a triangle with any marked edge must also split its refinement edge
    while True:
        pending = edge_marks[tri_edges].any(axis=1) & ~edge_marks[tri_edges[:, 2]]
        if not np.any(pending):
            break
        edge_marks[tri_edges[pending, 2]] = True

    split = np.flatnonzero(edge_marks)
    new_ids = mesh.n_vertices + np.arange(split.size)
    midpoint_of = {(int(topo.edges[e, 0]), int(topo.edges[e, 1])): int(v) for e, v in zip(split, new_ids)}
    new_vertices = 0.5 * (mesh.vertices[topo.edges[split, 0]] + mesh.vertices[topo.edges[split, 1]])
    vertices = np.vstack([mesh.vertices, new_vertices])

    children = []
    parents = []
    for t, tri in enumerate(mesh.triangles.tolist()):
        pieces = _bisect(tuple(tri), midpoint_of)
        children.extend(pieces)
        parents.extend([t] * len(pieces))

    refined = make_mesh(vertices, np.array(children, dtype=np.int64), level=mesh.level + 1, parents=parents)
    get_logger().debug(
        f"Bisection of {marked.size} marked triangles: {mesh.n_triangles} -> {refined.n_triangles} triangles"
    )
    return refined
