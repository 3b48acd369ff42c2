# spaces.py - Taylor-Hood spaces, field sampling and L^p norms
"""
Lowest-order Taylor-Hood layout (P2 velocity, P1 pressure) on a TriMesh.

Degree-of-freedom layout with N = V + E velocity nodes:

    velocity component c at node i   ->  c * N + i        (c = 0, 1)
    pressure at vertex v             ->  2 * N + v
    pressure-mean multiplier         ->  2 * N + V

Velocity nodes are the mesh vertices followed by the edge midpoints, so
node V + e sits on edge e. On an element the six local nodes are its three
vertices and then the midpoints of the edges opposite vertex 0, 1, 2.

Fields are measured through SampledField, a table of values at every
volume quadrature point and at the six P2 nodes of every element.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from src.core.errors import ParameterError
from src.core.logger import get_logger
from src.fem.quadrature import DEFAULT_VOLUME_DEGREE, triangle_rule

# Barycentric coordinates of the six local P2 nodes
NODE_BARYCENTRIC = np.array([
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 0.5, 0.5],
    [0.5, 0.0, 0.5],
    [0.5, 0.5, 0.0],
])


def reference_to_barycentric(points):
    """(..., 2) reference coordinates -> (..., 3) barycentric coordinates"""
    points = np.asarray(points, dtype=float)
    x = points[..., 0]
    y = points[..., 1]
    return np.stack([1.0 - x - y, x, y], axis=-1)


def p2_basis(bary):
    """(..., 3) barycentric -> (..., 6) values of the quadratic Lagrange basis"""
    lam = np.asarray(bary, dtype=float)
    vertex = lam * (2.0 * lam - 1.0)
    edge = 4.0 * np.stack([lam[..., 1] * lam[..., 2],
                           lam[..., 2] * lam[..., 0],
                           lam[..., 0] * lam[..., 1]], axis=-1)
    return np.concatenate([vertex, edge], axis=-1)


def p2_basis_lambda_derivatives(bary):
    """(..., 3) barycentric -> (..., 6, 3) derivatives with respect to each lambda"""
    lam = np.asarray(bary, dtype=float)
    out = np.zeros(lam.shape[:-1] + (6, 3))
    for k in range(3):
        out[..., k, k] = 4.0 * lam[..., k] - 1.0
        k1 = (k + 1) % 3
        k2 = (k + 2) % 3
        out[..., 3 + k, k1] = 4.0 * lam[..., k2]
        out[..., 3 + k, k2] = 4.0 * lam[..., k1]
    return out


def barycentric_gradients(mesh):
    """(T, 3, 2) physical gradients of the barycentric coordinates"""
    p = mesh.vertices[mesh.triangles]
    two_area = 2.0 * mesh.signed_areas
    grads = np.empty((mesh.n_triangles, 3, 2))
    for k in range(3):
        a = p[:, (k + 1) % 3]
        b = p[:, (k + 2) % 3]
        grads[:, k, 0] = (a[:, 1] - b[:, 1]) / two_area
        grads[:, k, 1] = (b[:, 0] - a[:, 0]) / two_area
    return grads


@dataclass(frozen=True, eq=False)
class THSpace:
    """Taylor-Hood degree-of-freedom layout plus per-element geometry tables"""
    mesh: object
    element_nodes: np.ndarray        # (T, 6) global velocity node of each local node
    node_coords: np.ndarray          # (N, 2)
    boundary_nodes: np.ndarray       # (N,) bool
    lambda_grads: np.ndarray         # (T, 3, 2)
    quad_degree: int
    quad_ref_points: np.ndarray      # (Q, 2)
    quad_points: np.ndarray          # (T, Q, 2) physical
    quad_weights: np.ndarray         # (T, Q) physical
    phi: np.ndarray                  # (Q, 6) P2 basis at the quadrature points
    dphi: np.ndarray                 # (T, Q, 6, 2) physical P2 gradients
    psi: np.ndarray                  # (Q, 3) P1 basis at the quadrature points
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_vertices(self):
        return self.mesh.n_vertices

    @property
    def n_nodes(self):
        return self.node_coords.shape[0]

    @property
    def n_elements(self):
        return self.mesh.n_triangles

    @property
    def n_quad(self):
        return self.quad_ref_points.shape[0]

    @property
    def ndof_velocity(self):
        return 2 * self.n_nodes

    @property
    def ndof_pressure(self):
        return self.n_vertices

    @property
    def pressure_offset(self):
        return 2 * self.n_nodes

    @property
    def mean_index(self):
        return 2 * self.n_nodes + self.n_vertices

    @property
    def dim(self):
        return self.ndof_velocity + self.ndof_pressure + 1

    @property
    def dirichlet_mask(self):
        """(dim,) True on every boundary velocity dof"""
        if "dirichlet" not in self._cache:
            mask = np.zeros(self.dim, dtype=bool)
            mask[:self.n_nodes] = self.boundary_nodes
            mask[self.n_nodes:2 * self.n_nodes] = self.boundary_nodes
            self._cache["dirichlet"] = mask
        return self._cache["dirichlet"]

    @property
    def velocity_element_dofs(self):
        """(T, 12) global dofs; local index c * 6 + i is component c at local node i"""
        if "vdofs" not in self._cache:
            self._cache["vdofs"] = np.concatenate(
                [self.element_nodes, self.element_nodes + self.n_nodes], axis=1)
        return self._cache["vdofs"]

    @property
    def pressure_element_dofs(self):
        return self.mesh.triangles + self.pressure_offset

    @property
    def node_laplacians(self):
        """(T, 6) constant Laplacian of each local P2 basis function"""
        if "laplacians" not in self._cache:
            g = self.lambda_grads
            dots = np.einsum("tmd,tnd->tmn", g, g)
            lap = np.empty((self.n_elements, 6))
            for k in range(3):
                lap[:, k] = 4.0 * dots[:, k, k]
                lap[:, 3 + k] = 8.0 * dots[:, (k + 1) % 3, (k + 2) % 3]
            self._cache["laplacians"] = lap
        return self._cache["laplacians"]

    @property
    def element_node_points(self):
        """(T, 6, 2) physical coordinates of the local P2 nodes"""
        return self.node_coords[self.element_nodes]

    def physical_to_reference(self, elements, points):
        """Map physical points (M, P, 2) into the reference frame of `elements` (M,)"""
        p = self.mesh.vertices[self.mesh.triangles[elements]]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
        inv = np.linalg.inv(jac)
        return np.einsum("mij,mpj->mpi", inv, points - p[:, None, 0])


def build_space(mesh, quad_degree=DEFAULT_VOLUME_DEGREE):
    """Taylor-Hood space on `mesh` with a volume rule exact to `quad_degree`"""
    topo = mesh.edges()
    nv = mesh.n_vertices

    element_nodes = np.concatenate([mesh.triangles, nv + topo.triangle_edges], axis=1)
    midpoints = 0.5 * (mesh.vertices[topo.edges[:, 0]] + mesh.vertices[topo.edges[:, 1]])
    node_coords = np.vstack([mesh.vertices, midpoints])
    boundary_nodes = np.concatenate([mesh.boundary_flags, ~topo.interior])

    rule = triangle_rule(quad_degree)
    bary = rule.barycentric
    p = mesh.vertices[mesh.triangles]
    quad_points = np.einsum("qk,tkd->tqd", bary, p)
    quad_weights = 2.0 * mesh.areas[:, None] * rule.weights[None, :]

    lambda_grads = barycentric_gradients(mesh)
    dlam = p2_basis_lambda_derivatives(bary)
    dphi = np.einsum("qik,tkd->tqid", dlam, lambda_grads)

    space = THSpace(
        mesh=mesh,
        element_nodes=element_nodes,
        node_coords=node_coords,
        boundary_nodes=boundary_nodes,
        lambda_grads=lambda_grads,
        quad_degree=rule.exact_degree,
        quad_ref_points=rule.points,
        quad_points=quad_points,
        quad_weights=quad_weights,
        phi=p2_basis(bary),
        dphi=dphi,
        psi=bary,
    )
    get_logger().debug(
        f"Taylor-Hood space: {space.ndof_velocity} velocity dofs, {space.ndof_pressure} pressure dofs, "
        f"{space.n_quad} quadrature points per element"
    )
    return space


@dataclass(eq=False)
class THFunction:
    """Coefficient vector over a THSpace (velocity, pressure, mean multiplier)"""
    space: THSpace
    coefficients: np.ndarray

    @classmethod
    def zeros(cls, space):
        return cls(space, np.zeros(space.dim))

    @property
    def velocity(self):
        """(2, N) nodal velocity values"""
        n = self.space.n_nodes
        return self.coefficients[:2 * n].reshape(2, n)

    @property
    def pressure(self):
        return self.coefficients[self.space.pressure_offset:self.space.mean_index]

    @property
    def multiplier(self):
        return float(self.coefficients[self.space.mean_index])

    def copy(self):
        return THFunction(self.space, self.coefficients.copy())

    def velocity_only(self):
        """Copy with pressure and multiplier cleared"""
        out = self.copy()
        out.coefficients[self.space.pressure_offset:] = 0.0
        return out

    def pressure_mean(self):
        """Integral of the P1 pressure over the domain"""
        mesh = self.space.mesh
        return float(np.sum(mesh.areas * self.pressure[mesh.triangles].mean(axis=1)))

    def _check(self, other):
        if other.space is not self.space:
            raise ParameterError("THFunction operands live on different spaces")

    def __add__(self, other):
        self._check(other)
        return THFunction(self.space, self.coefficients + other.coefficients)

    def __sub__(self, other):
        self._check(other)
        return THFunction(self.space, self.coefficients - other.coefficients)

    def __mul__(self, scalar):
        return THFunction(self.space, float(scalar) * self.coefficients)

    __rmul__ = __mul__

    def __neg__(self):
        return THFunction(self.space, -self.coefficients)


class PointValues(NamedTuple):
    """Pointwise values of a THFunction"""
    velocity: np.ndarray    # (..., 2)
    gradient: np.ndarray    # (..., 2, 2), gradient[c, d] = d v_c / d x_d
    pressure: np.ndarray    # (...,)
    divergence: np.ndarray  # (...,)


def evaluate_elements(f, elements, points):
    """Evaluate f on elements (M,) at reference points (M, P, 2)"""
    space = f.space
    elements = np.asarray(elements, dtype=np.int64)
    bary = reference_to_barycentric(points)
    values = p2_basis(bary)                                   # (M, P, 6)
    dlam = p2_basis_lambda_derivatives(bary)                  # (M, P, 6, 3)
    grads = np.einsum("mpik,mkd->mpid", dlam, space.lambda_grads[elements])

    local_v = f.velocity[:, space.element_nodes[elements]]    # (2, M, 6)
    velocity = np.einsum("mpi,cmi->mpc", values, local_v)
    gradient = np.einsum("mpid,cmi->mpcd", grads, local_v)
    local_p = f.pressure[space.mesh.triangles[elements]]      # (M, 3)
    pressure = np.einsum("mpk,mk->mp", bary, local_p)
    divergence = gradient[..., 0, 0] + gradient[..., 1, 1]
    return PointValues(velocity, gradient, pressure, divergence)


def evaluate(f, element, points):
    """Velocity, velocity gradient, pressure and divergence of f on one element.

    `points` are (P, 2) reference coordinates; results have leading shape (P,).
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    vals = evaluate_elements(f, [int(element)], points[None])
    return PointValues(*(v[0] for v in vals))


def _call_field(func, x):
    """Apply an analytic field to points of shape (..., 2)"""
    flat = x.reshape(-1, 2)
    out = np.asarray(func(flat), dtype=float)
    return out.reshape(x.shape[:-1] + out.shape[1:])


def interpolate(velocity, space, pressure=None):
    """Nodal interpolant of analytic fields.

    `velocity` maps (P, 2) points to (P, 2) values, `pressure` to (P,)
    values; either may be None. Boundary velocity nodes are set to zero.
    """
    out = THFunction.zeros(space)
    if velocity is not None:
        values = _call_field(velocity, space.node_coords)
        if values.shape != (space.n_nodes, 2):
            raise ParameterError(f"velocity field returned shape {values.shape}, expected ({space.n_nodes}, 2)")
        values[space.boundary_nodes] = 0.0
        out.coefficients[:2 * space.n_nodes] = values.T.ravel()
    if pressure is not None:
        values = _call_field(pressure, space.mesh.vertices)
        out.coefficients[space.pressure_offset:space.mean_index] = values.reshape(space.n_vertices)
    if not np.all(np.isfinite(out.coefficients)):
        raise ParameterError("interpolated field is not finite at every node")
    return out


@dataclass(eq=False)
class SampledField:
    """Field values at every volume quadrature point and every local P2 node.

    quad has shape (T, Q, *shape) and nodes (T, 6, *shape); shape is () for
    scalars, (2,) for vectors and (2, 2) for tensors.
    """
    space: THSpace
    quad: np.ndarray
    nodes: np.ndarray = None

    @property
    def value_shape(self):
        return self.quad.shape[2:]

    def _combine(self, other, op):
        if isinstance(other, SampledField):
            nodes = None
            if self.nodes is not None and other.nodes is not None:
                nodes = op(self.nodes, other.nodes)
            return SampledField(self.space, op(self.quad, other.quad), nodes)
        nodes = None if self.nodes is None else op(self.nodes, other)
        return SampledField(self.space, op(self.quad, other), nodes)

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return SampledField(self.space, -self.quad, None if self.nodes is None else -self.nodes)

    def component(self, i):
        """Scalar field of one vector component"""
        return SampledField(self.space, self.quad[..., i], None if self.nodes is None else self.nodes[..., i])

    def pointwise_norm(self):
        """Euclidean (vectors) or Frobenius (tensors) norm at every sample"""
        axes = tuple(range(2, self.quad.ndim))

        def norm(a):
            if not axes:
                return np.abs(a)
            return np.sqrt(np.sum(a ** 2, axis=axes))

        return SampledField(self.space, norm(self.quad), None if self.nodes is None else norm(self.nodes))


def _node_reference_points(space):
    return np.broadcast_to(NODE_BARYCENTRIC[:, 1:], (space.n_elements, 6, 2))


def _node_values(f):
    space = f.space
    return evaluate_elements(f, np.arange(space.n_elements), _node_reference_points(space))


def sample_velocity(f):
    space = f.space
    local = f.velocity[:, space.element_nodes]                # (2, T, 6)
    quad = np.einsum("qi,cti->tqc", space.phi, local)
    nodes = np.transpose(local, (1, 2, 0)).copy()
    return SampledField(space, quad, nodes)


def sample_velocity_gradient(f):
    space = f.space
    local = f.velocity[:, space.element_nodes]
    quad = np.einsum("tqid,cti->tqcd", space.dphi, local)
    return SampledField(space, quad, _node_values(f).gradient)


def sample_divergence(f):
    grad = sample_velocity_gradient(f)
    return SampledField(
        f.space,
        grad.quad[..., 0, 0] + grad.quad[..., 1, 1],
        grad.nodes[..., 0, 0] + grad.nodes[..., 1, 1],
    )


def sample_pressure(f):
    space = f.space
    local = f.pressure[space.mesh.triangles]                  # (T, 3)
    quad = np.einsum("qk,tk->tq", space.psi, local)
    nodes = np.einsum("ik,tk->ti", NODE_BARYCENTRIC, local)
    return SampledField(space, quad, nodes)


def sample_analytic(space, func):
    """Sample an analytic field (callable on (P, 2) points) at quadrature points and nodes"""
    return SampledField(space, _call_field(func, space.quad_points), _call_field(func, space.element_node_points))


def sample_constant(space, value):
    """Constant field with the shape of `value`"""
    value = np.asarray(value, dtype=float)
    quad = np.broadcast_to(value, (space.n_elements, space.n_quad) + value.shape).copy()
    nodes = np.broadcast_to(value, (space.n_elements, 6) + value.shape).copy()
    return SampledField(space, quad, nodes)


def _region_mask(space, region):
    if region is None:
        return None
    if np.isscalar(region):
        mask = np.zeros(space.n_elements, dtype=bool)
        mask[int(region)] = True
        return mask
    region = np.asarray(region)
    if region.dtype == bool:
        return region
    mask = np.zeros(space.n_elements, dtype=bool)
    mask[region] = True
    return mask


def element_lp(field, p):
    """Per-element integral of |f|^p, or the per-element max of |f| for p = inf"""
    if not p >= 1:
        raise ParameterError(f"L^p exponent must be at least 1, got {p}")
    pointwise = field.pointwise_norm()
    if np.isinf(p):
        out = pointwise.quad.max(axis=1)
        if pointwise.nodes is not None:
            out = np.maximum(out, pointwise.nodes.max(axis=1))
        return out
    return np.sum(field.space.quad_weights * pointwise.quad ** p, axis=1)


def norm_lp(field, p, region=None):
    """L^p norm of a SampledField over the mesh, one element or an element mask"""
    per_element = element_lp(field, p)
    mask = _region_mask(field.space, region)
    if mask is not None:
        per_element = per_element[mask]
    if per_element.size == 0:
        return 0.0
    if np.isinf(p):
        return float(per_element.max())
    return float(np.sum(per_element) ** (1.0 / p))


def prolongate(f, fine_space):
    """Exact transfer of f to the space of a once-refined mesh"""
    fine_mesh = fine_space.mesh
    coarse = f.space
    if fine_mesh.parents is None or fine_mesh.parents.shape[0] != fine_mesh.n_triangles:
        raise ParameterError("fine mesh carries no refinement history")
    if fine_mesh.level != coarse.mesh.level + 1:
        raise ParameterError(
            f"prolongation needs consecutive levels, got {coarse.mesh.level} -> {fine_mesh.level}")

    parents = fine_mesh.parents
    ref_nodes = coarse.physical_to_reference(parents, fine_space.element_node_points)
    vals = evaluate_elements(f, parents, ref_nodes)

    out = THFunction.zeros(fine_space)
    n = fine_space.n_nodes
    velocity = np.zeros((2, n))
    velocity[:, fine_space.element_nodes.ravel()] = vals.velocity.reshape(-1, 2).T
    velocity[:, fine_space.boundary_nodes] = 0.0
    out.coefficients[:2 * n] = velocity.ravel()

    pressure = np.zeros(fine_space.n_vertices)
    pressure[fine_mesh.triangles.ravel()] = vals.pressure[:, :3].ravel()
    out.coefficients[fine_space.pressure_offset:fine_space.mean_index] = pressure
    out.coefficients[fine_space.mean_index] = f.multiplier
    return out
