# assembly.py - Element-loop assembly of the discrete Navier-Stokes forms
"""
Vectorized element assembly of the Stokes blocks, the convection form
b(w; v, phi) = ((w . grad) v, phi), its Newton derivative and the discrete
adjoint operator, plus load vectors and the saddle-point system.

Blocks are returned unconstrained: A and M act on all 2N velocity dofs,
B maps velocity to the V pressure tests and `mean` holds the integrals of
the pressure basis. Boundary velocity dofs are pinned (identity row and
column, zero right-hand side) only when the saddle system is formed.

Local velocity index c * 6 + i stands for component c at local node i.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from src.core.errors import ParameterError
from src.core.logger import get_logger
from src.fem.sparse import from_arrays
from src.fem.spaces import SampledField, sample_velocity, sample_velocity_gradient


@dataclass(frozen=True, eq=False)
class SystemBlocks:
    """Raw Stokes blocks of a THSpace"""
    space: object
    nu: float
    A: sp.csr_matrix      # (2N, 2N) nu * vector Laplacian
    B: sp.csr_matrix      # (V, 2N) B[l, (c, j)] = int lambda_l d_c phi_j
    M: sp.csr_matrix      # (2N, 2N) vector mass matrix
    mean: np.ndarray      # (V,) integrals of the P1 basis


def _velocity_triplets(space, local):
    """Scatter (T, 12, 12) local velocity blocks into a 2N x 2N matrix"""
    dofs = space.velocity_element_dofs
    rows = np.broadcast_to(dofs[:, :, None], local.shape)
    cols = np.broadcast_to(dofs[:, None, :], local.shape)
    return from_arrays(space.ndof_velocity, rows, cols, local)


def _componentwise(scalar_local):
    """(T, 6, 6) scalar block -> (T, 12, 12) block diagonal in the component"""
    t = scalar_local.shape[0]
    out = np.zeros((t, 12, 12))
    out[:, :6, :6] = scalar_local
    out[:, 6:, 6:] = scalar_local
    return out


def assemble_stokes(space, nu):
    """Laplacian, divergence, mass and pressure-mean blocks"""
    if not nu > 0:
        raise ParameterError(f"viscosity must be positive, got {nu}")
    w = space.quad_weights
    stiffness = np.einsum("tq,tqid,tqjd->tij", w, space.dphi, space.dphi)
    mass = np.einsum("tq,qi,qj->tij", w, space.phi, space.phi)

    A = _velocity_triplets(space, _componentwise(nu * stiffness))
    M = _velocity_triplets(space, _componentwise(mass))

    # divergence coupling: (T, 3, 2, 6) -> (T, 3, 12)
    local_b = np.einsum("tq,ql,tqjc->tlcj", w, space.psi, space.dphi).reshape(-1, 3, 12)
    tris = space.mesh.triangles
    rows = np.broadcast_to(tris[:, :, None], local_b.shape)
    cols = np.broadcast_to(space.velocity_element_dofs[:, None, :], local_b.shape)
    B = from_arrays(space.n_vertices, rows, cols, local_b, n_cols=space.ndof_velocity)

    mean = np.bincount(tris.ravel(), weights=np.repeat(space.mesh.areas / 3.0, 3), minlength=space.n_vertices)

    get_logger().debug(f"Stokes blocks assembled: nu={nu}, {space.n_elements} elements")
    return SystemBlocks(space=space, nu=float(nu), A=A, B=B, M=M, mean=mean)


def _transport_samples(w):
    values = sample_velocity(w).quad
    if not np.all(np.isfinite(values)):
        raise ParameterError("transport field is not finite")
    return values


def _convection_local(space, w_quad):
    """(T, 6, 6) scalar blocks of int (w . grad phi_j) phi_i"""
    advect = np.einsum("tqd,tqjd->tqj", w_quad, space.dphi)
    return np.einsum("tq,qi,tqj->tij", space.quad_weights, space.phi, advect)


def _reaction_local(space, w_grad):
    """(T, 12, 12) blocks of int phi_j d_d w_c phi_i at [(c, i), (d, j)]"""
    local = np.einsum("tq,qi,qj,tqcd->tcidj", space.quad_weights, space.phi, space.phi, w_grad)
    return local.reshape(-1, 12, 12)


def assemble_convection(space, w):
    """N(w) with entries int (w . grad) phi_j . phi_i"""
    return _velocity_triplets(space, _componentwise(_convection_local(space, _transport_samples(w))))


def _jacobian_local(space, w):
    w_quad = _transport_samples(w)
    w_grad = sample_velocity_gradient(w).quad
    return _componentwise(_convection_local(space, w_quad)) + _reaction_local(space, w_grad)


def assemble_newton_jacobian(space, w):
    """N(w) + N'(w): derivative of v -> N(v) v at w"""
    return _velocity_triplets(space, _jacobian_local(space, w))


def assemble_adjoint_operator(space, w):
    """Transpose of the Newton Jacobian, assembled from transposed element blocks.

    Row i, column j holds b(w; phi_i, phi_j) + b(phi_i; w, phi_j): the test
    direction is the linearization direction and phi_j carries the adjoint.
    """
    return _velocity_triplets(space, np.transpose(_jacobian_local(space, w), (0, 2, 1)))


def quadrature_values(space, f):
    """(T, Q, 2) values of a load given as callable, SampledField, QuadControl or array"""
    if f is None:
        return np.zeros((space.n_elements, space.n_quad, 2))
    if isinstance(f, SampledField):
        values = f.quad
    elif hasattr(f, "values"):
        values = np.asarray(f.values, dtype=float)
    elif callable(f):
        values = np.asarray(f(space.quad_points.reshape(-1, 2)), dtype=float)
        values = values.reshape(space.n_elements, space.n_quad, 2)
    else:
        values = np.asarray(f, dtype=float)
    if values.shape != (space.n_elements, space.n_quad, 2):
        raise ParameterError(f"load has shape {values.shape}, expected ({space.n_elements}, {space.n_quad}, 2)")
    if not np.all(np.isfinite(values)):
        raise ParameterError("load is not finite at every quadrature point")
    return values


def assemble_load(space, f, zero_dirichlet=False):
    """Velocity load vector int f . phi_i over all 2N velocity dofs"""
    values = quadrature_values(space, f)
    local = np.einsum("tq,qi,tqc->tci", space.quad_weights, space.phi, values).reshape(-1, 12)
    load = np.bincount(space.velocity_element_dofs.ravel(), weights=local.ravel(),
                       minlength=space.ndof_velocity)
    if zero_dirichlet:
        load[space.dirichlet_mask[:space.ndof_velocity]] = 0.0
    return load


def trilinear_value(space, v1, v2, v3):
    """b(v1; v2, v3) = int ((v1 . grad) v2) . v3"""
    for f in (v1, v2, v3):
        if f.space is not space:
            raise ParameterError("trilinear_value operands must share the space")
    a = sample_velocity(v1).quad
    grad = sample_velocity_gradient(v2).quad
    c = sample_velocity(v3).quad
    return float(np.einsum("tq,tqd,tqcd,tqc->", space.quad_weights, a, grad, c))


def pin_dirichlet(matrix, mask):
    """Zero the rows and columns of masked dofs and put 1 on their diagonal"""
    keep = sp.diags((~mask).astype(float))
    pinned = keep @ matrix @ keep + sp.diags(mask.astype(float))
    return sp.csr_matrix(pinned)


def saddle_matrix(blocks, velocity_block=None):
    """Pinned saddle-point matrix [[A + X, -B^T, 0], [-B, 0, m], [0, m^T, 0]]"""
    space = blocks.space
    top_left = blocks.A if velocity_block is None else blocks.A + velocity_block
    mean = sp.csr_matrix(blocks.mean.reshape(-1, 1))
    matrix = sp.bmat([
        [top_left, -blocks.B.T, None],
        [-blocks.B, None, mean],
        [None, mean.T, None],
    ], format="csr")
    return pin_dirichlet(matrix, space.dirichlet_mask)


def embed_velocity(space, velocity_vector):
    """Full-dimension right-hand side from a velocity vector, boundary entries zeroed"""
    rhs = np.zeros(space.dim)
    rhs[:space.ndof_velocity] = velocity_vector
    rhs[space.dirichlet_mask] = 0.0
    return rhs
