# problems.py - Manufactured Navier-Stokes and optimal control problems
"""
Analytic test problems on the unit square built from separable stream
functions psi(x1, x2) = A(x1) B(x2), which give divergence-free velocities
(d2 psi, -d1 psi) with zero trace whenever A and B vanish to second order
at 0 and 1.

All fields are closures on (P, 2) point arrays. Vector fields return
(P, 2), gradients (P, 2, 2) with entry [c, d] = d v_c / d x_d.
"""

from dataclasses import dataclass

import numpy as np

from src.core.errors import ParameterError
from src.control.ocp import ControlBounds, OcpData

PI = np.pi


def sin2():
    """S(t) = sin^2(pi t) and its first three derivatives"""
    return (
        lambda t: np.sin(PI * t) ** 2,
        lambda t: PI * np.sin(2 * PI * t),
        lambda t: 2 * PI ** 2 * np.cos(2 * PI * t),
        lambda t: -4 * PI ** 3 * np.sin(2 * PI * t),
    )


def sin2_shifted():
    """S(t) (t - 1/2) and its first three derivatives"""
    s, s1, s2, s3 = sin2()
    return (
        lambda t: s(t) * (t - 0.5),
        lambda t: s1(t) * (t - 0.5) + s(t),
        lambda t: s2(t) * (t - 0.5) + 2 * s1(t),
        lambda t: s3(t) * (t - 0.5) + 3 * s2(t),
    )


@dataclass(frozen=True)
class SeparableStream:
    """Velocity field of the stream function A(x1) B(x2)"""
    A: tuple
    B: tuple

    def _factors(self, x):
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        a = [f(x[:, 0]) for f in self.A]
        b = [f(x[:, 1]) for f in self.B]
        return a, b

    def velocity(self, x):
        a, b = self._factors(x)
        return np.column_stack([a[0] * b[1], -a[1] * b[0]])

    def gradient(self, x):
        a, b = self._factors(x)
        g = np.empty((a[0].shape[0], 2, 2))
        g[:, 0, 0] = a[1] * b[1]
        g[:, 0, 1] = a[0] * b[2]
        g[:, 1, 0] = -a[2] * b[0]
        g[:, 1, 1] = -a[1] * b[1]
        return g

    def laplacian(self, x):
        a, b = self._factors(x)
        return np.column_stack([a[2] * b[1] + a[0] * b[3], -a[3] * b[0] - a[1] * b[2]])

    def divergence(self, x):
        g = self.gradient(x)
        return g[:, 0, 0] + g[:, 1, 1]


def _pressure(x):
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    return np.sin(2 * PI * x[:, 0]) * np.cos(2 * PI * x[:, 1])


def _pressure_gradient(x):
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    return np.column_stack([
        2 * PI * np.cos(2 * PI * x[:, 0]) * np.cos(2 * PI * x[:, 1]),
        -2 * PI * np.sin(2 * PI * x[:, 0]) * np.sin(2 * PI * x[:, 1]),
    ])


def _adjoint_pressure(x):
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    return np.sin(2 * PI * x[:, 0]) * np.sin(2 * PI * x[:, 1])


def _adjoint_pressure_gradient(x):
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    return np.column_stack([
        2 * PI * np.cos(2 * PI * x[:, 0]) * np.sin(2 * PI * x[:, 1]),
        2 * PI * np.sin(2 * PI * x[:, 0]) * np.cos(2 * PI * x[:, 1]),
    ])


def convection(stream, x):
    """(v . grad) v of a stream velocity"""
    return np.einsum("pcd,pd->pc", stream.gradient(x), stream.velocity(x))


@dataclass(frozen=True)
class ManufacturedNS:
    """Exact solution of -nu Lap y + (y . grad) y + grad p = f with zero control"""
    nu: float
    stream: SeparableStream

    def velocity(self, x):
        return self.stream.velocity(x)

    def velocity_gradient(self, x):
        return self.stream.gradient(x)

    def pressure(self, x):
        return _pressure(x)

    def pressure_gradient(self, x):
        return _pressure_gradient(x)

    def forcing(self, x):
        return -self.nu * self.stream.laplacian(x) + convection(self.stream, x) + _pressure_gradient(x)


def make_ns_benchmark(nu):
    if not nu > 0:
        raise ParameterError(f"viscosity must be positive, got {nu}")
    return ManufacturedNS(nu=float(nu), stream=SeparableStream(sin2(), sin2()))


@dataclass(frozen=True)
class ManufacturedOCP:
    """Optimality system with prescribed state, adjoint and bang-bang control.

    The control is the bang-bang map of the adjoint, the state equation is
    closed by the extra forcing f and the adjoint equation by the desired
    state y_Omega.
    """
    nu: float
    bounds: ControlBounds
    state: SeparableStream
    adjoint: SeparableStream

    def velocity(self, x):
        return self.state.velocity(x)

    def velocity_gradient(self, x):
        return self.state.gradient(x)

    def pressure(self, x):
        return _pressure(x)

    def pressure_gradient(self, x):
        return _pressure_gradient(x)

    def adjoint_velocity(self, x):
        return self.adjoint.velocity(x)

    def adjoint_gradient(self, x):
        return self.adjoint.gradient(x)

    def adjoint_pressure(self, x):
        return _adjoint_pressure(x)

    def adjoint_pressure_gradient(self, x):
        return _adjoint_pressure_gradient(x)

    def control(self, x):
        z = self.adjoint.velocity(x)
        a, b = self.bounds.a, self.bounds.b
        return np.where(z > 0.0, a, np.where(z < 0.0, b, 0.5 * (a + b)))

    def extra_forcing(self, x):
        return (-self.nu * self.state.laplacian(x) + convection(self.state, x)
                + _pressure_gradient(x) - self.control(x))

    def desired_state(self, x):
        y = self.state.velocity(x)
        z = self.adjoint.velocity(x)
        transport = np.einsum("pcd,pd->pc", self.adjoint.gradient(x), y)
        transposed = np.einsum("pdc,pd->pc", self.state.gradient(x), z)
        return (y + self.nu * self.adjoint.laplacian(x) + transport - transposed
                - _adjoint_pressure_gradient(x))

    def data(self, newton_tol=1e-10, newton_max=30, line_search_evals=20):
        """OcpData with the analytic desired state and forcing"""
        return OcpData(
            nu=self.nu,
            bounds=self.bounds,
            y_omega=self.desired_state,
            extra_f=self.extra_forcing,
            newton_tol=newton_tol,
            newton_max=newton_max,
            line_search_evals=line_search_evals,
        )


def make_ocp_benchmark(nu, bounds=None):
    if not nu > 0:
        raise ParameterError(f"viscosity must be positive, got {nu}")
    if bounds is None:
        bounds = ControlBounds(a=(-1.0, -1.0), b=(1.0, 1.0))
    elif not isinstance(bounds, ControlBounds):
        a, b = bounds
        bounds = ControlBounds(a=a, b=b)
    return ManufacturedOCP(
        nu=float(nu),
        bounds=bounds,
        state=SeparableStream(sin2(), sin2()),
        adjoint=SeparableStream(sin2_shifted(), sin2()),
    )
