"""Forward (boundary-controlled) and backward (adjoint) time stepping.

The forward problem ``u_t = (x^alpha u_x)_x``, ``u(0,t) = g(t)``, ``u(1,t) = 0``
is solved through the lifting ``u = y + ell * g`` where ``ell`` is the
discrete harmonic function with ``ell(0) = 1`` and ``ell(1) = 0`` (for the
harmonic face rule it coincides with ``1 - x**(1-alpha)`` to rounding).  The
homogeneous problem for ``y`` carries the forcing ``-ell * dg/dt`` with the
step difference ``(g^{n+1} - g^n)/dt``; with that choice the lifted scheme is
algebraically the theta-scheme with the Dirichlet value imposed directly, and
the discrete duality with the adjoint march holds exactly.

Both marches use the same one-step map ``E = (I - theta dt K)^{-1}(I + (1-theta) dt K)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded

from .errors import InvalidParameterError, InvalidProblemError, SolverError
from .mesh import (
    SPACE,
    SPACE_TIME,
    GradedMesh,
    GridFunction,
    check_same_mesh,
    h1_alpha_values,
    l2_norm_values,
)
from .operator import DegenerateOperator, assemble, check_alpha

SCHEMES = {"implicit_euler": 1.0, "crank_nicolson": 0.5}
DEFAULT_SCHEME = "crank_nicolson"


def theta_of(scheme: str) -> float:
    try:
        return SCHEMES[scheme]
    except KeyError:
        raise InvalidParameterError(f"scheme must be one of {sorted(SCHEMES)}, got {scheme!r}") from None


class Stepper:
    """Factorized theta-scheme on the interior nodes.

    Works with the symmetric form ``(W + theta dt S) y' = (W - (1-theta) dt S) y + rhs``
    where ``W`` are the node weights and ``S = -W A_h`` the stiffness.
    """

    def __init__(self, op: DegenerateOperator, dt: float, theta: float):
        self.op, self.dt, self.theta = op, dt, theta
        d, e = op.stiffness_bands
        self.w = op.mesh.dual_widths[1:-1].copy()
        self.d, self.e = d, e
        ab = np.zeros((2, d.size))
        ab[1] = self.w + theta * dt * d
        ab[0, 1:] = theta * dt * e
        try:
            self._chol = cholesky_banded(ab, lower=False)
        except LinAlgError as exc:
            raise SolverError(f"factorization failed: {exc}") from exc

    def stiffness_mul(self, y: np.ndarray) -> np.ndarray:
        out = self.d * y
        out[:-1] += self.e * y[1:]
        out[1:] += self.e * y[:-1]
        return out

    def step(self, y: np.ndarray, extra=None) -> np.ndarray:
        rhs = self.w * y
        if self.theta != 1.0:
            rhs -= (1.0 - self.theta) * self.dt * self.stiffness_mul(y)
        if extra is not None:
            rhs += extra
        out = cho_solve_banded((self._chol, False), rhs, check_finite=False)
        if not np.all(np.isfinite(out)):
            raise SolverError("linear solve produced non-finite values")
        return out


@lru_cache(maxsize=32)
def _cached_stepper(mesh_key, alpha, rule, scheme):
    N, gamma, M, T = mesh_key
    from .mesh import build_graded_mesh

    mesh = build_graded_mesh(N, gamma, M, T)
    op = assemble(alpha, mesh, coefficient=rule)
    return op, Stepper(op, mesh.dt, theta_of(scheme))


def stepper_for(alpha: float, mesh: GradedMesh, scheme: str, coefficient: str = "harmonic"):
    return _cached_stepper(mesh.key(), float(alpha), coefficient, scheme)


# -- problem records ----------------------------------------------------------

def _boundary_zero(values, tol=1e-12):
    scale = max(1.0, float(np.max(np.abs(values))))
    return abs(values[0]) <= tol * scale and abs(values[-1]) <= tol * scale


@dataclass(frozen=True, eq=False)
class ForwardProblem:
    """Data of the boundary-controlled problem on ``(0,1) x (0,T)``.

    ``u0`` must vanish at both endpoints and ``g`` (values at the time nodes)
    must vanish at ``t = 0`` and ``t = T``.
    """

    alpha: float
    T: float
    u0: GridFunction
    g: np.ndarray

    def __post_init__(self):
        check_alpha(self.alpha)
        g = np.array(self.g, dtype=float)
        g.setflags(write=False)
        object.__setattr__(self, "g", g)
        mesh = self.u0.mesh
        if self.u0.kind != SPACE:
            raise InvalidProblemError("u0 must be a space-only grid function")
        if g.shape != (mesh.M + 1,):
            raise InvalidProblemError(f"g must have {mesh.M + 1} time values, got shape {g.shape}")
        if not np.all(np.isfinite(g)):
            raise InvalidProblemError("g must be finite")
        if abs(self.T - mesh.T) > 1e-12 * self.T:
            raise InvalidProblemError(f"problem horizon T={self.T} differs from mesh T={mesh.T}")
        if not _boundary_zero(self.u0.values):
            raise InvalidProblemError("u0 must vanish at x=0 and x=1")
        if g[0] != 0.0 or g[-1] != 0.0:
            raise InvalidProblemError("the control must satisfy g(0) = g(T) = 0")


@dataclass(frozen=True, eq=False)
class AdjointProblem:
    """Final data ``v`` at ``t = T`` for ``v_t + (x^alpha v_x)_x = 0``."""

    alpha: float
    T: float
    v: GridFunction

    def __post_init__(self):
        check_alpha(self.alpha)
        if self.v.kind != SPACE:
            raise InvalidProblemError("v must be a space-only grid function")
        if abs(self.T - self.v.mesh.T) > 1e-12 * self.T:
            raise InvalidProblemError(f"problem horizon T={self.T} differs from mesh T={self.v.mesh.T}")
        if not _boundary_zero(self.v.values):
            raise InvalidProblemError("v must vanish at x=0 and x=1")


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: GridFunction
    conormal_trace: np.ndarray
    l2_sq: np.ndarray
    h1_alpha_cumulative: np.ndarray
    scheme: str
    alpha: float
    direction: str = "forward"
    extras: dict = field(default_factory=dict)

    @property
    def terminal(self) -> GridFunction:
        return self.states.slice(-1)

    @property
    def mesh(self) -> GradedMesh:
        return self.states.mesh


def lifting_function(alpha: float, mesh: GradedMesh) -> GridFunction:
    """Nodal samples of ``1 - x**(1-alpha)``."""
    alpha = check_alpha(alpha)
    ell = 1.0 - mesh.nodes ** (1.0 - alpha)
    ell[0], ell[-1] = 1.0, 0.0
    return GridFunction(mesh, ell, SPACE)


def _trajectory(op, states, scheme, direction):
    mesh = op.mesh
    l2_sq = l2_norm_values(mesh, states) ** 2
    h1 = h1_alpha_values(mesh, states, op.alpha)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * mesh.dt * (h1[1:] + h1[:-1]))])
    return Trajectory(
        states=GridFunction(mesh, states, SPACE_TIME),
        conormal_trace=op.conormal_values(states),
        l2_sq=l2_sq,
        h1_alpha_cumulative=cum,
        scheme=scheme,
        alpha=op.alpha,
        direction=direction,
    )


def march_forward_values(alpha, mesh, u0_values, g, scheme=DEFAULT_SCHEME, coefficient="harmonic"):
    """Raw forward march; returns the ``(M+1, N+1)`` state array."""
    op, st = stepper_for(alpha, mesh, scheme, coefficient)
    ell = op.lifting_values
    w_ell = st.w * ell[1:-1]
    M = mesh.M
    U = np.zeros((M + 1, mesh.N + 1))
    y = np.asarray(u0_values, dtype=float)[1:-1] - ell[1:-1] * g[0]
    U[0, 1:-1] = y
    for n in range(M):
        dg = g[n + 1] - g[n]
        y = st.step(y, -w_ell * dg if dg != 0.0 else None)
        U[n + 1, 1:-1] = y
    U += np.outer(g, ell)
    U[:, 0] = g
    U[:, -1] = 0.0
    U[0] = u0_values
    return op, U


def solve_forward(p: ForwardProblem, mesh: GradedMesh = None, scheme: str = DEFAULT_SCHEME,
                  coefficient: str = "harmonic") -> Trajectory:
    """Solve the boundary-controlled problem; ``u(0,t_j) = g_j`` exactly."""
    mesh = mesh or p.u0.mesh
    check_same_mesh(mesh, p.u0.mesh)
    op, U = march_forward_values(p.alpha, mesh, p.u0.values, p.g, scheme, coefficient)
    return _trajectory(op, U, scheme, "forward")


def march_adjoint_values(alpha, mesh, v_values, scheme=DEFAULT_SCHEME, coefficient="harmonic"):
    op, st = stepper_for(alpha, mesh, scheme, coefficient)
    M = mesh.M
    V = np.zeros((M + 1, mesh.N + 1))
    z = np.asarray(v_values, dtype=float)[1:-1].copy()
    V[M, 1:-1] = z
    for n in range(M - 1, -1, -1):
        z = st.step(z)
        V[n, 1:-1] = z
    return op, V


def solve_adjoint(p: AdjointProblem, mesh: GradedMesh = None, scheme: str = DEFAULT_SCHEME,
                  coefficient: str = "harmonic") -> Trajectory:
    """Backward march from ``v`` at ``t = T``; states stored in forward time order."""
    mesh = mesh or p.v.mesh
    check_same_mesh(mesh, p.v.mesh)
    op, V = march_adjoint_values(p.alpha, mesh, p.v.values, scheme, coefficient)
    return _trajectory(op, V, scheme, "adjoint")


def free_evolution_values(alpha, mesh, u0_values, nsteps, scheme="implicit_euler",
                          coefficient="harmonic") -> np.ndarray:
    """Evolve arbitrary L2 data with zero boundary values for ``nsteps`` steps.

    Boundary values of ``u0`` are discarded after ``t = 0``.  Implicit Euler
    is the default because it damps the boundary-incompatible modes.
    """
    op, st = stepper_for(alpha, mesh, scheme, coefficient)
    y = np.asarray(u0_values, dtype=float)[1:-1].copy()
    for _ in range(nsteps):
        y = st.step(y)
    out = np.zeros(mesh.N + 1)
    out[1:-1] = y
    return out


def energy_report(tr: Trajectory, p: ForwardProblem) -> dict:
    """Both sides' ingredients of the energy estimate.

    ``data_norm_sq`` uses the H^1_0 seminorm of ``g`` (sum of squared step
    differences over dt) plus ``||u0||^2``.
    """
    mesh = tr.mesh
    g = np.asarray(p.g)
    data = float(np.sum(np.diff(g) ** 2) / mesh.dt + l2_norm_values(mesh, p.u0.values) ** 2)
    sup = float(np.max(tr.l2_sq))
    h1 = float(tr.h1_alpha_cumulative[-1])
    return {"sup_l2_sq": sup, "h1_alpha_time_integral": h1, "data_norm_sq": data}
