"""Dirichlet boundary control at x = 0 by penalized least squares.

The control-to-terminal-state map ``B: g -> u_g(T)`` (zero initial state) is
paired with the adjoint march through the conormal trace ``psi`` of the
adjoint states.  For the theta-scheme used in :mod:`degheat.evolution` the
discrete identity

    (B g, v)_{L2} = sum_j pbar_j g_j dt

holds exactly, where ``pbar`` is ``psi`` averaged as
``(psi_{j-1} + 2 psi_j + psi_{j+1}) / 4`` (Crank-Nicolson) or shifted,
``psi_{j-1}`` (implicit Euler).  The synthesis gradient is built on that
identity, so it is the exact gradient of the discrete functional.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.linalg import solveh_banded

from .errors import InvalidParameterError, InvalidProblemError, SolverError
from .evolution import (
    DEFAULT_SCHEME,
    free_evolution_values,
    march_adjoint_values,
    march_forward_values,
    theta_of,
)
from .mesh import SPACE, GradedMesh, GridFunction, build_graded_mesh, check_same_mesh, l2_norm_values
from .operator import check_alpha


def _as_control(g, mesh: GradedMesh) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if g.shape != (mesh.M + 1,):
        raise InvalidParameterError(f"control must have {mesh.M + 1} time values, got {g.shape}")
    if g[0] != 0.0 or g[-1] != 0.0:
        raise InvalidProblemError("the control must satisfy g(0) = g(T) = 0")
    return g


def _check_compatible(v: np.ndarray, name: str):
    scale = max(1.0, float(np.max(np.abs(v))))
    if abs(v[0]) > 1e-12 * scale or abs(v[-1]) > 1e-12 * scale:
        raise InvalidProblemError(f"{name} must vanish at x=0 and x=1")


# -- operator B and its adjoint -------------------------------------------------

def apply_B_values(g, alpha, mesh, scheme=DEFAULT_SCHEME) -> np.ndarray:
    _, U = march_forward_values(alpha, mesh, np.zeros(mesh.N + 1), g, scheme)
    return U[-1]


def apply_B(g, alpha: float, mesh: GradedMesh, scheme: str = DEFAULT_SCHEME) -> GridFunction:
    """Terminal state of the zero-initial-state problem driven by ``g``."""
    g = _as_control(g, mesh)
    return GridFunction(mesh, apply_B_values(g, check_alpha(alpha), mesh, scheme), SPACE)


def adjoint_trace(v_values, alpha, mesh, scheme=DEFAULT_SCHEME) -> np.ndarray:
    """Conormal trace ``(x^alpha vhat_x)(0, t_j)`` of the adjoint solution."""
    op, V = march_adjoint_values(alpha, mesh, v_values, scheme)
    return op.conormal_values(V)


def pairing_weights(psi, scheme: str = DEFAULT_SCHEME) -> np.ndarray:
    """Adjoint-consistent trace ``pbar`` with ``(Bg, v) = sum pbar g dt`` exactly."""
    theta = theta_of(scheme)
    psi = np.asarray(psi, dtype=float)
    out = np.zeros_like(psi)
    if theta == 1.0:
        out[1:-1] = psi[:-2]
    else:
        out[1:-1] = 0.25 * (psi[:-2] + 2 * psi[1:-1] + psi[2:])
    return out


def duality_sides(g, v: GridFunction, alpha: float, mesh: Optional[GradedMesh] = None,
                  scheme: str = DEFAULT_SCHEME):
    """``((B g, v)_{L2}, sum_j psi(t_j) g(t_j) dt)``."""
    mesh = mesh or v.mesh
    check_same_mesh(mesh, v.mesh)
    g = _as_control(g, mesh)
    _check_compatible(v.values, "v")
    alpha = check_alpha(alpha)
    Bg = apply_B_values(g, alpha, mesh, scheme)
    lhs = float(np.dot(mesh.dual_widths, Bg * v.values))
    psi = adjoint_trace(v.values, alpha, mesh, scheme)
    rhs = float(np.sum(psi * g) * mesh.dt)
    return lhs, rhs


def duality_gap(g, v: GridFunction, alpha: float, mesh: Optional[GradedMesh] = None,
                scheme: str = DEFAULT_SCHEME) -> float:
    """Relative gap ``|lhs - rhs| / (|lhs| + |rhs| + eps)`` of the duality identity."""
    lhs, rhs = duality_sides(g, v, alpha, mesh, scheme)
    return abs(lhs - rhs) / (abs(lhs) + abs(rhs) + np.finfo(float).eps)


# -- H^1_0(0,T) geometry -------------------------------------------------------

def h10_inner(a, b, dt: float) -> float:
    return float(np.dot(np.diff(a), np.diff(b)) / dt)


def riesz_h10(psi, dt: float) -> np.ndarray:
    """Solve ``-G'' = psi`` with ``G(0) = G(T) = 0`` (three-point stencil).

    Then ``<G, d>_{H^1_0} = sum_j psi_j d_j dt`` for every ``d`` vanishing at
    both ends.
    """
    psi = np.asarray(psi, dtype=float)
    n = psi.size - 2
    if n < 1:
        raise InvalidParameterError("need at least one interior time node")
    ab = np.empty((2, n))
    ab[0] = -1.0
    ab[1] = 2.0
    try:
        inner = solveh_banded(ab, psi[1:-1] * dt * dt)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"two-point solve failed: {exc}") from exc
    return np.concatenate([[0.0], inner, [0.0]])


def B_adjoint(r_values, alpha, mesh, scheme=DEFAULT_SCHEME) -> np.ndarray:
    """H^1_0 representative of ``g -> (B g, r)_{L2}``."""
    r = np.array(r_values, dtype=float)
    r[0] = r[-1] = 0.0
    psi = adjoint_trace(r, alpha, mesh, scheme)
    return riesz_h10(pairing_weights(psi, scheme), mesh.dt)


# -- tasks and results -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ControlTask:
    """Steer ``u0`` to within ``epsilon`` of ``uT`` (discrete L2) at ``t = T``.

    ``grad_tol`` is relative to ``||B* (uT - free evolution)||_{H^1_0}``.
    ``rho`` is the initial penalty; it is divided by ten whenever a CG stage
    ends with the terminal error above ``epsilon``, down to ``rho_min``.
    """

    alpha: float
    T: float
    u0: GridFunction
    uT: GridFunction
    epsilon: float
    rho: float
    max_iters: int = 200
    grad_tol: float = 1e-8
    rho_min: float = 1e-10
    rho_factor: float = 0.1
    scheme: str = DEFAULT_SCHEME

    def __post_init__(self):
        check_alpha(self.alpha)
        if not self.epsilon > 0:
            raise InvalidParameterError("epsilon must be positive")
        if not self.rho > 0:
            raise InvalidParameterError("rho must be positive")
        if not (0 < self.rho_factor < 1):
            raise InvalidParameterError("rho_factor must lie in (0, 1)")
        if self.max_iters < 0:
            raise InvalidParameterError("max_iters must be non-negative")
        theta_of(self.scheme)
        if self.u0.kind != SPACE or self.uT.kind != SPACE:
            raise InvalidParameterError("u0 and uT must be space-only grid functions")
        check_same_mesh(self.u0.mesh, self.uT.mesh)
        if abs(self.T - self.u0.mesh.T) > 1e-12 * self.T:
            raise InvalidProblemError(f"task horizon T={self.T} differs from mesh T={self.u0.mesh.T}")


@dataclass
class ControlResult:
    g: np.ndarray
    terminal_error: float
    control_cost: float
    iterations: int
    converged: bool
    rho_final: float
    terminal: Optional[GridFunction] = None
    history: list = field(default_factory=list)
    J_history: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "terminal_error": self.terminal_error,
            "control_cost": self.control_cost,
            "iterations": self.iterations,
            "converged": self.converged,
            "rho_final": self.rho_final,
        }

    def write(self, json_path, csv_path, times, **extra) -> None:
        """Export the summary (plus ``extra`` keys) as JSON and the control as CSV "t,g"."""
        from .io import atomic_json, write_rows

        atomic_json(json_path, dict(self.summary(), **extra))
        write_rows(csv_path, ("t", "g"), zip(times, self.g))


def reduce_initial(u0: GridFunction, uT: GridFunction, alpha: float, mesh: Optional[GradedMesh] = None,
                   scheme: str = DEFAULT_SCHEME):
    """Split off the free evolution of ``u0``: returns ``(uT - uhat(T), uhat(T))``."""
    mesh = mesh or u0.mesh
    check_same_mesh(mesh, u0.mesh)
    check_same_mesh(mesh, uT.mesh)
    _check_compatible(u0.values, "u0")
    alpha = check_alpha(alpha)
    if not np.any(u0.values):
        return uT, GridFunction.zeros(mesh)
    _, U = march_forward_values(alpha, mesh, u0.values, np.zeros(mesh.M + 1), scheme)
    free = GridFunction(mesh, U[-1], SPACE)
    return uT - free, free


def functional(task: ControlTask, g, mesh: Optional[GradedMesh] = None, rho: Optional[float] = None) -> float:
    """``J(g) = 1/2 ||u_g(T) - uT||^2 + rho/2 ||g'||^2``."""
    mesh = mesh or task.u0.mesh
    g = _as_control(g, mesh)
    rho = task.rho if rho is None else rho
    target, _ = reduce_initial(task.u0, task.uT, task.alpha, mesh, task.scheme)
    Bg = apply_B_values(g, task.alpha, mesh, task.scheme)
    res = l2_norm_values(mesh, Bg - target.values)
    return float(0.5 * res ** 2 + 0.5 * rho * h10_inner(g, g, mesh.dt))


def gradient(task: ControlTask, g, mesh: Optional[GradedMesh] = None, rho: Optional[float] = None) -> np.ndarray:
    """H^1_0 gradient ``B*(B g - target) + rho g`` of :func:`functional`."""
    mesh = mesh or task.u0.mesh
    g = _as_control(g, mesh)
    rho = task.rho if rho is None else rho
    target, _ = reduce_initial(task.u0, task.uT, task.alpha, mesh, task.scheme)
    Bg = apply_B_values(g, task.alpha, mesh, task.scheme)
    return B_adjoint(Bg - target.values, task.alpha, mesh, task.scheme) + rho * g


def _cg_stage(g, Bg, target, rho, alpha, mesh, scheme, max_iters, tol_abs, J_history):
    dt = mesh.dt
    r = B_adjoint(target - Bg, alpha, mesh, scheme) - rho * g
    rr = h10_inner(r, r, dt)
    p = r.copy()
    it = 0
    while it < max_iters and np.sqrt(rr) > tol_abs:
        Bp = apply_B_values(p, alpha, mesh, scheme)
        Hp = B_adjoint(Bp, alpha, mesh, scheme) + rho * p
        pHp = h10_inner(p, Hp, dt)
        if not pHp > 0:
            break
        step = rr / pHp
        g = g + step * p
        Bg = Bg + step * Bp
        r = r - step * Hp
        rr_new = h10_inner(r, r, dt)
        p = r + (rr_new / rr) * p
        rr = rr_new
        it += 1
        J_history.append(0.5 * l2_norm_values(mesh, Bg - target) ** 2 + 0.5 * rho * h10_inner(g, g, dt))
    return g, Bg, it, float(np.sqrt(rr))


def synthesize(task: ControlTask, mesh: Optional[GradedMesh] = None) -> ControlResult:
    """Minimize the penalized functional by CG in the H^1_0 metric.

    Non-convergence is reported through ``converged = False``.
    """
    mesh = mesh or task.u0.mesh
    check_same_mesh(mesh, task.u0.mesh)
    alpha, scheme = task.alpha, task.scheme
    shifted, free = reduce_initial(task.u0, task.uT, alpha, mesh, scheme)
    target = shifted.values
    dt = mesh.dt

    g_ref = B_adjoint(target, alpha, mesh, scheme)
    tol_abs = task.grad_tol * np.sqrt(h10_inner(g_ref, g_ref, dt))

    g = np.zeros(mesh.M + 1)
    Bg = np.zeros(mesh.N + 1)
    rho, k = task.rho, 0
    total = 0
    history, J_history = [], [0.5 * l2_norm_values(mesh, target) ** 2]
    converged = False
    while True:
        g, Bg, it, gnorm = _cg_stage(g, Bg, target, rho, alpha, mesh, scheme,
                                     task.max_iters, tol_abs, J_history)
        total += it
        err = float(l2_norm_values(mesh, Bg - target))
        history.append({"rho": rho, "terminal_error": err, "iterations": it, "grad_norm": gnorm,
                        "control_cost": h10_inner(g, g, dt)})
        if err <= task.epsilon:
            converged = True
            break
        k += 1
        next_rho = float(task.rho * task.rho_factor ** k)
        if next_rho < task.rho_min * (1 - 1e-9):
            break
        rho = next_rho

    g[0] = g[-1] = 0.0
    terminal = GridFunction(mesh, Bg + free.values, SPACE)
    return ControlResult(
        g=g,
        terminal_error=float(l2_norm_values(mesh, terminal.values - task.uT.values)),
        control_cost=h10_inner(g, g, dt),
        iterations=total,
        converged=converged,
        rho_final=rho,
        terminal=terminal,
        history=history,
        J_history=J_history,
    )


def verify_control(g, u0: GridFunction, uT: GridFunction, alpha: float, scheme: str = DEFAULT_SCHEME) -> float:
    """Independent forward re-solve: ``||u_g(T) - uT||``."""
    mesh = u0.mesh
    g = _as_control(g, mesh)
    _, U = march_forward_values(alpha, mesh, u0.values, g, scheme)
    return float(l2_norm_values(mesh, U[-1] - uT.values))


def two_stage_control(u0: GridFunction, uT: GridFunction, task: ControlTask,
                      mesh: Optional[GradedMesh] = None) -> ControlResult:
    """Free evolution on ``[0, T/2]`` followed by synthesis on ``[T/2, T]``.

    ``u0`` may be any finite field (boundary values are ignored after
    ``t = 0``).  The smoothing half uses implicit Euler; the returned control
    is identically zero on the first half of the time grid.
    """
    mesh = mesh or u0.mesh
    check_same_mesh(mesh, uT.mesh)
    if mesh.M % 2:
        raise InvalidParameterError("two-stage control needs an even number of time steps")
    half = mesh.M // 2
    u1_vals = free_evolution_values(task.alpha, mesh, u0.values, half)
    mesh2 = build_graded_mesh(mesh.N, mesh.gamma, half, mesh.T / 2)
    u1 = GridFunction(mesh2, u1_vals, SPACE)
    uT2 = GridFunction(mesh2, uT.values, SPACE)
    task2 = replace(task, T=mesh2.T, u0=u1, uT=uT2)
    res2 = synthesize(task2, mesh2)

    g = np.zeros(mesh.M + 1)
    g[half:] = res2.g
    terminal = GridFunction(mesh, res2.terminal.values, SPACE)
    return ControlResult(
        g=g,
        terminal_error=res2.terminal_error,
        control_cost=h10_inner(g, g, mesh.dt),
        iterations=res2.iterations,
        converged=res2.converged,
        rho_final=res2.rho_final,
        terminal=terminal,
        history=res2.history,
        J_history=res2.J_history,
        extras={"intermediate_state": GridFunction(mesh, u1_vals, SPACE), "stage_two": res2},
    )


def verify_two_stage(g, u0: GridFunction, uT: GridFunction, alpha: float,
                     scheme: str = DEFAULT_SCHEME) -> float:
    """Re-run both stages with the emitted control and return the terminal error."""
    mesh = u0.mesh
    half = mesh.M // 2
    g = np.asarray(g, dtype=float)
    if np.any(g[:half] != 0.0):
        raise InvalidProblemError("two-stage control must vanish on the first half")
    u1 = free_evolution_values(alpha, mesh, u0.values, half)
    mesh2 = build_graded_mesh(mesh.N, mesh.gamma, half, mesh.T / 2)
    _, U = march_forward_values(alpha, mesh2, u1, g[half:], scheme)
    return float(l2_norm_values(mesh, U[-1] - uT.values))
