"""Flux-form discretization of ``A u = (x**alpha u_x)_x`` and related checks.

Fluxes live on cell faces (the cells of the graded mesh), values on nodes:

    F_{i+1/2} = c_{i+1/2} (u_{i+1} - u_i) / h_{i+1/2}
    (A_h u)_i = (F_{i+1/2} - F_{i-1/2}) / hbar_i

with ``hbar`` the trapezoidal node weights.  The default face coefficient is
the harmonic cell mean of ``x**alpha``,

    c_{i+1/2} = (1 - alpha) h / (x_{i+1}**(1-alpha) - x_i**(1-alpha)),

which makes the discrete flux of ``1 - x**(1-alpha)`` exactly ``-(1-alpha)``
on every face, so the lifting function lies in the discrete kernel and the
first-face flux is a consistent conormal trace.  The plain midpoint rule
``((x_i + x_{i+1})/2)**alpha`` is available as ``coefficient="midpoint"``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal

from .errors import (
    EigenSolveError,
    HypothesisViolationError,
    InvalidParameterError,
    UnsupportedRegimeError,
)
from .mesh import (
    SPACE,
    GradedMesh,
    GridFunction,
    check_same_mesh,
    difference_quotients,
    cell_weighted_sum,
    l2_norm_values,
    nodal_weighted_sum,
)

DIRICHLET = "dirichlet"
NONE = "none"
_BC = (DIRICHLET, NONE)
COEFFICIENT_RULES = ("harmonic", "midpoint")


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 <= alpha < 1.0):
        raise UnsupportedRegimeError(
            f"alpha={alpha!r} is outside [0, 1); Dirichlet data at x=0 is only "
            "meaningful in the weakly degenerate regime"
        )
    return alpha


def face_coefficients(alpha: float, mesh: GradedMesh, rule: str = "harmonic") -> np.ndarray:
    x, h = mesh.nodes, mesh.cell_widths
    if rule == "midpoint":
        return mesh.midpoints ** alpha
    if rule == "harmonic":
        if alpha == 0.0:
            return np.ones_like(h)
        q = 1.0 - alpha
        return q * h / (x[1:] ** q - x[:-1] ** q)
    raise InvalidParameterError(f"unknown coefficient rule {rule!r}")


@dataclass(frozen=True, eq=False)
class DegenerateOperator:
    alpha: float
    mesh: GradedMesh
    face_coefficients: np.ndarray
    bc_left: str = DIRICHLET
    bc_right: str = DIRICHLET
    rule: str = "harmonic"

    # -- tridiagonal structure ---------------------------------------------

    @cached_property
    def face_conductance(self) -> np.ndarray:
        """``c / h`` on each face."""
        g = self.face_coefficients / self.mesh.cell_widths
        g.setflags(write=False)
        return g

    def tridiagonal(self):
        """Rows ``(lower, diag, upper)`` of A_h over all nodes."""
        N = self.mesh.N
        g = self.face_conductance
        hb = self.mesh.dual_widths
        lower, diag, upper = np.zeros(N + 1), np.zeros(N + 1), np.zeros(N + 1)
        lower[1:-1] = g[:-1] / hb[1:-1]
        upper[1:-1] = g[1:] / hb[1:-1]
        diag[1:-1] = -(g[:-1] + g[1:]) / hb[1:-1]
        if self.bc_left == NONE:
            upper[0], diag[0] = g[0] / hb[0], -g[0] / hb[0]
        if self.bc_right == NONE:
            lower[-1], diag[-1] = g[-1] / hb[-1], -g[-1] / hb[-1]
        return lower, diag, upper

    @cached_property
    def stiffness_bands(self):
        """Symmetric interior stiffness ``S = -W A_h`` as (diag, offdiag)."""
        g = self.face_conductance
        d = g[:-1] + g[1:]
        e = -g[1:-1]
        return d, e

    @cached_property
    def lifting_values(self) -> np.ndarray:
        """Discrete harmonic function equal to 1 at x=0 and 0 at x=1."""
        r = np.concatenate([[0.0], np.cumsum(1.0 / self.face_conductance)])
        ell = 1.0 - r / r[-1]
        ell[0], ell[-1] = 1.0, 0.0
        ell.setflags(write=False)
        return ell

    # -- actions -------------------------------------------------------------

    def fluxes(self, values) -> np.ndarray:
        return np.diff(np.asarray(values, dtype=float), axis=-1) * self.face_conductance

    def apply_values(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        F = self.fluxes(values)
        hb = self.mesh.dual_widths
        out = np.zeros_like(values)
        out[..., 1:-1] = (F[..., 1:] - F[..., :-1]) / hb[1:-1]
        if self.bc_left == NONE:
            out[..., 0] = F[..., 0] / hb[0]
        if self.bc_right == NONE:
            out[..., -1] = -F[..., -1] / hb[-1]
        return out

    def apply(self, f: GridFunction) -> GridFunction:
        check_same_mesh(self.mesh, f.mesh)
        return GridFunction(f.mesh, self.apply_values(f.values), f.kind)

    def conormal_values(self, values) -> np.ndarray:
        """First-face flux, the discrete limit of ``x**alpha u_x`` at 0+."""
        values = np.asarray(values, dtype=float)
        return (values[..., 1] - values[..., 0]) * self.face_conductance[0]

    def right_conormal_values(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        return (values[..., -1] - values[..., -2]) * self.face_conductance[-1]


def assemble(alpha: float, mesh: GradedMesh, bc_left: str = DIRICHLET,
             bc_right: str = DIRICHLET, coefficient: str = "harmonic") -> DegenerateOperator:
    """Assemble the flux-form operator for ``(x**alpha u_x)_x`` on ``mesh``."""
    alpha = check_alpha(alpha)
    for bc in (bc_left, bc_right):
        if bc not in _BC:
            raise InvalidParameterError(f"boundary tag must be one of {_BC}, got {bc!r}")
    c = face_coefficients(alpha, mesh, coefficient)
    c.setflags(write=False)
    return DegenerateOperator(alpha, mesh, c, bc_left, bc_right, coefficient)


def apply(op: DegenerateOperator, f: GridFunction) -> GridFunction:
    return op.apply(f)


def conormal_trace_at_zero(op: DegenerateOperator, f: GridFunction) -> float:
    check_same_mesh(op.mesh, f.mesh)
    if f.kind != SPACE:
        raise InvalidParameterError("conormal trace expects a space-only function")
    return float(op.conormal_values(f.values))


def operator_rows(op: DegenerateOperator):
    lower, diag, upper = op.tridiagonal()
    return [(i, lower[i], diag[i], upper[i]) for i in range(op.mesh.N + 1)]


def write_operator_csv(op: DegenerateOperator, path) -> None:
    from .io import write_rows

    write_rows(path, ("i", "lower", "diag", "upper"), operator_rows(op))


# -- eigenpairs ----------------------------------------------------------------

def eigen_smallest(op: DegenerateOperator, k: int = 1):
    """The ``k`` smallest eigenpairs of ``-A_h`` with Dirichlet conditions.

    Solves ``S phi = lam W phi`` through the symmetric tridiagonal matrix
    ``W^{-1/2} S W^{-1/2}`` (LAPACK bisection plus inverse iteration).
    Eigenfunctions are L2-normalized and signed so that ``phi(x_1) > 0``.
    """
    if op.bc_left != DIRICHLET or op.bc_right != DIRICHLET:
        raise InvalidParameterError("eigen_smallest needs Dirichlet conditions at both ends")
    n_int = op.mesh.N - 1
    if not (1 <= k <= n_int):
        raise InvalidParameterError(f"k must be in [1, {n_int}], got {k}")
    d, e = op.stiffness_bands
    w = op.mesh.dual_widths[1:-1]
    sw = np.sqrt(w)
    try:
        lam, Y = eigh_tridiagonal(d / w, e / (sw[:-1] * sw[1:]), select="i",
                                  select_range=(0, k - 1))
    except (LinAlgError, ValueError) as exc:
        raise EigenSolveError(str(exc)) from exc
    if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
        raise EigenSolveError("eigensolver returned non-positive or non-finite eigenvalues")
    out = []
    for j in range(k):
        phi = np.zeros(op.mesh.N + 1)
        phi[1:-1] = Y[:, j] / sw
        phi /= l2_norm_values(op.mesh, phi)
        if phi[1] < 0:
            phi = -phi
        out.append((float(lam[j]), GridFunction(op.mesh, phi, SPACE)))
    return out


# -- Hardy-type bounds ---------------------------------------------------------

@dataclass(frozen=True)
class HardyReport:
    """Margins of the pointwise flux/solution bounds and the integral ratio.

    ``proof_constant`` is ``(1 + (2/(3-2alpha))**2) / beta``, the constant the
    two pointwise bounds yield for the weighted integral bound.
    """

    flux_bound_margin: float
    solution_bound_margin: float
    integral_bound_ratio: float
    graph_norm: float
    conormal_trace: float
    integral_lhs: float
    proof_constant: float


def graph_norm_values(op: DegenerateOperator, values) -> float:
    mesh = op.mesh
    return float(l2_norm_values(mesh, values) + l2_norm_values(mesh, op.apply_values(values)))


def hardy_check(f: GridFunction, alpha: float, beta: float, op: DegenerateOperator,
                trace_tol: float = 1e-2) -> HardyReport:
    """Evaluate the three weighted bounds for ``f`` in the discrete D(A).

    The hypothesis ``x**alpha f_x -> 0`` is enforced as
    ``|first-face flux| <= trace_tol * |f|_{D(A)}``.
    """
    check_same_mesh(op.mesh, f.mesh)
    if f.kind != SPACE:
        raise InvalidParameterError("hardy_check expects a space-only function")
    if op.alpha != alpha:
        raise InvalidParameterError(f"operator built for alpha={op.alpha}, got alpha={alpha}")
    if beta <= 0:
        raise InvalidParameterError(f"beta must be positive, got {beta}")
    mesh = op.mesh
    u = f.values
    gnorm = graph_norm_values(op, u)
    trace = float(op.conormal_values(u))
    if u[0] != 0.0:
        raise HypothesisViolationError(f"f(0) = {u[0]!r} must vanish")
    if abs(trace) > trace_tol * gnorm:
        raise HypothesisViolationError(
            f"conormal trace at 0 is {trace!r}, exceeding {trace_tol:g} * |f|_D(A) = {trace_tol * gnorm!r}"
        )
    proof_c = (1.0 + (2.0 / (3.0 - 2.0 * alpha)) ** 2) / beta
    if gnorm == 0.0:
        return HardyReport(0.0, 0.0, 0.0, 0.0, trace, 0.0, proof_c)

    F = op.fluxes(u)
    m = mesh.midpoints
    flux_margin = float(np.min(gnorm * np.sqrt(m) - np.abs(F)))

    x = mesh.nodes[1:]
    sol_margin = float(np.min(2.0 / (3.0 - 2.0 * alpha) * gnorm * np.sqrt(x)
                              - np.abs(x ** (alpha - 1.0) * u[1:])))

    lhs = float(nodal_weighted_sum(mesh, u ** 2, 2 * alpha + beta - 4)
                + cell_weighted_sum(mesh, difference_quotients(mesh, u) ** 2, 2 * alpha + beta - 2))
    return HardyReport(flux_margin, sol_margin, lhs / gnorm ** 2, gnorm, trace, lhs, proof_c)
