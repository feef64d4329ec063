"""Carleman weights, admissibility, the L_s^+/L_s^- split and weighted sides.

Weights: ``l(t) = 1/(t(T-t))``, ``p(x) = -x**beta``, ``phi = p l``.
All space-time integrals run over the interior time band ``t_1 .. t_{M-1}``
(``l`` blows up at both ends) with the rectangle rule, and over space with
the singular-weight quadrature of :mod:`degheat.mesh`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    AdmissibilityError,
    BoundaryConditionError,
    HypothesisViolationError,
    InvalidParameterError,
    WeightSingularityError,
)
from .mesh import (
    SPACE_TIME,
    GradedMesh,
    GridFunction,
    cell_weighted_sum,
    difference_quotients,
    nodal_weighted_sum,
)
from .operator import DegenerateOperator, assemble

LOG_FLOOR = -700.0

THEOREM = "theorem"
COROLLARY = "corollary"


@dataclass(frozen=True)
class CarlemanContext:
    alpha: float
    beta: float
    T: float
    s: float
    report: dict = field(default_factory=dict, compare=False, repr=False)

    def with_s(self, s: float) -> "CarlemanContext":
        return validate_context(self.alpha, self.beta, self.T, s)


def _conditions(alpha, beta, T, s):
    product = beta * (alpha + beta - 1) * (alpha + beta - 2) * (2 * alpha + beta - 3)
    return [
        ("alpha in (0,1)", "min(alpha, 1 - alpha)", min(alpha, 1 - alpha)),
        ("T > 0", "T", T),
        ("s > 0", "s", s),
        ("beta > 1 - alpha", "beta - (1 - alpha)", beta - (1 - alpha)),
        ("beta < 1 - alpha/2", "(1 - alpha/2) - beta", (1 - alpha / 2) - beta),
        ("alpha + beta - 1 > 0", "alpha + beta - 1", alpha + beta - 1),
        ("alpha + beta - 2 < 0", "-(alpha + beta - 2)", -(alpha + beta - 2)),
        ("2 alpha + beta - 3 < 0", "-(2 alpha + beta - 3)", -(2 * alpha + beta - 3)),
        ("-2 beta + 2 - alpha > 0", "-2 beta + 2 - alpha", -2 * beta + 2 - alpha),
        ("beta (alpha+beta-1)(alpha+beta-2)(2alpha+beta-3) > 0", "product", product),
    ]


def admissibility_report(alpha: float, beta: float, T: float = 1.0, s: float = 1.0) -> dict:
    """Every inequality with its margin (positive margin means it holds)."""
    rows = [
        {"inequality": name, "margin_expression": expr, "margin": float(val), "holds": bool(val > 0)}
        for name, expr, val in _conditions(float(alpha), float(beta), float(T), float(s))
    ]
    return {
        "alpha": float(alpha),
        "beta": float(beta),
        "T": float(T),
        "s": float(s),
        "beta_interval": [1 - float(alpha), 1 - float(alpha) / 2],
        "product": rows[-1]["margin"],
        "minus_2beta_plus_2_minus_alpha": rows[-2]["margin"],
        "inequalities": rows,
        "valid": all(r["holds"] for r in rows),
    }


def validate_context(alpha: float, beta: float, T: float = 1.0, s: float = 1.0) -> CarlemanContext:
    """Return a context iff ``beta`` lies strictly inside ``(1-alpha, 1-alpha/2)``."""
    report = admissibility_report(alpha, beta, T, s)
    if not report["valid"]:
        failed = [r["inequality"] for r in report["inequalities"] if not r["holds"]]
        raise AdmissibilityError("inadmissible Carleman parameters: " + "; ".join(failed), report)
    return CarlemanContext(float(alpha), float(beta), float(T), float(s), report)


# -- weights -------------------------------------------------------------------

def l_funcs(T: float, t):
    """``l, l', l''`` at ``t`` (no singularity check)."""
    t = np.asarray(t, dtype=float)
    q = t * (T - t)
    l = 1.0 / q
    dl = (2 * t - T) * l ** 2
    d2l = 2 * l ** 2 + 2 * (T - 2 * t) ** 2 * l ** 3
    return l, dl, d2l


@dataclass(frozen=True)
class WeightValues:
    l: np.ndarray
    p: np.ndarray
    phi: np.ndarray
    phi_x: np.ndarray
    phi_t: np.ndarray
    phi_tt: np.ndarray
    phi_tx: np.ndarray
    phi_xx: np.ndarray


def weights(ctx: CarlemanContext, x, t) -> WeightValues:
    """Closed-form weights and derivatives at ``(x, t)`` (broadcast)."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any((t <= 0) | (t >= ctx.T)):
        raise WeightSingularityError("l(t) is singular at t = 0 and t = T")
    if np.any((x < 0) | (x > 1)):
        raise InvalidParameterError("x must lie in [0, 1]")
    b = ctx.beta
    l, dl, d2l = l_funcs(ctx.T, t)
    with np.errstate(divide="ignore"):
        p = -x ** b
        dp = -b * x ** (b - 1)
        d2p = -b * (b - 1) * x ** (b - 2)
    return WeightValues(l=l, p=p, phi=p * l, phi_x=dp * l, phi_t=p * dl, phi_tt=p * d2l,
                        phi_tx=dp * dl, phi_xx=d2p * l)


def log_weight(ctx: CarlemanContext, x, t) -> np.ndarray:
    """``2 s phi`` clamped below at -700 so ``exp`` underflows harmlessly."""
    l, _, _ = l_funcs(ctx.T, t)
    return np.maximum(-2.0 * ctx.s * np.asarray(x) ** ctx.beta * l, LOG_FLOOR)


def coefficient_signs(ctx: CarlemanContext) -> dict:
    """Coefficients whose signs drive the lower bounds for J2, J4 and J5."""
    a, b = ctx.alpha, ctx.beta
    k = 2 - 2 * b - a
    return {
        "third_derivative_product": b * (a + b - 1) * (a + b - 2) * (2 * a + b - 3),
        "j4_coefficient": b * k,
        "j5_coefficient": b ** 3 * k,
        "exp_cubic": 2 * a + 3 * b - 4,
        "exp_cubic_upper": 2 * a + 4 * b - 4,
        "exp_j3": a + 2 * b - 2,
        "exp_gap": (2 * a + 3 * b - 4) - (a + 2 * b - 2),
    }


def exponent_orderings(ctx: CarlemanContext) -> dict:
    c = coefficient_signs(ctx)
    return {
        "cubic_below_upper": c["exp_cubic"] < c["exp_cubic_upper"],
        "upper_negative": c["exp_cubic_upper"] < 0,
        "gap_negative": c["exp_gap"] < 0,
    }


def third_derivative_closed_form(ctx: CarlemanContext, x, t):
    """``(x^a (x^a phi_x)_xx)_x = -b(a+b-1)(a+b-2)(2a+b-3) l x^(2a+b-4)``."""
    a, b = ctx.alpha, ctx.beta
    l, _, _ = l_funcs(ctx.T, t)
    return -b * (a + b - 1) * (a + b - 2) * (2 * a + b - 3) * l * np.asarray(x) ** (2 * a + b - 4)


def l_second_derivative_ratio(T: float, M: int) -> float:
    """``max |l''| / l**3`` over the interior nodes of an ``M``-step grid."""
    t = np.arange(1, M) * (T / M)
    l, _, d2l = l_funcs(T, t)
    return float(np.max(np.abs(d2l) / l ** 3))


# -- discrete derivatives ------------------------------------------------------

def nodal_gradient(mesh: GradedMesh, values: np.ndarray) -> np.ndarray:
    """Second-order nodal ``u_x`` on the nonuniform grid (last axis is space)."""
    x = mesh.nodes
    h = mesh.cell_widths
    hm, hp = h[:-1], h[1:]
    u = np.asarray(values, dtype=float)
    out = np.empty_like(u)
    out[..., 1:-1] = (hm ** 2 * (u[..., 2:] - u[..., 1:-1]) + hp ** 2 * (u[..., 1:-1] - u[..., :-2])) / (
        hm * hp * (hm + hp)
    )
    out[..., 0] = (u[..., 1] - u[..., 0]) / (x[1] - x[0])
    out[..., -1] = (u[..., -1] - u[..., -2]) / (x[-1] - x[-2])
    return out


def _band_time_derivative(mesh: GradedMesh, values: np.ndarray) -> np.ndarray:
    return (values[2:] - values[:-2]) / (2 * mesh.dt)


def _require_space_time(w: GridFunction, name: str):
    if w.kind != SPACE_TIME:
        raise InvalidParameterError(f"{name} must be a space-time grid function")


def _check_dirichlet(w: GridFunction, name: str, tol=1e-12):
    vals = w.values
    scale = max(1.0, float(np.max(np.abs(vals))))
    if np.max(np.abs(vals[:, 0])) > tol * scale or np.max(np.abs(vals[:, -1])) > tol * scale:
        raise BoundaryConditionError(f"{name} must vanish at x = 0 and x = 1 for every time node")


def _operator(ctx: CarlemanContext, mesh: GradedMesh, op: Optional[DegenerateOperator]):
    if op is None:
        return assemble(ctx.alpha, mesh)
    if op.alpha != ctx.alpha:
        raise InvalidParameterError("operator alpha differs from context alpha")
    return op


def decompose_Ls(w: GridFunction, ctx: CarlemanContext, op: Optional[DegenerateOperator] = None):
    """``(L_s^+ w, L_s^- w)`` on the interior nodes of the time band.

    Entries outside the band (``t_0``, ``t_M``) and at the boundary nodes are
    zero.
    """
    _require_space_time(w, "w")
    _check_dirichlet(w, "w")
    mesh = w.mesh
    op = _operator(ctx, mesh, op)
    a, b, s = ctx.alpha, ctx.beta, ctx.s
    x = mesh.nodes[1:-1]
    t = mesh.times[1:-1][:, None]
    l, dl, _ = l_funcs(ctx.T, t)

    W = w.values
    Wb = W[1:-1]
    Aw = op.apply_values(Wb)[:, 1:-1]
    wx = nodal_gradient(mesh, Wb)[:, 1:-1]
    wt = _band_time_derivative(mesh, W)[:, 1:-1]
    wi = Wb[:, 1:-1]

    phi_t = -(x ** b) * dl
    xa_phix = -b * l * x ** (a + b - 1)
    xa_phix_sq = b ** 2 * l ** 2 * x ** (a + 2 * b - 2)
    d_xa_phix = -b * (a + b - 1) * l * x ** (a + b - 2)

    plus = np.zeros_like(W)
    minus = np.zeros_like(W)
    plus[1:-1, 1:-1] = Aw - s * phi_t * wi + s ** 2 * xa_phix_sq * wi
    minus[1:-1, 1:-1] = wt - 2 * s * xa_phix * wx - s * d_xa_phix * wi
    return GridFunction(mesh, plus, SPACE_TIME), GridFunction(mesh, minus, SPACE_TIME)


def identity_terms(w: GridFunction, ctx: CarlemanContext, op: Optional[DegenerateOperator] = None) -> dict:
    """``int L+ L-`` and the five terms J1..J5 of the integration-by-parts identity."""
    plus, minus = decompose_Ls(w, ctx, op)
    mesh = w.mesh
    a, b, s = ctx.alpha, ctx.beta, ctx.s
    dt = mesh.dt
    t = mesh.times[1:-1]
    l, dl, d2l = l_funcs(ctx.T, t)
    Wb = w.values[1:-1]

    lhs = dt * float(np.sum((plus.values[1:-1] * minus.values[1:-1]) @ mesh.dual_widths))

    wx = nodal_gradient(mesh, Wb)
    dq2 = difference_quotients(mesh, Wb) ** 2
    w2 = Wb ** 2
    k = 2 - 2 * b - a
    J1 = 0.5 * s * dt * np.sum(-d2l * nodal_weighted_sum(mesh, w2, b))
    J2 = s * dt * np.sum(-b * (a + b - 1) * (a + b - 2) * l * nodal_weighted_sum(mesh, Wb * wx, 2 * a + b - 3))
    J3 = 2 * s ** 2 * dt * np.sum(b ** 2 * l * dl * nodal_weighted_sum(mesh, w2, a + 2 * b - 2))
    J4 = s * dt * np.sum(b * k * l * cell_weighted_sum(mesh, dq2, 2 * a + b - 2))
    J5 = s ** 3 * dt * np.sum(b ** 3 * k * l ** 3 * nodal_weighted_sum(mesh, w2, 2 * a + 3 * b - 4))
    return {"lhs": lhs, "J1": float(J1), "J2": float(J2), "J3": float(J3), "J4": float(J4), "J5": float(J5)}


def identity_residual(w: GridFunction, ctx: CarlemanContext, op: Optional[DegenerateOperator] = None) -> float:
    """Relative mismatch ``|LHS - sum J| / (|LHS| + sum |J| + eps)``."""
    terms = identity_terms(w, ctx, op)
    J = [terms[f"J{k}"] for k in range(1, 6)]
    lhs = terms["lhs"]
    return abs(lhs - sum(J)) / (abs(lhs) + sum(abs(j) for j in J) + np.finfo(float).eps)


# -- the two sides of the estimate ----------------------------------------------

@dataclass(frozen=True)
class CarlemanSides:
    lhs_cubic: float
    lhs_linear: float
    lhs_gradient: float
    rhs: float
    variant: str
    band_truncation: float = 0.0

    @property
    def lhs(self) -> float:
        return self.lhs_cubic + self.lhs_linear + self.lhs_gradient

    @property
    def ratio(self) -> Optional[float]:
        """Carleman ratio LHS/RHS; ``None`` for the undefined 0/0 case."""
        if self.rhs == 0.0:
            return None if self.lhs == 0.0 else math.inf
        return self.lhs / self.rhs


def _conormal_check(op, V, tol):
    F = op.fluxes(V)
    scale = float(np.max(np.abs(F)))
    if scale == 0.0:
        return
    left = np.max(np.abs(F[:, 0]))
    # quadratic extrapolation of the last three face fluxes to x = 1
    m = op.mesh.midpoints[-3:]
    lag = [np.prod([(1.0 - m[k]) / (m[j] - m[k]) for k in range(3) if k != j]) for j in range(3)]
    right = np.max(np.abs(F[:, -3:] @ np.array(lag)))
    if left > tol * scale or right > tol * scale:
        raise HypothesisViolationError(
            f"conormal traces must vanish at both ends: |left|={left:.3e}, |right|={right:.3e}, "
            f"allowed {tol:g} * max|flux| = {tol * scale:.3e}"
        )


def _band_sums(ctx, mesh, V, Lv, variant):
    a, b, s = ctx.alpha, ctx.beta, ctx.s
    t = mesh.times[1:-1]
    l, _, _ = l_funcs(ctx.T, t)
    E = np.exp(log_weight(ctx, mesh.nodes[None, :], t[:, None]))
    Em = np.exp(log_weight(ctx, mesh.midpoints[None, :], t[:, None]))
    v2E = V ** 2 * E
    if variant == THEOREM:
        cubic = s ** 3 * l ** 3 * nodal_weighted_sum(mesh, v2E, 2 * a + 3 * b - 4)
        linear = s * l * nodal_weighted_sum(mesh, v2E, 2 * a + b - 4)
    else:
        cubic = s ** 3 * l ** 3 * nodal_weighted_sum(mesh, v2E, 0.0)
        linear = np.zeros_like(l)
    grad = s * l * cell_weighted_sum(mesh, difference_quotients(mesh, V) ** 2 * Em, 2 * a + b - 2)
    rhs = nodal_weighted_sum(mesh, Lv ** 2 * E, 0.0)
    return cubic, linear, grad, rhs


def carleman_sides(v: GridFunction, ctx: CarlemanContext, variant: str = THEOREM,
                   op: Optional[DegenerateOperator] = None, trace_tol: float = 1e-2) -> CarlemanSides:
    """Weighted integrals on both sides of the Carleman estimate.

    ``variant="theorem"`` uses ``s^3 l^3 x^(2a+3b-4) + s l x^(2a+b-4)`` on
    ``v^2``; ``variant="corollary"`` uses ``s^3 l^3`` alone.  ``Lv`` is
    ``v_t + A_h v`` with central time differences.  ``band_truncation`` is
    the relative change when the outermost band nodes are dropped as well.
    """
    if variant not in (THEOREM, COROLLARY):
        raise InvalidParameterError(f"variant must be 'theorem' or 'corollary', got {variant!r}")
    _require_space_time(v, "v")
    _check_dirichlet(v, "v")
    mesh = v.mesh
    if mesh.M < 4:
        raise InvalidParameterError("need at least 4 time steps for the interior band")
    op = _operator(ctx, mesh, op)
    V = v.values[1:-1]
    _conormal_check(op, V, trace_tol)
    Lv = _band_time_derivative(mesh, v.values) + op.apply_values(V)
    Lv[:, 0] = Lv[:, 1]
    Lv[:, -1] = Lv[:, -2]

    parts = _band_sums(ctx, mesh, V, Lv, variant)
    dt = mesh.dt
    full = [dt * float(np.sum(p)) for p in parts]
    inner = [dt * float(np.sum(p[1:-1])) for p in parts]
    tot, tot_in = sum(full[:3]) + full[3], sum(inner[:3]) + inner[3]
    trunc = abs(tot - tot_in) / tot if tot > 0 else 0.0
    return CarlemanSides(full[0], full[1], full[2], full[3], variant, trunc)


@dataclass(frozen=True)
class SweepResult:
    s_values: list
    sides: list
    ratios: list
    bounded_tail: Optional[bool]

    def rows(self):
        return [
            (s, sd.lhs_cubic, sd.lhs_linear, sd.lhs_gradient, sd.rhs, r)
            for s, sd, r in zip(self.s_values, self.sides, self.ratios)
        ]


def bounded_tail(ratios: Sequence[Optional[float]]) -> Optional[bool]:
    """True iff the max over the upper half (``ceil(n/2)`` largest ``s``) is
    at most 1.1 times that half's median; ``None`` for fewer than two points
    or undefined ratios."""
    if len(ratios) < 2 or any(r is None for r in ratios):
        return None
    tail = np.asarray(ratios[len(ratios) // 2:], dtype=float)
    if not np.all(np.isfinite(tail)):
        return False
    return bool(np.max(tail) <= 1.1 * np.median(tail))


def ratio_sweep(v: GridFunction, ctx_base: CarlemanContext, s_list: Sequence[float],
                variant: str = THEOREM, op: Optional[DegenerateOperator] = None) -> SweepResult:
    s_sorted = sorted(float(s) for s in s_list)
    if not s_sorted:
        raise InvalidParameterError("s_list must not be empty")
    op = _operator(ctx_base, v.mesh, op)
    sides = [carleman_sides(v, ctx_base.with_s(s), variant, op) for s in s_sorted]
    ratios = [sd.ratio for sd in sides]
    return SweepResult(s_sorted, sides, ratios, bounded_tail(ratios))
