"""Graded space-time meshes, weighted quadrature and discrete norms.

The spatial grid is power graded toward the degenerate endpoint,
``x_i = (i/N)**gamma``; the time grid is uniform on ``[0, T]``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .errors import (
    InvalidParameterError,
    MeshMismatchError,
    QuadratureDivergenceError,
)

SPACE = "space"
SPACE_TIME = "space-time"


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GradedMesh:
    """Power-graded spatial nodes on [0, 1] plus a uniform time grid.

    Attributes
    ----------
    N : int
        Number of spatial cells (nodes are ``x_0 .. x_N``).
    gamma : float
        Grading exponent, ``gamma >= 1``; ``gamma = 1`` is uniform.
    M : int
        Number of time steps.
    T : float
        Time horizon.
    """

    N: int
    gamma: float
    M: int
    T: float

    @cached_property
    def nodes(self) -> np.ndarray:
        x = (np.arange(self.N + 1) / self.N) ** self.gamma
        x[0], x[-1] = 0.0, 1.0
        return _frozen(x)

    @cached_property
    def times(self) -> np.ndarray:
        t = np.arange(self.M + 1) * (self.T / self.M)
        t[-1] = self.T
        return _frozen(t)

    @property
    def dt(self) -> float:
        return self.T / self.M

    @cached_property
    def cell_widths(self) -> np.ndarray:
        return _frozen(np.diff(self.nodes))

    @cached_property
    def midpoints(self) -> np.ndarray:
        x = self.nodes
        return _frozen(0.5 * (x[:-1] + x[1:]))

    @cached_property
    def dual_widths(self) -> np.ndarray:
        """Trapezoidal node weights; they sum to 1."""
        h = self.cell_widths
        w = np.zeros(self.N + 1)
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
        return _frozen(w)

    def key(self) -> tuple:
        return (self.N, float(self.gamma), self.M, float(self.T))

    def compatible(self, other: "GradedMesh") -> bool:
        return self is other or self.key() == other.key()

    def with_time(self, M: int, T: float) -> "GradedMesh":
        return build_graded_mesh(self.N, self.gamma, M, T)


def build_graded_mesh(N: int, gamma: float = 2.0, M: int = 100, T: float = 1.0) -> GradedMesh:
    """Build a :class:`GradedMesh` with nodes ``(i/N)**gamma``."""
    for name, val in (("N", N), ("M", M)):
        if int(val) != val or val <= 0:
            raise InvalidParameterError(f"{name} must be a positive integer, got {val!r}")
        if val < 4:
            raise InvalidParameterError(f"{name} must be at least 4, got {val}")
    if not np.isfinite(T) or T <= 0:
        raise InvalidParameterError(f"T must be positive, got {T!r}")
    if not np.isfinite(gamma) or gamma < 1:
        raise InvalidParameterError(f"grading exponent must be >= 1, got {gamma!r}")
    return GradedMesh(int(N), float(gamma), int(M), float(T))


class GridFunction:
    """Nodal samples of a scalar field on a :class:`GradedMesh`.

    Space functions hold ``N + 1`` values; space-time functions hold an
    ``(M + 1, N + 1)`` array whose row ``j`` is the slice at ``t_j``.
    """

    __slots__ = ("mesh", "values", "kind")

    def __init__(self, mesh: GradedMesh, values, kind: Optional[str] = None):
        v = np.array(values, dtype=float)
        if kind is None:
            kind = SPACE if v.ndim == 1 else SPACE_TIME
        if kind == SPACE:
            expected = (mesh.N + 1,)
        elif kind == SPACE_TIME:
            expected = (mesh.M + 1, mesh.N + 1)
        else:
            raise InvalidParameterError(f"unknown grid function kind {kind!r}")
        if v.shape != expected:
            raise MeshMismatchError(f"{kind} values must have shape {expected}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidParameterError("grid function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "mesh", mesh)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "kind", kind)

    def __setattr__(self, name, value):
        raise AttributeError("GridFunction is immutable")

    @classmethod
    def from_callable(cls, mesh: GradedMesh, f: Callable, kind: str = SPACE) -> "GridFunction":
        """Sample ``f(x)`` (space) or ``f(x, t)`` (space-time) at the nodes."""
        if kind == SPACE:
            return cls(mesh, np.broadcast_to(f(mesh.nodes), mesh.nodes.shape), SPACE)
        X, Tt = np.meshgrid(mesh.nodes, mesh.times)
        return cls(mesh, np.broadcast_to(f(X, Tt), X.shape), SPACE_TIME)

    @classmethod
    def zeros(cls, mesh: GradedMesh, kind: str = SPACE) -> "GridFunction":
        shape = (mesh.N + 1,) if kind == SPACE else (mesh.M + 1, mesh.N + 1)
        return cls(mesh, np.zeros(shape), kind)

    def slice(self, j: int) -> "GridFunction":
        if self.kind != SPACE_TIME:
            raise InvalidParameterError("only space-time functions have time slices")
        return GridFunction(self.mesh, self.values[j], SPACE)

    def _combine(self, other, op):
        if isinstance(other, GridFunction):
            check_same_mesh(self.mesh, other.mesh)
            if other.kind != self.kind:
                raise MeshMismatchError("cannot combine space and space-time functions")
            other = other.values
        return GridFunction(self.mesh, op(self.values, other), self.kind)

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, scalar):
        return GridFunction(self.mesh, self.values * float(scalar), self.kind)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __repr__(self):
        return f"GridFunction(kind={self.kind!r}, N={self.mesh.N}, shape={self.values.shape})"


def check_same_mesh(a: GradedMesh, b: GradedMesh) -> None:
    if not a.compatible(b):
        raise MeshMismatchError(f"mesh mismatch: {a.key()} vs {b.key()}")


def _require_space(f: GridFunction) -> None:
    if f.kind != SPACE:
        raise InvalidParameterError("expected a space-only grid function")


# -- quadrature ---------------------------------------------------------------

def nodal_weighted_sum(mesh: GradedMesh, values: np.ndarray, sigma: float) -> np.ndarray:
    """Array version of :func:`weighted_integral`; the last axis is space."""
    values = np.asarray(values, dtype=float)
    if sigma <= -1 and np.any(values[..., 0] != 0):
        raise QuadratureDivergenceError(
            f"weight x^{sigma:g} is not integrable at 0 and f(0) != 0"
        )
    cell_w = mesh.cell_widths * mesh.midpoints ** sigma
    trap = 0.5 * (values[..., :-1] + values[..., 1:])
    out = trap @ cell_w
    if not np.all(np.isfinite(out)):
        raise QuadratureDivergenceError(f"weighted integral with sigma={sigma:g} is not finite")
    return out


def cell_weighted_sum(mesh: GradedMesh, cell_values: np.ndarray, sigma: float = 0.0) -> np.ndarray:
    """Integrate a cell-wise constant quantity against ``x**sigma``.

    The weight is taken at cell midpoints, so ``x = 0`` is never evaluated.
    """
    cell_w = mesh.cell_widths * mesh.midpoints ** sigma
    out = np.asarray(cell_values, dtype=float) @ cell_w
    if not np.all(np.isfinite(out)):
        raise QuadratureDivergenceError(f"cell integral with sigma={sigma:g} is not finite")
    return out


def weighted_integral(f: GridFunction, sigma: float) -> float:
    """Approximate ``int_0^1 x**sigma f(x) dx``.

    Cell midpoint weight times the trapezoidal value of ``f`` on each cell.
    For ``sigma <= -1`` the integrand is only admitted when ``f(0) == 0``.
    """
    _require_space(f)
    return float(nodal_weighted_sum(f.mesh, f.values, sigma))


def l2_inner(f: GridFunction, g: GridFunction) -> float:
    """Discrete L2 inner product with trapezoidal node weights."""
    check_same_mesh(f.mesh, g.mesh)
    return float(np.dot(f.mesh.dual_widths, f.values * g.values))


def l2_norm_values(mesh: GradedMesh, values: np.ndarray) -> np.ndarray:
    return np.sqrt(np.asarray(values) ** 2 @ mesh.dual_widths)


def difference_quotients(mesh: GradedMesh, values: np.ndarray) -> np.ndarray:
    """One-sided difference quotient on each cell (last axis is space)."""
    return np.diff(values, axis=-1) / mesh.cell_widths


def h1_alpha_values(mesh: GradedMesh, values: np.ndarray, alpha: float) -> np.ndarray:
    """``int x**alpha u_x**2`` from cell difference quotients."""
    return cell_weighted_sum(mesh, difference_quotients(mesh, values) ** 2, alpha)


@dataclass(frozen=True)
class WeightedNorms:
    l2: float
    h1_alpha_semi: float
    graph: float


def norms(f: GridFunction, alpha: float, op) -> WeightedNorms:
    """Discrete L2 norm, ``int x**alpha f_x**2`` and the D(A) graph norm.

    ``op`` is a :class:`degheat.operator.DegenerateOperator` on the same mesh.
    """
    _require_space(f)
    check_same_mesh(f.mesh, op.mesh)
    if op.alpha != alpha:
        raise InvalidParameterError(f"operator built for alpha={op.alpha}, got alpha={alpha}")
    l2 = float(l2_norm_values(f.mesh, f.values))
    semi = float(h1_alpha_values(f.mesh, f.values, alpha))
    Af = op.apply_values(f.values)
    graph = l2 + float(l2_norm_values(f.mesh, Af))
    return WeightedNorms(l2=l2, h1_alpha_semi=semi, graph=graph)


# -- serialization ------------------------------------------------------------

def write_grid_csv(f: GridFunction, path) -> None:
    from .io import atomic_text

    rows = []
    if f.kind == SPACE:
        rows.append("x,value")
        rows.extend(f"{x!r},{v!r}" for x, v in zip(f.mesh.nodes.tolist(), f.values.tolist()))
    else:
        rows.append("x,t,value")
        x = f.mesh.nodes.tolist()
        for t, row in zip(f.mesh.times.tolist(), f.values.tolist()):
            rows.extend(f"{xi!r},{t!r},{v!r}" for xi, v in zip(x, row))
    atomic_text(path, "\n".join(rows) + "\n")


def read_grid_csv(path, mesh: GradedMesh) -> GridFunction:
    """Read a space CSV (``x,value``) and interpolate it onto ``mesh``.

    If the file's abscissae coincide with the mesh nodes the values are
    taken verbatim.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "x" not in reader.fieldnames or "value" not in reader.fieldnames:
            raise InvalidParameterError(f"{path}: expected header 'x,value'")
        pts = [(float(r["x"]), float(r["value"])) for r in reader]
    if not pts:
        raise InvalidParameterError(f"{path}: no data rows")
    xs, vs = map(np.array, zip(*pts))
    if np.any(np.diff(xs) <= 0):
        raise InvalidParameterError(f"{path}: x must be strictly increasing")
    if xs.shape == mesh.nodes.shape and np.array_equal(xs, mesh.nodes):
        return GridFunction(mesh, vs, SPACE)
    return GridFunction(mesh, np.interp(mesh.nodes, xs, vs), SPACE)
