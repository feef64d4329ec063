"""Builtin catalog of spatial and temporal data profiles.

A profile is named by a short string ``[scale*]name[:arg]``, for example
``zero``, ``eigenmode:1``, ``0.1*eigenmode:1``, ``poly:2,1`` or
``csv:data/u0.csv``.  Randomized profiles draw from ``numpy.random.default_rng``
seeded by the caller, so a (name, seed) pair always yields the same values.
"""

from __future__ import annotations

import csv
import re

import numpy as np

from .errors import ConfigError
from .mesh import SPACE, SPACE_TIME, GradedMesh, GridFunction, read_grid_csv
from .operator import assemble, eigen_smallest

SPATIAL = ("zero", "one", "eigenmode", "sine", "bump", "polynomial", "poly", "random", "csv")
TEMPORAL = ("zero", "sin2", "sine", "bump", "polynomial", "random", "csv")
SPACE_TIME_PROFILES = ("zero", "manufactured", "manufactured_sin2", "manufactured_shifted")

_SPEC = re.compile(r"^\s*(?:(?P<scale>[-+0-9.eE]+)\s*\*\s*)?(?P<name>[a-z_0-9]+)(?::(?P<arg>.*))?\s*$")


def parse_profile(spec: str):
    """Split ``spec`` into ``(scale, name, arg)``."""
    m = _SPEC.match(spec or "")
    if not m:
        raise ConfigError(f"cannot parse profile {spec!r}")
    scale = m.group("scale")
    try:
        scale = 1.0 if scale is None else float(scale)
    except ValueError:
        raise ConfigError(f"bad scale in profile {spec!r}") from None
    return scale, m.group("name"), m.group("arg")


def _int_arg(arg, default, spec):
    if arg in (None, ""):
        return default
    try:
        k = int(arg)
    except ValueError:
        raise ConfigError(f"profile {spec!r} needs an integer argument") from None
    if k < 1:
        raise ConfigError(f"profile {spec!r}: index must be >= 1")
    return k


def _poly_args(arg, spec):
    if arg in (None, ""):
        return 2.0, 1.0
    try:
        a, b = (float(p) for p in arg.split(","))
    except ValueError:
        raise ConfigError(f"profile {spec!r} expects 'poly:a,b'") from None
    if a < 0 or b < 0:
        raise ConfigError(f"profile {spec!r}: exponents must be non-negative")
    return a, b


def _random_series(rng, n_modes=6):
    return rng.standard_normal(n_modes) / np.arange(1, n_modes + 1) ** 2


def spatial_profile(spec: str, mesh: GradedMesh, alpha: float = 0.0, seed: int = 0) -> GridFunction:
    """Resolve a spatial profile on the nodes of ``mesh``.

    Everything except ``one`` and ``csv`` vanishes at both endpoints.
    ``eigenmode:k`` is the k-th discrete eigenfunction of the operator for
    ``alpha`` (unit L2 norm); ``bump`` and ``poly:a,b`` (``x^a (1-x)^b``)
    vanish to second order at ``x = 0`` by default.
    """
    scale, name, arg = parse_profile(spec)
    x = mesh.nodes
    if name == "zero":
        vals = np.zeros_like(x)
    elif name == "one":
        vals = np.ones_like(x)
    elif name == "eigenmode":
        k = _int_arg(arg, 1, spec)
        vals = eigen_smallest(assemble(alpha, mesh), k)[k - 1][1].values
    elif name == "sine":
        vals = np.sin(_int_arg(arg, 1, spec) * np.pi * x)
    elif name == "bump":
        vals = 16.0 * x ** 2 * (1.0 - x) ** 2
    elif name in ("polynomial", "poly"):
        a, b = _poly_args(arg, spec)
        vals = x ** a * (1.0 - x) ** b
    elif name == "random":
        coef = _random_series(np.random.default_rng(seed))
        vals = sum(c * np.sin((k + 1) * np.pi * x) for k, c in enumerate(coef))
    elif name == "csv":
        if not arg:
            raise ConfigError("csv profile needs a path: csv:PATH")
        try:
            vals = read_grid_csv(arg, mesh).values
        except OSError as exc:
            raise ConfigError(f"cannot read {arg}: {exc}") from exc
    else:
        raise ConfigError(f"unknown spatial profile {name!r}; choose from {SPATIAL}")
    vals = np.array(vals, dtype=float)
    if name not in ("one", "csv"):
        vals[0] = vals[-1] = 0.0
    return GridFunction(mesh, scale * vals, SPACE)


def _read_time_csv(path, times):
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"t", "value"} <= set(reader.fieldnames):
                raise ConfigError(f"{path}: expected header 't,value'")
            pts = [(float(r["t"]), float(r["value"])) for r in reader]
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not pts:
        raise ConfigError(f"{path}: no data rows")
    ts, vs = map(np.array, zip(*pts))
    return np.interp(times, ts, vs)


def time_profile(spec: str, mesh: GradedMesh, seed: int = 0) -> np.ndarray:
    """Boundary control values at the time nodes; always zero at ``t = 0, T``."""
    scale, name, arg = parse_profile(spec)
    t, T = mesh.times, mesh.T
    if name == "zero":
        vals = np.zeros_like(t)
    elif name == "sin2":
        vals = np.sin(np.pi * t / T) ** 2
    elif name == "sine":
        vals = np.sin(_int_arg(arg, 1, spec) * np.pi * t / T)
    elif name == "bump":
        vals = 16.0 * (t * (T - t)) ** 2 / T ** 4
    elif name == "polynomial":
        vals = t * (T - t) * (1.0 + t) / T ** 2
    elif name == "random":
        coef = _random_series(np.random.default_rng(seed + 7919))
        vals = sum(c * np.sin((k + 1) * np.pi * t / T) for k, c in enumerate(coef))
    elif name == "csv":
        if not arg:
            raise ConfigError("csv profile needs a path: csv:PATH")
        vals = _read_time_csv(arg, t)
    else:
        raise ConfigError(f"unknown time profile {name!r}; choose from {TEMPORAL}")
    vals = scale * np.array(vals, dtype=float)
    vals[0] = vals[-1] = 0.0
    return vals


def space_time_profile(spec: str, mesh: GradedMesh) -> GridFunction:
    """Manufactured space-time fields for the weighted-estimate diagnostics.

    ``manufactured`` is ``x^2 (1-x)^2 t^2 (T-t)^2``; ``manufactured_sin2``
    is ``x^2 (1-x)^2 sin^2(pi t/T)`` and ``manufactured_shifted`` is
    ``x^2.5 (1-x)^2 t^2 (T-t)^2``.
    """
    scale, name, _ = parse_profile(spec)
    T = mesh.T
    if name == "zero":
        f = lambda x, t: 0.0 * x
    elif name == "manufactured":
        f = lambda x, t: x ** 2 * (1 - x) ** 2 * t ** 2 * (T - t) ** 2
    elif name == "manufactured_sin2":
        f = lambda x, t: x ** 2 * (1 - x) ** 2 * np.sin(np.pi * t / T) ** 2
    elif name == "manufactured_shifted":
        f = lambda x, t: x ** 2.5 * (1 - x) ** 2 * t ** 2 * (T - t) ** 2
    else:
        raise ConfigError(f"unknown space-time profile {name!r}; choose from {SPACE_TIME_PROFILES}")
    return GridFunction(mesh, scale * GridFunction.from_callable(mesh, f, SPACE_TIME).values, SPACE_TIME)
