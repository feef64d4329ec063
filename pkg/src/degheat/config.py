"""INI experiment configuration with exact round-tripping.

Example::

    [problem]
    alpha = 0.5
    T = 1.0
    scheme = crank_nicolson

    [mesh]
    N = 200
    gamma = 2.0
    M = 200

    [data]
    target = 0.1*eigenmode:1

Missing keys take the defaults of :class:`ExperimentConfig`.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import asdict, dataclass, field, fields, replace

from .errors import ConfigError
from .evolution import SCHEMES
from .profiles import parse_profile


@dataclass(frozen=True)
class ProblemSection:
    alpha: float = 0.5
    T: float = 1.0
    scheme: str = "crank_nicolson"


@dataclass(frozen=True)
class MeshSection:
    N: int = 100
    gamma: float = 2.0
    M: int = 100


@dataclass(frozen=True)
class CarlemanSection:
    beta: float = 0.6
    s_list: tuple = (2.0, 4.0, 8.0, 16.0, 32.0)
    variant: str = "theorem"
    field: str = "manufactured"
    check_corollary: bool = True


@dataclass(frozen=True)
class ControlSection:
    rho: float = 1e-2
    epsilon: float = 5e-3
    max_iters: int = 200
    grad_tol: float = 1e-8
    rho_min: float = 1e-10
    mode: str = "direct"


@dataclass(frozen=True)
class DataSection:
    initial: str = "zero"
    target: str = "0.1*eigenmode:1"
    boundary: str = "sin2"
    adjoint: str = "sine:1"
    hardy: tuple = ("bump", "poly:2,1", "poly:3,1")


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    output_dir: str = "out"


_SECTIONS = {
    "problem": ProblemSection,
    "mesh": MeshSection,
    "carleman": CarlemanSection,
    "control": ControlSection,
    "data": DataSection,
    "run": RunSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSection = field(default_factory=ProblemSection)
    mesh: MeshSection = field(default_factory=MeshSection)
    carleman: CarlemanSection = field(default_factory=CarlemanSection)
    control: ControlSection = field(default_factory=ControlSection)
    data: DataSection = field(default_factory=DataSection)
    run: RunSection = field(default_factory=RunSection)

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, **sections) -> "ExperimentConfig":
        """``cfg.with_overrides(mesh={"N": 50})`` replaces individual keys."""
        new = {}
        for name, changes in sections.items():
            if name not in _SECTIONS:
                raise ConfigError(f"unknown section {name!r}")
            new[name] = replace(getattr(self, name), **changes)
        return validate(replace(self, **new))


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def _parse(raw: str, default, where: str):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(p) for p in raw.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {type(default).__name__}") from None
    return raw.strip()


def _split_profiles(raw):
    # poly:a,b contains a comma, so profile lists use ';'
    return tuple(p.strip() for p in raw.split(";") if p.strip())


def dumps(cfg: ExperimentConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for sec in fields(cfg):
        part = getattr(cfg, sec.name)
        items = {}
        for f in fields(part):
            val = getattr(part, f.name)
            if sec.name == "data" and f.name == "hardy":
                items[f.name] = "; ".join(val)
            else:
                items[f.name] = _format(val)
        cp[sec.name] = items
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def loads(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    unknown = set(cp.sections()) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    parts = {}
    for name, cls in _SECTIONS.items():
        default = cls()
        known = {f.name for f in fields(cls)}
        values = {}
        if cp.has_section(name):
            extra = set(cp[name]) - known
            if extra:
                raise ConfigError(f"[{name}]: unknown keys {sorted(extra)}")
            for key in cp[name]:
                raw = cp[name][key]
                if name == "data" and key == "hardy":
                    values[key] = _split_profiles(raw)
                else:
                    values[key] = _parse(raw, getattr(default, key), f"[{name}] {key}")
        parts[name] = cls(**values)
    return validate(ExperimentConfig(**parts))


def load(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return loads(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Cheap structural checks; numerical ones are left to the modules."""
    p, m, c, k = cfg.problem, cfg.mesh, cfg.control, cfg.carleman
    if p.scheme not in SCHEMES:
        raise ConfigError(f"[problem] scheme must be one of {sorted(SCHEMES)}")
    if not (0.0 <= p.alpha < 1.0):
        raise ConfigError(f"[problem] alpha={p.alpha} outside [0, 1)")
    if not p.T > 0:
        raise ConfigError("[problem] T must be positive")
    if m.N < 4 or m.M < 4:
        raise ConfigError("[mesh] N and M must be at least 4")
    if m.gamma < 1:
        raise ConfigError("[mesh] gamma must be >= 1")
    if c.mode not in ("direct", "two_stage"):
        raise ConfigError("[control] mode must be 'direct' or 'two_stage'")
    if not (c.rho > 0 and c.epsilon > 0 and c.rho_min > 0):
        raise ConfigError("[control] rho, epsilon and rho_min must be positive")
    if c.max_iters < 0:
        raise ConfigError("[control] max_iters must be non-negative")
    if k.variant not in ("theorem", "corollary"):
        raise ConfigError("[carleman] variant must be 'theorem' or 'corollary'")
    if not k.s_list or any(s <= 0 for s in k.s_list):
        raise ConfigError("[carleman] s_list must hold positive values")
    d = cfg.data
    for spec in (d.initial, d.target, d.boundary, d.adjoint, *d.hardy):
        parse_profile(spec)
    return cfg
