"""Run configuration: YAML schema, defaults and echo.

Every block maps to a dataclass; unknown keys are rejected so typos do not
pass silently. ``dump_config(load_config_text(dump_config(c))) == c``.

Schema (all keys optional)::

    site:      SiteConfig fields (lengths in m)
    soil:      E (MPa), nu, rho (kg/m^3), K0, phi_deg, psi_deg, cohesion (kPa), delta_deg
    wall:      E (MPa), nu, rho, fc (MPa), ec_from_fc, steel_yield (MPa), steel_E (GPa)
    damping:   zeta, f1 ("auto" or Hz), f2 ("predominant" or Hz)
    static:    StaticSolveSettings fields
    dynamic:   dt, newmark_beta, newmark_gamma, max_newton_iters, force_tolerance,
               max_halvings, lateral_boundary, lumped_mass, f_cutoff, filter_motion
    analysis:  pressure_extent ("full" or "retained"), noise_floor, wood_fp
    motions:   list of {path, units} or {kind, amplitude_g, frequency, duration, dt}
    output_dir
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .constitutive import ElasticParams, MohrCoulombParams
from .mesh import SiteConfig
from .solvers.dynamic import LATERAL_BOUNDARIES
from .solvers.model import GRAVITY, Material
from .solvers.static import StaticSolveSettings


class ConfigError(ValueError):
    pass


def concrete_modulus(fc: float) -> float:
    """Empirical concrete modulus ``5000 sqrt(f'c)`` (MPa) from strength (MPa)."""
    if fc <= 0.0:
        raise ValueError("compressive strength must be positive")
    return 5000.0 * math.sqrt(fc)


@dataclass(frozen=True)
class SoilConfig:
    E: float = 163.13
    nu: float = 0.26
    rho: float = 2000.0
    K0: float = 0.36
    phi_deg: float = 40.0
    # Dilatancy follows the dense-sand rule psi = phi - 30 deg.
    psi_deg: float = 10.0
    cohesion: float = 0.2
    # Wall friction used in the pseudo-static comparison (bonded contact in the FE model).
    delta_deg: float = 0.0

    @property
    def gamma(self) -> float:
        return self.rho * GRAVITY / 1000.0

    def material(self) -> Material:
        return Material(ElasticParams(self.E, self.nu, self.rho),
                        MohrCoulombParams(math.radians(self.phi_deg), self.cohesion,
                                          math.radians(self.psi_deg)))


@dataclass(frozen=True)
class WallConfig:
    E: float = 30000.0
    nu: float = 0.2
    rho: float = 2400.0
    fc: float = 27.6
    ec_from_fc: bool = False
    # Reinforcement values are carried for the record; the wall is elastic concrete.
    steel_yield: float = 413.4
    steel_E: float = 200.0

    @property
    def modulus(self) -> float:
        return concrete_modulus(self.fc) if self.ec_from_fc else self.E

    def material(self) -> Material:
        return Material(ElasticParams(self.modulus, self.nu, self.rho))


@dataclass(frozen=True)
class DampingConfig:
    zeta: float = 0.01
    f1: float | str = "auto"
    f2: float | str = "predominant"

    def __post_init__(self):
        if not 0.0 <= self.zeta < 1.0:
            raise ConfigError("damping.zeta must lie in [0, 1)")
        if isinstance(self.f1, str) and self.f1 != "auto":
            raise ConfigError("damping.f1 must be 'auto' or a frequency")
        if isinstance(self.f2, str) and self.f2 != "predominant":
            raise ConfigError("damping.f2 must be 'predominant' or a frequency")


@dataclass(frozen=True)
class DynamicConfig:
    dt: float = 0.005
    newmark_beta: float = 0.25
    newmark_gamma: float = 0.5
    max_newton_iters: int = 25
    force_tolerance: float = 1e-6
    max_halvings: int = 6
    lateral_boundary: str = "free_field"
    lumped_mass: bool = False
    f_cutoff: float = 15.0
    filter_motion: bool = True

    def __post_init__(self):
        if self.lateral_boundary not in LATERAL_BOUNDARIES:
            raise ConfigError(f"dynamic.lateral_boundary must be one of {LATERAL_BOUNDARIES}")
        if self.dt <= 0.0 or self.f_cutoff <= 0.0:
            raise ConfigError("dynamic.dt and dynamic.f_cutoff must be positive")


@dataclass(frozen=True)
class AnalysisConfig:
    pressure_extent: str = "full"
    noise_floor: float = 0.01
    wood_fp: float = 1.0

    def __post_init__(self):
        if self.pressure_extent not in ("full", "retained"):
            raise ConfigError("analysis.pressure_extent must be 'full' or 'retained'")
        if self.noise_floor < 0.0:
            raise ConfigError("analysis.noise_floor must be non-negative")


@dataclass(frozen=True)
class MotionSpec:
    """A motion file (``path``, ``units``) or a synthetic motion (``kind`` ...)."""

    path: str | None = None
    units: str | None = None
    kind: str | None = None
    amplitude_g: float = 0.0
    frequency: float = 2.0
    duration: float = 10.0
    dt: float = 0.005
    label: str | None = None

    def __post_init__(self):
        if (self.path is None) == (self.kind is None):
            raise ConfigError("a motion needs exactly one of 'path' or 'kind'")
        if self.kind is not None and self.kind not in ("harmonic", "ricker"):
            raise ConfigError("motion kind must be 'harmonic' or 'ricker'")


@dataclass(frozen=True)
class RunConfig:
    site: SiteConfig = field(default_factory=SiteConfig)
    soil: SoilConfig = field(default_factory=SoilConfig)
    wall: WallConfig = field(default_factory=WallConfig)
    damping: DampingConfig = field(default_factory=DampingConfig)
    static: StaticSolveSettings = field(default_factory=StaticSolveSettings)
    dynamic: DynamicConfig = field(default_factory=DynamicConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    motions: tuple = ()
    output_dir: str = "results"

    def materials(self) -> dict:
        from .mesh import MATERIAL_SOIL, MATERIAL_WALL
        return {MATERIAL_SOIL: self.soil.material(), MATERIAL_WALL: self.wall.material()}


_BLOCKS = {"site": SiteConfig, "soil": SoilConfig, "wall": WallConfig,
           "damping": DampingConfig, "static": StaticSolveSettings,
           "dynamic": DynamicConfig, "analysis": AnalysisConfig}


def _build(cls, data, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"'{where}' must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in '{where}': {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{where}' block: {exc}") from exc


def config_from_dict(data: dict | None) -> RunConfig:
    data = dict(data or {})
    unknown = set(data) - set(_BLOCKS) - {"motions", "output_dir"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    kw = {k: _build(cls, data.get(k), k) for k, cls in _BLOCKS.items()}
    motions = data.get("motions") or []
    if not isinstance(motions, list):
        raise ConfigError("'motions' must be a list")
    kw["motions"] = tuple(_build(MotionSpec, m, f"motions[{i}]") for i, m in enumerate(motions))
    kw["output_dir"] = str(data.get("output_dir", "results"))
    return RunConfig(**kw)


def config_to_dict(cfg: RunConfig) -> dict:
    out = {}
    for name in _BLOCKS:
        block = dataclasses.asdict(getattr(cfg, name))
        out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in block.items()}
    out["motions"] = [{k: v for k, v in dataclasses.asdict(m).items() if v is not None}
                      for m in cfg.motions]
    out["output_dir"] = cfg.output_dir
    return out


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def load_config_text(text: str) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return config_from_dict(data)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return load_config_text(text)
