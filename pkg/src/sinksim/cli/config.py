"""Run configuration: YAML document validated with pydantic into domain objects."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Literal, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ..errors import ConfigError
from ..granular.materials import BUILTIN_MATERIALS, MaterialParams
from ..mbd.gripper import GripperGeometry
from ..mbd.load import EARTH_G, MOON_G, LoadProfile
from ..scenario.repose import ReposeSpec
from ..scenario.sandbox import SandboxSpec, sandbox_preset

SCHEMA_VERSION = 1
GRAVITY_PRESETS = {"earth": EARTH_G, "moon": MOON_G}
GRIPPER_SCALE = {"desk": 0.4, "full": 1.0}


def resolve_gravity(value) -> float:
    """Gravity magnitude from a preset name or a number (m/s^2)."""
    if isinstance(value, str):
        key = value.strip().lower()
        if key in GRAVITY_PRESETS:
            return GRAVITY_PRESETS[key]
        try:
            value = float(key)
        except ValueError:
            raise ConfigError(f"expected earth, moon or a number, got {value!r}",
                              field="gravity") from None
    g = float(value)
    if not (g > 0 and math.isfinite(g)):
        raise ConfigError(f"must be > 0 (got {g})", field="gravity")
    return g


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MaterialModel(_Strict):
    density: float
    poisson_ratio: float
    young_modulus: float
    restitution: float
    static_friction: float
    rolling_friction: float
    cohesion: float = 0.0
    repose_target_deg: float | None = None


class SandboxModel(_Strict):
    box: tuple[float, float, float] | None = None
    fill_depth: float | None = None
    particle_diameter: float | None = None
    stiffness_scale: float | None = None
    radius_dispersion: float | None = None
    wall_material: str | None = None


class GripperModel(_Strict):
    scale: float | None = None
    n_fingers: int | None = None
    n_phalanges: int | None = None
    footprint_diameter: float | None = None
    palm_radius: float | None = None
    palm_half_height: float | None = None
    palm_rounding: float | None = None
    slider_length: float | None = None
    phalanx_length: float | None = None
    finger_radius: float | None = None
    palm_mass: float | None = None
    slider_mass: float | None = None
    phalanx_mass: float | None = None
    phalanx_stiffness: float | None = None
    phalanx_damping: float | None = None
    slider_stiffness: float | None = None
    slider_damping: float | None = None
    slider_travel: float | None = None
    opening_range_deg: float | None = None
    closing_range_deg: float | None = None
    limit_stiffness_factor: float | None = None
    rail_damping: float | None = None


class LoadModel(_Strict):
    theta_deg: float = 0.0
    t1: float = 0.0
    t2: float = 0.5
    t3: float = 0.5
    t4: float = 10.0
    mg: float | None = None
    preload: float = 5.0
    delta_final: float = 61.0


class CouplingModel(_Strict):
    dt_cpl: float = Field(1e-3, gt=0)
    dem_safety_fraction: float = Field(0.2, gt=0, le=1)
    sample_rate: float = Field(100.0, gt=0)


class ReposeModel(_Strict):
    cylinder_radius: float = 10.0
    fill_height: float = 20.0
    lift_speed: float = 0.01
    floor_half_width: float = 30.0
    post_lift_time: float = 1.5


class OutputModel(_Strict):
    dir: str = "runs"


class RunConfig(_Strict):
    """Validated run configuration; ``to_yaml``/``load_config`` round-trip."""

    schema_version: Literal[1]
    preset: Literal["desk", "full"] = "desk"
    material: str = "toyoura"
    materials: dict[str, MaterialModel] = Field(default_factory=dict)
    sandbox: SandboxModel = Field(default_factory=SandboxModel)
    gripper: GripperModel = Field(default_factory=GripperModel)
    load: LoadModel = Field(default_factory=LoadModel)
    gravity: Union[Literal["earth", "moon"], float] = "earth"
    scale_loads_with_gravity: bool = True
    coupling: CouplingModel = Field(default_factory=CouplingModel)
    repose: ReposeModel = Field(default_factory=ReposeModel)
    seeds: list[int] = Field(default_factory=lambda: [0])
    output: OutputModel = Field(default_factory=OutputModel)

    @field_validator("seeds")
    @classmethod
    def _seeds(cls, v):
        if not v:
            raise ValueError("at least one seed is required")
        return v

    # --- domain objects -------------------------------------------------
    def material_table(self) -> dict[str, MaterialParams]:
        table = dict(BUILTIN_MATERIALS)
        for name, m in self.materials.items():
            table[name] = MaterialParams(name=name, **m.model_dump())
        return table

    def bed_material(self, name: str | None = None) -> MaterialParams:
        name = name or self.material
        table = self.material_table()
        if name not in table:
            raise ConfigError(f"unknown material {name!r}", field="material")
        return table[name]

    def sandbox_spec(self, material: str | None = None) -> SandboxSpec:
        base = sandbox_preset(self.preset, self.bed_material(material))
        over = {k: v for k, v in self.sandbox.model_dump().items() if v is not None}
        if "wall_material" in over:
            over["wall_material"] = self.bed_material(over["wall_material"])
        if "box" in over:
            over["box"] = tuple(over["box"])
        over["safety_fraction"] = self.coupling.dem_safety_fraction
        return base.__class__(**{**base.__dict__, **over})

    def gripper_geometry(self) -> GripperGeometry:
        over = {k: v for k, v in self.gripper.model_dump().items() if v is not None}
        scale = over.pop("scale", GRIPPER_SCALE[self.preset])
        base = GripperGeometry().scaled(scale)
        return base.__class__(**{**base.__dict__, **over})

    def gravity_value(self, override=None) -> float:
        return resolve_gravity(self.gravity if override is None else override)

    def load_profile(self, theta_deg: float | None = None, t4: float | None = None,
                     gravity: float | None = None) -> LoadProfile:
        """Load schedule; with ``scale_loads_with_gravity`` forces follow ``g / 9.81``."""
        g = self.gravity_value() if gravity is None else gravity
        L = self.load
        mass = self.gripper_geometry().total_mass
        s = g / EARTH_G if self.scale_loads_with_gravity else 1.0
        t4 = L.t4 if t4 is None else t4
        if t4 < L.t3:
            raise ConfigError(f"t4={t4} is before t3={L.t3}", field="load.t4")
        return LoadProfile(theta=math.radians(L.theta_deg if theta_deg is None else theta_deg),
                           t1=L.t1, t2=L.t2, t3=L.t3, t4=t4,
                           mg=mass * g if L.mg is None else L.mg,
                           preload=L.preload * s, delta_final=L.delta_final * s)

    def repose_spec(self) -> ReposeSpec:
        sb = self.sandbox_spec()
        return ReposeSpec(particle_diameter=sb.particle_diameter,
                          stiffness_scale=sb.stiffness_scale,
                          radius_dispersion=sb.radius_dispersion,
                          safety_fraction=sb.safety_fraction, **self.repose.model_dump())

    def validate_all(self):
        """Build every nested domain object so invalid values surface before a run."""
        self.sandbox_spec()
        self.gripper_geometry()
        self.load_profile()
        self.repose_spec()
        return self

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False)


def _field_path(loc) -> str:
    return ".".join(str(p) for p in loc)


def parse_config(data) -> RunConfig:
    """Validate a mapping; any problem becomes a :class:`ConfigError` naming the field."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping", field="<root>")
    if "schema_version" not in data:
        raise ConfigError("missing required key", field="schema_version")
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        raise ConfigError(err["msg"], field=_field_path(err["loc"])) from None
    try:
        return cfg.validate_all()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such file: {path}", field="config")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"not valid YAML: {exc}", field="config") from None
    return parse_config(data)
