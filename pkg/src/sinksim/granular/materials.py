"""Material parameters, pair-effective contact constants and the Rayleigh step."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping

import numpy as np

from ..errors import InvalidMaterialError

#: Radius or mass of an immobile, flat partner (walls, flat faces).
UNBOUNDED = math.inf


@dataclass(frozen=True)
class MaterialParams:
    """Elastic and frictional properties of one granular species or wall."""

    name: str
    density: float
    poisson_ratio: float
    young_modulus: float
    restitution: float
    static_friction: float
    rolling_friction: float
    cohesion: float = 0.0
    repose_target_deg: float | None = None

    def __post_init__(self):
        checks = [
            ("density", self.density > 0, "must be > 0"),
            ("young_modulus", self.young_modulus > 0, "must be > 0"),
            ("poisson_ratio", 0.0 < self.poisson_ratio < 0.5, "must lie in (0, 0.5)"),
            ("restitution", 0.0 < self.restitution <= 1.0, "must lie in (0, 1]"),
            ("static_friction", self.static_friction >= 0, "must be >= 0"),
            ("rolling_friction", self.rolling_friction >= 0, "must be >= 0"),
            ("cohesion", self.cohesion == 0, "cohesive contact is not supported; must be 0"),
        ]
        for name, ok, why in checks:
            value = getattr(self, name)
            if not (ok and math.isfinite(value)):
                raise InvalidMaterialError(f"{why} (got {value!r})", field=name)

    @property
    def shear_modulus(self) -> float:
        return self.young_modulus / (2.0 * (1.0 + self.poisson_ratio))

    def with_stiffness_scale(self, factor: float) -> "MaterialParams":
        """Copy with Young's modulus multiplied by ``factor`` (desk presets use 0.1)."""
        return replace(self, young_modulus=self.young_modulus * factor)

    def to_dict(self) -> dict:
        return asdict(self)


TOYOURA = MaterialParams(
    name="toyoura",
    density=2650.0,
    poisson_ratio=0.25,
    young_modulus=5e7,
    restitution=0.3,
    static_friction=0.65,
    rolling_friction=0.15,
    cohesion=0.0,
    repose_target_deg=34.0,
)

REGOLITH = MaterialParams(
    name="regolith",
    density=2857.0,
    poisson_ratio=0.3,
    young_modulus=1e8,
    restitution=0.4,
    static_friction=0.81,
    rolling_friction=0.42,
    cohesion=0.0,
    repose_target_deg=39.0,
)

# Box walls and gripper shapes; stiff enough that the particle side sets E*.
ALUMINIUM = MaterialParams(
    name="aluminium",
    density=2700.0,
    poisson_ratio=0.33,
    young_modulus=7e10,
    restitution=0.5,
    static_friction=0.5,
    rolling_friction=0.15,
)

BUILTIN_MATERIALS = {m.name: m for m in (TOYOURA, REGOLITH, ALUMINIUM)}


@dataclass(frozen=True)
class EffectivePair:
    E_star: float
    G_star: float
    R_star: float
    m_star: float
    beta: float
    mu_s: float
    mu_r: float


def damping_beta(restitution: float) -> float:
    """``ln e / sqrt(ln^2 e + pi^2)``; zero for a perfectly elastic contact."""
    if restitution >= 1.0:
        return 0.0
    le = math.log(restitution)
    return le / math.sqrt(le * le + math.pi * math.pi)


@dataclass
class InteractionTable:
    """Explicit per-pair overrides of friction and restitution.

    Pairs absent from the table fall back to the smaller of the two
    materials' coefficients.
    """

    entries: dict = field(default_factory=dict)

    def set(self, a: str, b: str, *, static_friction=None, rolling_friction=None,
            restitution=None):
        self.entries[frozenset((a, b))] = {
            k: v
            for k, v in (("static_friction", static_friction),
                         ("rolling_friction", rolling_friction),
                         ("restitution", restitution))
            if v is not None
        }

    def lookup(self, mat_a: MaterialParams, mat_b: MaterialParams) -> tuple[float, float, float]:
        over = self.entries.get(frozenset((mat_a.name, mat_b.name)), {})
        mu_s = over.get("static_friction", min(mat_a.static_friction, mat_b.static_friction))
        mu_r = over.get("rolling_friction", min(mat_a.rolling_friction, mat_b.rolling_friction))
        e = over.get("restitution", min(mat_a.restitution, mat_b.restitution))
        return mu_s, mu_r, e


def _harmonic(a: float, b: float) -> float:
    # 1/x = 1/a + 1/b with an unbounded partner contributing nothing
    inv = (0.0 if math.isinf(a) else 1.0 / a) + (0.0 if math.isinf(b) else 1.0 / b)
    return 1.0 / inv


def effective_pair_params(mat_i: MaterialParams, mat_j: MaterialParams,
                          r_i: float, r_j: float, m_i: float, m_j: float,
                          interactions: InteractionTable | None = None) -> EffectivePair:
    """Starred contact constants for a pair; pass ``UNBOUNDED`` for a wall partner."""
    for name, v in (("r_i", r_i), ("r_j", r_j), ("m_i", m_i), ("m_j", m_j)):
        if not v > 0:
            raise InvalidMaterialError(f"must be > 0 (got {v!r})", field=name)
    if math.isinf(r_i) and math.isinf(r_j):
        raise InvalidMaterialError("both partners unbounded", field="r_i")
    inv_E = ((1 - mat_i.poisson_ratio ** 2) / mat_i.young_modulus
             + (1 - mat_j.poisson_ratio ** 2) / mat_j.young_modulus)
    inv_G = ((2 - mat_i.poisson_ratio) / mat_i.shear_modulus
             + (2 - mat_j.poisson_ratio) / mat_j.shear_modulus)
    mu_s, mu_r, e = (interactions or InteractionTable()).lookup(mat_i, mat_j)
    pair = EffectivePair(
        E_star=1.0 / inv_E,
        G_star=1.0 / inv_G,
        R_star=_harmonic(r_i, r_j),
        m_star=_harmonic(m_i, m_j),
        beta=damping_beta(e),
        mu_s=mu_s,
        mu_r=mu_r,
    )
    values = (pair.E_star, pair.G_star, pair.R_star, pair.m_star, pair.beta)
    if not all(math.isfinite(v) for v in values):
        raise InvalidMaterialError(f"non-finite effective parameters {values}")
    return pair


def rayleigh_dt(material: MaterialParams, r_min: float, safety_fraction: float = 1.0) -> float:
    """Rayleigh-wave critical time step for the smallest particle of ``material``."""
    if not 0.0 < safety_fraction <= 1.0:
        raise InvalidMaterialError(f"must lie in (0, 1] (got {safety_fraction!r})",
                                   field="safety_fraction")
    nu = material.poisson_ratio
    t_r = math.pi * r_min * math.sqrt(material.density / material.shear_modulus) / (0.1631 * nu + 0.8766)
    return safety_fraction * t_r


class PairTables:
    """Dense (n_mat x n_mat) arrays of the radius-independent pair constants.

    This is what the compiled kernels consume; material ids index rows and
    columns in the order of ``materials``.
    """

    def __init__(self, materials: list[MaterialParams], interactions: InteractionTable | None = None):
        if not materials:
            raise InvalidMaterialError("material table is empty", field="materials")
        self.materials = list(materials)
        self.index = {m.name: k for k, m in enumerate(self.materials)}
        n = len(self.materials)
        self.E_star = np.empty((n, n))
        self.G_star = np.empty((n, n))
        self.beta = np.empty((n, n))
        self.mu_s = np.empty((n, n))
        self.mu_r = np.empty((n, n))
        for a, ma in enumerate(self.materials):
            for b, mb in enumerate(self.materials):
                p = effective_pair_params(ma, mb, 1.0, 1.0, 1.0, 1.0, interactions)
                self.E_star[a, b] = p.E_star
                self.G_star[a, b] = p.G_star
                self.beta[a, b] = p.beta
                self.mu_s[a, b] = p.mu_s
                self.mu_r[a, b] = p.mu_r

    def id_of(self, name: str) -> int:
        try:
            return self.index[name]
        except KeyError:
            raise InvalidMaterialError(f"unknown material {name!r}", field="material") from None

    def stiffest_dt(self, material_ids, radii, safety_fraction: float) -> float:
        """Smallest Rayleigh step over the materials actually present."""
        radii = np.asarray(radii)
        material_ids = np.asarray(material_ids)
        best = math.inf
        for mid in np.unique(material_ids):
            r_min = float(radii[material_ids == mid].min())
            best = min(best, rayleigh_dt(self.materials[int(mid)], r_min, safety_fraction))
        return best


def material_from_mapping(data: Mapping) -> MaterialParams:
    return MaterialParams(**dict(data))
