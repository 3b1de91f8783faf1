"""Sandbox presets, bed generation and settling, and free-surface height maps."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..errors import ConfigError, SettleTimeoutError
from ..granular import kernels
from ..granular.boundary import BoxBoundary
from ..granular.engine import GranularSystem, dem_substep
from ..granular.materials import (ALUMINIUM, BUILTIN_MATERIALS, MaterialParams, PairTables,
                                  rayleigh_dt)
from ..granular.particles import ParticleSet

log = logging.getLogger(__name__)

DEFAULT_SAFETY_FRACTION = 0.2
RADIUS_DISPERSION = 0.05
# random-loose packing of the settled bed, used only to size the initial lattice
PACKING_ESTIMATE = 0.6


@dataclass(frozen=True)
class SandboxSpec:
    """Box, fill and particle description of one virtual sandbox (SI units).

    ``stiffness_scale`` multiplies the bed material's Young's modulus; the
    desk preset uses 0.1. Particle radii are drawn uniformly within
    ``radius_dispersion`` of the nominal radius.
    """

    box: tuple = (0.446, 0.332, 0.218)
    fill_depth: float = 0.100
    material: MaterialParams = BUILTIN_MATERIALS["toyoura"]
    particle_diameter: float = 1e-3
    preset: str = "full"
    stiffness_scale: float = 1.0
    radius_dispersion: float = RADIUS_DISPERSION
    wall_material: MaterialParams = ALUMINIUM
    safety_fraction: float = DEFAULT_SAFETY_FRACTION

    def __post_init__(self):
        if len(self.box) != 3 or any(not b > 0 for b in self.box):
            raise ConfigError(f"box dimensions must be > 0 (got {self.box!r})", field="box")
        if not 0 < self.fill_depth < self.box[2]:
            raise ConfigError("fill depth must lie in (0, box height)", field="fill_depth")
        if not 0 < self.particle_diameter <= self.fill_depth / 10:
            raise ConfigError("particle diameter must lie in (0, fill_depth / 10]",
                              field="particle_diameter")
        if not self.stiffness_scale > 0:
            raise ConfigError("must be > 0", field="stiffness_scale")
        if not 0 <= self.radius_dispersion < 0.5:
            raise ConfigError("must lie in [0, 0.5)", field="radius_dispersion")
        if not 0 < self.safety_fraction <= 1:
            raise ConfigError("must lie in (0, 1]", field="safety_fraction")

    @property
    def bed_material(self) -> MaterialParams:
        """Bed material with the stiffness scaling applied."""
        if self.stiffness_scale == 1.0:
            return self.material
        return self.material.with_stiffness_scale(self.stiffness_scale)

    @property
    def radius(self) -> float:
        return 0.5 * self.particle_diameter

    def tables(self) -> PairTables:
        mats = [self.bed_material]
        if self.wall_material.name != self.material.name:
            mats.append(self.wall_material)
        return PairTables(mats)

    def dem_dt(self) -> float:
        """DEM substep for the smallest particle the generator can draw."""
        r_min = self.radius * (1.0 - self.radius_dispersion)
        return rayleigh_dt(self.bed_material, r_min, self.safety_fraction)

    def estimated_count(self, packing: float = PACKING_ESTIMATE) -> int:
        """Particle count of a bed filled to ``fill_depth`` at the given packing fraction."""
        v = self.box[0] * self.box[1] * self.fill_depth * packing
        return int(round(v / (math.pi / 6.0 * self.particle_diameter ** 3)))

    def with_material(self, material: MaterialParams) -> "SandboxSpec":
        return replace(self, material=material)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["box"] = list(self.box)
        return d


def desk_sandbox(material: MaterialParams = BUILTIN_MATERIALS["toyoura"]) -> SandboxSpec:
    """150 x 150 x 100 mm box, 60 mm fill of 4 mm particles, Young's modulus / 10."""
    return SandboxSpec(box=(0.15, 0.15, 0.10), fill_depth=0.060, material=material,
                       particle_diameter=4e-3, preset="desk", stiffness_scale=0.1)


def full_sandbox(material: MaterialParams = BUILTIN_MATERIALS["toyoura"]) -> SandboxSpec:
    """446 x 332 x 218 mm box, 100 mm fill of 1 mm particles at full stiffness."""
    return SandboxSpec(material=material)


PRESETS = {"desk": desk_sandbox, "full": full_sandbox}


def sandbox_preset(name: str, material: MaterialParams | None = None) -> SandboxSpec:
    try:
        make = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}",
                          field="preset") from None
    return make(material) if material is not None else make()


@dataclass
class Bed:
    """A settled particle bed and how it was made."""

    spec: SandboxSpec
    particles: ParticleSet
    seed: int
    depth: float
    settle_time: float = 0.0
    settle_steps: int = 0
    final_mean_ke: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.particles)

    def system(self, gravity=(0.0, 0.0, -9.81), dt: float | None = None,
               cylinders=None) -> GranularSystem:
        """Fresh engine state (empty contact history) holding a copy of the particles."""
        spec = self.spec
        p = self.particles
        ps = ParticleSet.create(p.positions, p.radii, p.material_ids,
                                [m.density for m in spec.tables().materials],
                                velocities=p.velocities, angular_velocities=p.angular_velocities)
        box = BoxBoundary(tuple(spec.box), wall_material=spec.wall_material.name)
        return GranularSystem(ps, spec.tables(), box, gravity, dt or spec.dem_dt(),
                              cylinders=list(cylinders or []))

    def metadata(self) -> dict:
        return {
            "box": list(self.spec.box),
            "preset": self.spec.preset,
            "fill_depth_target": self.spec.fill_depth,
            "fill_depth_actual": self.depth,
            "materials": [m.to_dict() for m in self.spec.tables().materials],
            "stiffness_scale": self.spec.stiffness_scale,
            "particle_diameter": self.spec.particle_diameter,
            "seed": self.seed,
            "particles": self.n,
            "settle": {"time_s": self.settle_time, "steps": self.settle_steps,
                       "mean_ke_J": self.final_mean_ke},
            **self.extra,
        }


def lattice_positions(lo, hi, spacing: float, n_target: int, rng, jitter: float):
    """Jittered cubic lattice filling ``[lo, hi]`` layer by layer from the bottom.

    Stops after ``n_target`` sites; returns fewer if the region is full.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    counts = np.floor((hi - lo) / spacing).astype(int)
    if np.any(counts < 1):
        return np.zeros((0, 3))
    xs = lo[0] + (np.arange(counts[0]) + 0.5) * spacing
    ys = lo[1] + (np.arange(counts[1]) + 0.5) * spacing
    per_layer = counts[0] * counts[1]
    layers = min(counts[2], -(-n_target // per_layer))
    zs = lo[2] + (np.arange(layers) + 0.5) * spacing
    Z, X, Y = np.meshgrid(zs, xs, ys, indexing="ij")
    pos = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)[:n_target]
    return pos + rng.uniform(-jitter, jitter, pos.shape)


def draw_radii(spec: SandboxSpec, n: int, rng) -> np.ndarray:
    s = spec.radius_dispersion
    return spec.radius * rng.uniform(1.0 - s, 1.0 + s, n)


def settle(system: GranularSystem, ke_threshold: float = 1e-9, quiet_time: float = 0.05,
           max_steps: int = 400_000, check_every: int = 20, min_time: float = 0.0):
    """Step until the mean kinetic energy per particle stays below ``ke_threshold``.

    Fixed (inactive) particles are not counted. The energy must remain
    below the threshold for ``quiet_time`` of
    simulated time. Returns ``(steps, mean KE)``; raises
    :class:`SettleTimeoutError` once ``max_steps`` is exceeded.
    """
    p = system.particles
    n = max(int(p.active.sum()), 1)
    quiet_since = None
    steps = 0
    mean_ke = math.inf
    t0 = system.time
    while steps < max_steps:
        for _ in range(check_every):
            dem_substep(system)
        steps += check_every
        ke, _ = kernels.kinetic_energy(p.velocities, p.angular_velocities, p.masses, p.inertia)
        mean_ke = ke / n
        if mean_ke < ke_threshold and system.time - t0 >= min_time:
            if quiet_since is None:
                quiet_since = system.time
            if system.time - quiet_since >= quiet_time:
                return steps, mean_ke
        else:
            quiet_since = None
    raise SettleTimeoutError(
        f"mean kinetic energy {mean_ke:.3g} J still above {ke_threshold:.3g} J "
        f"after {steps} steps ({system.time - t0:.3g} s simulated)")


def fill_and_settle(spec: SandboxSpec, seed: int = 0, ke_threshold: float = 1e-9,
                    quiet_time: float = 0.05, max_steps: int = 400_000,
                    overfill: float = 1.1, gravity: float = 9.81) -> Bed:
    """Generate, settle and level a bed.

    Particles start on a jittered lattice sized for ``overfill`` times the
    target depth, settle under ``gravity`` (m/s^2, straight down), are
    trimmed to the target depth and settle again. The reported depth is the
    mean free-surface height away from the walls.
    """
    if not gravity > 0:
        raise ConfigError(f"must be > 0 (got {gravity})", field="gravity")
    g_vec = (0.0, 0.0, -float(gravity))
    rng = np.random.default_rng(seed)
    lx, ly, lz = spec.box
    d_max = spec.particle_diameter * (1.0 + spec.radius_dispersion)
    spacing = 1.05 * d_max
    n_target = int(math.ceil(overfill * spec.estimated_count()))
    pos = lattice_positions((0.0, 0.0, 0.0), (lx, ly, 2.0 * lz), spacing, n_target, rng,
                            0.02 * spec.particle_diameter)
    if len(pos) < n_target:
        raise ConfigError("box too small to hold the initial lattice", field="box")
    radii = draw_radii(spec, len(pos), rng)
    tables = spec.tables()
    densities = [m.density for m in tables.materials]
    ps = ParticleSet.create(pos, radii, 0, densities)
    box = BoxBoundary(tuple(spec.box), wall_material=spec.wall_material.name)
    system = GranularSystem(ps, tables, box, g_vec, spec.dem_dt())
    log.info("fill: %d particles, dt=%.3g s", len(pos), system.dt)
    steps1, _ = settle(system, ke_threshold, quiet_time, max_steps)

    # level off at the target depth, then let the loosened top settle again
    keep = system.particles.positions[:, 2] <= spec.fill_depth - spec.radius
    p = system.particles
    ps2 = ParticleSet.create(p.positions[keep], p.radii[keep], p.material_ids[keep], densities)
    system2 = GranularSystem(ps2, tables, box, g_vec, system.dt, time=system.time)
    steps2, mean_ke = settle(system2, ke_threshold, quiet_time, max(max_steps - steps1, 1))
    depth = surface_depth(ps2, spec)
    log.info("fill: %d particles kept, depth %.4g m", len(ps2), depth)
    return Bed(spec, ps2, seed, depth, settle_time=system2.time,
               settle_steps=steps1 + steps2, final_mean_ke=mean_ke,
               extra={"settle_gravity": float(gravity)})


def surface_height_map(positions, radii, lo, hi, resolution: float):
    """Highest particle top per square ``(x, y)`` cell; ``nan`` where a cell is empty.

    Returns ``(heights, x_centres, y_centres)`` with ``heights[ix, iy]``.
    """
    if not resolution > 0:
        raise ConfigError("must be > 0", field="resolution")
    lo = np.asarray(lo, dtype=float)[:2]
    hi = np.asarray(hi, dtype=float)[:2]
    nx, ny = np.maximum(np.ceil((hi - lo) / resolution).astype(int), 1)
    h = np.full((nx, ny), -np.inf)
    pos = np.asarray(positions, dtype=float)
    if len(pos):
        ix = np.clip(((pos[:, 0] - lo[0]) / resolution).astype(int), 0, nx - 1)
        iy = np.clip(((pos[:, 1] - lo[1]) / resolution).astype(int), 0, ny - 1)
        np.maximum.at(h, (ix, iy), pos[:, 2] + np.asarray(radii, dtype=float))
    h[np.isneginf(h)] = np.nan
    xc = lo[0] + (np.arange(nx) + 0.5) * resolution
    yc = lo[1] + (np.arange(ny) + 0.5) * resolution
    return h, xc, yc


def surface_depth(particles: ParticleSet, spec: SandboxSpec, wall_gap: float | None = None) -> float:
    """Mean free-surface height, ignoring a strip along the walls."""
    d = spec.particle_diameter
    gap = 3.0 * d if wall_gap is None else wall_gap
    lx, ly, _ = spec.box
    pos = particles.positions
    inside = (pos[:, 0] > gap) & (pos[:, 0] < lx - gap) & (pos[:, 1] > gap) & (pos[:, 1] < ly - gap)
    if not inside.any():
        return 0.0
    h, _, _ = surface_height_map(pos[inside], particles.radii[inside], (gap, gap),
                                 (lx - gap, ly - gap), 2.0 * d)
    return float(np.nanmean(h))
