"""Angle-of-repose measurement with a lifted bottomless cylinder."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, SettleTimeoutError
from ..granular.boundary import BoxBoundary, CylinderWall
from ..granular.engine import GranularSystem, dem_substep
from ..granular.materials import (ALUMINIUM, InteractionTable, MaterialParams, PairTables,
                                  rayleigh_dt)
from ..granular.particles import ParticleSet
from .sandbox import DEFAULT_SAFETY_FRACTION, RADIUS_DISPERSION, lattice_positions, settle, \
    surface_height_map

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReposeSpec:
    """Lifted-cylinder test geometry; lengths in particle diameters unless noted.

    The floor is a fixed layer of bed particles (``rough_floor``) or a flat
    plane with the bed material's friction; the cylinder is made of
    ``cylinder_material``.
    """

    particle_diameter: float = 4e-3
    cylinder_radius: float = 10.0
    fill_height: float = 20.0
    lift_speed: float = 0.05
    floor_half_width: float = 30.0
    stiffness_scale: float = 0.1
    radius_dispersion: float = RADIUS_DISPERSION
    safety_fraction: float = DEFAULT_SAFETY_FRACTION
    cylinder_material: MaterialParams = ALUMINIUM
    post_lift_time: float = 1.5
    packing: float = 0.58
    rough_floor: bool = True
    floor_roughness: float = 0.5

    def __post_init__(self):
        for name in ("particle_diameter", "cylinder_radius", "fill_height", "lift_speed",
                     "floor_half_width", "stiffness_scale", "post_lift_time"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"must be > 0 (got {getattr(self, name)})", field=name)
        if self.floor_half_width <= self.cylinder_radius:
            raise ConfigError("floor must be wider than the cylinder", field="floor_half_width")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ReposeResult:
    angle_deg: float
    degenerate: bool
    heap_radius: float
    apex_height: float
    settled: bool
    particles: int
    seed: int
    profile_r: np.ndarray = field(repr=False, default=None)
    profile_h: np.ndarray = field(repr=False, default=None)
    heights: np.ndarray = field(repr=False, default=None)
    positions: np.ndarray = field(repr=False, default=None)
    radii: np.ndarray = field(repr=False, default=None)

    def summary(self) -> dict:
        return {"angle_deg": self.angle_deg, "degenerate": self.degenerate,
                "heap_radius_m": self.heap_radius, "apex_height_m": self.apex_height,
                "settled": self.settled, "particles": self.particles, "seed": self.seed}


def heap_angle(positions, radii, centre, d: float, lo=0.2, hi=0.8, base: float = 0.0):
    """Flank angle of a conical heap from its radial surface profile.

    The surface is the per-cell maximum particle top on a ``d`` grid,
    collapsed to radial bins of width ``d`` (median per bin). The heap
    radius is the first bin whose height falls below one diameter; the
    slope is fitted between ``lo`` and ``hi`` of that radius. Heights are
    measured above ``base`` (the top of a fixed floor layer). Returns
    ``(angle_deg, degenerate, heap_radius, apex, r_bins, h_bins, heights)``.
    """
    pos = np.asarray(positions, dtype=float)
    cx, cy = centre
    reach = float(np.max(np.hypot(pos[:, 0] - cx, pos[:, 1] - cy))) + d
    h, xc, yc = surface_height_map(pos, radii, (cx - reach, cy - reach),
                                   (cx + reach, cy + reach), d)
    h = h - base
    X, Y = np.meshgrid(xc, yc, indexing="ij")
    rc = np.hypot(X - cx, Y - cy)
    ok = ~np.isnan(h)
    apex = float(np.nanmax(h)) if ok.any() else 0.0
    nb = int(math.ceil(reach / d))
    r_bins = (np.arange(nb) + 0.5) * d
    h_bins = np.full(nb, np.nan)
    idx = (rc / d).astype(int)
    for b in range(nb):
        sel = ok & (idx == b)
        if sel.any():
            h_bins[b] = float(np.median(h[sel]))
    below = np.nonzero(~(h_bins >= d))[0]
    heap_r = float(r_bins[below[0]]) if len(below) else float(r_bins[-1])
    if apex < 2.0 * d or heap_r <= 0:
        return 0.0, True, heap_r, apex, r_bins, h_bins, h
    use = ok & (rc >= lo * heap_r) & (rc <= hi * heap_r)
    if use.sum() < 3:
        return 0.0, True, heap_r, apex, r_bins, h_bins, h
    slope, _ = np.polyfit(rc[use], h[use], 1)
    angle = math.degrees(math.atan(max(-slope, 0.0)))
    return angle, False, heap_r, apex, r_bins, h_bins, h


def floor_layer(centre, radius: float, d: float, dispersion: float, rng,
                roughness: float = 0.0):
    """Fixed hexagonal layer of particles resting on ``z = 0`` covering a disc.

    Centres are raised by up to ``roughness * d`` at random so the layer has
    no regular nests for the grains above.
    """
    r_nom = 0.5 * d
    pitch = d * (1.0 + dispersion) * 1.02
    rows = int(radius / (pitch * math.sqrt(3) / 2)) + 1
    pts = []
    for j in range(-rows, rows + 1):
        y = j * pitch * math.sqrt(3) / 2
        shift = 0.5 * pitch * (j % 2)
        cols = int(radius / pitch) + 1
        for i in range(-cols, cols + 1):
            x = i * pitch + shift
            if x * x + y * y <= radius * radius:
                pts.append((x, y))
    xy = np.array(pts) + np.asarray(centre, dtype=float)
    xy += rng.uniform(-0.005 * d, 0.005 * d, xy.shape)
    rad = r_nom * rng.uniform(1 - dispersion, 1 + dispersion, len(xy))
    z = rad + roughness * d * rng.uniform(0.0, 1.0, len(xy))
    return np.column_stack([xy, z]), rad


def angle_of_repose(material: MaterialParams, spec: ReposeSpec | None = None, seed: int = 0,
                    max_settle_steps: int = 200_000) -> ReposeResult:
    """Fill a cylinder standing on a rough floor, lift it and measure the heap angle."""
    spec = spec or ReposeSpec()
    rng = np.random.default_rng(seed)
    d = spec.particle_diameter
    r_nom = 0.5 * d
    bed_mat = material.with_stiffness_scale(spec.stiffness_scale) \
        if spec.stiffness_scale != 1.0 else material
    # rough floor: the floor shares the bed material's friction
    floor = MaterialParams(f"{material.name}_floor", bed_mat.density, bed_mat.poisson_ratio,
                           bed_mat.young_modulus, bed_mat.restitution, bed_mat.static_friction,
                           bed_mat.rolling_friction)
    tables = PairTables([bed_mat, spec.cylinder_material, floor], InteractionTable())
    half = spec.floor_half_width * d
    R = spec.cylinder_radius * d
    H = spec.fill_height * d
    c = (half, half)
    n_target = int(spec.packing * math.pi * R * R * H / (math.pi / 6.0 * d ** 3))
    d_max = d * (1.0 + spec.radius_dispersion)
    spacing = 1.05 * d_max
    inner = R - 0.5 * d_max
    # lattice on the inscribed square of the cylinder, stacked high enough
    side = 2.0 * inner
    per_layer = int((side / spacing) ** 2 * math.pi / 4.0)
    top = (n_target / max(per_layer, 1) + 2) * spacing * 1.3
    grid_pos = lattice_positions((c[0] - inner, c[1] - inner, 0.0),
                                 (c[0] + inner, c[1] + inner, top), spacing, 10 ** 9, rng,
                                 0.02 * d)
    inside = np.hypot(grid_pos[:, 0] - c[0], grid_pos[:, 1] - c[1]) <= inner - 0.5 * spacing
    pos = grid_pos[inside][:n_target]
    if len(pos) < n_target:
        raise ConfigError("cylinder lattice too short", field="fill_height")
    radii = r_nom * rng.uniform(1 - spec.radius_dispersion, 1 + spec.radius_dispersion, len(pos))
    n_free = len(pos)
    base = 0.0
    if spec.rough_floor:
        fpos, frad = floor_layer(c, half - d, d, spec.radius_dispersion, rng,
                                 spec.floor_roughness)
        base = float(np.mean(fpos[:, 2] + frad))
        pos = np.vstack([pos + [0.0, 0.0, base], fpos])
        radii = np.concatenate([radii, frad])
    active = np.arange(len(pos)) < n_free
    ps = ParticleSet.create(pos, radii, 0, [m.density for m in tables.materials], active=active)
    cyl_height = float(pos[:, 2].max()) + 2 * d
    cyl = CylinderWall(c, R, 0.0, cyl_height, material=spec.cylinder_material.name)
    box = BoxBoundary((2 * half, 2 * half, cyl_height), wall_material=floor.name)
    dt = rayleigh_dt(bed_mat, r_nom * (1 - spec.radius_dispersion), spec.safety_fraction)
    system = GranularSystem(ps, tables, box, (0.0, 0.0, -9.81), dt, cylinders=[cyl],
                            domain_height=2.0 * cyl_height)
    settle(system, max_steps=max_settle_steps)
    fill_top = float(np.max(system.particles.positions[:, 2] + system.particles.radii))
    log.info("repose: %d particles settled to %.1f mm; lifting", len(pos), 1e3 * fill_top)

    cyl.lift_speed = spec.lift_speed
    while cyl.z_bottom < fill_top + d:
        for _ in range(50):
            dem_substep(system)
    # parked clear of the heap
    cyl.lift_speed = 0.0
    settled = True
    try:
        settle(system, max_steps=int(math.ceil(spec.post_lift_time / dt)))
    except SettleTimeoutError:
        settled = False
    p = system.particles
    free = p.active
    angle, degenerate, heap_r, apex, rb, hb, hmap = heap_angle(p.positions[free], p.radii[free],
                                                               c, d, base=base)
    log.info("repose: %s angle %.2f deg (heap radius %.1f mm, apex %.1f mm)", material.name,
             angle, 1e3 * heap_r, 1e3 * apex)
    return ReposeResult(angle, degenerate, heap_r, apex, settled, n_free, seed, rb, hb, hmap,
                        p.positions[free].copy(), p.radii[free].copy())
