"""Explicit soft-sphere stepping: contacts, boundaries, external shapes, integration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, IntegrationFault, TunnelingError
from . import kernels
from .boundary import BoxBoundary
from .grid import SpatialGrid
from .materials import PairTables
from .particles import ContactLedger, ParticleSet

DEFAULT_ETA_R = 0.3
# Verlet skin as a fraction of the largest particle diameter.
DEFAULT_SKIN_FRACTION = 0.15


@dataclass
class ShapeFrame:
    """Posed external shapes for one substep plus their reaction accumulators.

    ``geo`` rows follow :func:`kernels.sphere_shape_query`; bodies own
    shapes through ``body``. The accumulators are added to, never cleared,
    by the engine.
    """

    kind: np.ndarray
    body: np.ndarray
    material: np.ndarray
    geo: np.ndarray
    body_com: np.ndarray
    body_vel: np.ndarray
    body_omg: np.ndarray
    body_force: np.ndarray
    body_torque: np.ndarray
    body_torque_arm: np.ndarray
    body_contacts: np.ndarray


@dataclass
class StepStats:
    pair_contacts: int = 0
    wall_contacts: int = 0
    shape_contacts: int = 0
    clipping: int = 0


@dataclass
class GranularSystem:
    """Everything one explicit DEM substep reads and mutates.

    The search domain is the box (up to ``domain_height``, default twice the
    box height) or, without a box, ``domain`` given as ``(lo, hi)``.
    Candidate pairs are kept in a Verlet list padded by ``skin_fraction``
    of the largest diameter and rebuilt once any particle has drifted more
    than half the skin.
    """

    particles: ParticleSet
    tables: PairTables
    boundary: BoxBoundary | None
    gravity: np.ndarray
    dt: float
    eta_r: float = DEFAULT_ETA_R
    cylinders: list = field(default_factory=list)
    domain_height: float | None = None
    domain: tuple | None = None
    skin_fraction: float = DEFAULT_SKIN_FRACTION
    time: float = 0.0
    step_index: int = 0

    def __post_init__(self):
        self.gravity = np.asarray(self.gravity, dtype=np.float64)
        if not self.dt > 0:
            raise ConfigError("time step must be > 0", field="dt")
        if not self.skin_fraction > 0:
            raise ConfigError("skin fraction must be > 0", field="skin_fraction")
        p = self.particles
        if self.boundary is not None:
            normals, offsets = self.boundary.planes()
            wall_mat = self.tables.id_of(self.boundary.wall_material)
            self.plane_n = normals
            self.plane_d = offsets
            self.plane_mat = np.full(len(offsets), wall_mat, dtype=np.int64)
            lx, ly, lz = self.boundary.dims
            lo, hi = (0.0, 0.0, 0.0), (lx, ly, self.domain_height or 2.0 * lz)
        else:
            self.plane_n = np.zeros((0, 3))
            self.plane_d = np.zeros(0)
            self.plane_mat = np.zeros(0, dtype=np.int64)
            if self.domain is None:
                raise ConfigError("a domain (lo, hi) is required without a box", field="domain")
            lo, hi = self.domain
        rmax = float(np.max(p.radii)) if len(p) else 1e-3
        self.skin = self.skin_fraction * 2.0 * rmax
        self.grid = SpatialGrid.for_particles(lo, hi, [rmax], skin=self.skin)
        self.cyl_mat = np.array([self.tables.id_of(c.material) for c in self.cylinders],
                                dtype=np.int64)
        self.ledger = ContactLedger(len(p), len(self.plane_d) + len(self.cylinders))
        self.force = np.zeros((len(p), 3))
        self.torque = np.zeros((len(p), 3))
        self.ref_pos = p.positions.copy()
        self.wall_candidates = np.zeros(0, dtype=np.int64)
        self.stats = StepStats()
        self.rebuilds = 0
        self._stale = True

    @property
    def n(self) -> int:
        return len(self.particles)

    @property
    def shape_margin(self) -> float:
        """Search padding for external shapes: largest radius plus the skin."""
        return 0.5 * self.grid.cell_size

    def invalidate(self):
        """Force a neighbour-list rebuild (call after moving particles by hand)."""
        self._stale = True

    def cylinder_rows(self) -> np.ndarray:
        if not self.cylinders:
            return np.zeros((0, 6))
        return np.array([c.row() for c in self.cylinders], dtype=np.float64)

    def refresh_neighbours(self):
        p = self.particles
        led = self.ledger
        self.grid.rebuild(p.positions, step=self.step_index, time=self.time)
        led.set_pair_list(*kernels.build_pair_list(
            p.positions, p.radii, self.grid.cell_coord, self.grid.cell_start,
            self.grid.cell_particles, self.grid.dims, self.skin,
            led.first, led.pair_j, led.hist, led.on, led.step))
        self.wall_candidates = kernels.near_wall_candidates(
            p.positions, p.radii, self.plane_n, self.plane_d, self.cylinder_rows(), self.skin)
        self.ref_pos[:] = p.positions
        self.rebuilds += 1
        self._stale = False

    def energy(self) -> dict:
        """Kinetic, gravitational (zero at the origin) and elastic energy.

        Cylindrical shells and external shapes are not included.
        """
        p = self.particles
        ke, _ = kernels.kinetic_energy(p.velocities, p.angular_velocities, p.masses, p.inertia)
        pe = float(-np.sum(p.masses * (p.positions @ self.gravity)))
        if self._stale:
            self.refresh_neighbours()
        led = self.ledger
        el = kernels.elastic_energy(p.positions, p.radii, p.material_ids, led.pair_i, led.pair_j,
                                    led.hist, self.wall_candidates, self.plane_n, self.plane_d,
                                    self.plane_mat, led.wall_hist,
                                    self.tables.E_star, self.tables.G_star)
        return {"kinetic": ke, "potential": pe, "elastic": el, "total": ke + pe + el}


def compute_contact_forces(system: GranularSystem, shapes: ShapeFrame | None = None):
    """Fill ``system.force``/``system.torque`` with contact loads (no gravity)."""
    if system._stale:
        system.refresh_neighbours()
    p = system.particles
    led = system.ledger
    t = system.tables
    system.force[:] = 0.0
    system.torque[:] = 0.0
    stats = StepStats()

    stats.pair_contacts = kernels.pp_forces(
        p.positions, p.velocities, p.angular_velocities, p.radii, p.masses, p.inertia,
        p.material_ids, led.pair_i, led.pair_j, led.hist, led.on, led.step,
        system.step_index, t.E_star, t.G_star, t.beta, t.mu_s, t.mu_r, system.eta_r,
        system.dt, system.force, system.torque)

    if led.wall_hist.shape[1]:
        stats.wall_contacts = kernels.wall_forces(
            p.positions, p.velocities, p.angular_velocities, p.radii, p.masses, p.inertia,
            p.material_ids, system.wall_candidates, system.plane_n, system.plane_d,
            system.plane_mat, system.cylinder_rows(), system.cyl_mat,
            t.E_star, t.G_star, t.beta, t.mu_s, t.mu_r, system.eta_r, system.dt,
            led.wall_hist, led.wall_on, system.force, system.torque)

    stats.shape_contacts, stats.clipping = shape_contact_forces(system, shapes, system.force,
                                                                system.torque)
    system.stats = stats
    return stats


def shape_contact_forces(system: GranularSystem, shapes: ShapeFrame | None, force, torque):
    """Add particle-shape contact loads to ``force``/``torque`` and the shape accumulators.

    Shape contact history in the ledger advances by one step. Returns
    ``(contacts, clipping)``, where clipping counts particles whose centre
    lies inside a shape core.
    """
    led = system.ledger
    if shapes is None or not len(shapes.kind):
        led.clear_shapes()
        return 0, 0
    if system._stale:
        system.refresh_neighbours()
    p = system.particles
    t = system.tables
    grid = system.grid
    status, contacts, clipping = kernels.shape_forces(
        p.positions, p.velocities, p.angular_velocities, p.radii, p.masses, p.inertia,
        p.material_ids, grid.cell_start, grid.cell_particles, grid.lo, grid.inv_cell,
        grid.dims, shapes.kind, shapes.body, shapes.material, shapes.geo,
        shapes.body_com, shapes.body_vel, shapes.body_omg, system.shape_margin,
        t.E_star, t.G_star, t.beta, t.mu_s, t.mu_r, system.eta_r, system.dt,
        system.step_index,
        led.shape_partner, led.shape_hist, led.shape_count,
        led._shape_partner, led._shape_hist, led._shape_count, led._shape_step,
        force, torque,
        shapes.body_force, shapes.body_torque, shapes.body_torque_arm,
        shapes.body_contacts)
    _check_status(status, system, "particle-shape")
    led.swap_shapes()
    return contacts, clipping


def dem_substep(system: GranularSystem, shapes: ShapeFrame | None = None) -> StepStats:
    """Advance the granular state by one explicit step of ``system.dt``.

    Contact forces from particles, walls and (optionally) posed external
    shapes are accumulated, then velocities and positions are updated
    semi-implicitly. Reaction wrenches on shape bodies are added to the
    accumulators of ``shapes``.
    """
    stats = compute_contact_forces(system, shapes)
    p = system.particles
    g = system.gravity
    bad, fast, disp2 = kernels.integrate(
        p.positions, p.velocities, p.angular_velocities, system.force, system.torque,
        p.masses, p.inertia, p.radii, p.active, g[0], g[1], g[2], system.dt, system.ref_pos)
    if bad >= 0:
        raise IntegrationFault(f"non-finite state of particle {bad}", step=system.step_index,
                               time=system.time, phase="dem")
    if fast >= 0:
        raise TunnelingError(
            f"particle {fast} moved more than half its radius in one step",
            step=system.step_index, time=system.time, phase="dem")
    for c in system.cylinders:
        c.advance(system.dt)
    if disp2 > 0.25 * system.skin * system.skin:
        system._stale = True
    system.step_index += 1
    system.time += system.dt
    return stats


def _check_status(status, system, phase):
    if status == kernels.LEDGER_OVERFLOW:
        raise IntegrationFault("contact ledger slots exhausted (overlaps out of control)",
                               step=system.step_index, time=system.time, phase=phase)
    if status == kernels.NON_FINITE:
        raise IntegrationFault("coincident particle centres", step=system.step_index,
                               time=system.time, phase=phase)


def run_steps(system: GranularSystem, n_steps: int, shapes=None):
    for _ in range(n_steps):
        dem_substep(system, shapes)


@dataclass(frozen=True)
class Diagnostics:
    kinetic_energy: float
    max_speed: float
    contact_count: int


def diagnostics(particles: ParticleSet, ledger: ContactLedger | None = None) -> Diagnostics:
    ke, vmax = kernels.kinetic_energy(particles.velocities, particles.angular_velocities,
                                      particles.masses, particles.inertia)
    contacts = len(ledger) if ledger is not None else 0
    if not (math.isfinite(ke) and math.isfinite(vmax)):
        raise IntegrationFault("non-finite kinetic energy")
    return Diagnostics(float(ke), float(vmax), contacts)
