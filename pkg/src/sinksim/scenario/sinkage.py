"""Pressure-sinkage protocol, slope and entry-rate sweeps."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..coupling.cosim import GripperCollider, WrenchAccumulator, cosim_step, substep_count
from ..errors import ConfigError, SinksimError, StabilityError
from ..granular import kernels
from ..mbd.gripper import GripperGeometry, build_gripper, footprint_diameter, lowest_point
from ..mbd.load import EARTH_G, LoadProfile, gravity_vector, load_vector, sigma_load
from .sandbox import Bed, SandboxSpec, fill_and_settle

log = logging.getLogger(__name__)

DEFAULT_DT_CPL = 1e-3
DEFAULT_SAMPLE_RATE = 100.0

CSV_COLUMNS = ("t_s", "sigma_N", "load_x_N", "load_y_N", "load_z_N", "palm_axial_m",
               "sinkage_m", "kinetic_energy_J", "body_contacts", "clipping_warnings")


def desk_gripper() -> GripperGeometry:
    """Default gripper scaled to a 100 mm footprint; masses and springs unchanged."""
    return GripperGeometry().scaled(0.4)


def scaled_profile(theta: float, gravity: float, mass: float, t4: float = 10.0,
                   base: LoadProfile | None = None) -> LoadProfile:
    """Load schedule for a gripper of ``mass`` under ``gravity``.

    The weight term is ``mass * gravity``; preload and final increment are
    multiplied by ``gravity / 9.81`` so that lunar runs see the Earth loads
    scaled by the gravity ratio.
    """
    base = base or LoadProfile()
    base = replace(base, theta=theta, t4=t4)
    return base.scaled(gravity / EARTH_G, mg=mass * gravity)


@dataclass
class RunRecord:
    """Sampled time series of one pressure-sinkage run plus its metadata.

    Sinkage is ``nan`` before the preload reference is reached.
    """

    t: list = field(default_factory=list)
    sigma: list = field(default_factory=list)
    load: list = field(default_factory=list)
    palm_axial: list = field(default_factory=list)
    sinkage: list = field(default_factory=list)
    kinetic_energy: list = field(default_factory=list)
    body_contacts: list = field(default_factory=list)
    clipping: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    reference_time: float | None = None
    reference_axial: float | None = None
    error: str | None = None

    def __len__(self):
        return len(self.t)

    def append(self, t, sigma, load, axial, sinkage, ke, contacts, clipping):
        if self.t and not t > self.t[-1]:
            raise ValueError("record times must increase")
        self.t.append(float(t))
        self.sigma.append(float(sigma))
        self.load.append(tuple(float(v) for v in load))
        self.palm_axial.append(float(axial))
        self.sinkage.append(float(sinkage))
        self.kinetic_energy.append(float(ke))
        self.body_contacts.append(int(contacts))
        self.clipping.append(int(clipping))

    def rows(self, sinkage_phase_only: bool = True):
        """Rows in CSV column order; by default only those with a defined sinkage."""
        for k in range(len(self.t)):
            if sinkage_phase_only and math.isnan(self.sinkage[k]):
                continue
            lx, ly, lz = self.load[k]
            yield (self.t[k], self.sigma[k], lx, ly, lz, self.palm_axial[k], self.sinkage[k],
                   self.kinetic_energy[k], self.body_contacts[k], self.clipping[k])

    def curve(self):
        """``(|sigma|, sinkage)`` arrays over the sinkage phase."""
        rows = list(self.rows())
        if not rows:
            return np.zeros(0), np.zeros(0)
        arr = np.array([(abs(r[1]), r[6]) for r in rows])
        return arr[:, 0], arr[:, 1]

    @property
    def final_sinkage(self) -> float:
        _, z = self.curve()
        return float(z[-1]) if len(z) else math.nan

    @property
    def max_abs_sigma(self) -> float:
        return max((abs(s) for s in self.sigma), default=0.0)

    @property
    def total_clipping(self) -> int:
        return int(sum(self.clipping))


def place_gripper(bed: Bed, geom: GripperGeometry, theta: float, gravity_vec,
                  clearance: float | None = None, centre=None):
    """Gripper tree on its rail above the bed.

    The rail is placed so that the gripper would first touch the surface
    over ``centre`` (default: the box centre); it starts ``clearance``
    (default one particle diameter) higher, measured normal to the bed.
    """
    spec = bed.spec
    clearance = spec.particle_diameter if clearance is None else clearance
    cx, cy = centre if centre is not None else (0.5 * spec.box[0], 0.5 * spec.box[1])
    probe = build_gripper(geom, theta, (cx, cy, 0.0), gravity_vec)
    reach = 0.5 * footprint_diameter(probe) + spec.particle_diameter
    p = bed.particles
    under = np.hypot(p.positions[:, 0] - cx, p.positions[:, 1] - cy) <= reach
    top = float(np.max(p.positions[under, 2] + p.radii[under])) if under.any() else 0.0
    drop = lowest_point(probe)
    axis = np.array([math.sin(theta), 0.0, math.cos(theta)])
    start = np.array([cx, cy, top + drop]) + (clearance / math.cos(theta)) * axis
    return build_gripper(geom, theta, tuple(start), gravity_vec)


def pressure_sinkage_run(bed: Bed, geom: GripperGeometry | None = None,
                         profile: LoadProfile | None = None, gravity: float = EARTH_G,
                         sample_rate: float = DEFAULT_SAMPLE_RATE,
                         dt_cpl: float = DEFAULT_DT_CPL, progress_every: float = 1.0,
                         on_sample=None) -> RunRecord:
    """Press the gripper into ``bed`` following ``profile`` and record the sinkage curve.

    The sinkage reference is the palm position along the rail at the first
    coupling step where the load reaches the preload (``sigma <= -preload``);
    sinkage is the distance travelled along the rail since then. A schedule
    with no loading ramp (``t4 == t3``) has nothing to measure and returns an
    empty record without stepping. Stability errors are re-raised after the
    partial record is attached to the exception as ``record``.
    """
    geom = geom or GripperGeometry()
    profile = profile or LoadProfile()
    theta = profile.theta
    g_vec = gravity_vector(gravity, theta)
    system = bed.system(gravity=g_vec)
    dt_dem = system.dt
    n_sub = math.ceil(dt_cpl / dt_dem * (1.0 - 1e-12))
    dt_dem = dt_cpl / n_sub
    system.dt = dt_dem
    substep_count(dt_cpl, dt_dem)
    tree = place_gripper(bed, geom, theta, g_vec)
    record = RunRecord(metadata={
        "theta_deg": math.degrees(theta),
        "gravity_m_s2": gravity,
        "gravity_vector": list(map(float, g_vec)),
        "material": bed.spec.material.name,
        "young_modulus_used": bed.spec.bed_material.young_modulus,
        "stiffness_scale": bed.spec.stiffness_scale,
        "bed_seed": bed.seed,
        "particles": bed.n,
        "dt_cpl": dt_cpl,
        "dt_dem": dt_dem,
        "substeps": n_sub,
        "profile": profile.to_dict(),
        "gripper": geom.to_dict(),
        "gripper_mass": tree.total_mass,
    })
    if profile.t4 <= profile.t3:
        return record

    collider = GripperCollider(tree, system.tables)
    acc = WrenchAccumulator(collider.n_bodies)
    axis = profile.axis
    n_cpl = int(math.ceil(profile.t4 / dt_cpl - 1e-9))
    every = max(1, int(round(1.0 / (sample_rate * dt_cpl))))
    log_every = max(1, int(round(progress_every / dt_cpl)))
    p = system.particles
    clip_since = 0
    wall0 = time.perf_counter()
    try:
        for k in range(n_cpl):
            t = k * dt_cpl
            diag = cosim_step(system, tree, profile, t, dt_cpl, dt_dem, collider, acc)
            clip_since += diag.clipping
            t_new = (k + 1) * dt_cpl
            sigma = sigma_load(t_new, profile)
            axial = float(tree.kinematics().position[tree.palm_index] @ axis)
            if record.reference_time is None and sigma <= -profile.preload * (1 - 1e-9):
                record.reference_time = t_new
                record.reference_axial = axial
            if (k + 1) % every == 0 or k + 1 == n_cpl:
                ke, _ = kernels.kinetic_energy(p.velocities, p.angular_velocities, p.masses,
                                               p.inertia)
                sink = (record.reference_axial - axial if record.reference_axial is not None
                        else math.nan)
                record.append(t_new, sigma, load_vector(t_new, profile), axial, sink, ke,
                              diag.body_contacts, clip_since)
                clip_since = 0
                if on_sample is not None:
                    on_sample(record)
            if (k + 1) % log_every == 0:
                ke, _ = kernels.kinetic_energy(p.velocities, p.angular_velocities, p.masses,
                                               p.inertia)
                log.info("t=%.2f s sigma=%.2f N sinkage=%.3f mm KE=%.3g J contacts=%d/%d "
                         "(%.0f s wall)", t_new, sigma,
                         1e3 * (record.reference_axial - axial)
                         if record.reference_axial is not None else math.nan,
                         ke, system.stats.pair_contacts, diag.body_contacts,
                         time.perf_counter() - wall0)
    except StabilityError as exc:
        record.error = str(exc)
        exc.record = record
        raise
    record.metadata["wall_clock_s"] = time.perf_counter() - wall0
    record.metadata["reference_time_s"] = record.reference_time
    return record


@dataclass
class SweepResult:
    theta_deg: float
    t4: float
    seed: int
    record: RunRecord | None
    error: str | None = None


def slope_sweep(spec: SandboxSpec, geom: GripperGeometry | None, thetas_deg, durations,
                gravity: float = EARTH_G, seeds=None, beds=None, **run_kwargs) -> list[SweepResult]:
    """One run per (slope, duration) pair, each on a freshly settled bed with its own seed.

    ``beds`` may supply pre-settled beds keyed by seed. Errors are collected
    per run and the sweep continues.
    """
    thetas = list(thetas_deg)
    durations = list(durations)
    combos = [(th, t4) for th in thetas for t4 in durations]
    seeds = list(seeds) if seeds is not None else list(range(len(combos)))
    if len(seeds) < len(combos):
        raise ConfigError(f"need {len(combos)} seeds, got {len(seeds)}", field="seeds")
    repose = spec.material.repose_target_deg
    geom = geom or GripperGeometry()
    out = []
    for (th, t4), seed in zip(combos, seeds):
        if repose is not None and th > repose + 5:
            log.warning("slope %.1f deg exceeds the repose angle %.1f deg + 5", th, repose)
        try:
            bed = (beds or {}).get(seed) or fill_and_settle(spec, seed, gravity=gravity)
            mass = geom.total_mass
            prof = scaled_profile(math.radians(th), gravity, mass, t4)
            rec = pressure_sinkage_run(bed, geom, prof, gravity, **run_kwargs)
            out.append(SweepResult(th, t4, seed, rec))
        except SinksimError as exc:
            log.error("run theta=%s t4=%s failed: %s", th, t4, exc)
            out.append(SweepResult(th, t4, seed, getattr(exc, "record", None), str(exc)))
    return out
