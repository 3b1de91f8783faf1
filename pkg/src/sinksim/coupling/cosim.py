"""Staggered co-simulation of the granular bed and the gripper tree.

Within one coupling window the bodies follow their start-of-window
velocities (a linear interpolant towards the predicted end pose) while the
bed takes explicit substeps; the window-averaged contact wrench and the palm
load then drive one multibody step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, TunnelingError
from ..granular.engine import GranularSystem, ShapeFrame, dem_substep, shape_contact_forces
from ..granular.materials import PairTables
from ..mbd.load import LoadProfile, load_vector
from ..mbd.tree import KinematicTree, mbd_step
from .shapes import CAPSULE, GEO_WIDTH


class WrenchAccumulator:
    """Per-body contact force and torque about the body COM, summed over substeps."""

    def __init__(self, n_bodies: int):
        self.force = np.zeros((n_bodies, 3))
        self.torque = np.zeros((n_bodies, 3))
        self.torque_arm = np.zeros((n_bodies, 3))
        self.contacts = np.zeros(n_bodies, dtype=np.int64)
        self.substeps = 0

    def clear(self):
        self.force[:] = 0.0
        self.torque[:] = 0.0
        self.torque_arm[:] = 0.0
        self.contacts[:] = 0
        self.substeps = 0

    def mean_wrench(self) -> np.ndarray:
        """Time-averaged wrench per body, rows ``(Fx, Fy, Fz, Tx, Ty, Tz)``."""
        n = max(self.substeps, 1)
        return np.hstack([self.force, self.torque]) / n


def _rotvec_matrices(rv):
    """Rotation matrices for rotation vectors ``rv`` (n, 3)."""
    angle = np.linalg.norm(rv, axis=1)
    out = np.broadcast_to(np.eye(3), (len(rv), 3, 3)).copy()
    moving = angle > 0
    if not moving.any():
        return out
    u = rv[moving] / angle[moving, None]
    a = angle[moving]
    K = np.zeros((len(u), 3, 3))
    K[:, 0, 1], K[:, 0, 2] = -u[:, 2], u[:, 1]
    K[:, 1, 0], K[:, 1, 2] = u[:, 2], -u[:, 0]
    K[:, 2, 0], K[:, 2, 1] = -u[:, 1], u[:, 0]
    s = np.sin(a)[:, None, None]
    c = (1.0 - np.cos(a))[:, None, None]
    out[moving] += s * K + c * (K @ K)
    return out


class GripperCollider:
    """Collision shapes of a tree packed for the compiled contact kernel."""

    def __init__(self, tree: KinematicTree, tables: PairTables):
        entries = [(b, s) for b, body in enumerate(tree.bodies) for s in body.shapes]
        self.n_bodies = tree.dof
        self.body = np.array([b for b, _ in entries], dtype=np.int64)
        self.kind = np.array([s.code for _, s in entries], dtype=np.int64)
        self.material = np.array([tables.id_of(s.material) for _, s in entries], dtype=np.int64)
        n = len(entries)
        self.p0 = np.zeros((n, 3))
        self.p1 = np.zeros((n, 3))
        self.scalars = np.zeros((n, 3))
        self.reach = np.zeros(self.n_bodies)
        for k, (b, s) in enumerate(entries):
            if s.kind == "capsule":
                self.p0[k], self.p1[k] = s.a, s.b
                self.scalars[k] = (s.radius, 0.0, 0.0)
                ext = max(np.linalg.norm(s.a), np.linalg.norm(s.b)) + s.radius
            else:
                axis = np.asarray(s.axis, dtype=float)
                self.p0[k], self.p1[k] = s.center, axis / np.linalg.norm(axis)
                self.scalars[k] = (s.radius, s.half_height, s.rounding)
                ext = np.linalg.norm(s.center) + math.hypot(s.radius, s.half_height)
            self.reach[b] = max(self.reach[b], ext)
        self.is_capsule = self.kind == CAPSULE

    def __len__(self):
        return len(self.body)

    def pose(self, R, x) -> np.ndarray:
        """Kernel geometry rows for body rotations ``R`` and COM positions ``x``."""
        Rb = R[self.body]
        xb = x[self.body]
        a = np.einsum("kij,kj->ki", Rb, self.p0) + xb
        second = np.einsum("kij,kj->ki", Rb, self.p1)
        geo = np.zeros((len(self.body), GEO_WIDTH))
        geo[:, 0:3] = a
        geo[:, 3:6] = np.where(self.is_capsule[:, None], second + xb, second)
        geo[:, 6] = self.scalars[:, 0]
        geo[:, 7] = self.scalars[:, 1]
        geo[:, 8] = self.scalars[:, 2]
        return geo

    def frame(self, R, x, v, w, acc: WrenchAccumulator) -> ShapeFrame:
        return ShapeFrame(self.kind, self.body, self.material, self.pose(R, x),
                          np.ascontiguousarray(x), np.ascontiguousarray(v),
                          np.ascontiguousarray(w), acc.force, acc.torque, acc.torque_arm,
                          acc.contacts)


def particle_body_forces(system: GranularSystem, collider: GripperCollider, R, x, v, w,
                         acc: WrenchAccumulator | None = None):
    """Contact loads between the particles and the posed bodies.

    Returns ``(particle forces, particle torques, accumulator, clipping)``;
    the accumulator holds the reactions on the bodies. Shape contact history
    in the ledger is advanced.
    """
    acc = acc or WrenchAccumulator(collider.n_bodies)
    force = np.zeros((system.n, 3))
    torque = np.zeros((system.n, 3))
    frame = collider.frame(R, x, v, w, acc)
    _, clipping = shape_contact_forces(system, frame, force, torque)
    acc.substeps += 1
    return force, torque, acc, clipping


@dataclass
class CouplingDiagnostics:
    t: float
    substeps: int
    body_contacts: int
    clipping: int
    mean_wrench: np.ndarray
    load: np.ndarray


def substep_count(dt_cpl: float, dt_dem: float) -> int:
    """Number of bed substeps per coupling window; the window must be a whole multiple."""
    if not (dt_cpl > 0 and dt_dem > 0):
        raise ConfigError("time steps must be > 0", field="dt_cpl")
    n = int(round(dt_cpl / dt_dem))
    if n < 1 or abs(n * dt_dem - dt_cpl) > 1e-9 * dt_cpl:
        raise ConfigError(f"dt_cpl={dt_cpl} is not a whole multiple of dt_dem={dt_dem}",
                          field="dt_cpl")
    return n


def cosim_step(system: GranularSystem, tree: KinematicTree, profile: LoadProfile, t: float,
               dt_cpl: float, dt_dem: float, collider: GripperCollider | None = None,
               acc: WrenchAccumulator | None = None, load_scale: float = 1.0):
    """One coupling window: bed substeps against moving bodies, then one tree step.

    ``system.dt`` must equal ``dt_dem``. Returns :class:`CouplingDiagnostics`.
    """
    n = substep_count(dt_cpl, dt_dem)
    if abs(system.dt - dt_dem) > 1e-12 * dt_dem:
        raise ConfigError(f"bed step {system.dt} differs from dt_dem={dt_dem}", field="dt_dem")
    collider = collider or GripperCollider(tree, system.tables)
    acc = acc or WrenchAccumulator(collider.n_bodies)
    acc.clear()
    kin = tree.kinematics()
    R0, x0, v, w = kin.rotation, kin.position, kin.velocity, kin.omega

    if system.n:
        r_min = float(system.particles.radii.min())
        speed = np.linalg.norm(v, axis=1) + np.linalg.norm(w, axis=1) * collider.reach
        fast = int(np.argmax(speed))
        if speed[fast] * dt_dem > 0.5 * r_min:
            raise TunnelingError(
                f"body {tree.bodies[fast].name} moves {speed[fast] * dt_dem:.3g} m per substep, "
                f"more than half the smallest particle radius",
                step=system.step_index, time=t, phase="coupling")

    clipping = 0
    contacts = 0
    for k in range(n):
        s = k * dt_dem
        R = _rotvec_matrices(w * s) @ R0 if s > 0 else R0
        x = x0 + v * s
        stats = dem_substep(system, collider.frame(R, x, v, w, acc) if system.n else None)
        acc.substeps += 1
        clipping += stats.clipping
        contacts += stats.shape_contacts
    wrench = acc.mean_wrench()
    load = load_scale * load_vector(t, profile)
    mbd_step(tree, wrench, t, dt_cpl, load=load)
    return CouplingDiagnostics(t + dt_cpl, n, int(round(contacts / n)), clipping, wrench, load)
