"""Multi-finger gripper model: palm rail, radial finger sliders and phalanx chains."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy.optimize import brentq

from ..coupling.shapes import CollisionShape
from ..errors import ConfigError
from .tree import PRISMATIC, REVOLUTE, BodySpec, JointSpec, KinematicTree, axis_rotation

# Large enough that the limits hold within 1e-3 rad / 1e-4 m under the peak load.
LIMIT_STIFFNESS_FACTOR = 1e4


@dataclass(frozen=True)
class GripperGeometry:
    """Dimensions, masses and joint constants of the gripper (SI units).

    The per-joint resting bend of the phalanges is not an input: it is solved
    so that the resting footprint has diameter ``footprint_diameter``.
    Opening is the direction in which a finger flattens.
    """

    n_fingers: int = 8
    n_phalanges: int = 4
    footprint_diameter: float = 0.25
    palm_radius: float = 0.045
    palm_half_height: float = 0.005
    palm_rounding: float = 0.002
    slider_length: float = 0.015
    phalanx_length: float = 0.040
    finger_radius: float = 0.006
    palm_mass: float = 0.7
    slider_mass: float = 0.02
    phalanx_mass: float = 0.02
    phalanx_stiffness: float = 0.5
    phalanx_damping: float = 0.005
    slider_stiffness: float = 500.0
    slider_damping: float = 5.0
    slider_travel: float = 0.010
    opening_range_deg: float = 10.0
    closing_range_deg: float = 30.0
    limit_stiffness_factor: float = LIMIT_STIFFNESS_FACTOR
    rail_damping: float = 0.0
    material: str = "aluminium"

    def __post_init__(self):
        positive = ("footprint_diameter", "palm_radius", "palm_half_height", "slider_length",
                    "phalanx_length", "finger_radius", "palm_mass", "slider_mass",
                    "phalanx_mass")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"must be > 0 (got {getattr(self, name)})", field=name)
        if self.n_fingers < 1 or self.n_phalanges < 1:
            raise ConfigError("need at least one finger with one phalanx", field="n_fingers")
        for name in ("phalanx_stiffness", "phalanx_damping", "slider_stiffness",
                     "slider_damping", "slider_travel", "opening_range_deg",
                     "closing_range_deg", "limit_stiffness_factor", "rail_damping",
                     "palm_rounding"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"must be >= 0 (got {getattr(self, name)})", field=name)
        if self.palm_rounding > min(self.palm_radius, self.palm_half_height):
            raise ConfigError("rounding exceeds palm size", field="palm_rounding")

    @property
    def total_mass(self) -> float:
        return (self.palm_mass + self.n_fingers * self.slider_mass
                + self.n_fingers * self.n_phalanges * self.phalanx_mass)

    def scaled(self, factor: float) -> "GripperGeometry":
        """Lengths multiplied by ``factor``; masses and joint constants kept."""
        lengths = ("footprint_diameter", "palm_radius", "palm_half_height", "palm_rounding",
                   "slider_length", "phalanx_length", "finger_radius", "slider_travel")
        return replace(self, **{k: getattr(self, k) * factor for k in lengths})

    def to_dict(self) -> dict:
        return asdict(self)


def _finger_reach(g: GripperGeometry, bend: float) -> float:
    """Largest radial distance of the finger envelope for a uniform joint bend."""
    r = g.palm_radius + g.slider_length
    best = r
    for k in range(1, g.n_phalanges + 1):
        r += g.phalanx_length * math.cos(k * bend)
        best = max(best, r)
    return max(best + g.finger_radius, g.palm_radius)


def resting_bend(g: GripperGeometry) -> float:
    """Uniform per-joint bend (rad) that gives the configured footprint diameter."""
    target = 0.5 * g.footprint_diameter
    lo, hi = 0.0, math.pi / 2
    f = lambda b: _finger_reach(g, b) - target  # noqa: E731
    if f(lo) < 0:
        raise ConfigError(f"fingers too short for a {g.footprint_diameter} m footprint",
                          field="footprint_diameter")
    if f(hi) > 0:
        raise ConfigError(f"fingers too long for a {g.footprint_diameter} m footprint",
                          field="footprint_diameter")
    # the reach is not monotone beyond the point where the first link turns back;
    # bracket on the first sign change scanning from straight fingers
    grid = np.linspace(lo, hi, 721)
    vals = np.array([f(b) for b in grid])
    k = int(np.argmax(vals <= 0))
    return brentq(f, grid[k - 1], grid[k], xtol=1e-14)


def _rod_inertia(m, length, radius):
    along = 0.5 * m * radius ** 2
    across = m * (length ** 2 / 12.0 + radius ** 2 / 4.0)
    return (along, across, across)


def _effective_inertia(tree: KinematicTree) -> np.ndarray:
    return np.diag(tree.mass_matrix()).copy()


def build_gripper(geom: GripperGeometry | None = None, theta: float = 0.0,
                  palm_position=(0.0, 0.0, 0.0), gravity=(0.0, 0.0, -9.81),
                  palm_mode: str = "rail") -> KinematicTree:
    """Assemble the gripper tree in its resting pose.

    The palm axis is the sandbox ``z`` axis. In ``rail`` mode the palm
    slides on a prismatic rail through ``palm_position`` along
    ``(sin theta, 0, cos theta)``; ``free`` mode gives it six degrees of
    freedom through massless intermediate links.
    """
    g = geom or GripperGeometry()
    if palm_mode not in ("rail", "free"):
        raise ConfigError(f"unknown palm mode {palm_mode!r}", field="palm_mode")
    bend = resting_bend(g)
    bodies: list[BodySpec] = []
    joints: list[JointSpec] = []
    k_lim = g.limit_stiffness_factor

    palm_shape = CollisionShape("disc", g.material, radius=g.palm_radius,
                                half_height=g.palm_half_height, rounding=g.palm_rounding)
    Ip_xy = g.palm_mass * (3 * g.palm_radius ** 2 + (2 * g.palm_half_height) ** 2) / 12.0
    palm = BodySpec("palm", g.palm_mass, (Ip_xy, Ip_xy, 0.5 * g.palm_mass * g.palm_radius ** 2),
                    (palm_shape,))
    if palm_mode == "rail":
        axis = (math.sin(theta), 0.0, math.cos(theta))
        bodies.append(palm)
        joints.append(JointSpec(PRISMATIC, -1, axis, parent_anchor=tuple(palm_position),
                                damping=g.rail_damping, name="palm_rail"))
    else:
        axes = np.eye(3)
        for k in range(6):
            kind = PRISMATIC if k < 3 else REVOLUTE
            bodies.append(BodySpec(f"palm_link{k}", 0.0, (0, 0, 0), virtual=True))
            joints.append(JointSpec(kind, k - 1, axes[k % 3],
                                    parent_anchor=tuple(palm_position) if k == 0 else (0, 0, 0),
                                    name=f"palm_free{k}"))
        bodies[-1] = palm
    palm_index = len(bodies) - 1

    L = g.phalanx_length
    Ls = g.slider_length
    rc = g.finger_radius
    open_r = math.radians(g.opening_range_deg)
    close_r = math.radians(g.closing_range_deg)
    for f in range(g.n_fingers):
        phi = 2.0 * math.pi * f / g.n_fingers
        er = (math.cos(phi), math.sin(phi), 0.0)
        Rz = axis_rotation((0.0, 0.0, 1.0), phi)
        slider_shape = CollisionShape("capsule", g.material, a=(-Ls / 2, 0, 0), b=(Ls / 2, 0, 0),
                                      radius=rc)
        bodies.append(BodySpec(f"slider{f}", g.slider_mass, _rod_inertia(g.slider_mass, Ls, rc),
                               (slider_shape,)))
        anchor = (g.palm_radius * er[0], g.palm_radius * er[1], -g.palm_half_height)
        joints.append(JointSpec(
            PRISMATIC, palm_index, er, parent_anchor=anchor, child_anchor=(-Ls / 2, 0, 0),
            rest_rotation=Rz, spring_stiffness=g.slider_stiffness, damping=g.slider_damping,
            limits=(-g.slider_travel, g.slider_travel),
            limit_stiffness=k_lim * g.slider_stiffness, name=f"slider{f}"))
        parent = len(bodies) - 1
        parent_tip = (Ls / 2, 0.0, 0.0)
        for p in range(g.n_phalanges):
            shape = CollisionShape("capsule", g.material, a=(-L / 2, 0, 0), b=(L / 2, 0, 0),
                                   radius=rc)
            bodies.append(BodySpec(f"finger{f}_phalanx{p}", g.phalanx_mass,
                                   _rod_inertia(g.phalanx_mass, L, rc), (shape,)))
            joints.append(JointSpec(
                REVOLUTE, parent, (0.0, 1.0, 0.0), parent_anchor=parent_tip,
                child_anchor=(-L / 2, 0, 0), spring_stiffness=g.phalanx_stiffness,
                rest_coordinate=bend, damping=g.phalanx_damping,
                limits=(bend - open_r, bend + close_r),
                limit_stiffness=k_lim * g.phalanx_stiffness, name=f"finger{f}_joint{p}"))
            parent = len(bodies) - 1
            parent_tip = (L / 2, 0.0, 0.0)

    tree = KinematicTree(bodies, joints, gravity=gravity, load_body=palm_index)
    # critically damped limit penalties, sized with the resting joint-space inertia
    m_eff = _effective_inertia(tree)
    for k, j in enumerate(tree.joints):
        if j.limit_stiffness > 0:
            j.limit_damping = 2.0 * math.sqrt(j.limit_stiffness * m_eff[k])
            tree.c_limit[k] = j.limit_damping
    tree.geometry = g
    tree.rest_bend = bend
    tree.palm_index = palm_index
    return tree


def body_poses(tree: KinematicTree):
    kin = tree.kinematics()
    return kin.rotation, kin.position


def footprint_diameter(tree: KinematicTree, axis=(0.0, 0.0, 1.0)) -> float:
    """Diameter of the smallest palm-centred disc covering all shapes, seen along ``axis``."""
    R, x = body_poses(tree)
    u = np.asarray(axis, dtype=float)
    u = u / np.linalg.norm(u)
    centre = x[tree.palm_index]
    best = 0.0
    # sample directions in the plane normal to the axis; shapes are convex
    e1 = np.cross(u, [1.0, 0.0, 0.0] if abs(u[0]) < 0.9 else [0.0, 1.0, 0.0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(u, e1)
    for ang in np.linspace(0.0, 2.0 * math.pi, 721)[:-1]:
        d = math.cos(ang) * e1 + math.sin(ang) * e2
        for b, body in enumerate(tree.bodies):
            for s in body.shapes:
                best = max(best, s.support(d, R[b], x[b]) - d @ centre)
    return 2.0 * best


def lowest_point(tree: KinematicTree, down=(0.0, 0.0, -1.0)) -> float:
    """Largest extent of the gripper along ``down`` (e.g. minus the lowest z)."""
    R, x = body_poses(tree)
    return max(s.support(down, R[b], x[b])
               for b, body in enumerate(tree.bodies) for s in body.shapes)


def shape_table(tree: KinematicTree):
    """Flattened list of ``(body index, shape)`` for every collision shape."""
    return [(b, s) for b, body in enumerate(tree.bodies) for s in body.shapes]
