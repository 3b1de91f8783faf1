"""Reduced-coordinate dynamics of a tree of rigid bodies.

Every body hangs off its parent (or the world) by one revolute or prismatic
joint. Body frames sit at the centre of mass with principal axes. The joint
space mass matrix is assembled from body Jacobians, which is equivalent to
the composite-rigid-body method for a tree; velocity-product terms come from
a forward recursion.

Joint springs, dampers and limit penalties are integrated linearly
implicitly inside :func:`mbd_step`, so stiff limits do not restrict the
step size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from numba import njit

from ..errors import ConfigError, IntegrationFault, ModelFault

REVOLUTE = "revolute"
PRISMATIC = "prismatic"
MBD_SUBSTEPS = 10


def axis_rotation(u, angle: float) -> np.ndarray:
    """Rotation matrix for ``angle`` about unit axis ``u`` (right hand)."""
    x, y, z = u
    c = math.cos(angle)
    s = math.sin(angle)
    C = 1.0 - c
    return np.array([
        [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
        [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
        [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
    ])


def _cross(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


@dataclass
class BodySpec:
    """Rigid body with its centre of mass at the frame origin.

    ``virtual`` bodies are massless links used to chain several joints
    between two real bodies; they are not counted as gripper bodies.
    """

    name: str
    mass: float
    inertia: tuple
    shapes: tuple = ()
    virtual: bool = False

    def __post_init__(self):
        self.inertia = tuple(float(v) for v in self.inertia)
        if len(self.inertia) != 3:
            raise ConfigError("inertia needs three principal values", field=f"{self.name}.inertia")
        if self.virtual:
            if self.mass != 0 or any(self.inertia):
                raise ConfigError("virtual bodies are massless", field=f"{self.name}.mass")
            return
        if not self.mass > 0:
            raise ConfigError(f"must be > 0 (got {self.mass})", field=f"{self.name}.mass")
        if not all(v > 0 for v in self.inertia):
            raise ConfigError(f"must be > 0 (got {self.inertia})", field=f"{self.name}.inertia")


@dataclass
class JointSpec:
    """Joint attaching a body to its parent.

    ``axis`` and ``parent_anchor`` are in the parent frame (the world frame
    for ``parent == -1``); ``child_anchor`` is the joint location in the
    child frame and ``rest_rotation`` the child orientation relative to the
    parent at ``q = 0``. Limits with ``lo == hi`` lock the joint.
    """

    kind: str
    parent: int
    axis: tuple
    parent_anchor: tuple = (0.0, 0.0, 0.0)
    child_anchor: tuple = (0.0, 0.0, 0.0)
    rest_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    spring_stiffness: float = 0.0
    rest_coordinate: float = 0.0
    damping: float = 0.0
    limits: tuple = (-math.inf, math.inf)
    limit_stiffness: float = 0.0
    limit_damping: float = 0.0
    actuation: Callable[[float], float] | None = None
    name: str = ""

    def __post_init__(self):
        where = self.name or "joint"
        if self.kind not in (REVOLUTE, PRISMATIC):
            raise ConfigError(f"unknown joint kind {self.kind!r}", field=f"{where}.kind")
        axis = np.asarray(self.axis, dtype=float)
        norm = float(np.linalg.norm(axis))
        if not norm > 0:
            raise ConfigError("axis must be non-zero", field=f"{where}.axis")
        self.axis = axis / norm
        self.parent_anchor = np.asarray(self.parent_anchor, dtype=float)
        self.child_anchor = np.asarray(self.child_anchor, dtype=float)
        self.rest_rotation = np.asarray(self.rest_rotation, dtype=float)
        lo, hi = self.limits
        if not lo <= self.rest_coordinate <= hi:
            raise ConfigError(f"rest coordinate {self.rest_coordinate} outside limits {self.limits}",
                              field=f"{where}.rest_coordinate")
        for name in ("spring_stiffness", "damping", "limit_stiffness", "limit_damping"):
            if not getattr(self, name) >= 0:
                raise ConfigError("must be >= 0", field=f"{where}.{name}")

    @property
    def locked(self) -> bool:
        return self.limits[0] == self.limits[1]


def joint_generalized_force(joint: JointSpec, q: float, qd: float, t: float) -> float:
    """Spring, damper, limit penalty and actuation acting on one joint coordinate."""
    f = -joint.spring_stiffness * (q - joint.rest_coordinate) - joint.damping * qd
    lo, hi = joint.limits
    if q > hi:
        f += -joint.limit_stiffness * (q - hi) - joint.limit_damping * qd
    elif q < lo:
        f += -joint.limit_stiffness * (q - lo) - joint.limit_damping * qd
    if joint.actuation is not None:
        f += joint.actuation(t)
    return f


@dataclass
class TreeKinematics:
    """World-frame poses, velocities, Jacobians and velocity-product accelerations."""

    rotation: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    omega: np.ndarray
    jac_v: np.ndarray
    jac_w: np.ndarray
    accel_bias: np.ndarray
    alpha_bias: np.ndarray


class KinematicTree:
    """Bodies, joints and the joint state ``(q, qd)`` of an articulated tree.

    Joint ``k`` connects body ``k`` to ``joints[k].parent``; parents come
    before children. ``load_body`` receives the applied palm load.
    """

    def __init__(self, bodies, joints, gravity=(0.0, 0.0, -9.81), load_body: int = 0):
        if len(bodies) != len(joints):
            raise ConfigError("one joint per body required", field="joints")
        for k, j in enumerate(joints):
            if not -1 <= j.parent < k:
                raise ConfigError(f"parent of body {k} must precede it", field="joints")
        self.bodies = list(bodies)
        self.joints = list(joints)
        self.gravity = np.asarray(gravity, dtype=float)
        self.load_body = load_body
        self.palm_index = load_body
        self.geometry = None
        self.rest_bend = None
        n = len(bodies)
        self.q = np.array([j.rest_coordinate for j in joints], dtype=float)
        self.qd = np.zeros(n)
        self.t = 0.0
        self.mass = np.array([b.mass for b in bodies], dtype=float)
        self.inertia_body = np.array([b.inertia for b in bodies], dtype=float)
        self.revolute = np.array([j.kind == REVOLUTE for j in joints])
        self.locked = np.array([j.locked for j in joints])
        self.k_spring = np.array([j.spring_stiffness for j in joints])
        self.c_spring = np.array([j.damping for j in joints])
        self.q_rest = np.array([j.rest_coordinate for j in joints])
        self.lo = np.array([j.limits[0] for j in joints])
        self.hi = np.array([j.limits[1] for j in joints])
        self.k_limit = np.array([j.limit_stiffness for j in joints])
        self.c_limit = np.array([j.limit_damping for j in joints])
        # ancestors[b, k]: joint k lies on the path from the world to body b
        self.ancestors = np.zeros((n, n), dtype=bool)
        for b in range(n):
            k = b
            while k >= 0:
                self.ancestors[b, k] = True
                k = joints[k].parent

    @property
    def dof(self) -> int:
        return len(self.joints)

    @property
    def n_bodies(self) -> int:
        return sum(not b.virtual for b in self.bodies)

    @property
    def total_mass(self) -> float:
        return float(self.mass.sum())

    def copy_state(self):
        return self.q.copy(), self.qd.copy(), self.t

    def set_state(self, q, qd, t=None):
        self.q = np.array(q, dtype=float)
        self.qd = np.array(qd, dtype=float)
        if t is not None:
            self.t = t

    def _arrays(self):
        if not hasattr(self, "_packed"):
            js = self.joints
            self._packed = (
                np.array([j.parent for j in js], dtype=np.int64),
                self.revolute.copy(),
                np.array([j.axis for j in js]),
                np.array([j.parent_anchor for j in js]),
                np.array([j.child_anchor for j in js]),
                np.array([j.rest_rotation for j in js]),
            )
        return self._packed

    def kinematics(self, q=None, qd=None) -> TreeKinematics:
        q = self.q if q is None else np.asarray(q, dtype=float)
        qd = self.qd if qd is None else np.asarray(qd, dtype=float)
        R, x, v, w, a0, al0, axes, points = _kinematics(*self._arrays(), q, qd)
        jv, jw = _jacobians(self.revolute, self.ancestors, x, axes, points)
        return TreeKinematics(R, x, v, w, jv, jw, a0, al0)

    def world_inertia(self, kin: TreeKinematics) -> np.ndarray:
        R = kin.rotation
        return np.einsum("bij,bj,bkj->bik", R, self.inertia_body, R)

    def mass_matrix(self, kin: TreeKinematics | None = None) -> np.ndarray:
        kin = kin or self.kinematics()
        Iw = self.world_inertia(kin)
        M = np.einsum("b,bip,biq->pq", self.mass, kin.jac_v, kin.jac_v)
        M += np.einsum("bip,bij,bjq->pq", kin.jac_w, Iw, kin.jac_w)
        return M

    def bias_forces(self, kin: TreeKinematics) -> np.ndarray:
        """Velocity-product generalized forces ``C(q, qd) qd``."""
        Iw = self.world_inertia(kin)
        Iw_w = np.einsum("bij,bj->bi", Iw, kin.omega)
        body_f = self.mass[:, None] * kin.accel_bias
        body_t = np.einsum("bij,bj->bi", Iw, kin.alpha_bias) + np.cross(kin.omega, Iw_w)
        return (np.einsum("bip,bi->p", kin.jac_v, body_f)
                + np.einsum("bip,bi->p", kin.jac_w, body_t))

    def _body_loads(self, wrenches=None, load=None):
        F = self.mass[:, None] * self.gravity[None, :]
        T = np.zeros_like(F)
        if wrenches is not None:
            wrenches = np.asarray(wrenches, dtype=float)
            F = F + wrenches[:, 0:3]
            T = T + wrenches[:, 3:6]
        if load is not None:
            F[self.load_body] += np.asarray(load, dtype=float)
        return F, T

    def applied_forces(self, kin: TreeKinematics, wrenches=None, load=None) -> np.ndarray:
        """Generalized forces of gravity, body wrenches (world frame, at COM) and the load."""
        F, T = self._body_loads(wrenches, load)
        return np.einsum("bip,bi->p", kin.jac_v, F) + np.einsum("bip,bi->p", kin.jac_w, T)

    def dynamics_terms(self, q, qd, F, T):
        """Mass matrix and generalized applied-minus-bias forces (compiled path)."""
        return _dynamics_terms(*self._arrays(), self.mass, self.inertia_body, self.ancestors,
                               q, qd, F, T)

    def joint_forces(self, q, qd, t) -> np.ndarray:
        return np.array([joint_generalized_force(j, q[k], qd[k], t)
                         for k, j in enumerate(self.joints)])

    def actuation(self, t) -> np.ndarray:
        return np.array([j.actuation(t) if j.actuation is not None else 0.0 for j in self.joints])

    def energy(self) -> dict:
        """Kinetic, joint-spring (including limit penalty) and gravitational energy."""
        kin = self.kinematics()
        Iw_w = np.einsum("bij,bj->bi", self.world_inertia(kin), kin.omega)
        ke = 0.5 * float(np.sum(self.mass * np.sum(kin.velocity ** 2, axis=1))
                         + np.sum(kin.omega * Iw_w))
        q = self.q
        spring = 0.5 * float(np.sum(self.k_spring * (q - self.q_rest) ** 2))
        over = np.where(q > self.hi, q - self.hi, 0.0) + np.where(q < self.lo, q - self.lo, 0.0)
        spring += 0.5 * float(np.sum(self.k_limit * over ** 2))
        pe = -float(np.sum(self.mass * (kin.position @ self.gravity)))
        return {"kinetic": ke, "spring": spring, "potential": pe, "total": ke + spring + pe}

    def limit_violation(self) -> np.ndarray:
        """Per-joint distance outside the limits (zero inside)."""
        return np.maximum(np.maximum(self.q - self.hi, self.lo - self.q), 0.0)


def _solve(A, b, free):
    out = np.zeros_like(b)
    if not free.any():
        return out
    Af = A[np.ix_(free, free)]
    try:
        out[free] = np.linalg.solve(Af, b[free])
    except np.linalg.LinAlgError as exc:
        raise ModelFault(f"singular joint-space mass matrix: {exc}") from None
    return out


def forward_dynamics(tree: KinematicTree, wrenches=None, load=None, t: float | None = None):
    """Joint accelerations for the current state; locked joints get zero."""
    t = tree.t if t is None else t
    F, T = tree._body_loads(wrenches, load)
    M, tau = tree.dynamics_terms(tree.q, tree.qd, F, T)
    tau = tau + tree.joint_forces(tree.q, tree.qd, t)
    return _solve(M, tau, ~tree.locked)


def mbd_step(tree: KinematicTree, wrenches=None, t: float | None = None, dt_cpl: float = 0.01,
             load=None, substeps: int = MBD_SUBSTEPS):
    """Advance the tree by ``dt_cpl`` with wrenches and load held constant.

    Each substep solves ``(M + h C + h^2 K) qd' = M qd + h (tau - K (q - q_ref))``
    where ``K`` and ``C`` collect joint springs, dampers and any limit
    penalty active at the start of the substep, then sets ``q += h qd'``.
    Returns ``(q, qd)``.
    """
    if not dt_cpl > 0:
        raise ConfigError(f"must be > 0 (got {dt_cpl})", field="dt_cpl")
    t = tree.t if t is None else t
    h = dt_cpl / substeps
    free = ~tree.locked
    q, qd = tree.q, tree.qd
    F, T = tree._body_loads(wrenches, load)
    actuated = any(j.actuation is not None for j in tree.joints)
    for k in range(substeps):
        M, tau = tree.dynamics_terms(q, qd, F, T)
        if actuated:
            tau = tau + tree.actuation(t + k * h)
        above = q > tree.hi
        below = q < tree.lo
        K = tree.k_spring + np.where(above | below, tree.k_limit, 0.0)
        C = tree.c_spring + np.where(above | below, tree.c_limit, 0.0)
        excess = np.where(above, q - tree.hi, 0.0) + np.where(below, q - tree.lo, 0.0)
        elastic = -tree.k_spring * (q - tree.q_rest) - tree.k_limit * excess
        A = M + np.diag(h * C + h * h * K)
        rhs = M @ qd + h * (tau + elastic)
        qd = _solve(A, rhs, free)
        q = q + h * qd
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
            raise IntegrationFault("non-finite joint state", time=t + k * h, phase="mbd")
    tree.q = q
    tree.qd = qd
    tree.t = t + dt_cpl
    return q, qd


@njit(cache=True)
def _cross3(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


@njit(cache=True)
def _rot(u, angle):
    x, y, z = u[0], u[1], u[2]
    c = math.cos(angle)
    s = math.sin(angle)
    C = 1.0 - c
    out = np.empty((3, 3))
    out[0, 0] = c + x * x * C
    out[0, 1] = x * y * C - z * s
    out[0, 2] = x * z * C + y * s
    out[1, 0] = y * x * C + z * s
    out[1, 1] = c + y * y * C
    out[1, 2] = y * z * C - x * s
    out[2, 0] = z * x * C - y * s
    out[2, 1] = z * y * C + x * s
    out[2, 2] = c + z * z * C
    return out


@njit(cache=True)
def _kinematics(parent, revolute, axis, panchor, canchor, R0, q, qd):
    """Forward pass: poses, velocities and the accelerations at zero ``qdd``."""
    n = parent.shape[0]
    R = np.empty((n, 3, 3))
    x = np.empty((n, 3))
    v = np.empty((n, 3))
    w = np.empty((n, 3))
    a0 = np.empty((n, 3))
    al0 = np.empty((n, 3))
    axes = np.empty((n, 3))
    points = np.empty((n, 3))
    zero = np.zeros(3)
    for c in range(n):
        p = parent[c]
        if p < 0:
            Rp = np.eye(3)
            xp = zero
            vp = zero
            wp = zero
            ap = zero
            alp = zero
        else:
            Rp = R[p]
            xp = x[p]
            vp = v[p]
            wp = w[p]
            ap = a0[p]
            alp = al0[p]
        s = Rp @ axis[c]
        J = xp + Rp @ panchor[c]
        if revolute[c]:
            Rc = Rp @ _rot(axis[c], q[c]) @ R0[c]
            xc = J - Rc @ canchor[c]
            wc = wp + s * qd[c]
            rJ = J - xp
            d = xc - J
            alc = alp + _cross3(wp, s * qd[c])
            vc = vp + _cross3(wp, rJ) + _cross3(wc, d)
            ac = (ap + _cross3(alp, rJ) + _cross3(wp, _cross3(wp, rJ))
                  + _cross3(alc, d) + _cross3(wc, _cross3(wc, d)))
        else:
            J = J + s * q[c]
            Rc = Rp @ R0[c]
            xc = J - Rc @ canchor[c]
            wc = wp.copy()
            r = xc - xp
            alc = alp.copy()
            vc = vp + _cross3(wp, r) + s * qd[c]
            ac = (ap + _cross3(alp, r) + _cross3(wp, _cross3(wp, r))
                  + 2.0 * _cross3(wp, s * qd[c]))
        R[c] = Rc
        x[c] = xc
        v[c] = vc
        w[c] = wc
        a0[c] = ac
        al0[c] = alc
        axes[c] = s
        points[c] = J
    return R, x, v, w, a0, al0, axes, points


@njit(cache=True)
def _jacobians(revolute, ancestors, x, axes, points):
    n = x.shape[0]
    jv = np.zeros((n, 3, n))
    jw = np.zeros((n, 3, n))
    for b in range(n):
        for k in range(n):
            if not ancestors[b, k]:
                continue
            if revolute[k]:
                lev = _cross3(axes[k], x[b] - points[k])
                for i in range(3):
                    jv[b, i, k] = lev[i]
                    jw[b, i, k] = axes[k, i]
            else:
                for i in range(3):
                    jv[b, i, k] = axes[k, i]
    return jv, jw


@njit(cache=True)
def _dynamics_terms(parent, revolute, axis, panchor, canchor, R0, mass, inertia_body,
                    ancestors, q, qd, F, T):
    """Joint-space mass matrix and applied-minus-velocity-product forces."""
    R, x, v, w, a0, al0, axes, points = _kinematics(parent, revolute, axis, panchor,
                                                    canchor, R0, q, qd)
    n = parent.shape[0]
    M = np.zeros((n, n))
    tau = np.zeros(n)
    cols = np.empty(n, dtype=np.int64)
    jv = np.empty((n, 3))
    jw = np.empty((n, 3))
    for b in range(n):
        m = mass[b]
        Iw = R[b] @ np.diag(inertia_body[b]) @ R[b].T
        Iww = Iw @ w[b]
        fb = F[b] - m * a0[b]
        tb = T[b] - Iw @ al0[b] - _cross3(w[b], Iww)
        nc = 0
        k = b
        while k >= 0:
            cols[nc] = k
            if revolute[k]:
                jv[nc] = _cross3(axes[k], x[b] - points[k])
                jw[nc] = axes[k]
            else:
                jv[nc] = axes[k]
                jw[nc, :] = 0.0
            nc += 1
            k = parent[k]
        for i in range(nc):
            tau[cols[i]] += jv[i] @ fb + jw[i] @ tb
            Ijw = Iw @ jw[i]
            for j in range(nc):
                M[cols[i], cols[j]] += m * (jv[i] @ jv[j]) + jw[j] @ Ijw
    return M, tau
