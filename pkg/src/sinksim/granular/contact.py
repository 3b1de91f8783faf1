"""Reference (vectorised numpy) form of the contact laws.

The compiled engine inlines the same laws in :func:`kernels.contact_law`;
these functions are the readable versions used by the public API and as a
cross-check of the kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, IntegrationFault
from .materials import EffectivePair

SQRT_5_6 = math.sqrt(5.0 / 6.0)


@dataclass
class ContactState:
    """History carried by one ledger entry."""

    tangential_spring: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rolling_spring_torque: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def copy(self) -> "ContactState":
        return ContactState(self.tangential_spring.copy(), self.rolling_spring_torque.copy())


@dataclass(frozen=True)
class HertzMindlinResult:
    normal_force: np.ndarray
    tangential_force: np.ndarray
    normal_magnitude: float
    normal_spring: float
    sliding: bool


def normal_stiffness(pair: EffectivePair, overlap: float) -> float:
    return 2.0 * pair.E_star * math.sqrt(pair.R_star * overlap)


def tangential_stiffness(pair: EffectivePair, overlap: float) -> float:
    return 8.0 * pair.G_star * math.sqrt(pair.R_star * overlap)


def _project_keep_length(vec, normal):
    old = np.linalg.norm(vec)
    out = vec - np.dot(vec, normal) * normal
    new = np.linalg.norm(out)
    if new > 0.0:
        out *= old / new
    return out


def hertz_mindlin_force(pair: EffectivePair, overlap: float, normal, v_rel,
                        state: ContactState, dt: float):
    """Normal and tangential force on body ``i`` of a contact.

    ``normal`` points from ``i`` to its partner and ``v_rel`` is the
    velocity of ``i`` relative to the partner at the contact point.
    Returns ``(result, new_state)``; the input state is not modified.
    The damped normal force is applied unclipped, so it can be slightly
    tensile while the spheres separate; ``normal_magnitude`` is its
    compressive part, which also sets the Coulomb cap.
    """
    if not overlap > 0:
        raise ConfigError(f"contact must have positive overlap (got {overlap!r})", field="overlap")
    normal = np.asarray(normal, dtype=float)
    v_rel = np.asarray(v_rel, dtype=float)
    if not (np.all(np.isfinite(normal)) and np.all(np.isfinite(v_rel))):
        raise IntegrationFault("non-finite contact kinematics")
    if abs(np.linalg.norm(normal) - 1.0) > 1e-9:
        raise ConfigError("normal must be a unit vector", field="normal")

    c = 2.0 * SQRT_5_6 * abs(pair.beta)
    S_n = normal_stiffness(pair, overlap)
    S_t = tangential_stiffness(pair, overlap)
    fn_spring = (4.0 / 3.0) * pair.E_star * math.sqrt(pair.R_star) * overlap ** 1.5
    v_n = float(np.dot(v_rel, normal))
    fn_total = fn_spring + c * math.sqrt(S_n * pair.m_star) * v_n
    fn = max(fn_total, 0.0)

    v_t = v_rel - v_n * normal
    spring = _project_keep_length(state.tangential_spring, normal) + v_t * dt
    f_t = -S_t * spring - c * math.sqrt(S_t * pair.m_star) * v_t
    cap = pair.mu_s * fn
    mag = float(np.linalg.norm(f_t))
    sliding = mag > cap
    if sliding:
        f_t = f_t * (cap / mag) if mag > 0 else f_t * 0.0
        spring = -f_t / S_t
    new_state = ContactState(spring, state.rolling_spring_torque.copy())
    result = HertzMindlinResult(-fn_total * normal, f_t, fn, fn_spring, sliding)
    return result, new_state


def rolling_resistance_update(pair: EffectivePair, overlap: float, rotation_increment,
                              normal_force: float, dt: float, state: ContactState,
                              normal, rolling_inertia: float, eta_r: float = 0.3):
    """Elastic-plastic rolling torque on body ``i``.

    ``rotation_increment`` is the relative rotation of ``i`` with respect to
    its partner over ``dt``; its twisting component about ``normal`` is
    ignored. Returns ``(torque_on_i, new_state, at_limit)``; the partner
    receives the opposite torque.
    """
    if normal_force < 0:
        raise ConfigError("normal force magnitude must be >= 0", field="normal_force")
    normal = np.asarray(normal, dtype=float)
    dtheta = np.asarray(rotation_increment, dtype=float)
    dtheta_r = dtheta - np.dot(dtheta, normal) * normal
    k_r = tangential_stiffness(pair, overlap) * pair.R_star ** 2
    spring = _project_keep_length(state.rolling_spring_torque, normal) - k_r * dtheta_r
    limit = pair.mu_r * pair.R_star * normal_force
    mag = float(np.linalg.norm(spring))
    at_limit = mag > limit
    if at_limit:
        spring = spring * (limit / mag)
        damping = np.zeros(3)
    else:
        c_r = eta_r * 2.0 * math.sqrt(rolling_inertia * k_r)
        damping = -c_r * dtheta_r / dt
    new_state = ContactState(state.tangential_spring.copy(), spring)
    return spring + damping, new_state, at_limit
