"""Exchange of poses and wrenches between the granular bed and the gripper tree."""

from .cosim import (CouplingDiagnostics, GripperCollider, WrenchAccumulator, cosim_step,
                    particle_body_forces, substep_count)
from .shapes import CAPSULE, DISC, CollisionShape, sphere_shape_contact

__all__ = [
    "CAPSULE", "DISC", "CollisionShape", "CouplingDiagnostics", "GripperCollider",
    "WrenchAccumulator", "cosim_step", "particle_body_forces", "sphere_shape_contact",
    "substep_count",
]
