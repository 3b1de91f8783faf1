"""Articulated gripper dynamics and the palm load schedule."""

from .gripper import (GripperGeometry, body_poses, build_gripper, footprint_diameter,
                      lowest_point, resting_bend, shape_table)
from .load import (EARTH_G, MOON_G, LoadProfile, gravity_vector, load_vector, sigma_load,
                   step_interp)
from .tree import (MBD_SUBSTEPS, BodySpec, JointSpec, KinematicTree, axis_rotation,
                   forward_dynamics, joint_generalized_force, mbd_step)

__all__ = [
    "EARTH_G", "MBD_SUBSTEPS", "MOON_G", "BodySpec", "GripperGeometry", "JointSpec",
    "KinematicTree", "LoadProfile", "axis_rotation", "body_poses", "build_gripper",
    "footprint_diameter", "forward_dynamics", "gravity_vector", "joint_generalized_force",
    "load_vector", "lowest_point", "mbd_step", "resting_bend", "shape_table", "sigma_load",
    "step_interp",
]
