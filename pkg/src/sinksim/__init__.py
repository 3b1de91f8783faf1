"""Coupled DEM / multibody simulation of a compliant gripper sinking into sand."""

__version__ = "0.1.0"
