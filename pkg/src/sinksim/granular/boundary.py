"""Rigid boundaries: the open-topped box and kinematic cylindrical shells."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError


@dataclass(frozen=True)
class BoxBoundary:
    """Axis-aligned open-top box with its inner floor corner at the origin."""

    dims: tuple[float, float, float]
    wall_material: str = "aluminium"
    open_top: bool = True

    def __post_init__(self):
        if len(self.dims) != 3 or any(not d > 0 for d in self.dims):
            raise ConfigError(f"box dimensions must be > 0 (got {self.dims!r})", field="box")

    def planes(self) -> tuple[np.ndarray, np.ndarray]:
        """Inward unit normals and offsets (``n . x = d`` on the wall)."""
        lx, ly, lz = self.dims
        normals = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1)]
        offsets = [0.0, -lx, 0.0, -ly, 0.0]
        if not self.open_top:
            normals.append((0, 0, -1))
            offsets.append(-lz)
        return np.array(normals, dtype=np.float64), np.array(offsets, dtype=np.float64)


@dataclass
class CylinderWall:
    """Thin bottomless shell holding particles inside; may be lifted at constant speed."""

    center: tuple[float, float]
    radius: float
    z_bottom: float
    height: float
    material: str = "aluminium"
    lift_speed: float = 0.0

    def __post_init__(self):
        if not (self.radius > 0 and self.height > 0):
            raise ConfigError("cylinder radius and height must be > 0", field="cylinder")

    def row(self) -> list[float]:
        return [self.center[0], self.center[1], self.radius,
                self.z_bottom, self.z_bottom + self.height, self.lift_speed]

    def advance(self, dt: float):
        self.z_bottom += self.lift_speed * dt
