"""Rigid collision primitives attached to multibody bodies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..granular import kernels

CAPSULE = 0
DISC = 1
GEO_WIDTH = 9


@dataclass(frozen=True)
class CollisionShape:
    """A capsule or rounded disc expressed in its body's frame.

    Capsule: segment ``a``-``b`` swept by ``radius``. Disc: cylinder of
    ``radius`` and ``half_height`` about ``axis`` through ``center`` whose
    rim and faces are rounded by ``rounding``.
    """

    kind: str
    material: str = "aluminium"
    a: tuple = (0.0, 0.0, 0.0)
    b: tuple = (0.0, 0.0, 0.0)
    center: tuple = (0.0, 0.0, 0.0)
    axis: tuple = (0.0, 0.0, 1.0)
    radius: float = 0.0
    half_height: float = 0.0
    rounding: float = 0.0

    def __post_init__(self):
        if self.kind not in ("capsule", "disc"):
            raise ConfigError(f"unknown shape kind {self.kind!r}", field="kind")
        if not self.radius > 0:
            raise ConfigError(f"must be > 0 (got {self.radius})", field="radius")
        if self.kind == "disc":
            if not self.half_height > 0:
                raise ConfigError("must be > 0", field="half_height")
            if not 0 <= self.rounding <= min(self.radius, self.half_height):
                raise ConfigError("rounding must lie in [0, min(radius, half_height)]",
                                  field="rounding")

    @property
    def code(self) -> int:
        return CAPSULE if self.kind == "capsule" else DISC

    def posed(self, rotation, origin) -> np.ndarray:
        """Kernel geometry row for the body at ``origin`` with ``rotation``."""
        R = np.asarray(rotation, dtype=float)
        x = np.asarray(origin, dtype=float)
        row = np.zeros(GEO_WIDTH)
        if self.kind == "capsule":
            row[0:3] = x + R @ np.asarray(self.a, dtype=float)
            row[3:6] = x + R @ np.asarray(self.b, dtype=float)
            row[6] = self.radius
        else:
            u = np.asarray(self.axis, dtype=float)
            row[0:3] = x + R @ np.asarray(self.center, dtype=float)
            row[3:6] = R @ (u / np.linalg.norm(u))
            row[6] = self.radius
            row[7] = self.half_height
            row[8] = self.rounding
        return row

    def support(self, direction, rotation, origin) -> float:
        """Largest value of ``direction . x`` over the posed shape."""
        d = np.asarray(direction, dtype=float)
        row = self.posed(rotation, origin)
        if self.kind == "capsule":
            return max(d @ row[0:3], d @ row[3:6]) + self.radius * np.linalg.norm(d)
        c, u = row[0:3], row[3:6]
        du = d @ u
        core_r = self.radius - self.rounding
        core_h = self.half_height - self.rounding
        return (d @ c + core_h * abs(du) + core_r * np.linalg.norm(d - du * u)
                + self.rounding * np.linalg.norm(d))


def sphere_shape_contact(center, radius, shape: CollisionShape, rotation, origin):
    """Contact of one sphere with a posed shape.

    Returns ``None`` when they do not overlap, otherwise
    ``(overlap, normal, point, curvature)``: ``normal`` is the outward
    surface normal of the shape (pointing at the sphere), ``point`` is the
    middle of the overlap zone on the normal line (the point the contact
    force acts at) and ``curvature`` is the local surface radius, ``inf`` on
    flat faces.
    """
    row = shape.posed(rotation, origin)
    c = np.asarray(center, dtype=float)
    out = kernels.sphere_shape_query(float(c[0]), float(c[1]), float(c[2]),
                                     float(radius), shape.code, row)
    overlap = out[0]
    if overlap <= 0.0:
        return None
    # the kernel's normal runs from the sphere into the shape
    normal = -np.array(out[1:4])
    point = c - (radius - 0.5 * overlap) * normal
    return overlap, normal, point, out[7]
