"""Smooth load schedule pressing the gripper palm into the bed."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError

EARTH_G = 9.81
MOON_G = 1.62


def step_interp(t: float, t0: float, h0: float, t1: float, h1: float) -> float:
    """Cubic step from ``h0`` at ``t0`` to ``h1`` at ``t1`` with zero end slopes.

    Constant outside ``[t0, t1]``; in between ``h0 + (h1 - h0) (3u^2 - 2u^3)``
    with ``u = (t - t0) / (t1 - t0)``.
    """
    if t0 > t1:
        raise ConfigError(f"step start {t0} after its end {t1}", field="t0")
    if t <= t0:
        return h0
    if t >= t1:
        return h1
    u = (t - t0) / (t1 - t0)
    return h0 + (h1 - h0) * u * u * (3.0 - 2.0 * u)


@dataclass(frozen=True)
class LoadProfile:
    """Signed palm load along the rail axis; negative pushes into the soil.

    The load first cancels the gripper weight ``mg``, ramps to ``-preload``
    between ``t1`` and ``t2``, then grows by ``delta_final`` between ``t3``
    and ``t4``.
    """

    theta: float = 0.0
    t1: float = 0.0
    t2: float = 0.5
    t3: float = 0.5
    t4: float = 10.0
    mg: float = 1.5 * EARTH_G
    preload: float = 5.0
    delta_final: float = 61.0

    def __post_init__(self):
        if not self.t1 <= self.t2 <= self.t3 <= self.t4:
            raise ConfigError(
                f"need t1 <= t2 <= t3 <= t4 (got {self.t1}, {self.t2}, {self.t3}, {self.t4})",
                field="t1")
        if not self.mg >= 0:
            raise ConfigError(f"must be >= 0 (got {self.mg})", field="mg")
        for name in ("preload", "delta_final"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"must be > 0 (got {getattr(self, name)})", field=name)

    @property
    def axis(self) -> np.ndarray:
        """Unit direction of positive ``sigma`` in the sandbox frame."""
        return np.array([math.sin(self.theta), 0.0, math.cos(self.theta)])

    @property
    def peak(self) -> float:
        return self.preload + self.delta_final

    def scaled(self, factor: float, mg: float | None = None) -> "LoadProfile":
        """Copy with preload and final increment multiplied by ``factor``."""
        return LoadProfile(self.theta, self.t1, self.t2, self.t3, self.t4,
                           self.mg if mg is None else mg,
                           self.preload * factor, self.delta_final * factor)

    def to_dict(self) -> dict:
        return asdict(self)


def sigma_load(t: float, profile: LoadProfile) -> float:
    p = profile
    return (step_interp(t, p.t1, p.mg, p.t2, -p.preload)
            + step_interp(t, p.t3, 0.0, p.t4, -p.delta_final))


def load_vector(t: float, profile: LoadProfile) -> np.ndarray:
    """Load on the palm in the sandbox frame: ``sigma(t) (sin theta, 0, cos theta)``."""
    return sigma_load(t, profile) * profile.axis


def gravity_vector(g: float, theta: float) -> np.ndarray:
    """Gravity in the axis-aligned sandbox frame when the ground is tilted by ``theta``."""
    return -g * np.array([math.sin(theta), 0.0, math.cos(theta)])
