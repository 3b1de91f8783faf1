"""Columnar particle state and the persistent contact-history ledger."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError

# Shape contact slots per particle; a sphere rarely touches more than two
# gripper primitives at once.
SHAPE_SLOTS = 6


@dataclass
class ParticleSet:
    positions: np.ndarray
    velocities: np.ndarray
    angular_velocities: np.ndarray
    radii: np.ndarray
    material_ids: np.ndarray
    masses: np.ndarray
    inertia: np.ndarray
    active: np.ndarray

    @classmethod
    def create(cls, positions, radii, material_ids, densities, velocities=None,
               angular_velocities=None, active=None) -> "ParticleSet":
        """Build a set; ``densities`` is indexed by material id."""
        positions = np.ascontiguousarray(positions, dtype=np.float64).reshape(-1, 3)
        n = len(positions)
        radii = np.ascontiguousarray(np.broadcast_to(np.asarray(radii, dtype=np.float64), (n,)))
        material_ids = np.ascontiguousarray(
            np.broadcast_to(np.asarray(material_ids, dtype=np.int64), (n,)))
        rho = np.asarray(densities, dtype=np.float64)[material_ids]
        masses = rho * (4.0 / 3.0) * math.pi * radii ** 3
        zeros = np.zeros((n, 3))
        ps = cls(
            positions=positions.copy(),
            velocities=zeros.copy() if velocities is None
            else np.ascontiguousarray(velocities, dtype=np.float64).reshape(n, 3).copy(),
            angular_velocities=zeros.copy() if angular_velocities is None
            else np.ascontiguousarray(angular_velocities, dtype=np.float64).reshape(n, 3).copy(),
            radii=radii.copy(),
            material_ids=material_ids.copy(),
            masses=masses,
            inertia=0.4 * masses * radii ** 2,
            active=np.ones(n, dtype=np.bool_) if active is None
            else np.ascontiguousarray(active, dtype=np.bool_).copy(),
        )
        ps.validate()
        return ps

    def __len__(self):
        return len(self.radii)

    def validate(self):
        if np.any(self.radii <= 0):
            raise ConfigError("all radii must be > 0", field="radii")
        for name in ("positions", "velocities", "angular_velocities", "radii"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ConfigError("non-finite particle state", field=name)

    def copy(self) -> "ParticleSet":
        return ParticleSet(**{k: v.copy() for k, v in self.__dict__.items()})

    def subset(self, keep) -> "ParticleSet":
        keep = np.asarray(keep)
        return ParticleSet(**{k: np.ascontiguousarray(v[keep]) for k, v in self.__dict__.items()})


@dataclass
class LedgerEntry:
    tangential_spring: np.ndarray
    rolling_spring_torque: np.ndarray
    last_active_step: int


class ContactLedger:
    """History of active contacts, keyed by ordered pair identifiers.

    Particle-particle keys are ``(i, j)`` with ``i < j``; particle-wall keys
    are ``(i, "wall", w)`` and particle-shape keys ``(i, "shape", s)``.

    Particle pairs live in a Verlet list (CSR by ``i``) that also holds
    near misses; only entries flagged ``on`` are contacts, and the engine
    clears the history of a listed pair as soon as it separates.
    Shape contacts use a fixed number of slots per particle, double
    buffered so that entries of separated pairs vanish at the next step.
    """

    def __init__(self, n: int, n_walls: int = 0, shape_slots: int = SHAPE_SLOTS):
        self.n = n
        self.first = np.zeros(n + 1, dtype=np.int64)
        self.pair_i = np.zeros(0, dtype=np.int64)
        self.pair_j = np.zeros(0, dtype=np.int64)
        self.hist = np.zeros((0, 6))
        self.on = np.zeros(0, dtype=np.bool_)
        self.step = np.zeros(0, dtype=np.int64)

        self.wall_hist = np.zeros((n, n_walls, 6))
        self.wall_on = np.zeros((n, n_walls), dtype=np.bool_)

        self.shape_partner = np.full((n, shape_slots), -1, dtype=np.int64)
        self.shape_hist = np.zeros((n, shape_slots, 6))
        self.shape_count = np.zeros(n, dtype=np.int64)
        self.shape_step = np.zeros((n, shape_slots), dtype=np.int64)
        self._shape_partner = self.shape_partner.copy()
        self._shape_hist = self.shape_hist.copy()
        self._shape_count = self.shape_count.copy()
        self._shape_step = self.shape_step.copy()

    def set_pair_list(self, first, pair_i, pair_j, hist, on, step):
        self.first, self.pair_i, self.pair_j = first, pair_i, pair_j
        self.hist, self.on, self.step = hist, on, step

    def swap_shapes(self):
        self.shape_partner, self._shape_partner = self._shape_partner, self.shape_partner
        self.shape_hist, self._shape_hist = self._shape_hist, self.shape_hist
        self.shape_count, self._shape_count = self._shape_count, self.shape_count
        self.shape_step, self._shape_step = self._shape_step, self.shape_step

    def clear_shapes(self):
        self.shape_count[:] = 0

    @staticmethod
    def _entry(hist_row, step):
        return LedgerEntry(hist_row[:3].copy(), hist_row[3:].copy(), int(step))

    def get(self, key):
        i = key[0]
        if len(key) == 2:
            i, j = min(key), max(key)
            for p in range(self.first[i], self.first[i + 1]):
                if self.pair_j[p] == j:
                    return self._entry(self.hist[p], self.step[p]) if self.on[p] else None
            return None
        kind, idx = key[1], key[2]
        if kind == "wall":
            return self._entry(self.wall_hist[i, idx], -1) if self.wall_on[i, idx] else None
        for p in range(self.shape_count[i]):
            if self.shape_partner[i, p] == idx:
                return self._entry(self.shape_hist[i, p], self.shape_step[i, p])
        return None

    def pair_keys(self) -> set:
        on = np.nonzero(self.on)[0]
        return set(zip(self.pair_i[on].tolist(), self.pair_j[on].tolist()))

    def keys(self):
        yield from sorted(self.pair_keys())
        for i, w in zip(*np.nonzero(self.wall_on)):
            yield (int(i), "wall", int(w))
        for i in range(self.n):
            for p in range(self.shape_count[i]):
                yield (i, "shape", int(self.shape_partner[i, p]))

    @property
    def pair_contacts(self) -> int:
        return int(self.on.sum())

    def __len__(self):
        return int(self.on.sum() + self.wall_on.sum() + self.shape_count.sum())
