"""Uniform cell grid for contact candidate search."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, DomainEscapeError
from . import kernels


class SpatialGrid:
    """Cells of edge ``cell_size`` covering ``[lo, hi]``.

    Every particle is binned into exactly one cell; scanning the 27 cells
    around a particle finds every partner it can overlap as long as the cell
    edge is at least the largest particle diameter.
    """

    def __init__(self, lo, hi, cell_size: float):
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        if not cell_size > 0 or np.any(self.hi <= self.lo):
            raise ConfigError("grid needs positive extent and cell size", field="grid")
        self.cell_size = float(cell_size)
        self.inv_cell = 1.0 / self.cell_size
        self.dims = np.maximum(
            np.ceil((self.hi - self.lo) / self.cell_size).astype(np.int64), 1)
        self.cell_start = np.zeros(int(np.prod(self.dims)) + 1, dtype=np.int64)
        self.cell_coord = np.zeros((0, 3), dtype=np.int64)
        self.cell_particles = np.zeros(0, dtype=np.int64)

    @classmethod
    def for_particles(cls, lo, hi, radii, margin_cells: int = 1,
                      skin: float = 0.0) -> "SpatialGrid":
        cell = 2.0 * float(np.max(radii)) + skin
        lo = np.asarray(lo, dtype=np.float64) - margin_cells * cell
        hi = np.asarray(hi, dtype=np.float64) + margin_cells * cell
        return cls(lo, hi, cell)

    def check_cell_size(self, radii):
        if 2.0 * float(np.max(radii)) > self.cell_size * (1 + 1e-12):
            raise ConfigError(
                f"cell size {self.cell_size} smaller than largest diameter", field="grid")

    def rebuild(self, positions, step=None, time=None):
        n = len(positions)
        if self.cell_coord.shape[0] != n:
            self.cell_coord = np.zeros((n, 3), dtype=np.int64)
            self.cell_particles = np.zeros(n, dtype=np.int64)
        escaped = kernels.build_cells(positions, self.lo, self.inv_cell, self.dims,
                                      self.cell_coord, self.cell_start, self.cell_particles)
        if escaped >= 0:
            raise DomainEscapeError(
                f"particle {escaped} left the domain at {positions[escaped].tolist()}",
                step=step, time=time)

    def cell_of(self, i) -> tuple:
        return tuple(int(c) for c in self.cell_coord[i])

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.dims))


def neighbor_pairs(grid: SpatialGrid, particles, exact: bool = True) -> list[tuple[int, int]]:
    """Contact pairs (i < j) found through the grid.

    The grid is rebuilt for the current positions. With ``exact`` False the
    raw 27-cell candidate list (including near misses) is returned.
    """
    grid.check_cell_size(particles.radii)
    grid.rebuild(particles.positions)
    arr = kernels.grid_candidate_pairs(particles.positions, particles.radii, grid.cell_coord,
                                       grid.cell_start, grid.cell_particles, grid.dims, exact)
    return [(int(a), int(b)) for a, b in arr]


def brute_force_pairs(positions, radii) -> set[tuple[int, int]]:
    """O(n^2) reference enumeration of overlapping pairs."""
    positions = np.asarray(positions)
    radii = np.asarray(radii)
    out = set()
    for i in range(len(radii)):
        d = np.linalg.norm(positions[i + 1:] - positions[i], axis=1)
        hits = np.nonzero(d < radii[i + 1:] + radii[i])[0]
        out.update((i, int(i + 1 + k)) for k in hits)
    return out

