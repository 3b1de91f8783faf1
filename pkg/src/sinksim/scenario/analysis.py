"""Pressure-sinkage power-law fits and lunar versus Earth curve comparison."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ComparisonError, ConfigError, FitError
from ..mbd.load import EARTH_G, MOON_G

LUNAR_SCALE = MOON_G / EARTH_G
MIN_FIT_POINTS = 5
# log-pressure RMS above which a fit is flagged as a poor power law
RESIDUAL_FLAG = 0.1


def palm_area(palm_radius: float) -> float:
    """Default pressure-normalizing area: the palm disc."""
    return math.pi * palm_radius ** 2


@dataclass(frozen=True)
class BekkerFit:
    """``p = k z^n`` fitted in log-log space (SI: p in Pa, z in m)."""

    k: float
    n: float
    area: float
    residual: float
    points: int
    flagged: bool

    def pressure(self, z):
        return self.k * np.asarray(z, dtype=float) ** self.n

    def to_dict(self) -> dict:
        return asdict(self)


def bekker_fit(load, sinkage, area: float) -> BekkerFit:
    """Least-squares line through ``(log z, log p)`` with ``p = |load| / area``.

    Only points with positive sinkage and pressure are used. The fit is
    flagged when the RMS log residual exceeds ``RESIDUAL_FLAG`` or the
    exponent is not positive.
    """
    if not area > 0:
        raise ConfigError(f"must be > 0 (got {area})", field="area")
    p = np.abs(np.asarray(load, dtype=float)) / area
    z = np.asarray(sinkage, dtype=float)
    use = (z > 0) & (p > 0) & np.isfinite(z) & np.isfinite(p)
    if use.sum() < MIN_FIT_POINTS:
        raise FitError(f"need at least {MIN_FIT_POINTS} points with sinkage > 0, "
                       f"got {int(use.sum())}")
    lz = np.log(z[use])
    lp = np.log(p[use])
    A = np.column_stack([lz, np.ones_like(lz)])
    (n, c), *_ = np.linalg.lstsq(A, lp, rcond=None)
    resid = float(np.sqrt(np.mean((lp - (n * lz + c)) ** 2)))
    return BekkerFit(float(math.exp(c)), float(n), float(area), resid, int(use.sum()),
                     bool(resid > RESIDUAL_FLAG or not n > 0))


def fit_record(record, area: float) -> BekkerFit:
    load, z = record.curve()
    return bekker_fit(load, z, area)


@dataclass(frozen=True)
class ComparisonReport:
    """Per-point differences between two sinkage curves on a shared force grid."""

    mean_pct: float
    sd_pct: float
    min_mm: float
    max_mm: float
    points: int
    force_range: tuple

    def to_dict(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        return ("Mean (%)  SD (%)  Min (mm)  Max (mm)\n"
                f"{self.mean_pct:8.2f}  {self.sd_pct:6.2f}  {self.min_mm:8.3f}  {self.max_mm:8.3f}")


def _monotone_curve(force, z):
    """Sort by force and merge repeated force values (mean sinkage)."""
    order = np.argsort(force, kind="stable")
    f = force[order]
    z = z[order]
    uf, inv = np.unique(f, return_inverse=True)
    zs = np.bincount(inv, weights=z) / np.bincount(inv)
    return uf, zs


def compare_curves(ref_force, ref_z, other_force, other_z, points: int = 50,
                   min_sinkage: float = 0.0) -> ComparisonReport:
    """Resample both curves on a common force grid and compare ``other`` with ``ref``.

    Percentages are ``|z_other - z_ref| / z_ref``; grid points where the
    reference sinkage is not above ``min_sinkage`` are skipped.
    """
    rf, rz = _monotone_curve(np.asarray(ref_force, float), np.asarray(ref_z, float))
    of, oz = _monotone_curve(np.asarray(other_force, float), np.asarray(other_z, float))
    if len(rf) < 2 or len(of) < 2:
        raise ComparisonError("each curve needs at least two distinct force values")
    lo = max(rf[0], of[0])
    hi = min(rf[-1], of[-1])
    if not hi > lo:
        raise ComparisonError(f"force ranges do not overlap ([{rf[0]:.3g}, {rf[-1]:.3g}] vs "
                              f"[{of[0]:.3g}, {of[-1]:.3g}] N)")
    grid = np.linspace(lo, hi, points)
    zr = np.interp(grid, rf, rz)
    zo = np.interp(grid, of, oz)
    diff = np.abs(zo - zr)
    use = zr > min_sinkage
    if not use.any():
        raise ComparisonError("reference sinkage is zero over the shared force range")
    pct = 100.0 * diff[use] / zr[use]
    return ComparisonReport(float(pct.mean()), float(pct.std(ddof=1)) if use.sum() > 1 else 0.0,
                            float(1e3 * diff[use].min()), float(1e3 * diff[use].max()),
                            int(use.sum()), (float(lo), float(hi)))


def lunar_compare(earth_record, lunar_record, scale: float = LUNAR_SCALE,
                  points: int = 50) -> ComparisonReport:
    """Compare a lunar-gravity run with an Earth run whose forces are scaled by ``scale``.

    The Earth curve is the reference. Grid points below 5% of the largest
    Earth sinkage are skipped to keep percentages meaningful.
    """
    ef, ez = earth_record.curve()
    lf, lz = lunar_record.curve()
    if len(ez) == 0 or len(lz) == 0:
        raise ComparisonError("both records need a sinkage phase")
    return compare_curves(ef * scale, ez, lf, lz, points, min_sinkage=0.05 * float(np.max(ez)))
