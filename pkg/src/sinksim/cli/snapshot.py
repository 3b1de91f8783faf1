"""Bed snapshots: one text row per particle plus a JSON metadata sidecar.

Floats are written with ``repr`` (shortest round-trip decimal), so loading a
saved bed reproduces positions, velocities and radii bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..granular.materials import MaterialParams
from ..granular.particles import ParticleSet
from ..scenario.sandbox import Bed, SandboxSpec

HEADER = "# sinksim-bed v1"
COLUMNS = ("x", "y", "z", "vx", "vy", "vz", "wx", "wy", "wz", "radius", "material_id")


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def spec_from_dict(d: dict) -> SandboxSpec:
    d = dict(d)
    d["box"] = tuple(d["box"])
    d["material"] = MaterialParams(**d["material"])
    d["wall_material"] = MaterialParams(**d["wall_material"])
    return SandboxSpec(**d)


def save_bed(bed: Bed, path) -> Path:
    """Write ``bed`` to ``path`` and its metadata to ``path.meta.json``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    p = bed.particles
    cols = np.column_stack([p.positions, p.velocities, p.angular_velocities, p.radii]).tolist()
    mids = p.material_ids.tolist()
    lines = [HEADER, "# " + " ".join(COLUMNS)]
    lines += [" ".join(map(repr, row)) + f" {m}" for row, m in zip(cols, mids)]
    path.write_text("\n".join(lines) + "\n")
    meta = {
        "format": HEADER[2:],
        "spec": bed.spec.to_dict(),
        "seed": bed.seed,
        "depth": bed.depth,
        "settle_time": bed.settle_time,
        "settle_steps": bed.settle_steps,
        "final_mean_ke": bed.final_mean_ke,
        "extra": bed.extra,
        "summary": bed.metadata(),
    }
    meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_bed(path) -> Bed:
    """Inverse of :func:`save_bed`; both files must exist."""
    path = Path(path)
    mpath = meta_path(path)
    for f in (path, mpath):
        if not f.is_file():
            raise ConfigError(f"no such file: {f}", field="bed")
    with path.open() as fh:
        if fh.readline().rstrip("\n") != HEADER:
            raise ConfigError(f"{path} is not a {HEADER[2:]} snapshot", field="bed")
    meta = json.loads(mpath.read_text())
    spec = spec_from_dict(meta["spec"])
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != len(COLUMNS):
        raise ConfigError(f"expected {len(COLUMNS)} columns, got {data.shape[1]}", field="bed")
    densities = [m.density for m in spec.tables().materials]
    ps = ParticleSet.create(data[:, 0:3], data[:, 9], data[:, 10].astype(np.int64), densities,
                            velocities=data[:, 3:6], angular_velocities=data[:, 6:9])
    return Bed(spec, ps, meta["seed"], meta["depth"], meta["settle_time"], meta["settle_steps"],
               meta["final_mean_ke"], meta["extra"])
