"""Soft-sphere discrete element engine."""

from .boundary import BoxBoundary, CylinderWall
from .contact import ContactState, hertz_mindlin_force, rolling_resistance_update
from .engine import (Diagnostics, GranularSystem, ShapeFrame, compute_contact_forces,
                     dem_substep, diagnostics, run_steps, shape_contact_forces)
from .grid import SpatialGrid, brute_force_pairs, neighbor_pairs
from .materials import (ALUMINIUM, BUILTIN_MATERIALS, REGOLITH, TOYOURA, UNBOUNDED,
                        EffectivePair, InteractionTable, MaterialParams, PairTables,
                        damping_beta, effective_pair_params, rayleigh_dt)
from .particles import ContactLedger, ParticleSet

__all__ = [
    "ALUMINIUM", "BUILTIN_MATERIALS", "REGOLITH", "TOYOURA", "UNBOUNDED",
    "BoxBoundary", "ContactLedger", "ContactState", "CylinderWall", "Diagnostics",
    "EffectivePair", "GranularSystem", "InteractionTable", "MaterialParams", "PairTables",
    "ParticleSet", "ShapeFrame", "SpatialGrid", "brute_force_pairs", "compute_contact_forces",
    "damping_beta", "dem_substep", "diagnostics", "effective_pair_params",
    "hertz_mindlin_force", "neighbor_pairs", "rayleigh_dt", "rolling_resistance_update",
    "run_steps", "shape_contact_forces",
]
