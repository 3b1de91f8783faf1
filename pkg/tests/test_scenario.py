import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sinksim.errors import ComparisonError, ConfigError, FitError
from sinksim.granular import TOYOURA
from sinksim.mbd import GripperGeometry, build_gripper, gravity_vector, lowest_point
from sinksim.scenario import (LUNAR_SCALE, ReposeSpec, RunRecord, SandboxSpec, angle_of_repose,
                              bekker_fit, compare_curves, desk_gripper, desk_sandbox,
                              fill_and_settle, full_sandbox, heap_angle, lunar_compare, palm_area,
                              place_gripper, pressure_sinkage_run, scaled_profile, slope_sweep,
                              surface_height_map)
from sinksim.scenario.analysis import RESIDUAL_FLAG

TINY = SandboxSpec(box=(0.05, 0.05, 0.06), fill_depth=0.04, particle_diameter=4e-3,
                   preset="desk", stiffness_scale=0.1)


@pytest.fixture(scope="module")
def tiny_bed():
    return fill_and_settle(TINY, seed=3)


# --- sandbox ------------------------------------------------------------------

def test_desk_preset_count():
    # 0.15 * 0.15 * 0.06 m at packing 0.6 over (pi / 6) * (4 mm)^3
    assert desk_sandbox().estimated_count() == pytest.approx(24172, rel=1e-3)


def test_full_preset_count_follows_geometry():
    # the same arithmetic with 1 mm particles in the full box
    assert full_sandbox().estimated_count() == pytest.approx(1.6969e7, rel=1e-3)


def test_sandbox_validation_names_field():
    with pytest.raises(ConfigError, match="particle_diameter"):
        replace(TINY, particle_diameter=0.01)
    with pytest.raises(ConfigError, match="fill_depth"):
        replace(TINY, fill_depth=0.07)


def test_fill_is_deterministic_and_flat(tiny_bed):
    again = fill_and_settle(TINY, seed=3)
    assert again.particles.positions.tobytes() == tiny_bed.particles.positions.tobytes()
    assert again.particles.velocities.tobytes() == tiny_bed.particles.velocities.tobytes()
    p = tiny_bed.particles
    d = TINY.particle_diameter
    h, _, _ = surface_height_map(p.positions, p.radii, (3 * d, 3 * d),
                                 (TINY.box[0] - 3 * d, TINY.box[1] - 3 * d), d)
    assert np.nanstd(h) < d
    assert tiny_bed.depth == pytest.approx(TINY.fill_depth, abs=2 * d)
    assert np.all(p.positions[:, 2] + p.radii <= TINY.fill_depth + 1e-12 + d)


def test_height_map_single_particle():
    r = 2e-3
    h, xc, yc = surface_height_map([[0.01, 0.01, r]], [r], (0.0, 0.0), (0.02, 0.02), 0.004)
    assert np.nanmax(h) == pytest.approx(2 * r)
    assert np.isnan(h).sum() == h.size - 1


def test_height_map_reproduces_ramp():
    r = 1e-3
    slope = 0.3
    xs = np.arange(0.001, 0.05, 2 * r)
    ys = np.arange(0.001, 0.02, 2 * r)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pos = np.column_stack([X.ravel(), Y.ravel(), r + slope * X.ravel()])
    cell = 2 * r
    h, xc, _ = surface_height_map(pos, np.full(len(pos), r), (0.0, 0.0), (0.05, 0.02), cell)
    fitted = np.polyfit(np.repeat(xc, h.shape[1]), h.ravel(), 1)[0]
    assert abs(fitted - slope) <= slope * cell / (xc[-1] - xc[0]) + 1e-9


# --- repose -------------------------------------------------------------------

def test_heap_angle_of_a_cone():
    d = 1e-3
    r = 0.5 * d
    rng = np.random.default_rng(0)
    R = 0.04
    angle = 30.0
    xy = rng.uniform(-R, R, (20000, 2))
    rho = np.hypot(xy[:, 0], xy[:, 1])
    xy = xy[rho < R]
    rho = rho[rho < R]
    z = (R - rho) * math.tan(math.radians(angle))
    pos = np.column_stack([xy, z - r])
    a, degenerate, heap_r, apex, *_ = heap_angle(pos, np.full(len(pos), r), (0.0, 0.0), d)
    assert not degenerate
    assert a == pytest.approx(angle, abs=1.0)


def test_flat_layer_is_degenerate():
    d = 1e-3
    xs = np.arange(0, 0.03, d)
    X, Y = np.meshgrid(xs, xs)
    pos = np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, 0.5 * d)])
    a, degenerate, *_ = heap_angle(pos, np.full(len(pos), 0.5 * d), (0.015, 0.015), d)
    assert degenerate and a == 0.0


@pytest.mark.slow
def test_frictionless_heap_collapses():
    slick = replace(TOYOURA, name="slick", static_friction=0.0, rolling_friction=0.0)
    # flat floor: on a floor of fixed grains frictionless spheres still rest in
    # three-grain nests and keep a mound about two layers high
    spec = ReposeSpec(cylinder_radius=5.0, fill_height=8.0, lift_speed=0.05,
                      floor_half_width=20.0, post_lift_time=1.0, rough_floor=False)
    res = angle_of_repose(slick, spec, seed=0)
    assert res.degenerate
    assert res.angle_deg < 5.0


# --- sinkage protocol ---------------------------------------------------------

def test_scaled_profile_follows_gravity():
    mass = desk_gripper().total_mass
    earth = scaled_profile(0.0, 9.81, mass)
    moon = scaled_profile(0.0, 1.62, mass)
    assert earth.peak == pytest.approx(66.0, rel=1e-12)
    assert moon.peak == pytest.approx(66.0 * 1.62 / 9.81, rel=1e-12)
    assert moon.mg == pytest.approx(mass * 1.62)


def test_lunar_scale_of_peak_load():
    assert 66.0 * LUNAR_SCALE == pytest.approx(10.90, abs=5e-3)


def test_place_gripper_starts_one_diameter_above(tiny_bed):
    geom = desk_gripper()
    g = gravity_vector(9.81, 0.0)
    tree = place_gripper(tiny_bed, geom, 0.0, g)
    p = tiny_bed.particles
    top = float(np.max(p.positions[:, 2] + p.radii))
    assert -lowest_point(tree) - top == pytest.approx(TINY.particle_diameter, rel=1e-9)


def test_place_gripper_on_slope_moves_along_rail(tiny_bed):
    geom = desk_gripper()
    theta = math.radians(25)
    g = gravity_vector(9.81, theta)
    flat = place_gripper(tiny_bed, geom, theta, g, clearance=0.0)
    lifted = place_gripper(tiny_bed, geom, theta, g, clearance=0.004)
    palm = flat.palm_index
    shift = lifted.kinematics().position[palm] - flat.kinematics().position[palm]
    np.testing.assert_allclose(shift, 0.004 / math.cos(theta) *
                               np.array([math.sin(theta), 0, math.cos(theta)]), atol=1e-12)


def test_zero_length_ramp_gives_empty_record(tiny_bed):
    prof = scaled_profile(0.0, 9.81, desk_gripper().total_mass, t4=0.5)
    rec = pressure_sinkage_run(tiny_bed, desk_gripper(), prof)
    assert len(rec) == 0
    assert list(rec.rows()) == []
    assert math.isnan(rec.final_sinkage)
    assert rec.metadata["gravity_m_s2"] == 9.81


def test_empty_sweep():
    assert slope_sweep(TINY, None, [], [10.0]) == []


def test_record_rows_and_curve():
    rec = RunRecord()
    rec.append(0.1, 10.0, (0, 0, 10.0), 0.2, math.nan, 0.0, 0, 0)
    rec.append(0.5, -5.0, (0, 0, -5.0), 0.2, 0.0, 0.0, 3, 0)
    rec.append(0.6, -8.0, (0, 0, -8.0), 0.199, 0.001, 0.0, 4, 1)
    assert [r[0] for r in rec.rows()] == [0.5, 0.6]
    f, z = rec.curve()
    np.testing.assert_array_equal(f, [5.0, 8.0])
    np.testing.assert_array_equal(z, [0.0, 0.001])
    assert rec.max_abs_sigma == 10.0
    assert rec.total_clipping == 1
    with pytest.raises(ValueError):
        rec.append(0.6, -8.0, (0, 0, -8.0), 0.199, 0.001, 0.0, 4, 1)


# --- analysis -----------------------------------------------------------------

def test_bekker_recovers_synthetic_law():
    area = palm_area(0.018)
    z = np.linspace(1e-4, 0.02, 200)
    fit = bekker_fit(1000.0 * z ** 1.1 * area, z, area)
    assert fit.k == pytest.approx(1000.0, rel=1e-9)
    assert fit.n == pytest.approx(1.1, rel=1e-9)
    assert not fit.flagged


@settings(max_examples=50, deadline=None)
@given(st.floats(1.0, 1e7), st.floats(0.1, 2.5), st.floats(1e-4, 1.0))
def test_bekker_recovers_any_power_law(k, n, area):
    z = np.geomspace(1e-4, 0.05, 40)
    fit = bekker_fit(k * z ** n * area, z, area)
    assert fit.k == pytest.approx(k, rel=1e-9)
    assert fit.n == pytest.approx(n, rel=1e-9, abs=1e-12)


def test_bekker_constant_pressure_is_flagged():
    z = np.linspace(1e-4, 0.02, 50)
    load = np.where(np.arange(50) % 2, 40.0, 80.0)
    fit = bekker_fit(load, z, 1.0)
    assert abs(fit.n) < 0.1
    assert fit.residual > RESIDUAL_FLAG
    assert fit.flagged


def test_bekker_needs_points():
    with pytest.raises(FitError):
        bekker_fit([1, 2, 3], [0.001, 0.002, 0.003], 1.0)
    with pytest.raises(ConfigError):
        bekker_fit(np.ones(10), np.ones(10), 0.0)


def _record(force, sinkage):
    rec = RunRecord()
    for k, (f, z) in enumerate(zip(force, sinkage)):
        rec.append(0.5 + 0.01 * k, -f, (0.0, 0.0, -f), 0.0, z, 0.0, 0, 0)
    return rec


def test_identical_curves_compare_to_zero():
    f = np.linspace(5, 66, 100)
    z = 1e-3 * (f - 5) ** 0.8
    rep = compare_curves(f, z, f, z)
    assert rep.mean_pct == 0.0 and rep.sd_pct == 0.0 and rep.max_mm == 0.0


def test_lunar_compare_on_scaled_copy():
    f = np.linspace(5, 66, 100)
    z = 1e-3 * (f - 5) ** 0.8
    earth = _record(f, z)
    moon = _record(f * LUNAR_SCALE, 1.1 * z)
    rep = lunar_compare(earth, moon)
    assert rep.mean_pct == pytest.approx(10.0, rel=1e-6)
    assert rep.sd_pct == pytest.approx(0.0, abs=1e-6)
    assert rep.force_range[1] == pytest.approx(66 * LUNAR_SCALE)


def test_report_layout():
    f = np.linspace(5, 66, 20)
    rep = compare_curves(f, f * 1e-4, f, f * 1e-4)
    assert rep.table().splitlines()[0].split("  ") == ["Mean (%)", "SD (%)", "Min (mm)",
                                                        "Max (mm)"]


def test_disjoint_force_ranges_raise():
    with pytest.raises(ComparisonError):
        compare_curves([1, 2, 3], [1, 2, 3], [4, 5, 6], [1, 2, 3])


def test_gripper_geometry_of_desk_preset():
    g = desk_gripper()
    assert g.footprint_diameter == pytest.approx(0.1)
    assert g.total_mass == GripperGeometry().total_mass
    tree = build_gripper(g)
    assert tree.total_mass == pytest.approx(1.5)
