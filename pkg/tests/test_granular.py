import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sinksim.errors import ConfigError, DomainEscapeError, InvalidMaterialError
from sinksim.granular import (ALUMINIUM, REGOLITH, TOYOURA, UNBOUNDED, BoxBoundary,
                              ContactState, CylinderWall, GranularSystem, InteractionTable,
                              MaterialParams, PairTables, ParticleSet, SpatialGrid,
                              brute_force_pairs, damping_beta, dem_substep, diagnostics,
                              effective_pair_params, hertz_mindlin_force, neighbor_pairs,
                              rayleigh_dt, rolling_resistance_update)
from sinksim.granular import kernels
from sinksim.granular.contact import tangential_stiffness

R = 0.5e-3
M = TOYOURA.density * 4.0 / 3.0 * math.pi * R ** 3


def toyoura_pair():
    return effective_pair_params(TOYOURA, TOYOURA, R, R, M, M)


def open_system(positions, radii=R, velocities=None, gravity=(0, 0, 0), material=TOYOURA,
                frac=0.2, half=0.02):
    tables = PairTables([material])
    ps = ParticleSet.create(positions, radii, 0, [material.density], velocities=velocities)
    dt = frac * rayleigh_dt(material, float(np.min(ps.radii)))
    dom = ((-half,) * 3, (half,) * 3)
    return GranularSystem(ps, tables, None, gravity, dt, domain=dom)


def lattice_bed(n_side, height, d=1e-3, seed=0, jitter=0.05):
    rng = np.random.default_rng(seed)
    sp = 1.05 * d
    xs = (np.arange(n_side) + 0.5) * sp
    zs = (np.arange(height) + 0.5) * sp
    X, Y, Z = np.meshgrid(xs, xs, zs, indexing="ij")
    pos = np.stack([X.ravel(), Y.ravel(), Z.ravel()], 1)
    pos += rng.uniform(-jitter * d, jitter * d, pos.shape)
    radii = 0.5 * d * rng.uniform(0.95, 1.05, len(pos))
    return pos, radii, n_side * sp


# --- materials -------------------------------------------------------------

def test_material_validation_names_field():
    with pytest.raises(InvalidMaterialError, match="poisson_ratio"):
        MaterialParams("x", 2650, 0.6, 5e7, 0.3, 0.5, 0.1)
    with pytest.raises(InvalidMaterialError, match="cohesion"):
        MaterialParams("x", 2650, 0.25, 5e7, 0.3, 0.5, 0.1, cohesion=10.0)
    with pytest.raises(InvalidMaterialError, match="restitution"):
        MaterialParams("x", 2650, 0.25, 5e7, 0.0, 0.5, 0.1)
    with pytest.raises(InvalidMaterialError, match="density"):
        MaterialParams("x", -1, 0.25, 5e7, 0.3, 0.5, 0.1)


def test_table_values():
    assert (TOYOURA.density, TOYOURA.poisson_ratio, TOYOURA.young_modulus) == (2650, 0.25, 5e7)
    assert (TOYOURA.restitution, TOYOURA.static_friction, TOYOURA.rolling_friction) == (0.3, 0.65, 0.15)
    assert (REGOLITH.density, REGOLITH.poisson_ratio, REGOLITH.young_modulus) == (2857, 0.3, 1e8)
    assert (REGOLITH.restitution, REGOLITH.static_friction, REGOLITH.rolling_friction) == (0.4, 0.81, 0.42)
    assert TOYOURA.repose_target_deg == 34 and REGOLITH.repose_target_deg == 39


def test_effective_pair_values():
    p = toyoura_pair()
    assert p.E_star == pytest.approx(26666666.666666668, rel=1e-12)
    assert p.beta == pytest.approx(-0.3578571305033167, rel=1e-12)
    assert p.R_star == pytest.approx(2.5e-4)
    assert p.m_star == pytest.approx(M / 2)
    wall = effective_pair_params(TOYOURA, TOYOURA, R, UNBOUNDED, M, UNBOUNDED)
    assert wall.R_star == pytest.approx(R) and wall.m_star == pytest.approx(M)


def test_damping_beta_elastic_limit():
    assert damping_beta(1.0) == 0.0
    assert damping_beta(0.3) < damping_beta(0.9) < 0


def test_interaction_table_override_and_fallback():
    table = InteractionTable()
    table.set("toyoura", "aluminium", static_friction=0.3)
    mu_s, mu_r, e = table.lookup(TOYOURA, ALUMINIUM)
    assert mu_s == 0.3
    assert mu_r == min(TOYOURA.rolling_friction, ALUMINIUM.rolling_friction)
    assert e == min(TOYOURA.restitution, ALUMINIUM.restitution)
    tabs = PairTables([TOYOURA, ALUMINIUM], table)
    assert tabs.mu_s[0, 1] == tabs.mu_s[1, 0] == 0.3


def test_rayleigh_dt():
    assert rayleigh_dt(TOYOURA, 0.5e-3) == pytest.approx(1.9709740912863438e-05, rel=1e-12)
    assert rayleigh_dt(TOYOURA, 1e-3) == pytest.approx(2 * rayleigh_dt(TOYOURA, 0.5e-3))
    dense = MaterialParams("d", 4 * 2650, 0.25, 5e7, 0.3, 0.65, 0.15)
    assert rayleigh_dt(dense, 0.5e-3) == pytest.approx(2 * rayleigh_dt(TOYOURA, 0.5e-3))
    with pytest.raises(InvalidMaterialError):
        rayleigh_dt(TOYOURA, 1e-3, 0.0)


def test_stiffest_dt_picks_smallest():
    tabs = PairTables([TOYOURA, REGOLITH])
    dt = tabs.stiffest_dt([0, 1], [1e-3, 1e-3], 0.2)
    assert dt == pytest.approx(min(rayleigh_dt(TOYOURA, 1e-3, 0.2), rayleigh_dt(REGOLITH, 1e-3, 0.2)))


# --- contact laws ---------------------------------------------------------

def test_normal_spring_value():
    res, _ = hertz_mindlin_force(toyoura_pair(), 1e-5, [0, 0, 1], [0, 0, 0], ContactState(), 1e-6)
    assert res.normal_spring == pytest.approx(0.017777777777777778, rel=1e-12)
    assert np.allclose(res.normal_force, [0, 0, -res.normal_spring])


def test_elastic_contact_has_no_damping():
    p = effective_pair_params(TOYOURA, TOYOURA, R, R, M, M)
    p = type(p)(**{**p.__dict__, "beta": damping_beta(1.0)})
    res, _ = hertz_mindlin_force(p, 1e-5, [0, 0, 1], [0.01, 0, 0.3], ContactState(), 1e-9)
    assert res.normal_magnitude == pytest.approx(res.normal_spring)
    spring = 0.01 * 1e-9
    assert res.tangential_force[0] == pytest.approx(-tangential_stiffness(p, 1e-5) * spring)


def test_contact_preconditions():
    with pytest.raises(ConfigError):
        hertz_mindlin_force(toyoura_pair(), 0.0, [0, 0, 1], [0, 0, 0], ContactState(), 1e-6)
    with pytest.raises(ConfigError):
        hertz_mindlin_force(toyoura_pair(), 1e-6, [0, 0, 2], [0, 0, 0], ContactState(), 1e-6)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-7, 5e-5), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1),
       st.floats(-1e-5, 1e-5), st.floats(-1e-5, 1e-5))
def test_coulomb_cap_holds(delta, vx, vy, vz, sx, sy):
    state = ContactState(np.array([sx, sy, 0.0]))
    res, new = hertz_mindlin_force(toyoura_pair(), delta, [0, 0, 1], [vx, vy, vz], state, 1e-6)
    ft = np.linalg.norm(res.tangential_force)
    cap = TOYOURA.static_friction * res.normal_magnitude
    assert ft <= cap * (1 + 1e-12) + 1e-300
    if res.sliding:
        assert ft == pytest.approx(cap, rel=1e-12)
        st_ = tangential_stiffness(toyoura_pair(), delta)
        assert np.allclose(new.tangential_spring, -res.tangential_force / st_)


def test_rolling_zero_input_zero_torque():
    tq, new, lim = rolling_resistance_update(toyoura_pair(), 1e-5, np.zeros(3), 0.0178, 1e-6,
                                             ContactState(), [0, 0, 1], 1e-12)
    assert np.all(tq == 0) and not lim


def test_rolling_cap_and_dissipation():
    pair = toyoura_pair()
    fn = 0.017777777777777778
    state = ContactState()
    dtheta = np.array([1e-3, 0.0, 0.0])
    for _ in range(50):
        tq, state, lim = rolling_resistance_update(pair, 1e-5, dtheta, fn, 1e-6, state,
                                                   [0, 0, 1], 1e-12)
    assert lim
    assert np.linalg.norm(tq) <= 6.666666666666666e-07 * (1 + 1e-12)
    assert np.dot(tq, dtheta) <= 0.0


def test_rolling_ignores_twist():
    tq, _, _ = rolling_resistance_update(toyoura_pair(), 1e-5, [0, 0, 1e-3], 0.0178, 1e-6,
                                         ContactState(), [0, 0, 1], 1e-12)
    assert np.allclose(tq, 0.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_kernel_matches_reference_law(seed):
    rng = np.random.default_rng(seed)
    pair = toyoura_pair()
    n = rng.normal(size=3)
    n /= np.linalg.norm(n)
    v = rng.normal(scale=0.05, size=3)
    w = rng.normal(scale=50.0, size=3)
    hist0 = rng.normal(scale=[1e-6] * 3 + [1e-7] * 3)
    delta = rng.uniform(1e-7, 2e-5)
    dt = 1e-6
    I_r = 1e-12
    hist = hist0.reshape(1, 6).copy()
    out = kernels.contact_law(pair.E_star, pair.G_star, pair.beta, pair.mu_s, pair.mu_r, 0.3,
                              pair.R_star, pair.m_star, I_r, delta, *n, *v, *w, hist, 0, dt)
    ref, st1 = hertz_mindlin_force(pair, delta, n, v, ContactState(hist0[:3], hist0[3:]), dt)
    tq, st2, _ = rolling_resistance_update(pair, delta, w * dt, ref.normal_magnitude, dt,
                                           st1, n, I_r)
    assert np.allclose(out[0:3], ref.normal_force + ref.tangential_force, rtol=1e-9, atol=1e-18)
    assert np.allclose(out[6:9], tq, rtol=1e-9, atol=1e-22)
    assert np.allclose(hist[0, :3], st1.tangential_spring, rtol=1e-9, atol=1e-20)
    assert np.allclose(hist[0, 3:], st2.rolling_spring_torque, rtol=1e-9, atol=1e-22)


# --- neighbour search ------------------------------------------------------

def test_neighbor_examples():
    grid = SpatialGrid((-0.02,) * 3, (0.02,) * 3, 1e-3)
    ps = ParticleSet.create([[0, 0, 0], [0.9e-3, 0, 0]], 0.5e-3, 0, [2650])
    assert neighbor_pairs(grid, ps) == [(0, 1)]
    ps = ParticleSet.create([[0, 0, 0], [10e-3, 0, 0]], 0.5e-3, 0, [2650])
    assert neighbor_pairs(grid, ps) == []


@pytest.mark.parametrize("seed", range(5))
def test_neighbor_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    pos = rng.uniform(0, 0.012, (500, 3))
    rad = rng.uniform(0.4e-3, 0.6e-3, 500)
    ps = ParticleSet.create(pos, rad, 0, [2650])
    grid = SpatialGrid.for_particles((0, 0, 0), (0.012,) * 3, rad)
    exact = set(neighbor_pairs(grid, ps))
    candidates = set(neighbor_pairs(grid, ps, exact=False))
    assert exact == brute_force_pairs(pos, rad)
    assert exact <= candidates


def test_grid_rejects_escape_and_small_cells():
    grid = SpatialGrid((0, 0, 0), (0.01,) * 3, 1e-3)
    ps = ParticleSet.create([[0.5, 0, 0]], 0.4e-3, 0, [2650])
    with pytest.raises(DomainEscapeError):
        neighbor_pairs(grid, ps)
    ps = ParticleSet.create([[0.005, 0.005, 0.005]], 1e-3, 0, [2650])
    with pytest.raises(ConfigError):
        neighbor_pairs(grid, ps)


def test_verlet_list_keeps_history_of_active_pairs():
    pos, rad, _ = lattice_bed(4, 3)
    s = open_system(pos, rad)
    s.particles.positions *= 0.98  # squeeze into contact
    s.invalidate()
    dem_substep(s)
    led = s.ledger
    assert led.pair_contacts > 0
    led.hist[led.on] = 1.0
    before = {k: led.get(k).tangential_spring.copy() for k in led.pair_keys()}
    s.refresh_neighbours()
    for k, v in before.items():
        assert np.array_equal(s.ledger.get(k).tangential_spring, v)


# --- stepping ------------------------------------------------------------

def test_free_fall():
    s = open_system([[0, 0, 0]], radii=5e-3, gravity=(0, 0, -9.81), half=0.1)
    n = int(round(0.1 / s.dt))
    for _ in range(n):
        dem_substep(s)
    t = n * s.dt
    drop = -s.particles.positions[0, 2]
    assert drop == pytest.approx(0.5 * 9.81 * t * t, rel=1e-2)


def _impact(v0, material=TOYOURA):
    s = open_system([[0, 0, 0], [2 * R + 1e-7, 0, 0]],
                    velocities=[[v0 / 2, 0, 0], [-v0 / 2, 0, 0]], material=material)
    p = s.particles
    p0 = p.masses @ p.velocities
    touched = False
    for _ in range(100000):
        dem_substep(s)
        touched |= s.stats.pair_contacts > 0
        if touched and s.stats.pair_contacts == 0:
            break
    return (p.velocities[1, 0] - p.velocities[0, 0]) / v0, p0, p.masses @ p.velocities, s


@pytest.mark.parametrize("v0", [0.05, 0.5, 2.0])
def test_head_on_restitution(v0):
    ratio, p0, p1, _ = _impact(v0)
    assert ratio == pytest.approx(0.3, abs=0.05)
    assert np.linalg.norm(p1 - p0) <= 1e-10 * M * v0


def test_contact_ledger_expires_after_separation():
    _, _, _, s = _impact(0.5)
    assert len(s.ledger) == 0
    assert s.ledger.get((0, 1)) is None


def test_box_bed_settles_without_blowup():
    pos, rad, side = lattice_bed(6, 6)
    tables = PairTables([TOYOURA, ALUMINIUM])
    ps = ParticleSet.create(pos, rad, 0, [TOYOURA.density, ALUMINIUM.density])
    dt = 0.2 * rayleigh_dt(TOYOURA, rad.min())
    s = GranularSystem(ps, tables, BoxBoundary((side, side, 0.02)), [0, 0, -9.81], dt)
    for _ in range(40000):
        dem_substep(s)
    d = diagnostics(ps, s.ledger)
    assert d.max_speed < 0.05
    assert d.contact_count > len(ps)
    assert np.all(ps.positions[:, 2] > 0) and np.all(ps.positions[:, :2] > 0)
    assert np.all(ps.positions[:, :2] < side)


def test_internal_forces_cancel():
    pos, rad, side = lattice_bed(10, 10)
    s = open_system(pos * 0.97, rad, half=0.05)
    from sinksim.granular import compute_contact_forces
    compute_contact_forces(s)
    scale = np.abs(s.force).sum()
    assert scale > 0
    assert np.linalg.norm(s.force.sum(axis=0)) <= 1e-9 * scale


def test_cylinder_wall_contains_and_releases():
    rng = np.random.default_rng(1)
    n = 40
    ang = rng.uniform(0, 2 * np.pi, n)
    rr = rng.uniform(0, 3e-3, n)
    pos = np.stack([0.01 + rr * np.cos(ang), 0.01 + rr * np.sin(ang),
                    1e-3 + np.arange(n) * 1.05e-3], 1)
    tables = PairTables([TOYOURA, ALUMINIUM])
    ps = ParticleSet.create(pos, 0.5e-3, 0, [TOYOURA.density, ALUMINIUM.density])
    dt = 0.2 * rayleigh_dt(TOYOURA, 0.5e-3)
    cyl = CylinderWall((0.01, 0.01), 4.5e-3, 0.0, 0.05)
    s = GranularSystem(ps, tables, BoxBoundary((0.02, 0.02, 0.05)), [0, 0, -9.81], dt,
                       cylinders=[cyl])
    for _ in range(4000):
        dem_substep(s)
    rho = np.hypot(ps.positions[:, 0] - 0.01, ps.positions[:, 1] - 0.01)
    assert np.all(rho < 4.5e-3)


def test_energy_non_increasing_small_bed():
    pos, rad, side = lattice_bed(5, 5, jitter=0.02)
    tables = PairTables([TOYOURA, ALUMINIUM])
    ps = ParticleSet.create(pos, rad, 0, [TOYOURA.density, ALUMINIUM.density])
    dt = 0.2 * rayleigh_dt(TOYOURA, rad.min())
    s = GranularSystem(ps, tables, BoxBoundary((side, side, 0.02)), [0, 0, -9.81], dt)
    e0 = s.energy()["total"]
    prev = e0
    for _ in range(2000):
        dem_substep(s)
        e = s.energy()["total"]
        assert e <= prev + 1e-3 * abs(prev)
        prev = e
    assert prev < e0
