"""Compiled inner loops for the soft-sphere engine.

All loops run serially in a fixed index order so that force accumulation is
reproducible bit for bit. Vectors are unrolled into scalar components to keep
numba from allocating temporaries in the hot path.

Ledger history rows have six entries: tangential spring displacement (0:3)
and elastic rolling spring torque (3:6).
"""

import math

import numpy as np
from numba import njit

SQRT_5_6 = math.sqrt(5.0 / 6.0)

# Return codes of the per-step kernels.
OK = 0
LEDGER_OVERFLOW = 1
NON_FINITE = 2


@njit(cache=True)
def contact_law(E, G, beta, mu_s, mu_r, eta_r, R, m, I_r, delta,
                nx, ny, nz, vx, vy, vz, wx, wy, wz, hist, h, dt):
    """Hertz-Mindlin force plus elastic-plastic rolling torque on body ``i``.

    ``n`` points from ``i`` towards its partner, ``v`` is the velocity of
    ``i`` relative to the partner at the contact point and ``w`` the
    relative angular velocity. ``hist[h]`` is updated in place.

    Returns (F_i, F_t, M_roll, fn, kr): total force on ``i``, its tangential
    part, the rolling torque on ``i``, the compressive part of the normal
    force and the rolling stiffness.
    """
    sq = math.sqrt(R * delta)
    fn_el = (4.0 / 3.0) * E * sq * delta
    S_n = 2.0 * E * sq
    S_t = 8.0 * G * sq
    c = 2.0 * SQRT_5_6 * abs(beta)

    vn = vx * nx + vy * ny + vz * nz
    # the damped force may turn slightly tensile late in a rebound; it is
    # applied as is (this is what makes the rebound ratio equal e) while the
    # friction and rolling caps see only its compressive part
    fn_tot = fn_el + c * math.sqrt(S_n * m) * vn
    fn = fn_tot if fn_tot > 0.0 else 0.0

    # tangential spring: rotate onto the current tangent plane, then increment
    sx = hist[h, 0]
    sy = hist[h, 1]
    sz = hist[h, 2]
    s_old = math.sqrt(sx * sx + sy * sy + sz * sz)
    sn = sx * nx + sy * ny + sz * nz
    sx -= sn * nx
    sy -= sn * ny
    sz -= sn * nz
    s_new = math.sqrt(sx * sx + sy * sy + sz * sz)
    if s_new > 0.0:
        k = s_old / s_new
        sx *= k
        sy *= k
        sz *= k
    vtx = vx - vn * nx
    vty = vy - vn * ny
    vtz = vz - vn * nz
    sx += vtx * dt
    sy += vty * dt
    sz += vtz * dt
    ct = c * math.sqrt(S_t * m)
    ftx = -S_t * sx - ct * vtx
    fty = -S_t * sy - ct * vty
    ftz = -S_t * sz - ct * vtz
    ft = math.sqrt(ftx * ftx + fty * fty + ftz * ftz)
    cap = mu_s * fn
    if ft > cap:
        if ft > 0.0:
            k = cap / ft
            ftx *= k
            fty *= k
            ftz *= k
        sx = -ftx / S_t
        sy = -fty / S_t
        sz = -ftz / S_t
    hist[h, 0] = sx
    hist[h, 1] = sy
    hist[h, 2] = sz

    # rolling resistance (elastic-plastic spring with damping below the limit)
    wn = wx * nx + wy * ny + wz * nz
    wrx = wx - wn * nx
    wry = wy - wn * ny
    wrz = wz - wn * nz
    mx = hist[h, 3]
    my = hist[h, 4]
    mz = hist[h, 5]
    m_old = math.sqrt(mx * mx + my * my + mz * mz)
    mn = mx * nx + my * ny + mz * nz
    mx -= mn * nx
    my -= mn * ny
    mz -= mn * nz
    m_new = math.sqrt(mx * mx + my * my + mz * mz)
    if m_new > 0.0:
        k = m_old / m_new
        mx *= k
        my *= k
        mz *= k
    kr = S_t * R * R
    mx -= kr * wrx * dt
    my -= kr * wry * dt
    mz -= kr * wrz * dt
    m_lim = mu_r * R * fn
    m_mag = math.sqrt(mx * mx + my * my + mz * mz)
    dx = 0.0
    dy = 0.0
    dz = 0.0
    if m_mag > m_lim:
        k = m_lim / m_mag
        mx *= k
        my *= k
        mz *= k
    else:
        cr = eta_r * 2.0 * math.sqrt(I_r * kr)
        dx = -cr * wrx
        dy = -cr * wry
        dz = -cr * wrz
    hist[h, 3] = mx
    hist[h, 4] = my
    hist[h, 5] = mz

    return (-fn_tot * nx + ftx, -fn_tot * ny + fty, -fn_tot * nz + ftz,
            ftx, fty, ftz,
            mx + dx, my + dy, mz + dz,
            fn, kr)


@njit(cache=True)
def build_cells(pos, lo, inv_cell, dims, cell_coord, cell_start, cell_particles):
    """Counting sort of particles into cells (stable in particle index).

    Returns the index of the first particle outside the grid, or -1.
    """
    n = pos.shape[0]
    nx, ny, nz = dims[0], dims[1], dims[2]
    ncell = nx * ny * nz
    for c in range(ncell + 1):
        cell_start[c] = 0
    escaped = -1
    for i in range(n):
        cx = int(math.floor((pos[i, 0] - lo[0]) * inv_cell))
        cy = int(math.floor((pos[i, 1] - lo[1]) * inv_cell))
        cz = int(math.floor((pos[i, 2] - lo[2]) * inv_cell))
        if cx < 0 or cy < 0 or cz < 0 or cx >= nx or cy >= ny or cz >= nz:
            if escaped < 0:
                escaped = i
            cx = min(max(cx, 0), nx - 1)
            cy = min(max(cy, 0), ny - 1)
            cz = min(max(cz, 0), nz - 1)
        cell_coord[i, 0] = cx
        cell_coord[i, 1] = cy
        cell_coord[i, 2] = cz
        cell_start[(cx * ny + cy) * nz + cz + 1] += 1
    for c in range(ncell):
        cell_start[c + 1] += cell_start[c]
    fill = cell_start[:ncell].copy()
    for i in range(n):
        c = (cell_coord[i, 0] * ny + cell_coord[i, 1]) * nz + cell_coord[i, 2]
        cell_particles[fill[c]] = i
        fill[c] += 1
    return escaped


@njit(cache=True)
def grid_candidate_pairs(pos, rad, cell_coord, cell_start, cell_particles, dims, exact):
    """All pairs i<j from the 27-cell neighbourhood scan.

    With ``exact`` set only pairs whose spheres overlap are returned.
    """
    n = pos.shape[0]
    ny, nz = dims[1], dims[2]
    cap = 16 * n + 16
    out = np.empty((cap, 2), dtype=np.int64)
    k = 0
    for i in range(n):
        cx, cy, cz = cell_coord[i, 0], cell_coord[i, 1], cell_coord[i, 2]
        for ax in range(max(cx - 1, 0), min(cx + 2, dims[0])):
            for ay in range(max(cy - 1, 0), min(cy + 2, ny)):
                for az in range(max(cz - 1, 0), min(cz + 2, nz)):
                    c = (ax * ny + ay) * nz + az
                    for q in range(cell_start[c], cell_start[c + 1]):
                        j = cell_particles[q]
                        if j <= i:
                            continue
                        if exact:
                            dx = pos[j, 0] - pos[i, 0]
                            dy = pos[j, 1] - pos[i, 1]
                            dz = pos[j, 2] - pos[i, 2]
                            rs = rad[i] + rad[j]
                            if dx * dx + dy * dy + dz * dz >= rs * rs:
                                continue
                        if k == out.shape[0]:
                            bigger = np.empty((2 * out.shape[0], 2), dtype=np.int64)
                            bigger[:k] = out[:k]
                            out = bigger
                        out[k, 0] = i
                        out[k, 1] = j
                        k += 1
    return out[:k]


@njit(cache=True)
def _scan_neighbours(pos, rad, cell_coord, cell_start, cell_particles, dims, skin,
                     counts, first, new_i, new_j, fill):
    n = pos.shape[0]
    ny, nz = dims[1], dims[2]
    for i in range(n):
        cx, cy, cz = cell_coord[i, 0], cell_coord[i, 1], cell_coord[i, 2]
        k = first[i]
        for ax in range(max(cx - 1, 0), min(cx + 2, dims[0])):
            for ay in range(max(cy - 1, 0), min(cy + 2, ny)):
                for az in range(max(cz - 1, 0), min(cz + 2, nz)):
                    c = (ax * ny + ay) * nz + az
                    for q in range(cell_start[c], cell_start[c + 1]):
                        j = cell_particles[q]
                        if j <= i:
                            continue
                        dx = pos[j, 0] - pos[i, 0]
                        dy = pos[j, 1] - pos[i, 1]
                        dz = pos[j, 2] - pos[i, 2]
                        rs = rad[i] + rad[j] + skin
                        if dx * dx + dy * dy + dz * dz >= rs * rs:
                            continue
                        if fill:
                            new_i[k] = i
                            new_j[k] = j
                            k += 1
                        else:
                            counts[i] += 1


@njit(cache=True)
def build_pair_list(pos, rad, cell_coord, cell_start, cell_particles, dims, skin,
                    old_first, old_j, old_hist, old_on, old_step):
    """Verlet list of pairs (i < j) closer than ``r_i + r_j + skin``.

    The list is i-major with CSR offsets ``first`` and ascending ``j``
    within a row. History of active pairs in the old list is carried over.
    """
    n = pos.shape[0]
    counts = np.zeros(n, dtype=np.int64)
    first = np.zeros(n + 1, dtype=np.int64)
    dummy = np.zeros(0, dtype=np.int64)
    _scan_neighbours(pos, rad, cell_coord, cell_start, cell_particles, dims, skin,
                     counts, first, dummy, dummy, False)
    for i in range(n):
        first[i + 1] = first[i] + counts[i]
    total = first[n]
    new_i = np.empty(total, dtype=np.int64)
    new_j = np.empty(total, dtype=np.int64)
    new_hist = np.zeros((total, 6))
    new_on = np.zeros(total, dtype=np.bool_)
    new_step = np.zeros(total, dtype=np.int64)
    _scan_neighbours(pos, rad, cell_coord, cell_start, cell_particles, dims, skin,
                     counts, first, new_i, new_j, True)
    for i in range(n):
        new_j[first[i]:first[i + 1]].sort()
        for p in range(first[i], first[i + 1]):
            j = new_j[p]
            for o in range(old_first[i], old_first[i + 1]):
                if old_j[o] == j:
                    if old_on[o]:
                        new_on[p] = True
                        new_step[p] = old_step[o]
                        for h in range(6):
                            new_hist[p, h] = old_hist[o, h]
                    break
    return first, new_i, new_j, new_hist, new_on, new_step


@njit(cache=True)
def pp_forces(pos, vel, omg, rad, mass, inertia, mat,
              pair_i, pair_j, hist, on, last_step, step,
              E_tab, G_tab, beta_tab, mus_tab, mur_tab, eta_r, dt,
              force, torque):
    """Particle-particle contacts over the Verlet list. Returns the contact count.

    Entries of listed pairs that are not overlapping are switched off and
    their history cleared.
    """
    ncontact = 0
    for k in range(pair_i.shape[0]):
        i = pair_i[k]
        j = pair_j[k]
        dx = pos[j, 0] - pos[i, 0]
        dy = pos[j, 1] - pos[i, 1]
        dz = pos[j, 2] - pos[i, 2]
        ri = rad[i]
        rj = rad[j]
        rs = ri + rj
        d2 = dx * dx + dy * dy + dz * dz
        if d2 >= rs * rs:
            if on[k]:
                on[k] = False
                for h in range(6):
                    hist[k, h] = 0.0
            continue
        on[k] = True
        last_step[k] = step
        dist = math.sqrt(d2)
        inv = 1.0 / dist
        nx_ = dx * inv
        ny_ = dy * inv
        nz_ = dz * inv
        delta = rs - dist

        R = ri * rj / rs
        ms = mass[i] * mass[j] / (mass[i] + mass[j])
        Ia = inertia[i] + mass[i] * ri * ri
        Ib = inertia[j] + mass[j] * rj * rj
        I_r = Ia * Ib / (Ia + Ib)
        li = ri - 0.5 * delta
        lj = rj - 0.5 * delta
        # lever arms: a_i = li*n, a_j = -lj*n
        vx = (vel[i, 0] + (omg[i, 1] * nz_ - omg[i, 2] * ny_) * li) \
            - (vel[j, 0] - (omg[j, 1] * nz_ - omg[j, 2] * ny_) * lj)
        vy = (vel[i, 1] + (omg[i, 2] * nx_ - omg[i, 0] * nz_) * li) \
            - (vel[j, 1] - (omg[j, 2] * nx_ - omg[j, 0] * nz_) * lj)
        vz = (vel[i, 2] + (omg[i, 0] * ny_ - omg[i, 1] * nx_) * li) \
            - (vel[j, 2] - (omg[j, 0] * ny_ - omg[j, 1] * nx_) * lj)
        mi = mat[i]
        mj = mat[j]
        (fx, fy, fz, tx, ty, tz, mx, my, mz, fn, kr) = contact_law(
            E_tab[mi, mj], G_tab[mi, mj], beta_tab[mi, mj],
            mus_tab[mi, mj], mur_tab[mi, mj], eta_r, R, ms, I_r, delta,
            nx_, ny_, nz_, vx, vy, vz,
            omg[i, 0] - omg[j, 0], omg[i, 1] - omg[j, 1], omg[i, 2] - omg[j, 2],
            hist, k, dt)
        force[i, 0] += fx
        force[i, 1] += fy
        force[i, 2] += fz
        force[j, 0] -= fx
        force[j, 1] -= fy
        force[j, 2] -= fz
        # a_i x F_t and (-lj n) x (-F_t) = lj n x F_t
        cxn = ny_ * tz - nz_ * ty
        cyn = nz_ * tx - nx_ * tz
        czn = nx_ * ty - ny_ * tx
        torque[i, 0] += li * cxn + mx
        torque[i, 1] += li * cyn + my
        torque[i, 2] += li * czn + mz
        torque[j, 0] += lj * cxn - mx
        torque[j, 1] += lj * cyn - my
        torque[j, 2] += lj * czn - mz
        ncontact += 1
    return ncontact


@njit(cache=True)
def near_wall_candidates(pos, rad, plane_n, plane_d, cyl, margin):
    """Particles within ``margin`` of touching any plane or cylindrical shell."""
    n = pos.shape[0]
    out = np.empty(n, dtype=np.int64)
    k = 0
    for i in range(n):
        hit = False
        for w in range(plane_n.shape[0]):
            s = (pos[i, 0] * plane_n[w, 0] + pos[i, 1] * plane_n[w, 1]
                 + pos[i, 2] * plane_n[w, 2] - plane_d[w])
            if s < rad[i] + margin:
                hit = True
                break
        if not hit:
            for c in range(cyl.shape[0]):
                ex = pos[i, 0] - cyl[c, 0]
                ey = pos[i, 1] - cyl[c, 1]
                if abs(cyl[c, 2] - math.sqrt(ex * ex + ey * ey)) < rad[i] + margin:
                    hit = True
                    break
        if hit:
            out[k] = i
            k += 1
    return out[:k]


@njit(cache=True)
def wall_forces(pos, vel, omg, rad, mass, inertia, mat, candidates,
                plane_n, plane_d, plane_mat,
                cyl, cyl_mat,
                E_tab, G_tab, beta_tab, mus_tab, mur_tab, eta_r, dt,
                wall_hist, wall_on, force, torque):
    """Contacts with immobile planes and kinematic cylindrical shells.

    ``cyl`` rows are (cx, cy, radius, z_lo, z_hi, v_z); a particle touches a
    shell from the inside while its centre lies within [z_lo, z_hi].
    Returns the number of active wall contacts.
    """
    npl = plane_n.shape[0]
    ncy = cyl.shape[0]
    count = 0
    for i in candidates:
        ri = rad[i]
        I_r = inertia[i] + mass[i] * ri * ri
        for w in range(npl + ncy):
            if w < npl:
                s = (pos[i, 0] * plane_n[w, 0] + pos[i, 1] * plane_n[w, 1]
                     + pos[i, 2] * plane_n[w, 2] - plane_d[w])
                delta = ri - s
                # contact normal from particle towards the wall
                nx_ = -plane_n[w, 0]
                ny_ = -plane_n[w, 1]
                nz_ = -plane_n[w, 2]
                wvz = 0.0
                mw = plane_mat[w]
                inside = True
            else:
                k = w - npl
                ex = pos[i, 0] - cyl[k, 0]
                ey = pos[i, 1] - cyl[k, 1]
                rho = math.sqrt(ex * ex + ey * ey)
                # the shell is two-sided: particles on either side are pushed off it
                side = 1.0 if rho <= cyl[k, 2] else -1.0
                delta = ri - side * (cyl[k, 2] - rho)
                inside = cyl[k, 3] <= pos[i, 2] <= cyl[k, 4] and rho > 0.0
                if inside:
                    nx_ = side * ex / rho
                    ny_ = side * ey / rho
                else:
                    nx_ = 0.0
                    ny_ = 0.0
                nz_ = 0.0
                wvz = cyl[k, 5]
                mw = cyl_mat[k]
            if delta <= 0.0 or not inside:
                if wall_on[i, w]:
                    wall_on[i, w] = False
                    for h in range(6):
                        wall_hist[i, w, h] = 0.0
                continue
            wall_on[i, w] = True
            li = ri - 0.5 * delta
            vx = vel[i, 0] + omg[i, 1] * li * nz_ - omg[i, 2] * li * ny_
            vy = vel[i, 1] + omg[i, 2] * li * nx_ - omg[i, 0] * li * nz_
            vz = vel[i, 2] + omg[i, 0] * li * ny_ - omg[i, 1] * li * nx_ - wvz
            mi = mat[i]
            (fx, fy, fz, tx, ty, tz, mx, my, mz, fn, kr) = contact_law(
                E_tab[mi, mw], G_tab[mi, mw], beta_tab[mi, mw],
                mus_tab[mi, mw], mur_tab[mi, mw], eta_r, ri, mass[i], I_r, delta,
                nx_, ny_, nz_, vx, vy, vz, omg[i, 0], omg[i, 1], omg[i, 2],
                wall_hist[i], w, dt)
            force[i, 0] += fx
            force[i, 1] += fy
            force[i, 2] += fz
            torque[i, 0] += li * (ny_ * tz - nz_ * ty) + mx
            torque[i, 1] += li * (nz_ * tx - nx_ * tz) + my
            torque[i, 2] += li * (nx_ * ty - ny_ * tx) + mz
            count += 1
    return count


@njit(cache=True)
def sphere_shape_query(px, py, pz, pr, kind, geo):
    """Signed contact query of a sphere against one posed shape.

    ``geo`` (world frame): capsule -> (ax, ay, az, bx, by, bz, radius);
    rounded disc -> (cx, cy, cz, ux, uy, uz, radius, half_height, rounding).
    Returns (overlap, nx, ny, nz, qx, qy, qz, curvature) where ``n`` points
    from the sphere centre towards the shape, ``q`` is the closest point on
    the shape's inner core and ``curvature`` is inf on flat faces.
    """
    if kind == 0:
        ax, ay, az = geo[0], geo[1], geo[2]
        ex, ey, ez = geo[3] - ax, geo[4] - ay, geo[5] - az
        ll = ex * ex + ey * ey + ez * ez
        t = 0.0
        if ll > 0.0:
            t = ((px - ax) * ex + (py - ay) * ey + (pz - az) * ez) / ll
            t = min(max(t, 0.0), 1.0)
        qx, qy, qz = ax + t * ex, ay + t * ey, az + t * ez
        dx, dy, dz = px - qx, py - qy, pz - qz
        d = math.sqrt(dx * dx + dy * dy + dz * dz)
        overlap = pr + geo[6] - d
        if d > 0.0:
            return overlap, -dx / d, -dy / d, -dz / d, qx, qy, qz, geo[6]
        # centre exactly on the axis: pick any direction normal to it
        if abs(ex) < 0.9 * math.sqrt(ll):
            ox, oy, oz = 0.0, ez, -ey
        else:
            ox, oy, oz = -ez, 0.0, ex
        on = math.sqrt(ox * ox + oy * oy + oz * oz)
        return overlap, ox / on, oy / on, oz / on, qx, qy, qz, geo[6]

    cx, cy, cz = geo[0], geo[1], geo[2]
    ux, uy, uz = geo[3], geo[4], geo[5]
    rounding = geo[8]
    a = geo[6] - rounding
    b = geo[7] - rounding
    rx, ry, rz = px - cx, py - cy, pz - cz
    zl = rx * ux + ry * uy + rz * uz
    wx, wy, wz = rx - zl * ux, ry - zl * uy, rz - zl * uz
    rr = math.sqrt(wx * wx + wy * wy + wz * wz)
    zc = min(max(zl, -b), b)
    if rr > a:
        sc = a / rr
        qx = cx + zc * ux + wx * sc
        qy = cy + zc * uy + wy * sc
        qz = cz + zc * uz + wz * sc
    else:
        qx = cx + zc * ux + wx
        qy = cy + zc * uy + wy
        qz = cz + zc * uz + wz
    dx, dy, dz = px - qx, py - qy, pz - qz
    d = math.sqrt(dx * dx + dy * dy + dz * dz)
    if abs(zl) > b and rr <= a:
        curv = np.inf
    elif abs(zl) > b:
        curv = rounding
    else:
        curv = geo[6]
    if d > 0.0:
        return pr + rounding - d, -dx / d, -dy / d, -dz / d, qx, qy, qz, curv
    # centre inside the core: escape through the nearest face or the side
    depth_face = b - abs(zl)
    depth_side = a - rr
    if depth_face <= depth_side or rr == 0.0:
        sgn = 1.0 if zl >= 0.0 else -1.0
        return (pr + rounding + depth_face, -sgn * ux, -sgn * uy, -sgn * uz,
                qx, qy, qz, np.inf)
    return (pr + rounding + depth_side, -wx / rr, -wy / rr, -wz / rr,
            qx, qy, qz, geo[6])


@njit(cache=True)
def shape_forces(pos, vel, omg, rad, mass, inertia, mat,
                 cell_start, cell_particles, lo, inv_cell, dims,
                 shape_kind, shape_body, shape_mat, shape_geo,
                 body_com, body_vel, body_omg, margin,
                 E_tab, G_tab, beta_tab, mus_tab, mur_tab, eta_r, dt, step,
                 old_partner, old_hist, old_count,
                 new_partner, new_hist, new_count, new_step,
                 force, torque,
                 body_force, body_torque, body_torque_arm, body_contacts):
    """Particle contacts against posed gripper shapes.

    Candidates come from the cell lists, widened by ``margin`` (largest
    radius plus the allowed drift since the cells were built). Reaction
    wrenches are accumulated per body about its centre of mass;
    ``body_torque_arm`` collects only the lever-arm part (r x F).
    Returns (status, n_contacts, n_clipping).
    """
    n = pos.shape[0]
    nsh = shape_kind.shape[0]
    ny, nz = dims[1], dims[2]
    K = new_partner.shape[1]
    rmax = margin
    for i in range(n):
        new_count[i] = 0
    ncontact = 0
    nclip = 0
    for s in range(nsh):
        g = shape_geo[s]
        kind = shape_kind[s]
        if kind == 0:
            ext = g[6]
            lox = min(g[0], g[3]) - ext
            hix = max(g[0], g[3]) + ext
            loy = min(g[1], g[4]) - ext
            hiy = max(g[1], g[4]) + ext
            loz = min(g[2], g[5]) - ext
            hiz = max(g[2], g[5]) + ext
        else:
            ext = math.hypot(g[6], g[7])
            lox, hix = g[0] - ext, g[0] + ext
            loy, hiy = g[1] - ext, g[1] + ext
            loz, hiz = g[2] - ext, g[2] + ext
        cx0 = max(int(math.floor((lox - rmax - lo[0]) * inv_cell)), 0)
        cx1 = min(int(math.floor((hix + rmax - lo[0]) * inv_cell)), dims[0] - 1)
        cy0 = max(int(math.floor((loy - rmax - lo[1]) * inv_cell)), 0)
        cy1 = min(int(math.floor((hiy + rmax - lo[1]) * inv_cell)), ny - 1)
        cz0 = max(int(math.floor((loz - rmax - lo[2]) * inv_cell)), 0)
        cz1 = min(int(math.floor((hiz + rmax - lo[2]) * inv_cell)), nz - 1)
        b = shape_body[s]
        ms_ = shape_mat[s]
        for ax in range(cx0, cx1 + 1):
            for ay in range(cy0, cy1 + 1):
                for az in range(cz0, cz1 + 1):
                    c = (ax * ny + ay) * nz + az
                    for q in range(cell_start[c], cell_start[c + 1]):
                        i = cell_particles[q]
                        ri = rad[i]
                        (overlap, nx_, ny_, nz_, qx, qy, qz, curv) = sphere_shape_query(
                            pos[i, 0], pos[i, 1], pos[i, 2], ri, kind, g)
                        if overlap <= 0.0:
                            continue
                        if overlap > ri:
                            nclip += 1
                        slot = new_count[i]
                        if slot >= K:
                            return LEDGER_OVERFLOW, ncontact, nclip
                        new_partner[i, slot] = s
                        new_step[i, slot] = step
                        for h in range(6):
                            new_hist[i, slot, h] = 0.0
                        for p in range(old_count[i]):
                            if old_partner[i, p] == s:
                                for h in range(6):
                                    new_hist[i, slot, h] = old_hist[i, p, h]
                                break
                        new_count[i] = slot + 1

                        if math.isinf(curv):
                            R = ri
                        else:
                            R = ri * curv / (ri + curv)
                        li = ri - 0.5 * overlap
                        # contact point and body velocity there
                        px_ = pos[i, 0] + li * nx_
                        py_ = pos[i, 1] + li * ny_
                        pz_ = pos[i, 2] + li * nz_
                        arx = px_ - body_com[b, 0]
                        ary = py_ - body_com[b, 1]
                        arz = pz_ - body_com[b, 2]
                        bvx = body_vel[b, 0] + body_omg[b, 1] * arz - body_omg[b, 2] * ary
                        bvy = body_vel[b, 1] + body_omg[b, 2] * arx - body_omg[b, 0] * arz
                        bvz = body_vel[b, 2] + body_omg[b, 0] * ary - body_omg[b, 1] * arx
                        vx = vel[i, 0] + omg[i, 1] * li * nz_ - omg[i, 2] * li * ny_ - bvx
                        vy = vel[i, 1] + omg[i, 2] * li * nx_ - omg[i, 0] * li * nz_ - bvy
                        vz = vel[i, 2] + omg[i, 0] * li * ny_ - omg[i, 1] * li * nx_ - bvz
                        mi = mat[i]
                        (fx, fy, fz, tx, ty, tz, mx, my, mz, fn, kr) = contact_law(
                            E_tab[mi, ms_], G_tab[mi, ms_], beta_tab[mi, ms_],
                            mus_tab[mi, ms_], mur_tab[mi, ms_], eta_r, R, mass[i],
                            inertia[i] + mass[i] * ri * ri, overlap,
                            nx_, ny_, nz_, vx, vy, vz,
                            omg[i, 0] - body_omg[b, 0], omg[i, 1] - body_omg[b, 1],
                            omg[i, 2] - body_omg[b, 2],
                            new_hist[i], slot, dt)
                        force[i, 0] += fx
                        force[i, 1] += fy
                        force[i, 2] += fz
                        torque[i, 0] += li * (ny_ * tz - nz_ * ty) + mx
                        torque[i, 1] += li * (nz_ * tx - nx_ * tz) + my
                        torque[i, 2] += li * (nx_ * ty - ny_ * tx) + mz
                        body_force[b, 0] -= fx
                        body_force[b, 1] -= fy
                        body_force[b, 2] -= fz
                        tax = -(ary * fz - arz * fy)
                        tay = -(arz * fx - arx * fz)
                        taz = -(arx * fy - ary * fx)
                        body_torque_arm[b, 0] += tax
                        body_torque_arm[b, 1] += tay
                        body_torque_arm[b, 2] += taz
                        body_torque[b, 0] += tax - mx
                        body_torque[b, 1] += tay - my
                        body_torque[b, 2] += taz - mz
                        body_contacts[b] += 1
                        ncontact += 1
    return OK, ncontact, nclip


@njit(cache=True)
def integrate(pos, vel, omg, force, torque, mass, inertia, rad, active, gx, gy, gz, dt,
              ref_pos):
    """Semi-implicit Euler update.

    Returns (first non-finite particle, first particle moving more than
    half a radius in the step, largest squared displacement from
    ``ref_pos``); indices are -1 where none.
    """
    n = pos.shape[0]
    bad = -1
    fast = -1
    disp2 = 0.0
    for i in range(n):
        if not active[i]:
            continue
        im = 1.0 / mass[i]
        vel[i, 0] += (force[i, 0] * im + gx) * dt
        vel[i, 1] += (force[i, 1] * im + gy) * dt
        vel[i, 2] += (force[i, 2] * im + gz) * dt
        pos[i, 0] += vel[i, 0] * dt
        pos[i, 1] += vel[i, 1] * dt
        pos[i, 2] += vel[i, 2] * dt
        ii = 1.0 / inertia[i]
        omg[i, 0] += torque[i, 0] * ii * dt
        omg[i, 1] += torque[i, 1] * ii * dt
        omg[i, 2] += torque[i, 2] * ii * dt
        v2 = vel[i, 0] ** 2 + vel[i, 1] ** 2 + vel[i, 2] ** 2
        if not (math.isfinite(pos[i, 0] + pos[i, 1] + pos[i, 2]) and math.isfinite(v2)
                and math.isfinite(omg[i, 0] + omg[i, 1] + omg[i, 2])):
            if bad < 0:
                bad = i
        elif math.sqrt(v2) * dt > 0.5 * rad[i] and fast < 0:
            fast = i
        ex = pos[i, 0] - ref_pos[i, 0]
        ey = pos[i, 1] - ref_pos[i, 1]
        ez = pos[i, 2] - ref_pos[i, 2]
        e2 = ex * ex + ey * ey + ez * ez
        if e2 > disp2:
            disp2 = e2
    return bad, fast, disp2


@njit(cache=True)
def kinetic_energy(vel, omg, mass, inertia):
    e = 0.0
    vmax = 0.0
    for i in range(vel.shape[0]):
        v2 = vel[i, 0] ** 2 + vel[i, 1] ** 2 + vel[i, 2] ** 2
        w2 = omg[i, 0] ** 2 + omg[i, 1] ** 2 + omg[i, 2] ** 2
        e += 0.5 * mass[i] * v2 + 0.5 * inertia[i] * w2
        if v2 > vmax:
            vmax = v2
    return e, math.sqrt(vmax)


@njit(cache=True)
def elastic_energy(pos, rad, mat, pair_i, pair_j, hist, candidates,
                   plane_n, plane_d, plane_mat, wall_hist,
                   E_tab, G_tab):
    """Stored elastic energy: Hertz normal, tangential and rolling springs.

    Every overlapping listed pair and near-wall particle counts, including
    contacts that have not yet been through a force evaluation.
    """
    e = 0.0
    for k in range(pair_i.shape[0]):
        i = pair_i[k]
        j = pair_j[k]
        dx = pos[j, 0] - pos[i, 0]
        dy = pos[j, 1] - pos[i, 1]
        dz = pos[j, 2] - pos[i, 2]
        delta = rad[i] + rad[j] - math.sqrt(dx * dx + dy * dy + dz * dz)
        if delta <= 0.0:
            continue
        R = rad[i] * rad[j] / (rad[i] + rad[j])
        e += _spring_energy(E_tab[mat[i], mat[j]], G_tab[mat[i], mat[j]], R, delta, hist[k])
    for i in candidates:
        for w in range(plane_n.shape[0]):
            s = (pos[i, 0] * plane_n[w, 0] + pos[i, 1] * plane_n[w, 1]
                 + pos[i, 2] * plane_n[w, 2] - plane_d[w])
            delta = rad[i] - s
            if delta <= 0.0:
                continue
            e += _spring_energy(E_tab[mat[i], plane_mat[w]], G_tab[mat[i], plane_mat[w]],
                                rad[i], delta, wall_hist[i, w])
    return e


@njit(cache=True)
def _spring_energy(E, G, R, delta, h):
    sq = math.sqrt(R * delta)
    e = (8.0 / 15.0) * E * sq * delta * delta
    S_t = 8.0 * G * sq
    e += 0.5 * S_t * (h[0] ** 2 + h[1] ** 2 + h[2] ** 2)
    kr = S_t * R * R
    if kr > 0.0:
        e += 0.5 * (h[3] ** 2 + h[4] ** 2 + h[5] ** 2) / kr
    return e
