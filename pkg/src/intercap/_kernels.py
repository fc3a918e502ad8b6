"""Hot loops, compiled with numba when available.

Set INTERCAP_BACKEND=numpy to force the pure-python fallback: the same
source runs undecorated, so both backends consume the same counter-based
random stream and return bit-identical results (the fallback is simply
slow).  All kernels use splitmix64: a uint64 counter advanced by a fixed
odd gamma, hashed through two xor-multiply rounds per draw.  Streams for
separate purposes (trajectory steps, thinning marks) are salted copies of
the per-soup counter, so adding a consumer never perturbs the others.
"""

import os

import numpy as np

BACKEND = os.environ.get("INTERCAP_BACKEND", "").strip().lower()
if BACKEND not in ("", "numba", "numpy"):
    raise ValueError(f"INTERCAP_BACKEND must be 'numba' or 'numpy', got {BACKEND!r}")
USING_NUMBA = BACKEND != "numpy"
if USING_NUMBA:
    try:
        import numba
    except ImportError:
        if BACKEND == "numba":
            raise
        USING_NUMBA = False


def _jit(**kw):
    if USING_NUMBA:
        return numba.njit(cache=True, **kw)
    kw.pop("inline", None)
    return lambda f: f


U64 = np.uint64
GAMMA = U64(0x9E3779B97F4A7C15)
MIX1 = U64(0xBF58476D1CE4E5B9)
MIX2 = U64(0x94D049BB133111EB)
TRAJ_SALT = U64(0xD1B54A32D192ED03)
MARK_SALT = U64(0xA0761D6478BD642F)
_INV53 = 1.1102230246251565e-16  # 2^-53


@_jit(inline="always")
def _mix(z):
    z = (z ^ (z >> U64(30))) * MIX1
    z = (z ^ (z >> U64(27))) * MIX2
    return z ^ (z >> U64(31))


@_jit(inline="always")
def _unif(state):
    """Advance the counter; return (state, uniform in [0, 1))."""
    state = state + GAMMA
    return state, np.float64(_mix(state) >> U64(11)) * _INV53


_LN2 = 0.6931471805599453


@_jit(inline="always")
def _plog(x):
    """Natural log on (0, 1], from exactly-rounded float ops only.

    libm log/log1p differ in the last bit between the compiled and plain
    backends, which would let the two diverge; this version (doubling range
    reduction plus the atanh series, |t| <= 1/5) is bit-identical on both.
    """
    e = 0.0
    while x < 0.6666666666666666:
        x *= 2.0
        e -= 1.0
    t = (x - 1.0) / (x + 1.0)
    t2 = t * t
    s = 0.0
    p = t * t2
    for k in range(1, 14):
        s += p / (2.0 * k + 1.0)
        p *= t2
    return e * _LN2 + 2.0 * (t + s)


@_jit(inline="always")
def _exp_holding(state):
    """(state, Exp(1) draw): one uniform per holding time."""
    state, uu = _unif(state)
    return state, -_plog(1.0 - uu)


@_jit(inline="always")
def _green3(dx, dy, dz, table, R0, Cd, ta, tb):
    """g(0, (dx,dy,dz)) from the packed table / fitted far-field formula."""
    ax = dx if dx >= 0 else -dx
    ay = dy if dy >= 0 else -dy
    az = dz if dz >= 0 else -dz
    m = max(ax, max(ay, az))
    if m <= R0:
        n = 2 * R0 + 1
        return table[(dx + R0) * n * n + (dy + R0) * n + (dz + R0)]
    r2 = np.float64(dx * dx + dy * dy + dz * dz)
    s4 = np.float64(dx) ** 4 + np.float64(dy) ** 4 + np.float64(dz) ** 4
    return Cd / np.sqrt(r2) * (1.0 + (ta + tb * s4 / (r2 * r2)) / r2)


@_jit(inline="always")
def _draw_poisson(state, target):
    """Multiplicative Poisson draw; target = exp(-lambda)."""
    n = 0
    prod = 1.0
    while True:
        state, uu = _unif(state)
        prod *= uu
        if prod <= target:
            return state, n
        n += 1


@_jit(inline="always")
def _bisect(cum, uu):
    lo = 0
    hi = len(cum)
    while lo < hi:
        mid = (lo + hi) // 2
        if cum[mid] < uu:
            lo = mid + 1
        else:
            hi = mid
    return lo


@_jit(inline="always")
def _walk_forward(tst, x, y, z, N, guard, supp, masses, ebuf,
                  table, R0, Cd, ta, tb, local, touched, nt, max_steps):
    """One forward trajectory from (x, y, z): unit-rate holding time at every
    in-window visit, steps to a uniform neighbor; on crossing the guard box,
    resolves the exact return event (probability sum_y g(pos-y) e(y)) and, if
    it returns, re-enters at y with probability proportional to e(y) g(pos-y).
    Accumulates local time into ``local`` and logs first visits in
    ``touched``; returns (tst, nt, steps_used or -1 on step overflow)."""
    side = 2 * N + 1
    nsupp = len(supp)
    steps = 0
    while True:
        ax = x if x >= 0 else -x
        ay = y if y >= 0 else -y
        az = z if z >= 0 else -z
        if max(ax, max(ay, az)) <= N:
            fi = (x + N) * side * side + (y + N) * side + (z + N)
            if local[fi] == 0.0:
                touched[nt] = fi
                nt += 1
            tst, hold = _exp_holding(tst)
            local[fi] += hold
        tst, uu = _unif(tst)
        k = int(uu * 6.0)
        axd = k >> 1
        sg = 2 * (k & 1) - 1
        if axd == 0:
            x += sg
        elif axd == 1:
            y += sg
        else:
            z += sg
        steps += 1
        if steps > max_steps:
            return tst, nt, -1
        ax = x if x >= 0 else -x
        ay = y if y >= 0 else -y
        az = z if z >= 0 else -z
        if max(ax, max(ay, az)) > guard:
            p = 0.0
            for j in range(nsupp):
                p += masses[j] * _green3(x - supp[j, 0], y - supp[j, 1],
                                         z - supp[j, 2], table, R0, Cd, ta, tb)
                ebuf[j] = p
            tst, uu = _unif(tst)
            if uu < p:
                tst, uu = _unif(tst)
                j = _bisect(ebuf, uu * p)
                x = supp[j, 0]
                y = supp[j, 1]
                z = supp[j, 2]
            else:
                return tst, nt, steps


@_jit()
def _campaign(master, n_soups, target, N, guard, supp, masses, cum,
              table, R0, Cd, ta, tb, w_loc, w_occ, max_steps):
    """Batch of independent trajectory soups; per soup returns the trajectory
    count, X = sum_x local(x) w_loc(x), and Y = sum over occupied x of
    w_occ(x).  ``target`` is exp(-u cap(W)), precomputed so the kernel needs
    no libm exp.  Status 1 flags a step-budget overflow (results invalid)."""
    side = 2 * N + 1
    vol = side * side * side
    local = np.zeros(vol)
    touched = np.empty(vol, np.int64)
    out_n = np.empty(n_soups, np.int64)
    out_x = np.empty(n_soups)
    out_y = np.empty(n_soups)
    ebuf = np.empty(len(supp))
    for s in range(n_soups):
        base = _mix(master + GAMMA * U64(s + 1))
        sst = base
        sst, n = _draw_poisson(sst, target)
        nt = 0
        for i in range(n):
            sst, uu = _unif(sst)
            j = _bisect(cum, uu)
            tst = _mix((base ^ TRAJ_SALT) + GAMMA * U64(i + 1))
            tst, nt, used = _walk_forward(
                tst, supp[j, 0], supp[j, 1], supp[j, 2], N, guard, supp,
                masses, ebuf, table, R0, Cd, ta, tb, local, touched, nt,
                max_steps)
            if used < 0:
                return out_n, out_x, out_y, 1
        X = 0.0
        Y = 0.0
        for t in range(nt):
            fi = touched[t]
            X += local[fi] * w_loc[fi]
            Y += w_occ[fi]
            local[fi] = 0.0
        out_n[s] = n
        out_x[s] = X
        out_y[s] = Y
    return out_n, out_x, out_y, 0


@_jit()
def _soup_pair(master, soup_id, target, ratio, N, guard, supp, masses, cum,
               table, R0, Cd, ta, tb, max_steps):
    """One soup at intensity u_hi plus its ratio-thinned sub-soup.

    Thinning marks come from a salted per-trajectory stream, so the marks
    never disturb the walk randomness: the full soup is identical whatever
    ratio is asked for.  Returns (n_hi, n_lo, local_hi, local_lo, status)
    with the local-time fields laid out over the window volume."""
    side = 2 * N + 1
    vol = side * side * side
    local_hi = np.zeros(vol)
    local_lo = np.zeros(vol)
    ebuf = np.empty(len(supp))
    touched = np.empty(vol, np.int64)
    scratch = np.zeros(vol)
    base = _mix(master + GAMMA * U64(soup_id + 1))
    sst = base
    sst, n = _draw_poisson(sst, target)
    n_lo = 0
    for i in range(n):
        sst, uu = _unif(sst)
        j = _bisect(cum, uu)
        tst = _mix((base ^ TRAJ_SALT) + GAMMA * U64(i + 1))
        nt = 0
        tst, nt, used = _walk_forward(
            tst, supp[j, 0], supp[j, 1], supp[j, 2], N, guard, supp, masses,
            ebuf, table, R0, Cd, ta, tb, scratch, touched, nt, max_steps)
        if used < 0:
            return 0, 0, local_hi, local_lo, 1
        mst = _mix((base ^ MARK_SALT) + GAMMA * U64(i + 1))
        mst, mark = _unif(mst)
        keep_lo = mark < ratio
        if keep_lo:
            n_lo += 1
        for t in range(nt):
            fi = touched[t]
            local_hi[fi] += scratch[fi]
            if keep_lo:
                local_lo[fi] += scratch[fi]
            scratch[fi] = 0.0
    return n, n_lo, local_hi, local_lo, 0


@_jit()
def _pair_empty_campaign(master_a, master_b, n_pairs, target_a, target_b,
                         N, guard, supp, masses, cum, table, R0, Cd, ta, tb,
                         probe, max_steps):
    """Counts pairs of independent soups whose occupancies are disjoint on
    the probe mask (probe is a uint8 vector over the window volume)."""
    side = 2 * N + 1
    vol = side * side * side
    local = np.zeros(vol)
    occ_a = np.zeros(vol, np.uint8)
    touched = np.empty(vol, np.int64)
    touched_a = np.empty(vol, np.int64)
    ebuf = np.empty(len(supp))
    count_empty = 0
    for s in range(n_pairs):
        # soup A: record occupancy restricted to the probe
        base = _mix(master_a + GAMMA * U64(s + 1))
        sst = base
        sst, n = _draw_poisson(sst, target_a)
        na = 0
        for i in range(n):
            sst, uu = _unif(sst)
            j = _bisect(cum, uu)
            tst = _mix((base ^ TRAJ_SALT) + GAMMA * U64(i + 1))
            nt = 0
            tst, nt, used = _walk_forward(
                tst, supp[j, 0], supp[j, 1], supp[j, 2], N, guard, supp,
                masses, ebuf, table, R0, Cd, ta, tb, local, touched, nt,
                max_steps)
            if used < 0:
                return -1, 1
            for t in range(nt):
                fi = touched[t]
                local[fi] = 0.0
                if probe[fi] != 0 and occ_a[fi] == 0:
                    occ_a[fi] = 1
                    touched_a[na] = fi
                    na += 1
        # soup B: walk until it lands on an A-occupied probe point (or ends)
        base = _mix(master_b + GAMMA * U64(s + 1))
        sst = base
        sst, n = _draw_poisson(sst, target_b)
        meets = False
        for i in range(n):
            if meets:
                break
            sst, uu = _unif(sst)
            j = _bisect(cum, uu)
            tst = _mix((base ^ TRAJ_SALT) + GAMMA * U64(i + 1))
            nt = 0
            tst, nt, used = _walk_forward(
                tst, supp[j, 0], supp[j, 1], supp[j, 2], N, guard, supp,
                masses, ebuf, table, R0, Cd, ta, tb, local, touched, nt,
                max_steps)
            if used < 0:
                return -1, 1
            for t in range(nt):
                fi = touched[t]
                local[fi] = 0.0
                if occ_a[fi] != 0:
                    meets = True
        if not meets:
            count_empty += 1
        for t in range(na):
            occ_a[touched_a[t]] = 0
    return count_empty, 0


@_jit(inline="always")
def _unit_vector3(tst):
    """(state, ux, uy, uz) uniform on the unit sphere, via Box-Muller."""
    while True:
        tst, u1 = _unif(tst)
        tst, u2 = _unif(tst)
        tst, u3 = _unif(tst)
        tst, u4 = _unif(tst)
        r1 = np.sqrt(-2.0 * _plog(1.0 - u1))
        r2 = np.sqrt(-2.0 * _plog(1.0 - u3))
        gx = r1 * np.cos(2.0 * np.pi * u2)
        gy = r1 * np.sin(2.0 * np.pi * u2)
        gz = r2 * np.cos(2.0 * np.pi * u4)
        nrm = np.sqrt(gx * gx + gy * gy + gz * gz)
        if nrm > 1e-12:
            return tst, gx / nrm, gy / nrm, gz / nrm


@_jit()
def _wos_hits(master, n_samples, lo, hi, R_start, R_esc, eps, max_jumps):
    """Walk-on-spheres hit counter for a cell union in d = 3.

    Each sample starts uniformly on the sphere of radius R_start and jumps by
    the distance to the union.  Past R_esc the walker either escapes (with
    the exact transient probability 1 - R_start/rho) or is returned to the
    start sphere by Kelvin inversion: re-entry point drawn from the interior
    Poisson kernel of the inverted position via acceptance-rejection."""
    hits = 0
    ncell = len(lo)
    for s in range(n_samples):
        tst = _mix(master + GAMMA * U64(s + 1))
        tst, ux, uy, uz = _unit_vector3(tst)
        x = R_start * ux
        y = R_start * uy
        z = R_start * uz
        jumps = 0
        while True:
            jumps += 1
            if jumps > max_jumps:
                return -1, 1
            dist = 1e300
            for c in range(ncell):
                qx = min(max(x, lo[c, 0]), hi[c, 0]) - x
                qy = min(max(y, lo[c, 1]), hi[c, 1]) - y
                qz = min(max(z, lo[c, 2]), hi[c, 2]) - z
                dd = np.sqrt(qx * qx + qy * qy + qz * qz)
                if dd < dist:
                    dist = dd
            if dist < eps:
                hits += 1
                break
            rho = np.sqrt(x * x + y * y + z * z)
            if rho > R_esc:
                tst, uu = _unif(tst)
                if uu >= R_start / rho:
                    break  # escaped to infinity
                # Kelvin-inverted center; re-entry from the Poisson kernel
                zx = x * (R_start * R_start) / (rho * rho)
                zy = y * (R_start * R_start) / (rho * rho)
                zz = z * (R_start * R_start) / (rho * rho)
                zn = np.sqrt(zx * zx + zy * zy + zz * zz)
                qmax = (R_start + zn) * R_start / (R_start - zn) ** 2
                while True:
                    tst, ux, uy, uz = _unit_vector3(tst)
                    dx = R_start * ux - zx
                    dy = R_start * uy - zy
                    dz = R_start * uz - zz
                    dens = (R_start * (R_start * R_start - zn * zn)
                            / np.sqrt(dx * dx + dy * dy + dz * dz) ** 3)
                    tst, uu = _unif(tst)
                    if uu * qmax <= dens:
                        break
                x = R_start * ux
                y = R_start * uy
                z = R_start * uz
                continue
            tst, ux, uy, uz = _unit_vector3(tst)
            x += dist * ux
            y += dist * uy
            z += dist * uz
    return hits, 0


def _call(fn, *args):
    if USING_NUMBA:
        return fn(*args)
    with np.errstate(over="ignore"):
        return fn(*args)


def _poisson_target(u, cap):
    lam = u * cap
    if lam > 500.0:
        raise ValueError(f"count intensity u*cap = {lam:.1f} too large for "
                         "the multiplicative Poisson sampler")
    return float(np.exp(-lam))


def run_campaign(master, n_soups, u, N, guard, supp, masses, cum, cap,
                 table, R0, Cd, ta, tb, w_loc, w_occ, max_steps):
    return _call(_campaign, U64(master), n_soups, _poisson_target(u, cap),
                 N, guard, supp, masses, cum, table, R0, Cd, ta, tb,
                 w_loc, w_occ, max_steps)


def run_soup_pair(master, soup_id, u_hi, ratio, N, guard, supp, masses, cum,
                  cap, table, R0, Cd, ta, tb, max_steps):
    return _call(_soup_pair, U64(master), soup_id, _poisson_target(u_hi, cap),
                 ratio, N, guard, supp, masses, cum, table, R0, Cd, ta, tb,
                 max_steps)


def run_pair_empty(master_a, master_b, n_pairs, u_a, u_b, N, guard, supp,
                   masses, cum, cap, table, R0, Cd, ta, tb, probe, max_steps):
    return _call(_pair_empty_campaign, U64(master_a), U64(master_b), n_pairs,
                 _poisson_target(u_a, cap), _poisson_target(u_b, cap),
                 N, guard, supp, masses, cum, table, R0, Cd, ta, tb, probe,
                 max_steps)


def run_wos(master, n_samples, lo, hi, R_start, R_esc, eps, max_jumps):
    return _call(_wos_hits, U64(master), n_samples, lo, hi, R_start, R_esc,
                 eps, max_jumps)
