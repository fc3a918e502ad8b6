"""Discrete potential theory: equilibrium measures, capacity, and hitting
probabilities, built on the Green table.

The last-exit system G|_A e = 1 is solved densely (Cholesky) for small
supports and by conjugate gradients with an FFT-applied translation-invariant
kernel for large ones.  In both routes the support is first reduced to the
points of A with at least one neighbor outside A; this is exact because the
equilibrium measure vanishes on interior points (the walk cannot escape to
infinity from an interior point without passing the boundary afterwards).
"""

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .config import DEFAULT
from .green import default_table
from .lattice import LatticeBox, LatticeSet, as_point


def _as_points(A):
    if isinstance(A, LatticeBox):
        return A.points()
    if isinstance(A, LatticeSet):
        return A.points()
    pts = np.asarray(A, np.int64)
    if pts.ndim != 2 or pts.size == 0:
        raise ValueError("need a nonempty (n, d) point array")
    return np.unique(pts, axis=0)


def boundary_relevant(pts):
    """Points of A with at least one lattice neighbor outside A."""
    pts = _as_points(A=pts)
    d = pts.shape[1]
    s = LatticeSet.from_points(pts)
    keep = np.zeros(len(pts), bool)
    eye = np.eye(d, dtype=np.int64)
    for k in range(d):
        keep |= ~s.contains_many(pts + eye[k])
        keep |= ~s.contains_many(pts - eye[k])
    return pts[keep]


@dataclass
class EquilibriumMeasure:
    """Nonnegative masses on the support points; total equals the capacity."""

    support: np.ndarray  # (n, d) int64, lexicographic
    mass: np.ndarray     # (n,)
    total: float
    residual: float      # max |G e - 1| over the support
    method: str

    @property
    def n(self):
        return len(self.support)

    def normalized(self):
        """Probability weights mass/total."""
        return self.mass / self.total

    def cumulative(self):
        """Cumulative normalized weights, for inverse-cdf sampling."""
        c = np.cumsum(self.normalized())
        c[-1] = 1.0
        return c


def _dense_solve(pts, gt):
    D = pts[:, None, :] - pts[None, :, :]
    M = gt.g_many(D.reshape(-1, pts.shape[1])).reshape(len(pts), len(pts))
    try:
        cf = sla.cho_factor(M)
    except sla.LinAlgError as exc:
        raise ValueError(f"last-exit system not positive definite "
                         f"(n={len(pts)}): {exc}") from exc
    e = sla.cho_solve(cf, np.ones(len(pts)))
    res = float(np.abs(M @ e - 1.0).max())
    return e, res


class _FFTKernel:
    """Applies v -> G|_A v for points inside a bounding box, by zero-padded
    FFT convolution with the Green kernel over box displacements."""

    def __init__(self, pts, gt):
        self.d = pts.shape[1]
        self.lo = pts.min(axis=0)
        self.shape = tuple(pts.max(axis=0) - self.lo + 1)
        self.big = tuple(sfft.next_fast_len(2 * s - 1) for s in self.shape)
        self.flat = np.ravel_multi_index((pts - self.lo).T, self.shape)
        offs = [np.arange(-(s - 1), s) for s in self.shape]
        D = np.stack(np.meshgrid(*offs, indexing="ij"), -1)
        ker = gt.g_many(D.reshape(-1, self.d)).reshape(D.shape[:-1])
        kpad = np.zeros(self.big)
        kpad[np.ix_(*[o % b for o, b in zip(offs, self.big)])] = ker
        self.KF = sfft.rfftn(kpad)
        self.n = len(pts)

    def matvec(self, v):
        grid = np.zeros(self.shape)
        grid.reshape(-1)[self.flat] = v
        big = np.zeros(self.big)
        big[tuple(slice(0, s) for s in self.shape)] = grid
        conv = sfft.irfftn(sfft.rfftn(big) * self.KF, s=self.big)
        return conv[tuple(slice(0, s) for s in self.shape)].reshape(-1)[self.flat]


def _cg_solve(pts, gt, config):
    op = _FFTKernel(pts, gt)
    A = spla.LinearOperator((op.n, op.n), matvec=op.matvec)
    e, info = spla.cg(A, np.ones(op.n), rtol=1e-12, atol=0.0,
                      maxiter=config.cg_max_iter)
    if info != 0:
        raise ValueError(f"equilibrium CG did not converge (info={info}, "
                         f"n={op.n}, maxiter={config.cg_max_iter})")
    res = float(np.abs(op.matvec(e) - 1.0).max())
    return e, res


def equilibrium_measure(A, gt=None, config=DEFAULT, reduce_support=True):
    """Solve the last-exit system on A and return the equilibrium measure.

    ``reduce_support`` drops interior points first (exact, see module doc);
    the returned support is the reduced set.
    """
    pts = _as_points(A)
    if gt is None:
        gt = default_table(pts.shape[1])
    if reduce_support:
        pts = boundary_relevant(pts)
    if len(pts) > config.equilibrium_max_support:
        raise ValueError(f"support of {len(pts)} points exceeds the solver "
                         f"limit {config.equilibrium_max_support}")
    if len(pts) <= config.dense_solver_limit:
        e, res = _dense_solve(pts, gt)
        method = "dense"
    else:
        e, res = _cg_solve(pts, gt, config)
        method = "fft-cg"
    if res > config.equilibrium_residual_tol:
        raise ValueError(f"equilibrium residual {res:.2e} exceeds tolerance "
                         f"{config.equilibrium_residual_tol:.1e} (n={len(pts)}, "
                         f"method={method})")
    return EquilibriumMeasure(support=pts, mass=e, total=float(e.sum()),
                              residual=res, method=method)


def capacity(A, gt=None, config=DEFAULT):
    """cap(A): total equilibrium mass."""
    return equilibrium_measure(A, gt=gt, config=config).total


@dataclass
class HittingField:
    """P_x[hit target] over a window, from the self-consistent Dirichlet solve.

    ``value`` is indexed like ``window.points()``.  ``flux`` is the implied
    equilibrium measure (negative discrete Laplacian of the field on the
    target); ``update_bound`` is the size of the final fixpoint update, a
    bound on the remaining solver error.
    """

    window: LatticeBox
    target_points: np.ndarray
    value: np.ndarray
    flux: np.ndarray
    update_bound: float


def hitting_probability(start, A, gt=None, window=None, config=DEFAULT,
                        method="last-exit"):
    """P_start[H_A < infinity].

    method="last-exit": exact representation sum_y g(start, y) e_A(y).
    method="solve": discrete Dirichlet problem on ``window`` (zero boundary
    data) plus the escape bound; returns the lower solve value, which must
    sit within the bound of the last-exit value.
    """
    start = as_point(start)
    pts = _as_points(A)
    if gt is None:
        gt = default_table(pts.shape[1])
    aset = LatticeSet.from_points(pts)
    if aset.contains(start):
        return 1.0
    if method == "last-exit":
        em = equilibrium_measure(pts, gt=gt, config=config)
        return float(gt.g_many(start[None, :] - em.support) @ em.mass)
    if method == "solve":
        field = hitting_field(pts, window, gt=gt, config=config)
        idx = _window_index(field.window, start)
        return float(field.value[idx])
    raise ValueError(f"unknown method {method!r}")


def _window_index(window, x):
    rel = np.asarray(x) - (np.asarray(window.center) - window.radius)
    return int(np.ravel_multi_index(rel, (window.side,) * window.d))


def hitting_field(A, window, gt=None, config=DEFAULT, max_sweeps=30):
    """Hitting probability field of A on a window, without the last-exit solve.

    Solves h = 1 on A, discrete-harmonic elsewhere in the window, with data
    on the outer vertex ring supplied self-consistently: the ring data is the
    Green sum of the field's own flux through A, and the sparse solve is
    repeated until the flux stabilizes.  The fixpoint is the untruncated
    hitting probability (the exact field satisfies the same equations), so
    the usual window-escape error is eliminated rather than bounded.
    """
    pts = _as_points(A)
    d = pts.shape[1]
    if gt is None:
        gt = default_table(d)
    if window is None:
        raise ValueError("solve route needs a window")
    wpts = window.points()
    wset = LatticeSet.from_points(wpts)
    aset = LatticeSet.from_points(pts)
    if not aset.issubset(wset):
        raise ValueError("target must sit inside the window")
    if np.abs(pts - np.asarray(window.center)).max() >= window.radius:
        raise ValueError("target must sit strictly inside the window "
                         "(one-cell margin for the flux stencil)")
    n = len(wpts)
    in_a = aset.contains_many(wpts)
    free = ~in_a
    nf = int(free.sum())
    fidx = np.full(n, -1)
    fidx[free] = np.arange(nf)
    eye = np.eye(d, dtype=np.int64)
    pos = wpts[free]
    lo_w = np.asarray(window.center) - window.radius
    rows = [np.arange(nf)]
    cols = [np.arange(nf)]
    vals = [np.ones(nf)]
    rhs_a = np.zeros(nf)           # contribution of h = 1 on A
    ring_rows, ring_pts = [], []   # outer-ring couplings, data filled per sweep
    for k in range(d):
        for s in (+1, -1):
            nb = pos + s * eye[k]
            inside = wset.contains_many(nb)
            nb_idx = np.zeros(len(pos), np.int64)
            if inside.any():
                rel = nb[inside] - lo_w
                nb_idx[inside] = np.ravel_multi_index(rel.T, (window.side,) * d)
            hit_a = inside.copy()
            hit_a[inside] = in_a[nb_idx[inside]]
            rhs_a[hit_a] += 1.0 / (2 * d)
            link = inside & ~hit_a
            if link.any():
                rows.append(np.where(link)[0])
                cols.append(fidx[nb_idx[link]])
                vals.append(np.full(link.sum(), -1.0 / (2 * d)))
            out = ~inside
            if out.any():
                ring_rows.append(np.where(out)[0])
                ring_pts.append(nb[out])
    L = sp.csr_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nf, nf))
    lu = spla.splu(L.tocsc())
    ring_rows = np.concatenate(ring_rows) if ring_rows else np.zeros(0, np.int64)
    ring_pts = (np.concatenate(ring_pts) if ring_pts
                else np.zeros((0, d), np.int64))
    # Green matrix ring x A, evaluated once
    g_ring = gt.g_many((ring_pts[:, None, :] - pts[None, :, :]).reshape(-1, d))
    g_ring = g_ring.reshape(len(ring_pts), len(pts))
    # flux stencil: which window flat indices neighbor each target point
    a_nbrs = np.stack([pts + s * eye[k] for k in range(d) for s in (+1, -1)], 1)
    a_nbr_idx = np.ravel_multi_index(
        (a_nbrs.reshape(-1, d) - lo_w).T, (window.side,) * d).reshape(len(pts), 2 * d)
    def sweep(e):
        """One pass of the fixpoint map: flux -> ring data -> solve -> flux."""
        rhs = rhs_a.copy()
        np.add.at(rhs, ring_rows, (g_ring @ e) / (2 * d))
        h = np.ones(n)
        h[free] = lu.solve(rhs)
        return h, 1.0 - h[a_nbr_idx].mean(axis=1)

    # the map is affine in the flux, e -> A e + b; plain iteration diverges
    # once the target capacity is large against the window, so solve
    # (I - A) e = b with a Krylov method instead
    na = len(pts)
    _, b = sweep(np.zeros(na))
    op = spla.LinearOperator(
        (na, na), matvec=lambda v: v - (sweep(v)[1] - b), dtype=float)
    e, info = spla.gmres(op, b, x0=b, rtol=1e-13, atol=0.0,
                         restart=min(na, 200), maxiter=max_sweeps)
    if info != 0:
        raise RuntimeError("hitting-field flux solve did not converge")
    h, e_check = sweep(e)
    update = float(np.abs(e_check - e).max())
    if update > 1e-9:
        raise RuntimeError("hitting-field fixpoint residual too large")
    return HittingField(window=window, target_points=pts, value=h,
                        flux=e_check, update_bound=update)


def hitting_probability_mc(start, A, n_walks=4000, kill_radius=150, seed=0,
                           max_steps=10_000_000):
    """Plain-walk estimate of P_start[H_A < infinity], for cross-checks.

    Walks are killed on reaching |x|_inf >= kill_radius; the unobserved
    hit-after-escape mass is biased low by at most roughly
    cap(A) * C_d / kill_radius, which the caller should add to the
    confidence interval.  Returns (estimate, standard_error).
    """
    start = as_point(start)
    aset = A if isinstance(A, LatticeSet) else LatticeSet.from_points(_as_points(A))
    d = start.shape[0]
    rng = np.random.default_rng(seed)
    pos = np.tile(start, (n_walks, 1))
    alive = np.ones(n_walks, bool)
    hits = 0
    steps = 0
    while alive.any():
        idx = np.where(alive)[0]
        draw = rng.integers(0, 2 * d, size=idx.size)
        axis = draw >> 1
        sign = ((draw & 1) << 1) - 1
        pos[idx, axis] += sign
        sub = pos[idx]
        hit = aset.contains_many(sub)
        hits += int(hit.sum())
        gone = np.abs(sub).max(axis=1) >= kill_radius
        alive[idx[hit | gone]] = False
        steps += 1
        if steps > max_steps:
            raise RuntimeError("walks did not terminate within max_steps")
    p = hits / n_walks
    se = np.sqrt(max(p * (1 - p), 1e-12) / n_walks)
    return p, float(se)


@dataclass
class RelativeEquilibriumReport:
    """Worst-case deviation of the union equilibrium measure, restricted and
    renormalized per box, from the single-box measure."""

    delta_obs: float
    per_box: np.ndarray
    box_masses: np.ndarray
    capacity_union: float


def relative_equilibrium_check(boxes, gt=None, config=DEFAULT):
    """For disjoint boxes C = union B_i, compare e_C(x)/e_C(B_i) with the
    normalized single-box measure; return the worst relative deviation."""
    if not boxes:
        raise ValueError("need at least one box")
    d = boxes[0].d
    if gt is None:
        gt = default_table(d)
    sets = [b.to_set() for b in boxes]
    for i in range(len(sets)):
        for j in range(i + 1, len(sets)):
            if sets[i].intersect(sets[j]):
                raise ValueError("boxes overlap")
    all_pts = np.concatenate([b.points() for b in boxes], axis=0)
    em = equilibrium_measure(all_pts, gt=gt, config=config)
    per_box = np.zeros(len(boxes))
    masses = np.zeros(len(boxes))
    for i, b in enumerate(boxes):
        sel = sets[i].contains_many(em.support)
        mass_b = em.mass[sel]
        masses[i] = mass_b.sum()
        single = equilibrium_measure(b, gt=gt, config=config)
        # both supports reduce to the box shell in the same lexicographic order
        if len(single.support) != sel.sum():
            raise ValueError("support mismatch between union and single box")
        ratio = mass_b / masses[i]
        ref = single.normalized()
        per_box[i] = float(np.abs(ratio / ref - 1.0).max())
    return RelativeEquilibriumReport(delta_obs=float(per_box.max()),
                                     per_box=per_box, box_masses=masses,
                                     capacity_union=em.total)
