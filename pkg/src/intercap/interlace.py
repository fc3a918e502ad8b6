"""Poisson soup of transient-walk trajectories through a finite anchor set.

A sample at intensity u consists of N ~ Poisson(u cap(A)) trajectories,
each started from the normalized equilibrium measure of the anchor A and
run forward in continuous time (unit-rate holding at every vertex).  Two
exactness points about the construction:

* Only forward pieces are simulated.  The backward half of each doubly
  infinite trajectory is conditioned never to return to the anchor, so it
  never revisits the anchor region: local times and occupancy inside the
  anchor's bounding window are carried entirely by the forward pieces.
* Walks are not killed at the guard box.  On crossing it, the exact return
  probability p = sum_y g(pos - y) e_A(y) is evaluated from the Green
  table; with probability p the walk re-enters at y drawn proportionally
  to e_A(y) g(pos - y) (the conditional hitting point law), and otherwise
  it has provably escaped to infinity.  The guard therefore introduces no
  truncation bias, only a bounded amount of extra work.

Streams are counter based: one master seed plus the soup index addresses
every trajectory, and thinning marks live in a salted side stream, so a
soup is reproducible and thinning-stable by construction.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kern
from .config import DEFAULT
from .green import default_table
from .lattice import LatticeBox, LatticeSet, as_point
from .potential import EquilibriumMeasure, equilibrium_measure


class SoupEngine:
    """Cached anchor data (equilibrium measure, Green pack, guard) for
    repeated sampling against one anchor set."""

    def __init__(self, anchor, gt=None, config=DEFAULT, guard=None):
        if isinstance(anchor, LatticeBox):
            pts = anchor.points()
            center = np.asarray(anchor.center, np.int64)
            radius = anchor.radius
        else:
            pts = anchor.points() if isinstance(anchor, LatticeSet) else \
                np.asarray(anchor, np.int64)
            lo, hi = pts.min(axis=0), pts.max(axis=0)
            center = (lo + hi) // 2
            radius = int(np.abs(pts - center).max())
        if gt is None:
            gt = default_table(3)
        if gt.d != 3:
            raise ValueError("trajectory kernels are d = 3")
        self.gt = gt
        self.config = config
        self.center = center
        self.N = int(radius)
        if guard is None:
            guard = max(config.guard_floor,
                        int(math.ceil(config.guard_gamma * self.N)))
        if guard <= self.N:
            raise ValueError("guard radius must exceed the window radius")
        self.guard = int(guard)
        em = equilibrium_measure(pts - center, gt=gt, config=config)
        self.em = em
        self.cap = em.total
        self.supp = np.ascontiguousarray(em.support)
        self.masses = np.ascontiguousarray(em.mass)
        self.cum = em.cumulative()
        self.pack = gt.kernel_pack()
        self.side = 2 * self.N + 1
        self.vol = self.side ** 3

    def flat_index(self, pts):
        """Window-volume flat index of absolute lattice points."""
        rel = np.asarray(pts, np.int64).reshape(-1, 3) - self.center + self.N
        if rel.min() < 0 or rel.max() >= self.side:
            raise ValueError("points outside the anchor window")
        return rel[:, 0] * self.side * self.side + rel[:, 1] * self.side + rel[:, 2]

    def weight_vector(self, em):
        """Volume-shaped weight vector carrying an equilibrium measure."""
        w = np.zeros(self.vol)
        w[self.flat_index(em.support)] = em.mass
        return w

    def campaign(self, seed, n_soups, u, w_loc=None, w_occ=None):
        """Batched soups reduced to per-soup summaries.

        Returns (counts, X, Y): trajectory counts, local-time functionals
        X_s = sum_x L_s(x) w_loc(x), occupancy functionals
        Y_s = sum_{x occupied} w_occ(x).
        """
        table, R0, Cd, ta, tb = self.pack
        if w_loc is None:
            w_loc = np.zeros(self.vol)
        if w_occ is None:
            w_occ = np.zeros(self.vol)
        counts, X, Y, status = kern.run_campaign(
            seed, n_soups, u, self.N, self.guard, self.supp, self.masses,
            self.cum, self.cap, table, R0, Cd, ta, tb, w_loc, w_occ,
            self.config.max_steps_per_trajectory)
        if status != 0:
            raise RuntimeError("trajectory step budget exceeded")
        return counts, X, Y

    def soup_pair(self, seed, soup_id, u_hi, ratio):
        table, R0, Cd, ta, tb = self.pack
        n_hi, n_lo, loc_hi, loc_lo, status = kern.run_soup_pair(
            seed, soup_id, u_hi, ratio, self.N, self.guard, self.supp,
            self.masses, self.cum, self.cap, table, R0, Cd, ta, tb,
            self.config.max_steps_per_trajectory)
        if status != 0:
            raise RuntimeError("trajectory step budget exceeded")
        return n_hi, n_lo, loc_hi, loc_lo

    def pair_empty_fraction(self, seed_a, seed_b, n_pairs, u_a, u_b, probe_pts):
        """Fraction of independent soup pairs with disjoint occupancy on the
        probe set: estimates P[trace_a and trace_b miss each other on probe]."""
        table, R0, Cd, ta, tb = self.pack
        probe = np.zeros(self.vol, np.uint8)
        probe[self.flat_index(probe_pts)] = 1
        count, status = kern.run_pair_empty(
            seed_a, seed_b, n_pairs, u_a, u_b, self.N, self.guard, self.supp,
            self.masses, self.cum, self.cap, table, R0, Cd, ta, tb, probe,
            self.config.max_steps_per_trajectory)
        if status != 0:
            raise RuntimeError("trajectory step budget exceeded")
        return count / n_pairs


_ENGINES = {}


def get_engine(window, gt=None, config=DEFAULT):
    """Engine cache for box anchors, keyed by radius and guard policy."""
    if not isinstance(window, LatticeBox):
        raise TypeError("window must be a LatticeBox")
    key = (window.radius, config.guard_floor, config.guard_gamma,
           id(gt) if gt is not None else None)
    eng = _ENGINES.get(key)
    if eng is None:
        # soups are translation invariant, so one origin-centered engine per
        # radius serves every window of that size
        eng = SoupEngine(LatticeBox((0,) * window.d, window.radius),
                         gt=gt, config=config)
        _ENGINES[key] = eng
    return eng


@dataclass
class InterlacementSample:
    """Trace of one soup inside its window.

    ``local`` is the flat local-time field over the window volume (zero off
    the trace); occupancy and per-vertex views are derived from it.
    """

    u: float
    window: LatticeBox
    n_trajectories: int
    seed: int
    truncation_radius: int
    local: np.ndarray = field(repr=False)

    @property
    def side(self):
        return 2 * self.window.radius + 1

    def _grid(self):
        return self.local.reshape((self.side,) * 3)

    def occupancy(self):
        """Occupied vertices as a LatticeSet (empty-safe)."""
        mask = self._grid() > 0.0
        if not mask.any():
            return LatticeSet.empty(3)
        lo = np.asarray(self.window.center) - self.window.radius
        return LatticeSet(lo, mask)

    def local_time_at(self, x):
        x = as_point(x, 3)
        rel = x - np.asarray(self.window.center) + self.window.radius
        if rel.min() < 0 or rel.max() >= self.side:
            raise ValueError("point outside the sample window")
        return float(self._grid()[tuple(rel)])

    def is_empty(self):
        return self.n_trajectories == 0 or not (self.local > 0).any()

    def functional(self, em):
        """<local time, measure> for a measure supported inside the window."""
        rel = em.support - np.asarray(self.window.center) + self.window.radius
        if rel.min() < 0 or rel.max() >= self.side:
            raise ValueError("measure support escapes the sample window")
        flat = rel[:, 0] * self.side * self.side + rel[:, 1] * self.side + rel[:, 2]
        return float(self.local[flat] @ em.mass)

    def to_text(self):
        """Bit-exact text form: header plus one hex-float line per vertex."""
        lines = [f"u {float(self.u).hex()}",
                 f"center {' '.join(str(c) for c in self.window.center)}",
                 f"radius {self.window.radius}",
                 f"n_trajectories {self.n_trajectories}",
                 f"seed {self.seed}",
                 f"guard {self.truncation_radius}"]
        occ = np.nonzero(self.local)[0]
        lines.append(f"occupied {len(occ)}")
        for fi in occ:
            lines.append(f"{fi} {float(self.local[fi]).hex()}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        rows = text.strip().split("\n")
        head = {}
        i = 0
        while i < len(rows):
            key, *rest = rows[i].split()
            i += 1
            if key == "occupied":
                n_occ = int(rest[0])
                break
            head[key] = rest
        else:
            raise ValueError("truncated sample text")
        window = LatticeBox(tuple(int(c) for c in head["center"]),
                            int(head["radius"][0]))
        side = 2 * window.radius + 1
        local = np.zeros(side ** 3)
        for row in rows[i:i + n_occ]:
            fi, hx = row.split()
            local[int(fi)] = float.fromhex(hx)
        return cls(u=float.fromhex(head["u"][0]), window=window,
                   n_trajectories=int(head["n_trajectories"][0]),
                   seed=int(head["seed"][0]),
                   truncation_radius=int(head["guard"][0]), local=local)


def sample(u, window, seed, gt=None, config=DEFAULT):
    """Draw the interlacement trace at intensity u inside a box window."""
    if u < 0:
        raise ValueError("intensity must be nonnegative")
    eng = get_engine(window, gt=gt, config=config)
    n_hi, _n_lo, loc_hi, _loc_lo = eng.soup_pair(seed, 0, u, 1.0)
    return InterlacementSample(u=float(u), window=window,
                               n_trajectories=int(n_hi), seed=int(seed),
                               truncation_radius=eng.guard, local=loc_hi)


def monotone_couple(u1, u2, window, seed, gt=None, config=DEFAULT):
    """Two nested samples from one soup: the level-u1 sample keeps each
    trajectory with probability u1/u2, so occupancy and local times nest
    pointwise on every seed."""
    if not 0 <= u1 <= u2:
        raise ValueError("need 0 <= u1 <= u2")
    eng = get_engine(window, gt=gt, config=config)
    ratio = 1.0 if u2 == 0 else u1 / u2
    n_hi, n_lo, loc_hi, loc_lo = eng.soup_pair(seed, 0, u2, ratio)
    if u1 == 0:
        n_lo = 0
        loc_lo = np.zeros_like(loc_lo)
    s_hi = InterlacementSample(u=float(u2), window=window,
                               n_trajectories=int(n_hi), seed=int(seed),
                               truncation_radius=eng.guard, local=loc_hi)
    s_lo = InterlacementSample(u=float(u1), window=window,
                               n_trajectories=int(n_lo), seed=int(seed),
                               truncation_radius=eng.guard, local=loc_lo)
    return s_lo, s_hi


def intersect(s1, s2):
    """Occupancy intersection of two samples on a common window."""
    if (tuple(s1.window.center) != tuple(s2.window.center)
            or s1.window.radius != s2.window.radius):
        raise ValueError("samples live on different windows")
    return s1.occupancy().intersect(s2.occupancy())


def local_time_functional(s, em):
    """<L, e> = sum_x L(x) e(x); the measure must live inside the window."""
    if not isinstance(em, EquilibriumMeasure):
        raise TypeError("expected an EquilibriumMeasure")
    return s.functional(em)
