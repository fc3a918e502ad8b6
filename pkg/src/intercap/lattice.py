"""Lattice geometry: boxes, dense point sets, cell unions, and the
discrete-to-continuum scalings used throughout the package."""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np


def as_point(x, d=None):
    """Coerce x to an int64 lattice point, validating dimension."""
    p = np.asarray(x, dtype=np.int64)
    if p.ndim != 1:
        raise ValueError("a lattice point must be a flat integer vector")
    if d is not None and p.shape[0] != d:
        raise ValueError(f"expected a {d}-vector, got shape {p.shape}")
    return p


@dataclass(frozen=True)
class LatticeBox:
    """Axis-aligned sup-norm ball B(center, radius) on Z^d, radius >= 0."""

    center: tuple
    radius: int

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be >= 0")
        object.__setattr__(self, "center", tuple(int(c) for c in self.center))

    @property
    def d(self):
        return len(self.center)

    @property
    def side(self):
        return 2 * self.radius + 1

    def volume(self):
        return self.side ** self.d

    def contains(self, x):
        x = as_point(x, self.d)
        return bool(np.abs(x - np.asarray(self.center)).max(initial=0) <= self.radius)

    def points(self):
        """All points, lexicographic in the coordinates."""
        axes = [np.arange(c - self.radius, c + self.radius + 1) for c in self.center]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=-1).astype(np.int64)

    def boundary_points(self):
        """Inner boundary: points at sup-distance exactly radius (all, if radius 0)."""
        pts = self.points()
        dist = np.abs(pts - np.asarray(self.center)).max(axis=1)
        return pts[dist == self.radius]

    def to_set(self):
        return LatticeSet.from_points(self.points())

    def translate(self, v):
        v = as_point(v, self.d)
        return LatticeBox(tuple(np.asarray(self.center) + v), self.radius)


class LatticeSet:
    """Finite subset of Z^d stored as a dense bitmask over its bounding box.

    Iteration and ``points()`` are lexicographic in the coordinates, so any
    serialization derived from them is deterministic.
    """

    def __init__(self, lo, mask):
        self.lo = np.asarray(lo, dtype=np.int64)
        self.mask = np.asarray(mask, dtype=bool)
        if self.mask.ndim != self.lo.shape[0]:
            raise ValueError("mask rank must equal the dimension of lo")
        self._count = int(self.mask.sum())

    @classmethod
    def empty(cls, d):
        return cls(np.zeros(d, np.int64), np.zeros((0,) * d, bool))

    @classmethod
    def from_points(cls, pts):
        pts = np.asarray(pts, dtype=np.int64)
        if pts.size == 0:
            raise ValueError("use LatticeSet.empty for an empty set")
        if pts.ndim != 2:
            raise ValueError("points must have shape (n, d)")
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        mask = np.zeros(tuple(hi - lo + 1), dtype=bool)
        mask[tuple((pts - lo).T)] = True
        return cls(lo, mask)

    @property
    def d(self):
        return self.lo.shape[0]

    def __len__(self):
        return self._count

    def __bool__(self):
        return self._count > 0

    def points(self):
        if self._count == 0:
            return np.zeros((0, self.d), np.int64)
        return np.argwhere(self.mask) + self.lo  # argwhere is C-ordered: lexicographic

    def __iter__(self):
        return iter(map(tuple, self.points()))

    def contains(self, x):
        x = as_point(x, self.d)
        rel = x - self.lo
        if np.any(rel < 0) or np.any(rel >= np.asarray(self.mask.shape)):
            return False
        return bool(self.mask[tuple(rel)])

    def contains_many(self, pts):
        pts = np.asarray(pts, np.int64)
        rel = pts - self.lo
        ok = np.all((rel >= 0) & (rel < np.asarray(self.mask.shape)), axis=1)
        out = np.zeros(len(pts), bool)
        if ok.any():
            out[ok] = self.mask[tuple(rel[ok].T)]
        return out

    def intersect(self, other):
        if not self or not other:
            return LatticeSet.empty(self.d)
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.lo + self.mask.shape, other.lo + other.mask.shape)
        if np.any(hi <= lo):
            return LatticeSet.empty(self.d)
        sl_a = tuple(slice(l - ol, h - ol) for l, h, ol in zip(lo, hi, self.lo))
        sl_b = tuple(slice(l - ol, h - ol) for l, h, ol in zip(lo, hi, other.lo))
        m = self.mask[sl_a] & other.mask[sl_b]
        if not m.any():
            return LatticeSet.empty(self.d)
        return LatticeSet(lo, m)

    def union(self, other):
        if not self:
            return other
        if not other:
            return self
        lo = np.minimum(self.lo, other.lo)
        hi = np.maximum(self.lo + self.mask.shape, other.lo + other.mask.shape)
        m = np.zeros(tuple(hi - lo), bool)
        sl_a = tuple(slice(ol - l, ol - l + s) for l, ol, s in zip(lo, self.lo, self.mask.shape))
        sl_b = tuple(slice(ol - l, ol - l + s) for l, ol, s in zip(lo, other.lo, other.mask.shape))
        m[sl_a] |= self.mask
        m[sl_b] |= other.mask
        return LatticeSet(lo, m)

    def issubset(self, other):
        if not self:
            return True
        return len(self.intersect(other)) == len(self)

    def __eq__(self, other):
        if not isinstance(other, LatticeSet):
            return NotImplemented
        if self._count != other._count:
            return False
        if self._count == 0:
            return True
        return bool(np.array_equal(self.points(), other.points()))

    def __repr__(self):
        return f"LatticeSet(d={self.d}, n={self._count})"


@dataclass(frozen=True)
class RealBox:
    """Continuum sup-norm ball with rational center and radius."""

    center: tuple
    radius: Fraction

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(Fraction(c) for c in self.center))
        object.__setattr__(self, "radius", Fraction(self.radius))
        if self.radius <= 0:
            raise ValueError("radius must be > 0")

    @property
    def d(self):
        return len(self.center)

    @classmethod
    def unit(cls, d):
        return cls((0,) * d, 1)


class GridShape:
    """Finite union of congruent axis-aligned cubes (cells) in R^d.

    Cells are indexed by integer corner vectors: cell ``i`` occupies
    ``origin + [i*h, (i+1)*h]^d``.  Two constructors cover the uses here:
    ``unit_box(M, cells)`` for subsets of the sup-norm unit box at dyadic-free
    resolution M (cells of side 1/M), and ``from_lattice(points)`` for the
    filling of a lattice set by side-1 cells centered at its points.
    """

    def __init__(self, h, cells, origin=None, d=None, resolution=None):
        cells = np.asarray(cells, dtype=np.int64)
        if cells.size == 0:
            if d is None:
                raise ValueError("empty GridShape needs an explicit dimension")
            cells = np.zeros((0, d), np.int64)
        if cells.ndim != 2:
            raise ValueError("cells must have shape (n, d)")
        # canonical order + dedup so equality and hashing are well defined
        cells = np.unique(cells, axis=0)
        self.h = float(h)
        if self.h <= 0:
            raise ValueError("cell side must be > 0")
        self.cells = cells
        self.d = cells.shape[1]
        self.origin = np.zeros(self.d) if origin is None else np.asarray(origin, float)
        self.resolution = resolution

    @classmethod
    def unit_box(cls, M, cells=None, d=3):
        """Subset of [-1,1]^d from cells of side 1/M; cells=None takes all."""
        if M < 1:
            raise ValueError("resolution must be >= 1")
        if cells is None:
            axes = [np.arange(2 * M)] * d
            grid = np.meshgrid(*axes, indexing="ij")
            cells = np.stack([g.ravel() for g in grid], -1)
        else:
            cells = np.asarray(cells, np.int64)
            if cells.size and (cells.min() < 0 or cells.max() >= 2 * M):
                raise ValueError("cell indices must lie in [0, 2M)^d")
        return cls(1.0 / M, cells, origin=-np.ones(d), d=d, resolution=M)

    @classmethod
    def from_lattice(cls, pts, d=None):
        """Side-1 cells [x - 1/2, x + 1/2]^d, one per lattice point."""
        pts = np.asarray(pts, np.int64)
        if pts.size == 0:
            if d is None:
                raise ValueError("empty filling needs an explicit dimension")
            return cls(1.0, np.zeros((0, d), np.int64), origin=-0.5 * np.ones(d), d=d)
        d = pts.shape[1]
        return cls(1.0, pts, origin=-0.5 * np.ones(d), d=d)

    @property
    def n_cells(self):
        return len(self.cells)

    def is_empty(self):
        return self.n_cells == 0

    def cells_lo(self):
        return self.origin + self.cells * self.h

    def cells_hi(self):
        return self.cells_lo() + self.h

    def volume(self):
        return self.n_cells * self.h ** self.d

    def circumradius(self):
        """Euclidean radius, about the coordinate origin, of the shape."""
        if self.is_empty():
            return 0.0
        lo, hi = self.cells_lo(), self.cells_hi()
        far = np.maximum(np.abs(lo), np.abs(hi))
        return float(np.sqrt((far ** 2).sum(axis=1)).max())

    def diameter(self):
        if self.is_empty():
            return 0.0
        lo, hi = self.cells_lo(), self.cells_hi()
        span = hi.max(axis=0) - lo.min(axis=0)
        return float(np.sqrt((span ** 2).sum()))

    def cell_key(self):
        """Hashable identity of the geometry (cells are kept sorted)."""
        return (self.d, round(self.h, 12), self.cells.tobytes())

    def with_cells(self, cells):
        return GridShape(self.h, cells, origin=self.origin, d=self.d,
                         resolution=self.resolution)

    def refine(self, factor=2):
        """Same geometry represented with cells of side h/factor."""
        if factor < 1 or int(factor) != factor:
            raise ValueError("factor must be a positive integer")
        factor = int(factor)
        if self.is_empty():
            return GridShape(self.h / factor, self.cells * factor, origin=self.origin,
                             d=self.d, resolution=None if self.resolution is None
                             else self.resolution * factor)
        offs = np.stack(np.meshgrid(*[np.arange(factor)] * self.d, indexing="ij"),
                        -1).reshape(-1, self.d)
        cells = (self.cells[:, None, :] * factor + offs[None, :, :]).reshape(-1, self.d)
        return GridShape(self.h / factor, cells, origin=self.origin, d=self.d,
                         resolution=None if self.resolution is None
                         else self.resolution * factor)

    def __eq__(self, other):
        if not isinstance(other, GridShape):
            return NotImplemented
        return self.cell_key() == other.cell_key() and np.allclose(self.origin, other.origin)

    def __repr__(self):
        return f"GridShape(d={self.d}, h={self.h:g}, cells={self.n_cells})"


def blow_up(shape, N):
    """Lattice trace of the N-fold dilation of a continuum shape.

    Returns the LatticeSet of points whose sup-distance to N*shape is < 1.
    The dilation is about the coordinate origin.
    """
    if N <= 0 or int(N) != N:
        raise ValueError("blow-up factor must be a positive integer")
    N = int(N)
    if shape.is_empty():
        return LatticeSet.empty(shape.d)
    lo = shape.cells_lo() * N  # (n_cells, d)
    hi = shape.cells_hi() * N
    lo_all = np.floor(lo.min(axis=0) - 1).astype(np.int64)
    hi_all = np.ceil(hi.max(axis=0) + 1).astype(np.int64)
    axes = [np.arange(a, b + 1) for a, b in zip(lo_all, hi_all)]
    grid = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grid], -1).astype(np.int64)
    keep = np.zeros(len(pts), bool)
    # chunk over cells; dist_inf(x, cell) = max_i max(lo_i - x_i, x_i - hi_i, 0)
    for c in range(len(lo)):
        gap = np.maximum(lo[c] - pts, pts - hi[c])
        keep |= gap.max(axis=1) < 1.0
    if not keep.any():
        return LatticeSet.empty(shape.d)
    return LatticeSet.from_points(pts[keep])


def filling(A):
    """Continuum filling of a lattice set: one closed side-1 cube per point."""
    if isinstance(A, LatticeBox):
        A = A.to_set()
    if isinstance(A, LatticeSet):
        pts = A.points()
        d = A.d
    else:
        pts = np.asarray(A, np.int64)
        d = pts.shape[1] if pts.size else None
    return GridShape.from_lattice(pts, d=d)


def mesoscopic_scale(N, d):
    """Box side for the mesoscopic partition: floor(N^(2/d) * (ln N)^(1/d))."""
    if N < 2:
        raise ValueError("window radius must be >= 2")
    return int(math.floor(N ** (2.0 / d) * math.log(N) ** (1.0 / d)))


def mesoscopic_partition(N, K=2, d=3, L=None, L_min=3, strict=False):
    """Mesoscopic box grid inside B(0, N).

    Boxes B(x, L) with centers on the grid (2K+1)L * Z^d, kept when contained
    in B(0, N).  L defaults to ``mesoscopic_scale(N, d)`` clamped from below
    by L_min; pass L explicitly for desk-scale runs.  With ``strict`` the
    asymptotic-regime bounds (N > 100^d, K > 100) are enforced instead of the
    desk-scale defaults.

    Returns (boxes, L).
    """
    if strict:
        if N <= 100 ** d:
            raise ValueError("strict scale regime requires N > 100^d")
        if K <= 100:
            raise ValueError("strict scale regime requires K > 100")
    if K < 1:
        raise ValueError("K must be >= 1")
    if L is None:
        L = max(mesoscopic_scale(N, d), L_min)
    if L >= N:
        raise ValueError("no mesoscopic scale separation: L >= N")
    spacing = (2 * K + 1) * L
    reach = N - L  # B(x, L) subset of B(0, N) iff |x|_inf <= N - L
    kmax = reach // spacing
    axis = np.arange(-kmax, kmax + 1) * spacing
    grid = np.meshgrid(*([axis] * d), indexing="ij")
    centers = np.stack([g.ravel() for g in grid], -1)
    boxes = [LatticeBox(tuple(c), L) for c in centers]
    return boxes, L
