"""Geometry layer: set algebra against python-set oracles, blow-up against
an exhaustive scan, partition layout by direct enumeration."""

import math
from fractions import Fraction

import numpy as np
import pytest

from intercap.lattice import (GridShape, LatticeBox, LatticeSet, blow_up,
                              filling, mesoscopic_partition, mesoscopic_scale)

rng = np.random.default_rng(20260818)


def random_pts(n, d, lo=-6, hi=7):
    return rng.integers(lo, hi, size=(n, d))


class TestLatticeBox:
    def test_volume_and_membership(self):
        b = LatticeBox((1, -2, 0), 3)
        assert b.volume() == 7 ** 3
        assert b.contains((4, -5, 3))
        assert not b.contains((5, -2, 0))

    def test_points_count_matches_volume(self):
        b = LatticeBox((0, 0, 0), 2)
        pts = b.points()
        assert len(pts) == b.volume()
        assert len(np.unique(pts, axis=0)) == len(pts)

    def test_boundary_is_shell(self):
        b = LatticeBox((0, 0, 0), 2)
        bd = b.boundary_points()
        assert len(bd) == 5 ** 3 - 3 ** 3
        assert (np.abs(bd).max(axis=1) == 2).all()

    def test_radius_zero(self):
        b = LatticeBox((5, 5, 5), 0)
        assert b.volume() == 1
        assert len(b.boundary_points()) == 1


class TestLatticeSet:
    def as_pyset(self, s):
        return set(map(tuple, s.points()))

    def test_roundtrip(self):
        pts = random_pts(40, 3)
        s = LatticeSet.from_points(pts)
        assert self.as_pyset(s) == set(map(tuple, pts))

    def test_points_are_lexicographic(self):
        pts = random_pts(60, 3)
        s = LatticeSet.from_points(pts)
        out = s.points()
        assert sorted(map(tuple, out)) == list(map(tuple, out))

    @pytest.mark.parametrize("trial", range(10))
    def test_algebra_matches_python_sets(self, trial):
        a = LatticeSet.from_points(random_pts(30, 3))
        b = LatticeSet.from_points(random_pts(30, 3))
        pa, pb = self.as_pyset(a), self.as_pyset(b)
        assert self.as_pyset(a.intersect(b)) == (pa & pb)
        assert self.as_pyset(a.union(b)) == (pa | pb)
        assert a.issubset(a.union(b))
        assert a.intersect(b).issubset(a)

    def test_disjoint_intersection_is_empty(self):
        a = LatticeBox((0, 0, 0), 1).to_set()
        b = LatticeBox((10, 10, 10), 1).to_set()
        assert len(a.intersect(b)) == 0
        assert not a.intersect(b)

    def test_contains_many(self):
        s = LatticeSet.from_points(random_pts(25, 3))
        probes = random_pts(50, 3, lo=-8, hi=9)
        got = s.contains_many(probes)
        want = np.array([s.contains(p) for p in probes])
        assert (got == want).all()

    def test_empty_behaves(self):
        e = LatticeSet.empty(3)
        s = LatticeBox((0, 0, 0), 1).to_set()
        assert len(e) == 0
        assert e.union(s) == s
        assert len(e.intersect(s)) == 0
        assert e.issubset(s)


class TestGridShape:
    def test_unit_box_full(self):
        g = GridShape.unit_box(2)
        assert g.n_cells == 4 ** 3
        assert g.volume() == pytest.approx(8.0)
        np.testing.assert_allclose(g.cells_lo().min(axis=0), -1.0)
        np.testing.assert_allclose(g.cells_hi().max(axis=0), 1.0)

    def test_unit_box_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            GridShape.unit_box(2, cells=[[0, 0, 4]])

    def test_filling_geometry(self):
        f = filling(LatticeBox((0, 0, 0), 1))
        assert f.n_cells == 27
        assert f.volume() == pytest.approx(27.0)
        # cells [x-1/2, x+1/2]: the box fills [-3/2, 3/2]^3
        np.testing.assert_allclose(f.cells_lo().min(axis=0), -1.5)
        np.testing.assert_allclose(f.cells_hi().max(axis=0), 1.5)
        assert f.diameter() == pytest.approx(3 * math.sqrt(3))

    def test_circumradius_single_cube(self):
        g = GridShape.unit_box(1)  # [-1,1]^3
        assert g.circumradius() == pytest.approx(math.sqrt(3))

    def test_refine_preserves_volume(self):
        g = GridShape.unit_box(2, cells=[[0, 0, 0], [1, 2, 3]])
        r = g.refine(2)
        assert r.n_cells == 2 * 8
        assert r.volume() == pytest.approx(g.volume())
        assert r.circumradius() == pytest.approx(g.circumradius())

    def test_dedup_and_equality(self):
        a = GridShape.unit_box(2, cells=[[0, 0, 0], [0, 0, 0], [1, 1, 1]])
        b = GridShape.unit_box(2, cells=[[1, 1, 1], [0, 0, 0]])
        assert a.n_cells == 2
        assert a == b
        assert a.cell_key() == b.cell_key()


def blow_up_oracle(shape, N):
    """Exhaustive rational-arithmetic scan over a safe bounding window."""
    cells_lo = shape.cells_lo()
    cells_hi = shape.cells_hi()
    lo_f = [[Fraction(c).limit_denominator(10 ** 9) * N for c in row] for row in cells_lo]
    hi_f = [[Fraction(c).limit_denominator(10 ** 9) * N for c in row] for row in cells_hi]
    d = shape.d
    lo_all = [min(r[i] for r in lo_f) for i in range(d)]
    hi_all = [max(r[i] for r in hi_f) for i in range(d)]
    out = []
    ranges = [range(math.floor(lo_all[i]) - 2, math.ceil(hi_all[i]) + 3) for i in range(d)]
    import itertools
    for x in itertools.product(*ranges):
        best = None
        for lo, hi in zip(lo_f, hi_f):
            gap = max(max(lo[i] - x[i], x[i] - hi[i], Fraction(0)) for i in range(d))
            best = gap if best is None else min(best, gap)
        if best < 1:
            out.append(x)
    return set(out)


class TestBlowUp:
    def test_unit_box_frozen(self):
        # N * [-1,1]^3 at N=3: points with dist < 1 are |x|_inf <= 3
        got = blow_up(GridShape.unit_box(1), 3)
        want = LatticeBox((0, 0, 0), 3).to_set()
        assert got == want

    def test_against_exhaustive_scan(self):
        shape = GridShape.unit_box(2, cells=[[0, 0, 0], [1, 1, 1], [3, 2, 1]])
        for N in (2, 3, 5):
            got = set(map(tuple, blow_up(shape, N).points()))
            assert got == blow_up_oracle(shape, N)

    def test_filling_blowup_of_point(self):
        # fill {0} then blow up by N: cube [-N/2, N/2]^3, trace |x|_inf < N/2 + 1
        f = filling(np.array([[0, 0, 0]]))
        got = blow_up(f, 4)
        want = LatticeBox((0, 0, 0), 2).to_set()  # |x| <= 2 < 3
        assert got == want

    def test_monotone_in_shape(self):
        small = GridShape.unit_box(2, cells=[[1, 1, 1]])
        big = GridShape.unit_box(2, cells=[[1, 1, 1], [2, 2, 2]])
        assert blow_up(small, 6).issubset(blow_up(big, 6))

    def test_rejects_bad_factor(self):
        with pytest.raises(ValueError):
            blow_up(GridShape.unit_box(1), 0)


class TestMesoscopicPartition:
    def test_scale_frozen_value(self):
        # floor(1000^(2/3) * ln(1000)^(1/3)) = floor(100 * 1.90497...) = 190
        assert mesoscopic_scale(1000, 3) == 190

    def test_partition_layout(self):
        boxes, L = mesoscopic_partition(200, K=2, d=3)
        assert L == max(mesoscopic_scale(200, 3), 3)
        spacing = 5 * L
        for b in boxes:
            c = np.asarray(b.center)
            assert (c % spacing == 0).all()
            assert np.abs(c).max(initial=0) + L <= 200

    def test_partition_is_complete(self):
        # every admissible grid center is present
        boxes, L = mesoscopic_partition(200, K=1, d=3, L=20)
        centers = set(b.center for b in boxes)
        spacing = 3 * 20
        kmax = (200 - 20) // spacing
        want = set()
        import itertools
        for k in itertools.product(range(-kmax, kmax + 1), repeat=3):
            want.add(tuple(spacing * np.array(k)))
        assert centers == want

    def test_boxes_disjoint(self):
        boxes, L = mesoscopic_partition(150, K=1, d=3, L=15)
        assert len(boxes) > 1
        sets = [b.to_set() for b in boxes[:8]]
        for i in range(len(sets)):
            for j in range(i + 1, len(sets)):
                assert len(sets[i].intersect(sets[j])) == 0

    def test_no_scale_separation(self):
        with pytest.raises(ValueError, match="scale separation"):
            mesoscopic_partition(100, L=100)

    def test_strict_regime_rejected_at_desk_scale(self):
        with pytest.raises(ValueError):
            mesoscopic_partition(1000, K=2, d=3, strict=True)
