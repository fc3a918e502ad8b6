"""Continuum capacity: kernel normalization against the ball closed form,
frozen cube values, dual-method agreement, scaling laws, and the
discrete-to-continuum ratio trends."""

import math

import numpy as np
import pytest

from intercap.config import DEFAULT
from intercap.continuum import (ball_capacity_collocation, boundary_faces,
                                brownian_capacity, collection_compare,
                                discrete_continuum_compare, kernel_constant,
                                solve_panels, wos_capacity)
from intercap.lattice import GridShape, LatticeBox

# frozen collocation values for the sup-norm unit box [-1,1]^3
CUBE_CAPS = {
    1: 7.996591044271983,
    2: 8.17226532365681,
    4: 8.251464324861677,
    8: 8.283321533463123,
}


@pytest.fixture(scope="module")
def cube():
    return GridShape.unit_box(1)


class TestKernelNormalization:
    def test_constant_d3(self):
        assert kernel_constant(3) == pytest.approx(1.0 / (2 * math.pi), rel=1e-14)

    @pytest.mark.parametrize("r", [1.0, 2.5])
    def test_ball_closed_form(self, r):
        # uniform density on a sphere of radius r gives capacity 2 pi r
        got = ball_capacity_collocation(r, n_theta=24)
        assert got == pytest.approx(2 * math.pi * r, rel=6e-3)

    def test_ball_mesh_convergence(self):
        errs = [abs(ball_capacity_collocation(1.0, nth) - 2 * math.pi)
                for nth in (12, 24)]
        assert errs[1] < errs[0]


class TestCollocation:
    def test_panel_extraction_counts(self, cube):
        centers, axes, h = boundary_faces(cube, sub=1)
        assert len(centers) == 24  # 6 faces x 4 exposed unit cells
        assert h == pytest.approx(1.0)
        centers2, _, h2 = boundary_faces(cube, sub=3)
        assert len(centers2) == 24 * 9 and h2 == pytest.approx(1 / 3)

    def test_interior_faces_are_dropped(self):
        shape = GridShape.unit_box(2, cells=[[0, 0, 0], [1, 0, 0]])
        centers, _, _ = boundary_faces(shape)
        assert len(centers) == 10  # two glued cubes: 12 faces minus 2 shared

    def test_cube_frozen_values(self, cube):
        for sub, want in CUBE_CAPS.items():
            got = solve_panels(cube, sub=sub).capacity
            assert got == pytest.approx(want, rel=1e-10), sub

    def test_density_nonnegative(self, cube):
        ps = solve_panels(cube, sub=4)
        assert ps.density.min() > -1e-10

    def test_mesh_error_decreasing(self, cube):
        diffs = [abs(CUBE_CAPS[2] - CUBE_CAPS[1]),
                 abs(CUBE_CAPS[4] - CUBE_CAPS[2]),
                 abs(CUBE_CAPS[8] - CUBE_CAPS[4])]
        assert diffs[0] > diffs[1] > diffs[2]

    def test_capacity_estimate_brackets_refinement(self, cube):
        est = brownian_capacity(cube, sub=4)
        assert est.value == pytest.approx(CUBE_CAPS[4], rel=1e-10)
        assert est.mesh_error == pytest.approx(CUBE_CAPS[4] - CUBE_CAPS[2],
                                               rel=1e-8)

    def test_empty_shape_is_zero(self):
        empty = GridShape.unit_box(2, cells=np.zeros((0, 3), np.int64))
        est = brownian_capacity(empty)
        assert est.value == 0.0 and est.n_panels == 0

    def test_panel_limit_guard(self, cube):
        cfg = DEFAULT.with_(colloc_panel_limit=10)
        with pytest.raises(ValueError, match="panels exceed"):
            solve_panels(cube, sub=2, config=cfg)

    def test_scaling_homogeneity(self):
        cells = [[0, 0, 0], [1, 1, 1], [1, 0, 0]]
        a = GridShape.unit_box(2, cells=cells)
        b = GridShape(2 * a.h, a.cells, origin=2 * a.origin)  # t = 2 dilation
        ca = solve_panels(a, sub=2).capacity
        cb = solve_panels(b, sub=2).capacity
        assert cb == pytest.approx(2.0 * ca, rel=1e-10)

    def test_monotone_in_shape(self):
        small = GridShape.unit_box(2, cells=[[0, 0, 0], [1, 1, 0]])
        big = GridShape.unit_box(2, cells=[[0, 0, 0], [1, 1, 0], [1, 0, 0]])
        cs = brownian_capacity(small, sub=2)
        cb = brownian_capacity(big, sub=2)
        assert cs.value <= cb.value + cs.mesh_error + cb.mesh_error

    def test_subadditive_on_cell_unions(self):
        rng = np.random.default_rng(3)
        cells = rng.integers(0, 4, size=(8, 3))
        cells = np.unique(cells, axis=0)
        half = len(cells) // 2
        a = GridShape.unit_box(2, cells=cells[:half])
        b = GridShape.unit_box(2, cells=cells[half:])
        u = GridShape.unit_box(2, cells=cells)
        ca, cb_, cu = (solve_panels(s, sub=2).capacity for s in (a, b, u))
        assert cu <= ca + cb_ + 1e-6


class TestWalkOnSpheres:
    def test_cube_dual_method(self, cube):
        est = brownian_capacity(cube, sub=8)
        wos, se = wos_capacity(cube, samples=20000, seed=7)
        assert abs(est.value - wos) <= est.mesh_error + 3 * se

    def test_shrinking_shape_estimate_shrinks(self):
        tiny = GridShape.unit_box(8, cells=[[8, 8, 8]])
        small, se = wos_capacity(tiny, samples=4000, seed=3)
        big, _ = wos_capacity(GridShape.unit_box(1), samples=4000, seed=3)
        assert small < big / 5

    def test_enclosure_guard(self, cube):
        with pytest.raises(ValueError, match="enclose"):
            wos_capacity(cube, samples=10, R_start=1.0)

    def test_seed_reproducible(self, cube):
        a = wos_capacity(cube, samples=2000, seed=11)
        b = wos_capacity(cube, samples=2000, seed=11)
        c = wos_capacity(cube, samples=2000, seed=12)
        assert a == b
        assert a != c


class TestScalingCompare:
    @pytest.mark.slow
    def test_unit_box_ratio_trend(self):
        rep = discrete_continuum_compare(GridShape.unit_box(1), [8, 16, 32],
                                         sub=8)
        assert rep.gaps_decreasing
        assert abs(rep.ratios[-1] - 1.0) < 0.15
        # frozen trajectory of the ratio sequence
        np.testing.assert_allclose(rep.ratios, [1.01136, 1.00590, 1.00372],
                                   atol=2e-5)

    def test_slab_ratio_trend(self):
        slab = GridShape.unit_box(2, cells=[[0, 0, 0], [1, 0, 0]])
        rep = discrete_continuum_compare(slab, [8, 16], sub=8)
        assert rep.gaps_decreasing
        assert abs(rep.ratios[-1] - 1.0) < 0.15

    def test_degenerate_blowup_smoke(self):
        rep = discrete_continuum_compare(GridShape.unit_box(1), [1], sub=2)
        assert np.isfinite(rep.ratios[0]) and rep.ratios[0] > 0

    @pytest.mark.slow
    def test_collection_ratio_improves_with_box_size(self):
        deltas = []
        for L in (3, 6, 12):
            sep = 5 * L
            boxes = [LatticeBox((0, 0, 0), L), LatticeBox((sep, 0, 0), L)]
            deltas.append(collection_compare(boxes).delta_obs)
        assert deltas[0] > deltas[1] > deltas[2]
        assert deltas[2] < 0.05
