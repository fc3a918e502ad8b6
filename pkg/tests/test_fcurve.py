"""Constrained-capacity curve solver: endpoints, feasibility, monotonicity."""

import numpy as np
import pytest

from intercap.continuum import brownian_capacity
from intercap.fcurve import (FCurvePoint, _orbit_table, _running_minima,
                             f_curve, f_upper_bound, rate_predictions)
from intercap.lattice import GridShape

# capacity of the side-2 box at the M=4 evaluation resolution (panel 1/8)
CAP_BOX = 8.283316748821093


def test_orbit_table_partitions_cells():
    orbits = _orbit_table(4)
    stacked = np.concatenate(orbits)
    assert len(stacked) == 8 ** 3
    # disjoint cover of the cell grid
    flat = stacked[:, 0] * 64 + stacked[:, 1] * 8 + stacked[:, 2]
    assert len(np.unique(flat)) == 8 ** 3
    for orb in orbits:
        assert 48 % len(orb) == 0


def test_orbit_table_closed_under_reflection():
    for orb in _orbit_table(4):
        flipped = 7 - orb[:, ::-1]  # reflect all axes and permute
        a = set(map(tuple, orb.tolist()))
        assert set(map(tuple, flipped.tolist())) == a


def test_lam_zero_gives_box_capacity():
    p = f_upper_bound(0.0, M=4, budget=0, seed=1)
    assert p.witness.is_empty()
    assert p.upper_bound == pytest.approx(CAP_BOX, abs=1e-9)
    assert p.mesh_error == pytest.approx(0.0318663, abs=1e-5)
    assert p.cap_A == 0.0


def test_full_box_when_affordable():
    p = f_upper_bound(9.0, M=4, budget=0, seed=1)
    assert p.upper_bound == 0.0
    assert len(p.witness.cells) == 8 ** 3
    assert p.cap_A == pytest.approx(CAP_BOX, abs=1e-9)
    assert p.evals == 1


def test_negative_lam_rejected():
    with pytest.raises(ValueError, match="nonnegative"):
        f_upper_bound(-0.5, M=4)


def test_bad_resolution_rejected():
    with pytest.raises(ValueError, match="resolution"):
        f_upper_bound(1.0, M=5)


def test_warm_resolution_must_divide():
    w = GridShape.unit_box(8, cells=np.array([[0, 0, 0]]))
    with pytest.raises(ValueError, match="divide"):
        f_upper_bound(5.0, M=4, budget=0, warm=w)


def test_midcurve_point_frozen():
    p = f_upper_bound(5.0, M=4, budget=40, seed=3)
    assert p.upper_bound == pytest.approx(8.275293555525481, abs=1e-12)
    assert p.cap_A == pytest.approx(5.028613945602716, abs=1e-12)
    assert len(p.witness.cells) == 24


def test_witness_feasible_within_mesh_error():
    # search keeps the constraint at coarse panels; the refined value may
    # exceed lam by at most the reported coarse/fine gap
    for lam in (5.0, 7.5):
        p = f_upper_bound(lam, M=4, budget=40, seed=3)
        assert p.cap_A <= lam + p.cap_A_mesh_error + 1e-9


def test_bound_respects_analytic_floor():
    # removing capacity lam from the box cannot drop it below cap - lam
    for lam in (0.0, 5.0, 7.5):
        p = f_upper_bound(lam, M=4, budget=40, seed=3)
        assert p.upper_bound >= CAP_BOX - lam - 0.05


def test_emitted_bound_is_witness_complement_capacity():
    p = f_upper_bound(5.0, M=4, budget=40, seed=3)
    comp = p.complement()
    assert len(comp.cells) + len(p.witness.cells) == 8 ** 3
    assert brownian_capacity(comp, sub=2).value == p.upper_bound


def test_same_seed_same_answer():
    a = f_upper_bound(6.0, M=4, budget=15, seed=7)
    b = f_upper_bound(6.0, M=4, budget=15, seed=7)
    assert a.upper_bound == b.upper_bound
    assert np.array_equal(a.witness.cells, b.witness.cells)


def test_curve_non_increasing_with_exact_tail():
    curve = f_curve([0.0, 6.0, 9.0], M=4, budget=10, seed=11)
    ubs = [p.upper_bound for p in curve]
    assert ubs[0] == pytest.approx(CAP_BOX, abs=1e-9)
    assert all(ubs[i + 1] <= ubs[i] for i in range(len(ubs) - 1))
    assert ubs[-1] == 0.0


def test_curve_requires_ascending_grid():
    with pytest.raises(ValueError, match="ascending"):
        f_curve([1.0, 0.5], M=4)


def test_running_minimum_carries_witness():
    base = f_upper_bound(6.0, M=4, budget=15, seed=7)
    empty = GridShape.unit_box(4, cells=np.zeros((0, 3), np.int64))
    worse = FCurvePoint(lam=7.0, upper_bound=base.upper_bound + 1.0,
                        witness=empty, cap_A=0.0, cap_A_mesh_error=0.0,
                        mesh_error=0.0, M=4, evals=0, seed=0)
    fixed = _running_minima([base, worse])
    assert fixed[0] is base
    assert fixed[1].lam == 7.0
    assert fixed[1].upper_bound == base.upper_bound
    assert np.array_equal(fixed[1].witness.cells, base.witness.cells)


def test_rate_predictions_step_left_and_linearity():
    curve = f_curve([0.0, 6.0, 9.0], M=4, budget=10, seed=11)
    preds = rate_predictions(0.5, [0.1, 2.0, 3.0], curve)
    # d*lam = 0.3 falls back to the lam = 0 curve point
    assert preds[0].rate_upper == pytest.approx(0.5 / 3 * curve[0].upper_bound)
    # d*lam = 6.0 hits the grid point exactly
    assert preds[1].rate_upper == pytest.approx(0.5 / 3 * curve[1].upper_bound)
    # d*lam = 9.0 reaches the affordable-box regime
    assert preds[2].rate_upper == 0.0
    assert preds[0].reference_rate == pytest.approx(0.5 / 3 * curve[0].upper_bound)
    doubled = rate_predictions(1.0, [0.1, 2.0], curve)
    assert doubled[0].rate_upper == pytest.approx(2 * preds[0].rate_upper)


def test_rate_predictions_errors():
    with pytest.raises(ValueError, match="empty"):
        rate_predictions(1.0, [1.0], [])
    curve = f_curve([6.0, 9.0], M=4, budget=0, seed=0)
    with pytest.raises(ValueError, match="cover"):
        rate_predictions(1.0, [0.5], curve)
