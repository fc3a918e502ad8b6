"""Box classifier over a sampled trace, census, and the local-time functional.

Each box of the sparse mesoscopic partition is labeled from two witnesses:

* the worst escape probability from the box's inner boundary past the trace
  clipped to the box (a box is well covered when even the best-placed walker
  is likely caught), and
* the trace's local time paired with the box's normalized equilibrium
  measure (a box is lightly touched when that average is small).

The escape probability is computed with the self-consistent hitting solver,
whose ring data is exact, so the padded solve window is a conditioning and
speed knob rather than a truncation: the returned escape probabilities carry
no window bias beyond the solver's fixpoint tolerance.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .config import DEFAULT
from .green import default_table
from .lattice import LatticeBox, mesoscopic_partition, mesoscopic_scale
from .potential import EquilibriumMeasure, equilibrium_measure, hitting_field

TYPE_I = "type-I-good"
TYPE_II = "type-II-good"
BAD = "bad"


def label_from_witnesses(max_escape, averaged_local_time, delta, u):
    """Deterministic labeling rule; checked in fixed order so a box
    satisfying both criteria is always Type-I."""
    if max_escape < delta:
        return TYPE_I
    # an untouched box is lightly touched by convention, also at u = 0
    if averaged_local_time < delta * u or averaged_local_time == 0.0:
        return TYPE_II
    return BAD


@dataclass(frozen=True)
class BoxClassification:
    box: LatticeBox
    label: str
    max_escape_probability: float
    averaged_local_time: float


@dataclass
class CoarseGrainReport:
    N: int
    L: int
    K: int
    delta: float
    rho: float
    u: float
    boxes: list
    bad_count: int
    event_A: bool

    @property
    def n_boxes(self):
        return len(self.boxes)

    @property
    def bad_fraction(self):
        return self.bad_count / max(len(self.boxes), 1)

    def counts(self):
        out = {TYPE_I: 0, TYPE_II: 0, BAD: 0}
        for c in self.boxes:
            out[c.label] += 1
        return out

    def type_ii_boxes(self):
        return [c.box for c in self.boxes if c.label == TYPE_II]

    def to_text(self):
        lines = [f"N {self.N} L {self.L} K {self.K} delta {self.delta!r} "
                 f"rho {self.rho!r} u {self.u!r} bad {self.bad_count} "
                 f"event_A {int(self.event_A)}"]
        for c in self.boxes:
            cx, cy, cz = c.box.center
            lines.append(f"{cx} {cy} {cz} {c.label} "
                         f"{c.max_escape_probability!r} "
                         f"{c.averaged_local_time!r}")
        return "\n".join(lines) + "\n"


_BOX_MEASURES = {}


def _centered_box_measure(radius, gt, config):
    """Normalized equilibrium measure of B(0, radius); cached since every
    partition box is a translate."""
    key = radius
    cached = _BOX_MEASURES.get(key) if config is DEFAULT else None
    if cached is None:
        em = equilibrium_measure(LatticeBox((0, 0, 0), radius),
                                 gt=gt, config=config)
        cached = replace(em, mass=em.normalized(), total=1.0)
        if config is DEFAULT:
            _BOX_MEASURES[key] = cached
    return cached


def _trace_in_box(s, box):
    """Occupied absolute points of the sample inside the box."""
    wc = np.asarray(s.window.center)
    lo = np.asarray(box.center) - box.radius - (wc - s.window.radius)
    side = 2 * box.radius + 1
    grid = s.local.reshape((s.side,) * 3)
    sub = grid[lo[0]:lo[0] + side, lo[1]:lo[1] + side, lo[2]:lo[2] + side]
    rel = np.argwhere(sub > 0.0)
    return rel + (np.asarray(box.center) - box.radius)


def classify_box(s, box, delta, gt=None, config=DEFAULT):
    """Label one box of the sample window; see the module docstring."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    wc = np.asarray(s.window.center)
    bc = np.asarray(box.center)
    if np.abs(bc - wc).max() + box.radius > s.window.radius:
        raise ValueError("box escapes the sample window")
    if gt is None:
        gt = default_table(3)

    trace = _trace_in_box(s, box)
    if len(trace) == 0:
        max_escape = 1.0
    else:
        pad = max(box.radius + 2,
                  int(math.ceil(config.classify_pad_factor * box.radius)))
        window = LatticeBox(tuple(int(c) for c in box.center), pad)
        field = hitting_field(trace, window, gt=gt, config=config)
        side = 2 * pad + 1
        rel = box.boundary_points() - (bc - pad)
        flat = rel[:, 0] * side * side + rel[:, 1] * side + rel[:, 2]
        max_escape = float((1.0 - field.value[flat]).max())

    em0 = _centered_box_measure(box.radius, gt, config)
    em = replace(em0, support=em0.support + bc)
    averaged = s.functional(em)
    return BoxClassification(box=box,
                             label=label_from_witnesses(max_escape, averaged,
                                                        delta, s.u),
                             max_escape_probability=max_escape,
                             averaged_local_time=averaged)


def census(s, delta, rho, K=None, L=None, gt=None, config=DEFAULT):
    """Classify every box of the window's sparse partition and evaluate the
    few-bad-boxes event: bad count <= rho * (N/L)^d."""
    if K is None:
        K = config.partition_K
    N = s.window.radius
    boxes, L = mesoscopic_partition(N, K=K, d=3, L=L,
                                    L_min=config.partition_L_min,
                                    strict=config.strict_scale_regime)
    wc = tuple(int(c) for c in s.window.center)
    out = []
    bad = 0
    for b in boxes:
        bb = b.translate(wc) if any(wc) else b
        c = classify_box(s, bb, delta, gt=gt, config=config)
        out.append(c)
        bad += c.label == BAD
    event_a = bad <= rho * (N / L) ** 3
    return CoarseGrainReport(N=N, L=L, K=K, delta=float(delta),
                             rho=float(rho), u=s.u, boxes=out,
                             bad_count=bad, event_A=event_a)


@dataclass
class HFunctionalReport:
    value: float
    c2_empty: bool
    capacity_c2: float
    delta_obs: float
    bound: float


def h_functional(s, report, gt=None, config=DEFAULT):
    """Local time paired with the equilibrium measure of the union of
    lightly-touched boxes.

    Also verifies, as a hard invariant, the deterministic chain bounding the
    value: restricted to one box b, the union measure is within (1 + d_obs)
    of mass_b times the single-box measure, and each box's averaged local
    time is below delta * u by its label, so

        value <= (1 + d_obs) * delta * u * capacity(C2).
    """
    if gt is None:
        gt = default_table(3)
    if report.u != s.u:
        raise ValueError("report was built from a different sample")
    c2 = report.type_ii_boxes()
    if not c2:
        return HFunctionalReport(0.0, True, 0.0, 0.0, 0.0)
    all_pts = np.concatenate([b.points() for b in c2], axis=0)
    em = equilibrium_measure(all_pts, gt=gt, config=config)
    value = s.functional(em)

    # worst pointwise deviation of the restricted, renormalized union
    # measure from the (translated) single-box measure
    single = _centered_box_measure(c2[0].radius, gt, config)
    delta_obs = 0.0
    bound = 0.0
    for b, cls in ((c.box, c) for c in report.boxes if c.label == TYPE_II):
        sel = b.to_set().contains_many(em.support)
        mass_b = em.mass[sel]
        if len(mass_b) != len(single.mass):
            raise RuntimeError("support mismatch between union and box")
        tot_b = mass_b.sum()
        dev = float(np.abs(mass_b / tot_b / single.mass - 1.0).max())
        delta_obs = max(delta_obs, dev)
        # per-box contribution to the chain: (1 + dev) tot_b <L, e-bar_b>
        bound += (1.0 + dev) * tot_b * cls.averaged_local_time
    cap_bound = (1.0 + delta_obs) * report.delta * s.u * em.total
    if value > bound * (1 + 1e-9) + 1e-12:
        raise RuntimeError("local-time chain bound violated; "
                           "equilibrium or sampling solver is inconsistent")
    return HFunctionalReport(value=float(value), c2_empty=False,
                             capacity_c2=float(em.total),
                             delta_obs=float(delta_obs),
                             bound=float(cap_bound))
