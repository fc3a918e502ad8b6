"""Command-line front end.

Subcommands export plot-ready data (jsonl or csv) or run the verification
suite.  Exit codes: 0 success, 1 a hard verification check failed, 2 usage
or configuration error.
"""

import argparse
import csv
import json
import sys

import numpy as np

from .coarse import census
from .config import DEFAULT
from .continuum import discrete_continuum_compare
from .fcurve import f_curve
from .harness import ConfigError, ExperimentConfig, run_suite, write_records
from .interlace import sample
from .lattice import GridShape, LatticeBox
from .potential import equilibrium_measure


def _emit_rows(rows, out, fmt):
    """Write dict rows as jsonl or csv to a path or stdout."""
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        if fmt == "jsonl":
            for row in rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        else:
            w = csv.writer(fh)
            cols = list(rows[0]) if rows else []
            w.writerow(cols)
            for row in rows:
                w.writerow([row[c] for c in cols])
    finally:
        if out:
            fh.close()


def _emit_text(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_config(args):
    cfg = (ExperimentConfig.from_file(args.config) if args.config
           else ExperimentConfig())
    if args.seed is not None:
        cfg.seed = args.seed
    if args.samples is not None:
        cfg.samples = args.samples
    return cfg.validate()


def cmd_capacity(args):
    if args.points:
        pts = np.loadtxt(args.points, dtype=np.int64).reshape(-1, 3)
        target = pts
    else:
        target = LatticeBox((0, 0, 0), args.box)
    em = equilibrium_measure(target, config=DEFAULT)
    rows = [{"x": int(p[0]), "y": int(p[1]), "z": int(p[2]),
             "mass": float(m)}
            for p, m in zip(em.support, em.mass)]
    rows.insert(0, {"x": "capacity", "y": "", "z": "", "mass": float(em.total)})
    _emit_rows(rows, args.out, args.format)
    return 0


def cmd_simulate(args):
    cfg = _load_config(args)
    window = LatticeBox((0, 0, 0), args.box if args.box is not None else cfg.N)
    s = sample(args.u if args.u is not None else cfg.u, window, cfg.seed,
               config=cfg.run_config())
    _emit_text(s.to_text(), args.out)
    return 0


def cmd_classify(args):
    cfg = _load_config(args)
    window = LatticeBox((0, 0, 0), args.box if args.box is not None else cfg.N)
    s = sample(args.u if args.u is not None else cfg.u, window, cfg.seed,
               config=cfg.run_config())
    report = census(s, cfg.delta, cfg.rho, K=cfg.K, config=cfg.run_config())
    _emit_text(report.to_text(), args.out)
    return 0


def cmd_fcurve(args):
    cfg = _load_config(args)
    grid = [float(x) for x in args.grid.split(",")]
    curve = f_curve(grid, M=args.resolution, budget=args.budget,
                    seed=cfg.seed)
    rows = [{"lam": p.lam, "upper_bound": p.upper_bound, "cap_A": p.cap_A,
             "mesh_error": p.mesh_error, "witness_cells":
             0 if p.witness.is_empty() else len(p.witness.cells),
             "M": p.M} for p in curve]
    _emit_rows(rows, args.out, args.format)
    return 0


def cmd_verify(args):
    cfg = _load_config(args)
    code, records = run_suite(cfg, out=args.out, fmt=args.format)
    for r in records:
        status = "pass" if r.passed else "FAIL"
        print(f"{status} {r.name}: estimate={r.estimate:.6g} se={r.se:.3g} "
              f"n={r.count} [{r.wall_clock:.2f}s]")
    return code


def cmd_compare_caps(args):
    sizes = [int(x) for x in args.sizes.split(",")]
    report = discrete_continuum_compare(GridShape.unit_box(1), sizes,
                                        config=DEFAULT)
    rows = [{"N": int(n), "ratio": float(r), "deficiency": float(abs(1 - r))}
            for n, r in zip(report.N_list, report.ratios)]
    _emit_rows(rows, args.out, args.format)
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="intercap",
                                 description="capacity and trajectory-soup "
                                             "toolkit")
    ap.add_argument("--dim", type=int, default=3,
                    help="ambient dimension (only 3 is supported)")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, fmt=True):
        p.add_argument("--config", help="flat key=value experiment file")
        p.add_argument("--seed", type=int)
        p.add_argument("--samples", type=int)
        p.add_argument("--out", help="output path (default stdout)")
        if fmt:
            p.add_argument("--format", choices=("jsonl", "csv"),
                           default="jsonl")

    p = sub.add_parser("capacity", help="equilibrium measure and capacity "
                                        "of a lattice set")
    p.add_argument("--box", type=int, default=2, help="box radius")
    p.add_argument("--points", help="text file of x y z rows")
    common(p)
    p.set_defaults(fn=cmd_capacity)

    p = sub.add_parser("simulate", help="draw one sample and export it")
    p.add_argument("--u", type=float)
    p.add_argument("--box", type=int)
    common(p, fmt=False)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("classify", help="coarse-grain census of one sample")
    p.add_argument("--u", type=float)
    p.add_argument("--box", type=int)
    common(p, fmt=False)
    p.set_defaults(fn=cmd_classify)

    p = sub.add_parser("fcurve", help="constrained-capacity upper bounds")
    p.add_argument("--grid", default="0.0,4.0,8.0,9.0",
                   help="ascending comma-separated constraint levels")
    p.add_argument("--resolution", type=int, default=4)
    p.add_argument("--budget", type=int, default=40)
    common(p)
    p.set_defaults(fn=cmd_fcurve)

    p = sub.add_parser("verify", help="run the verification suite")
    common(p)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("compare-caps", help="discrete vs continuum capacity "
                                            "scaling")
    p.add_argument("--sizes", default="6,10,14",
                   help="comma-separated box sizes")
    common(p)
    p.set_defaults(fn=cmd_compare_caps)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.dim != 3:
        print("error: only --dim 3 is supported", file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except (ConfigError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
