"""Command-line interface: ``impdmp {synth,learn,generalize,simulate,export}``.

Exit codes: 0 success, 1 invalid input or I/O failure, 2 unparsable file,
3 numerical failure. Set ``IMPDMP_LOG`` (e.g. ``INFO``, ``DEBUG``) for more
log output on stderr.
"""
import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import dmp, synthetic, vic
from .errors import (DegenerateDataError, DegenerateVarianceError, DomainError, ImpDmpError,
                     IntegrationError, ParseError, ValidationError)
from .gmm import VARIANCE_SOURCES
from .pipeline import LearnConfig, SkillBundle, learn
from .preprocess import load_demonstrations, write_demonstration
from .stiffness import AXES, StiffnessBounds

logger = logging.getLogger("impdmp")

EXIT_OK, EXIT_VALIDATION, EXIT_PARSE, EXIT_NUMERICAL = 0, 1, 2, 3
ERROR_AXES = ("ex", "ey", "ez", "erx", "ery", "erz")


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


def _bounds_from_args(args, fallback):
    """Bounds from ``--k-*`` flags, each defaulting to ``fallback``."""
    k_min, k_max = fallback.k_min.copy(), fallback.k_max.copy()
    for value, target, sl in ((args.k_min_t, k_min, slice(0, 3)), (args.k_max_t, k_max, slice(0, 3)),
                              (args.k_min_r, k_min, slice(3, 6)), (args.k_max_r, k_max, slice(3, 6))):
        if value is not None:
            target[sl] = value
    return StiffnessBounds(k_min, k_max)


def _add_bound_flags(p, default=None):
    p.add_argument("--k-min-t", type=float, default=default and 200.0,
                   help="minimum translational stiffness (N/m)")
    p.add_argument("--k-max-t", type=float, default=default and 550.0,
                   help="maximum translational stiffness (N/m)")
    p.add_argument("--k-min-r", type=float, default=default and 10.0,
                   help="minimum rotational stiffness (N m/rad)")
    p.add_argument("--k-max-r", type=float, default=default and 20.0,
                   help="maximum rotational stiffness (N m/rad)")


def cmd_synth(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    demos = synthetic.pouring_demonstrations(args.n, seed=args.seed)
    for demo in demos:
        write_demonstration(demo, out / f"{demo.name}.csv")
    print(f"wrote {len(demos)} demonstrations to {out}")
    return EXIT_OK


def cmd_learn(args):
    config = LearnConfig(T=args.T, M=args.M, H=args.H, S=args.S, seed=args.seed,
                         k_min_t=args.k_min_t, k_max_t=args.k_max_t, k_min_r=args.k_min_r,
                         k_max_r=args.k_max_r, variance_source=args.variance_source,
                         joint=not args.separate, smoothing=args.smoothing, alpha=args.alpha,
                         alpha_x=args.alpha_x, tau=args.tau, regression=args.regression)
    demos = load_demonstrations(args.demos)
    bundle = learn(demos, config)
    bundle.save(args.out)
    s = bundle.summary
    print(f"learned skill from {s['n_demos']} demonstrations -> {args.out}")
    print(f"{'axis':>5} {'d_min':>12} {'d_max':>12} {'k_start':>10} {'k_end':>10} {'rmse_k':>10}")
    for i, name in enumerate(AXES):
        print(f"{name:>5} {s['d_min'][i]:12.6g} {s['d_max'][i]:12.6g} "
              f"{bundle.profile.k[0, i]:10.4g} {bundle.profile.k[-1, i]:10.4g} "
              f"{s['rmse_stiffness'][i]:10.4g}")
    print(f"position rmse {s['rmse_position']:.6g} m, orientation rmse "
          f"{s['rmse_orientation']:.6g} rad")
    if s["degenerate_axes"]:
        print("constant-stiffness axes: " + ", ".join(AXES[i] for i in s["degenerate_axes"]))
    return EXIT_OK


def _goals_from_args(args, model):
    goals = {}
    if args.goal_pos is not None:
        goals["p_g"] = np.array(args.goal_pos)
    if args.goal_quat is not None:
        goals["q_g"] = np.array(args.goal_quat)
    if args.goal_stiffness is not None and args.stiffness_scale is not None:
        raise ValidationError("use either --goal-stiffness or --stiffness-scale")
    if args.goal_stiffness is not None:
        goals["k_g"] = np.array(args.goal_stiffness)
    if args.stiffness_scale is not None:
        goals["k_g"] = model.kg * args.stiffness_scale
    if args.tau is not None:
        goals["tau"] = args.tau
    return goals


def cmd_generalize(args):
    bundle = SkillBundle.load(args.bundle)
    model = bundle.dmp
    bounds = _bounds_from_args(args, model.bounds or bundle.config.bounds)
    result = dmp.rollout(model, dt=args.dt, goals=_goals_from_args(args, model), bounds=bounds)
    result.to_csv(args.out)
    g = result.goals
    print(f"wrote {len(result.t)} samples to {args.out}")
    print(f"final position {np.round(result.positions[-1], 6).tolist()} "
          f"(goal {np.round(g['p_g'], 6).tolist()})")
    print(f"final stiffness {np.round(result.stiffness[-1], 3).tolist()}")
    return EXIT_OK


def _load_reference(path, dt):
    """Reference and bounds from a skill bundle or a rollout CSV."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return vic.Reference.from_rollout(dmp.RolloutResult.from_csv(path)), None
    bundle = SkillBundle.load(path)
    return vic.Reference.from_rollout(dmp.rollout(bundle.dmp, dt=dt)), bundle.dmp.bounds


def cmd_simulate(args):
    reference, bundle_bounds = _load_reference(args.input, args.dt)
    bounds = _bounds_from_args(args, bundle_bounds or StiffnessBounds.from_groups())
    disturbances = vic.load_disturbances(args.disturbances) if args.disturbances else []
    body = vic.SimBody(mass=args.mass, inertia=args.inertia)
    modes = vic.STIFFNESS_MODES if args.stiffness_mode == "all" else (args.stiffness_mode,)
    print(f"{'mode':>9} " + " ".join(f"{a:>11}" for a in ERROR_AXES))
    for mode in modes:
        k = vic.apply_stiffness_mode(reference.stiffness, mode, bounds, axes=args.axes)
        ref = vic.Reference(reference.t, reference.positions, reference.quaternions, k)
        trace = vic.simulate(ref, body=body, disturbances=disturbances, dt=args.dt,
                             gravity=args.gravity)
        if args.out:
            out = Path(args.out)
            if len(modes) > 1:
                out = out.with_name(f"{out.stem}_{mode}{out.suffix}")
            trace.to_csv(out)
        print(f"{mode:>9} " + " ".join(f"{e:11.4e}" for e in trace.mean_abs_error()))
    return EXIT_OK


def cmd_export(args):
    bundle = SkillBundle.load(args.bundle)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dist, profile, model = bundle.distribution, bundle.profile, bundle.dmp
    source = dist.variance_source
    std_names = tuple(f"std_{a}" for a in ("px", "py", "pz", "rx", "ry", "rz"))
    _write_rows(out / "trajectory.csv",
                ("t", "px", "py", "pz", "qw", "qx", "qy", "qz", "ux", "uy", "uz") + std_names,
                np.column_stack([dist.grid, dist.positions, dist.quaternions, dist.tangents,
                                 dist.stddev]))
    profile.to_csv(out / "stiffness.csv")
    x = model.canonical.phase(dist.grid - dist.grid[0])
    psi = dmp.basis_activation(model.basis, x)
    _write_rows(out / "basis.csv", ("t", "x") + tuple(f"psi{s}" for s in range(psi.shape[1])),
                np.column_stack([dist.grid, x, psi]))
    manifest = {"variance_source": source, "rows": len(dist.grid),
                "files": ["trajectory.csv", "stiffness.csv", "basis.csv"]}
    with open(out / "export.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"wrote 3 files with {len(dist.grid)} rows to {out} (stddev source: {source})")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="impdmp", description="Learn, generalize and simulate variable-impedance skills.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write synthetic pouring demonstrations")
    p.add_argument("out", help="output directory")
    p.add_argument("--n", type=int, default=8, help="number of demonstrations")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("learn", help="learn a skill bundle from demonstration CSVs")
    p.add_argument("demos", help="CSV file or directory of CSV files")
    p.add_argument("-o", "--out", default="skill.json", help="bundle path")
    p.add_argument("--T", type=float, default=11.0, help="aligned duration (s)")
    p.add_argument("--M", type=int, default=500, help="grid points")
    p.add_argument("--H", type=int, default=6, help="mixture components")
    p.add_argument("--S", type=int, default=30, help="DMP basis functions")
    p.add_argument("--seed", type=int, default=0)
    _add_bound_flags(p, default=True)
    p.add_argument("--variance-source", choices=VARIANCE_SOURCES, default="empirical")
    p.add_argument("--separate", action="store_true",
                   help="fit position and orientation mixtures separately")
    p.add_argument("--smoothing", type=int, default=11,
                   help="moving-average window on the spread, in samples (0 disables)")
    p.add_argument("--alpha", type=float, default=48.0, help="transformation-system gain")
    p.add_argument("--alpha-x", type=float, default=6.0, help="canonical-system gain")
    p.add_argument("--tau", type=float, default=None, help="temporal scaling (default: T)")
    p.add_argument("--regression", choices=sorted(dmp.REGRESSORS), default="ls")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("generalize", help="roll a skill out towards new goals")
    p.add_argument("bundle")
    p.add_argument("-o", "--out", default="rollout.csv")
    p.add_argument("--goal-pos", type=float, nargs=3, metavar=("X", "Y", "Z"))
    p.add_argument("--goal-quat", type=float, nargs=4, metavar=("W", "X", "Y", "Z"))
    p.add_argument("--goal-stiffness", type=float, nargs=6, metavar="K")
    p.add_argument("--stiffness-scale", type=float, help="multiply the stiffness goal")
    p.add_argument("--tau", type=float, help="temporal scaling")
    p.add_argument("--dt", type=float, default=1e-3)
    _add_bound_flags(p)
    p.set_defaults(func=cmd_generalize)

    p = sub.add_parser("simulate", help="track a skill with the impedance controller")
    p.add_argument("input", help="skill bundle (.json) or rollout CSV")
    p.add_argument("-o", "--out", help="trace CSV (suffixed per mode with --stiffness-mode all)")
    p.add_argument("--stiffness-mode", choices=vic.STIFFNESS_MODES + ("all",), default="variable")
    p.add_argument("--axes", choices=("all", "translational", "rotational"), default="all",
                   help="axes following the mode; others use the maximum")
    p.add_argument("--disturbances", help="JSON disturbance script")
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--mass", type=float, default=1.0)
    p.add_argument("--inertia", type=float, default=0.01)
    p.add_argument("--gravity", action="store_true")
    _add_bound_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("export", help="write plot data for a skill bundle")
    p.add_argument("bundle")
    p.add_argument("-o", "--out", default="export", help="output directory")
    p.set_defaults(func=cmd_export)
    return parser


def _configure_logging():
    level = os.environ.get("IMPDMP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.captureWarnings(True)


def main(argv=None):
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (IntegrationError, DegenerateDataError, DegenerateVarianceError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, DomainError, ImpDmpError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
