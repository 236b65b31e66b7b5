"""Command-line front end: ``orthoform run|sweep|verify|predict``.

Exit codes: 0 success, 1 negative verdict (not converged, not strongly
congruent), 2 usage or input error, 3 the simulation diverged.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .analysis import monte_carlo, predicted_min_rate
from .control import linearization_diagonal
from .errors import DivergenceError, FormationError
from .framework import Framework, are_equivalent, is_strongly_congruent, volume_vector
from .projections import desired_projection_vector, lambda_layout, projection_vector
from .scenario import framework_dict, load_framework, load_scenario
from .sim import run, summary_dict, write_trajectory_csv

EXIT_OK, EXIT_NEGATIVE, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3


def _g(x):
    return format(float(x), ".17g")


def _vec(v):
    return "[" + ", ".join(_g(x) for x in np.ravel(v)) + "]"


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _load(args):
    scenario = load_scenario(args.scenario)
    changes = {}
    if getattr(args, "dt", None) is not None:
        changes["dt"] = args.dt
    if getattr(args, "tmax", None) is not None:
        changes["t_max"] = args.tmax
    if getattr(args, "tol", None) is not None:
        changes["convergence_tol"] = args.tol
    return scenario.with_sim(**changes) if changes else scenario


def cmd_run(args):
    scenario = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        traj = run(scenario)
    except DivergenceError as exc:
        traj = exc.diagnostics["trajectory"]
        _write_json(out / "summary.json", summary_dict(traj))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    write_trajectory_csv(traj, out / "trajectory.csv")
    summary = summary_dict(traj)
    _write_json(out / "summary.json", summary)
    for key in ("reason", "final_error_inf", "time_to_tol", "steps", "normal_drift_max"):
        val = summary[key]
        print(f"{key}: {_g(val) if isinstance(val, float) else val}")
    if args.export_framework:
        _write_json(out / "final_framework.json", framework_dict(Framework(scenario.desired.graph, traj.final_positions)))
        _write_json(out / "desired_framework.json", framework_dict(scenario.desired.framework()))
    if args.plot:
        from .plotting import plot_error_decay, plot_paths

        plot_error_decay(traj, out / "error_decay.png", scenario.sim.convergence_tol)
        plot_paths(traj, out / "paths.png", scenario.desired)
    return EXIT_OK if traj.converged else EXIT_NEGATIVE


def cmd_sweep(args):
    scenario = _load(args)
    report, elapsed = monte_carlo(scenario, args.runs, args.seed)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "aggregate.json", report)
    for key in ("n_runs", "fraction_converged", "fraction_strongly_congruent", "worst_time_to_tol", "max_normal_drift"):
        val = report[key]
        print(f"{key}: {_g(val) if isinstance(val, float) else val}")
    for kind, row in report["by_class"].items():
        print(f"class {kind}: {row['converged']}/{row['runs']} converged, {row['strongly_congruent']} strongly congruent")
    print(f"wall_time: {elapsed:.2f}", file=sys.stderr)
    ok = report["fraction_converged"] == 1.0 and report["all_strongly_congruent"]
    return EXIT_OK if ok else EXIT_NEGATIVE


def cmd_verify(args):
    fa, fb = load_framework(args.framework_a), load_framework(args.framework_b)
    strong = is_strongly_congruent(fa, fb, args.tol)
    equivalent = are_equivalent(fa, fb, args.tol)
    congruent = bool(np.allclose(_all_distances(fa), _all_distances(fb), atol=args.tol, rtol=0))
    cls = "strongly congruent" if strong else ("congruent (mirror image)" if congruent else "not congruent")
    print(f"equivalent: {equivalent}")
    print(f"congruence: {cls}")
    print(f"volume_vector_a: {_vec(volume_vector(fa))}")
    print(f"volume_vector_b: {_vec(volume_vector(fb))}")
    print(f"lambda_a: {_vec(projection_vector(fa))}")
    print(f"lambda_b: {_vec(projection_vector(fb))}")
    print(f"verdict: {'strongly congruent' if strong else 'not strongly congruent'}")
    return EXIT_OK if strong else EXIT_NEGATIVE


def _all_distances(fw):
    p = np.asarray(fw.positions)
    return np.sqrt(((p[:, None, :] - p[None, :, :]) ** 2).sum(-1))


def cmd_predict(args):
    scenario = _load(args)
    desired, gains = scenario.desired, scenario.gains
    lam_star = desired_projection_vector(desired)
    diag = linearization_diagonal(desired, gains)
    for (agent, name), value in zip(lambda_layout(desired.graph), lam_star):
        print(f"lambda_star {name}_{agent}: {_g(value)}")
    print(f"linearization_diagonal: {_vec(diag)}")
    print(f"predicted_min_rate: {_g(predicted_min_rate(desired, gains))}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="orthoform", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    def overrides(p):
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--dt", type=float, help="override the time step")
        p.add_argument("--tmax", type=float, help="override the horizon")
        p.add_argument("--tol", type=float, help="override the convergence tolerance")

    p = sub.add_parser("run", help="simulate one scenario")
    overrides(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--plot", action="store_true", help="also write error_decay.png and paths.png")
    p.add_argument("--export-framework", action="store_true", help="also write final and desired framework files")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="Monte-Carlo sweep over initial-condition classes")
    overrides(p)
    p.add_argument("--runs", type=int, default=100, help="number of initial conditions (default 100)")
    p.add_argument("--seed", type=int, default=0, help="sweep seed (default 0)")
    p.add_argument("--out", help="directory for aggregate.json")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="compare two framework files")
    p.add_argument("framework_a", help="framework JSON file")
    p.add_argument("framework_b", help="framework JSON file")
    p.add_argument("--tol", type=float, default=1e-4, help="distance and volume tolerance (default 1e-4)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("predict", help="print desired projections and predicted decay rates")
    overrides(p)
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (FormationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
