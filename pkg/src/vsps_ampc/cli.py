"""Command-line entry point: ``vsps-ampc {run,compare,tune,validate}``.

Exit codes: 0 on success, 2 when a config (or a set of results) fails
validation, 3 when a simulation or tuning run aborts.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, MismatchedScenarios, NoFeasiblePoint, SpeedBoundViolation, VspsError

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_ABORT = 3


def _report_config_error(exc: ConfigError):
    print(f"error: {exc}", file=sys.stderr)
    for where, msg in exc.issues:
        print(f"  {where}: {msg}", file=sys.stderr)


def _cmd_validate(args):
    from .scenario import load_config

    cfg = load_config(args.config)
    print(f"ok  mode={cfg.mode}  units={len(cfg.units)}  config={cfg.config_hash[:16]}  "
          f"scenario={cfg.scenario_hash[:16]}")
    return EXIT_OK


def _cmd_run(args):
    from .scenario import load_config, run_scenario

    cfg = load_config(args.config)
    res = run_scenario(cfg)
    stem = args.stem or cfg.mode
    csv_path, meta_path = res.write(args.out, stem)
    m = res.metrics
    print(f"{cfg.mode}: nadir {m['nadir']:.6f} pu at {m['t_nadir']:.3f} s, ROCOF {m['rocof_max']:.6f} pu/s, "
          f"{m['runtime_s']:.2f} s wall")
    print(f"wrote {csv_path} and {meta_path}")
    return EXIT_OK


def _meta_path(p):
    p = Path(p)
    if p.suffix == ".csv":
        p = p.with_suffix(".metrics.json")
    return p


def _cmd_compare(args):
    from .scenario import ScenarioResult, compare_report, write_report_csv

    try:
        results = [ScenarioResult.read(_meta_path(p)) for p in args.results]
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: cannot read results: {exc}", file=sys.stderr)
        return EXIT_INVALID
    report = compare_report(results)
    print(report["text"])
    for name, v in report["pairs"].items():
        print(f"{name}: {v:.2f} %")
    if args.csv:
        write_report_csv(report, args.csv)
    return EXIT_OK


def _cmd_tune(args):
    from .scenario import load_config

    cfg = load_config(args.config)
    if args.target == "vic":
        from .baselines import tune_vic

        res = tune_vic(cfg, bounds=((0.0, args.k_in_max), (0.0, args.k_dr_max)), eps=args.eps)
        print(json.dumps({"K_in": float(res.K[0]), "K_dr": float(res.K[1]), "abs_nadir": res.f,
                          "evaluations": res.n_evals}, indent=2))
        return EXIT_OK
    from .tuner import default_search_config, tune_ampc

    search = default_search_config(len(cfg.units), eps=args.eps)
    res = tune_ampc(cfg, search, objective=args.objective)
    print(json.dumps({"N": int(res.K[0]), "N_c": int(res.K[1]), "p_PCC": float(res.K[2]),
                      "p": [float(v) for v in res.K[3:]], "objective": res.f, "evaluations": res.n_evals},
                     indent=2))
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="vsps-ampc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario and write CSV plus metrics")
    p.add_argument("config")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--stem", default=None, help="file name stem (default: the controller mode)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="nadir table of results from one scenario")
    p.add_argument("results", nargs="+", help="result .metrics.json (or .csv) files")
    p.add_argument("--csv", default=None, help="also write the table as CSV")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("tune", help="pattern-search controller parameters")
    p.add_argument("config")
    p.add_argument("--target", choices=("ampc", "vic"), default="ampc")
    p.add_argument("--objective", choices=("jmin", "closed_loop"), default="jmin",
                   help="AMPC objective: single-solve cost or closed-loop |nadir|")
    p.add_argument("--eps", type=float, default=None, help="mesh convergence threshold")
    p.add_argument("--k-in-max", type=float, default=20.0)
    p.add_argument("--k-dr-max", type=float, default=40.0)
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("validate", help="check a config against the schema")
    p.add_argument("config")
    p.set_defaults(func=_cmd_validate)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "eps", None) is None and args.command == "tune":
        args.eps = 0.25 if args.target == "vic" else 1e-3
    try:
        return args.func(args)
    except ConfigError as exc:
        _report_config_error(exc)
        return EXIT_INVALID
    except MismatchedScenarios as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SpeedBoundViolation as exc:
        where = f" at t = {exc.time:.4f} s" if exc.time is not None else ""
        print(f"simulation aborted{where}: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except NoFeasiblePoint as exc:
        print(f"tuning aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except VspsError as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
