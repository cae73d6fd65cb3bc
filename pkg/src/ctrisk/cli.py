"""Command-line entry point.

    ctrisk check    --model m.json --out dir
    ctrisk solve    --model m.json --steps 2000 --out dir
    ctrisk simulate --model m.json --steps 2000 --paths 100000 --out dir
    ctrisk converge --model m.json --levels 5,10,20,40 --probes 0 --out dir
    ctrisk compare  --model m.json --paths 100000 --out dir

Exit codes: 0 success, 1 validation failure, 2 certificate FAIL,
3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .convergence import levels_for_windows, run_truncation_ladder
from .errors import CertificateError, NumericalError, ValidationError
from .lyapunov import check_certificate, derive_example_weights, export_certificate, import_certificate
from .model import load_tabular, mm_params_from_document
from .output import (write_check_report, write_estimate_csv, write_ladder_csv,
                     write_manifest, write_pairs_csv, write_policy_csv,
                     write_value_csv)
from .simulator import compare_policies, estimate_value
from .solver import TimeGrid, constant_policy, solve

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CERT_FAIL = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

DEFAULT_SEED = 112358  # fixed so runs are reproducible without flags


def _int_list(text):
    return [int(v) for v in text.split(",") if v != ""]


def _float_list(text):
    return [float(v) for v in text.split(",") if v != ""]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ctrisk",
        description="Risk-sensitive CTMDP solver and validation toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("check", "verify the drift conditions and write a certificate"),
        ("solve", "solve the optimality equation; write value and policy tables"),
        ("simulate", "solve, then Monte Carlo the solved policy"),
        ("converge", "run the state-space truncation ladder"),
        ("compare", "rank the solved policy against constant competitors"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--model", required=True, help="model document (JSON)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--steps", type=int, default=1000,
                       help="time-grid steps (default 1000)")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                       help=f"master seed (default {DEFAULT_SEED})")
        p.add_argument("--cert", default=None,
                       help="certificate JSON (otherwise derived for mm_infinity)")
        p.add_argument("--no-timestamp", action="store_true",
                       help="omit the timestamp from the run manifest")
        if name in ("simulate", "compare"):
            p.add_argument("--paths", type=int, default=10000,
                           help="Monte Carlo paths (default 10000)")
            p.add_argument("--i0", type=int, default=0, help="initial state")
        if name == "simulate":
            p.add_argument("--constant", type=float, default=None,
                           help="simulate this constant action instead of the solved policy")
        if name == "compare":
            p.add_argument("--constants", type=_float_list, default=None,
                           help="comma-separated competitor actions "
                                "(default: grid min, midpoint, max)")
        if name == "converge":
            p.add_argument("--levels", type=_int_list, default=[5, 10, 20, 40],
                           help="comma-separated window sizes (default 5,10,20,40)")
            p.add_argument("--probes", type=_int_list, default=None,
                           help="comma-separated probe states")
    return parser


def _load(args):
    with open(args.model) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{args.model}: not valid JSON ({exc})") from exc
    model = load_tabular(doc)
    params = mm_params_from_document(doc)
    return model, params


def _certificate(args, model, params):
    if args.cert is not None:
        cert = import_certificate(args.cert)
    elif params is not None:
        cert = derive_example_weights(params)
    else:
        raise ValidationError(
            "no certificate: pass --cert for tabular models "
            "(only mm_infinity has derived weights)")
    check_certificate(model, cert)
    return cert


def _echo(args):
    skip = {"command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _run(args):
    os.makedirs(args.out, exist_ok=True)
    model, params = _load(args)
    model_hash = model.model_hash()
    out = lambda name: os.path.join(args.out, name)
    manifest = lambda: write_manifest(out("run_manifest.json"), _echo(args),
                                      model_hash, timestamp=not args.no_timestamp)
    grid = TimeGrid(T=model.horizon_T, steps=args.steps)

    if args.command == "check":
        cert = _certificate(args, model, params)
        write_check_report(out("check_report.csv"), cert.checks, model_hash)
        export_certificate(cert, out("certificate.json"))
        manifest()
        for name, c in cert.checks.items():
            print(f"{name}: {'PASS' if c.passed else 'FAIL'} (margin {c.margin:.6g})")
        return EXIT_OK if cert.all_pass() else EXIT_CERT_FAIL

    if args.command == "solve":
        vf, policy = solve(model, grid)
        write_value_csv(out("value.csv"), vf, model_hash)
        write_policy_csv(out("policy.csv"), policy, model_hash)
        manifest()
        print(f"solved {model.n_states} states x {args.steps} steps; "
              f"psi(0,0) = {vf.psi[0, 0]:.9g}")
        return EXIT_OK

    if args.command == "simulate":
        if args.constant is not None:
            policy = constant_policy(model, grid, args.constant)
            policy_id = f"const_{args.constant:g}"
        else:
            vf, policy = solve(model, grid)
            write_value_csv(out("value.csv"), vf, model_hash)
            write_policy_csv(out("policy.csv"), policy, model_hash)
            policy_id = "optimal"
        est = estimate_value(model, policy, args.i0, args.paths, args.seed)
        write_estimate_csv(out("estimate.csv"),
                           [(policy_id, args.i0, est)], model_hash, grid)
        manifest()
        print(f"{policy_id}: log estimate {est.log_mean:.9g} "
              f"(+/- {est.rel_std_error:.3g} rel), {est.n_paths} paths")
        return EXIT_OK

    if args.command == "converge":
        cert = _certificate(args, model, params)
        if not cert.all_pass():
            write_check_report(out("check_report.csv"), cert.checks, model_hash)
            return EXIT_CERT_FAIL
        log_levels = levels_for_windows(cert.log_V, args.levels)
        report = run_truncation_ladder(model, cert, log_levels, grid,
                                       probes=args.probes)
        write_ladder_csv(out("ladder.csv"), report, model_hash, grid)
        manifest()
        for probe in report.probes:
            diffs = report.successive_diffs(probe)
            tail = diffs[-1] if diffs else float("nan")
            print(f"probe {probe}: last diff {tail:.3g} over "
                  f"windows {report.active_counts}")
        return EXIT_OK

    if args.command == "compare":
        vf, policy = solve(model, grid)
        grid0 = model.actions(0)
        consts = args.constants
        if consts is None:
            consts = [float(grid0[0]), float(grid0[len(grid0) // 2]),
                      float(grid0[-1])]
        policies = [policy] + [constant_policy(model, grid, a) for a in consts]
        labels = ["optimal"] + [f"const_{a:g}" for a in consts]
        comparison = compare_policies(model, policies, args.i0, args.paths,
                                      args.seed, labels=labels)
        write_estimate_csv(
            out("compare.csv"),
            [(lab, args.i0, est)
             for lab, est in zip(comparison.labels, comparison.estimates)],
            model_hash, grid)
        write_pairs_csv(out("compare_pairs.csv"), comparison, model_hash)
        manifest()
        print("ranking:", " <= ".join(comparison.ranking()))
        return EXIT_OK

    raise ValidationError(f"unknown command {args.command}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except (ValidationError,) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except CertificateError as exc:
        print(f"certificate error: {exc}", file=sys.stderr)
        return EXIT_CERT_FAIL
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
