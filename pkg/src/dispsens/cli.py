"""Command-line interface.

Subcommands: decompose, sens-coef, sens-r2, rv, simulate, verify.
Structured results are JSON, grids and curves are CSV, and every run
writes a manifest with the resolved configuration, seed, and version so
outputs can be reproduced byte for byte.

Exit codes: 0 success, 1 verification-check failure, 2 usage/io error,
3 numerical failure. Failures emit one machine-parseable JSON line on
stderr: {"kind": ..., "message": ...}.
"""

import argparse
import json
import sys
from importlib.metadata import PackageNotFoundError, version as pkg_version
from pathlib import Path

from . import decomp, sens_coef, sens_r2, simulate, verify
from .dataset import Schema, load_csv, schema_for, validate, write_csv
from .errors import (BootstrapError, CollinearityError, DependencyError,
                     DispsensError, DomainError, MismatchError,
                     NameLookupError, ParseError, PositivityError, SchemaError,
                     SearchError, ValidationError)

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3

_USAGE_ERRORS = (SchemaError, ParseError, ValidationError, FileNotFoundError,
                 IsADirectoryError, PermissionError, json.JSONDecodeError)
_NUMERIC_ERRORS = (CollinearityError, PositivityError, DomainError,
                   BootstrapError, SearchError, MismatchError,
                   DependencyError, NameLookupError)


def _version():
    try:
        return pkg_version("dispsens")
    except PackageNotFoundError:
        return "unknown"


def _error_record(kind, exc):
    print(json.dumps({"kind": kind, "message": str(exc)}), file=sys.stderr)


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _write_manifest(args, out_dir, extra=None):
    config = {k: v for k, v in vars(args).items() if k != "func"}
    payload = {
        "command": args.command,
        "version": _version(),
        "config": config,
        **(extra or {}),
    }
    _write_json(Path(out_dir) / "manifest.json", payload)


def _schema_from_args(args):
    if args.schema:
        return Schema.from_json(args.schema)
    required = [args.group, args.ref, args.mediator, args.outcome]
    if any(v is None for v in required):
        raise SchemaError(
            "either --schema or all of --group/--ref/--mediator/--outcome are required"
        )

    def split(v):
        return tuple(s for s in (v or "").split(",") if s)

    return Schema(
        group_column=args.group,
        reference_level=args.ref,
        mediator_column=args.mediator,
        outcome_column=args.outcome,
        confounder_columns=split(args.confounders),
        covariate_columns=split(args.covariates),
        unobserved_column=args.unobserved,
    )


def _add_data_args(p):
    p.add_argument("--data", required=True, help="input CSV (RFC 4180, header row)")
    p.add_argument("--schema", help="JSON schema file mapping columns to roles")
    p.add_argument("--group", help="group (exposure) column name")
    p.add_argument("--ref", help="reference group level")
    p.add_argument("--mediator", help="mediator column name")
    p.add_argument("--outcome", help="outcome column name")
    p.add_argument("--confounders", help="comma-separated intermediate confounder columns")
    p.add_argument("--covariates", help="comma-separated baseline covariate columns")
    p.add_argument("--unobserved", help="held-out confounder column (oracle runs only)")
    p.add_argument("--interaction", action="store_true",
                   help="include group-by-mediator terms in the outcome model")
    p.add_argument("--B", type=int, default=decomp.DEFAULT_BOOTSTRAP_REPS,
                   help="bootstrap replicates (default %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    p.add_argument("--threads", type=int, default=None,
                   help="bootstrap threads (default: DISPSENS_THREADS or 1)")
    p.add_argument("--out-dir", default=".", help="output directory")


def _load_analysis(args, ci_method="normal", ci_level=0.95):
    schema = _schema_from_args(args)
    data = load_csv(args.data, schema)
    findings = validate(data)
    for f in findings:
        print(f"note [{f.kind}] {f.message}", file=sys.stderr)
    analysis = decomp.analyze(
        data,
        interaction=args.interaction,
        B=args.B,
        seed=args.seed,
        ci_level=ci_level,
        ci_method=ci_method,
        threads=args.threads,
    )
    return analysis


def _groups_for(analysis, requested):
    groups = analysis.system.comparison_groups
    if requested is None:
        return groups
    if requested not in groups:
        raise NameLookupError(f"unknown comparison group {requested!r}; have {list(groups)}")
    return (requested,)


def cmd_decompose(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    analysis = _load_analysis(args, ci_method=args.ci, ci_level=args.ci_level)
    report = analysis.result.to_dict()
    report["n_dropped_rows"] = analysis.data.n_dropped
    _write_json(out_dir / "decomposition.json", report)
    _write_manifest(args, out_dir, {"n": analysis.data.n})
    for g in analysis.system.comparison_groups:
        r = analysis.result[g]
        print(f"{g}: tau={r.tau:.4f} delta={r.delta:.4f} zeta={r.zeta:.4f} "
              f"({r.pct_reduction:.1f}% reduction)")
    return EXIT_OK


def cmd_sens_coef(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def parse_range(text):
        lo, _, hi = text.partition(":")
        return float(lo), float(hi)

    analysis = _load_analysis(args)
    summary = {}
    for g in _groups_for(analysis, args.comparison):
        res = analysis.result[g]
        alpha_r, _ = analysis.system.alpha(g)
        grid = sens_coef.grid_coef(
            res, alpha_r,
            parse_range(args.beta_u_range),
            parse_range(args.delta_m_range),
            resolution=args.res,
        )
        grid.write_csv(out_dir / f"coef_grid_{g}.csv", ["delta_adj", "zeta_adj"])
        grid.write_curves_csv(out_dir / f"coef_contours_{g}.csv")
        summary[g] = {
            "alpha_r": alpha_r,
            "delta_res": res.delta,
            "zeta_res": res.zeta,
            "grid_csv": f"coef_grid_{g}.csv",
            "contours_csv": f"coef_contours_{g}.csv",
        }
        print(f"{g}: wrote coefficient-scale grid ({args.res}x{args.res}) "
              f"and zero contours")
    _write_json(out_dir / "sens_coef.json", summary)
    _write_manifest(args, out_dir)
    return EXIT_OK


def _robustness(analysis, group, alpha):
    inputs = sens_r2.inputs_for(analysis, group)
    return inputs, sens_r2.robustness_report(inputs, alpha=alpha)


def cmd_sens_r2(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    analysis = _load_analysis(args)
    quantities = sens_r2.QUANTITIES if args.quantity == "both" else (args.quantity,)
    reports = {}
    for g in _groups_for(analysis, args.comparison):
        inputs, report = _robustness(analysis, g, args.alpha)
        reports[g] = report.to_dict()
        for q in quantities:
            grid = sens_r2.grid_r2(inputs, resolution=args.res, max_r2=args.max_r2,
                                   quantity=q, alpha=args.alpha)
            grid.write_csv(out_dir / f"r2_grid_{q}_{g}.csv",
                           ["estimate_adj", "se_adj", "ci_lo", "ci_hi"])
            grid.write_curves_csv(out_dir / f"r2_curves_{q}_{g}.csv")
        for line in report.summary_lines():
            print(f"{g}: {line}")
    _write_json(out_dir / "robustness.json", reports)
    _write_manifest(args, out_dir)
    return EXIT_OK


def cmd_rv(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    analysis = _load_analysis(args)
    reports = {}
    for g in _groups_for(analysis, args.comparison):
        _, report = _robustness(analysis, g, args.alpha)
        reports[g] = report.to_dict()
        for line in report.summary_lines():
            print(f"{g}: {line}")
    _write_json(out_dir / "robustness.json", reports)
    _write_manifest(args, out_dir)
    return EXIT_OK


def cmd_simulate(args):
    out_dir = Path(args.out)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    spec = simulate.SemSpec.from_json(args.spec) if args.spec else simulate.default_spec()
    complete = simulate.generate(spec, args.n, seed=args.seed)
    write_csv(complete.data, args.out, include_unobserved=not args.drop_unobserved)
    if args.schema_out:
        schema = schema_for(complete.data)
        if args.drop_unobserved:
            schema = Schema(**{**schema.__dict__, "unobserved_column": None})
        _write_json(args.schema_out, schema.to_dict())
    manifest_dir = Path(args.out).resolve().parent
    _write_manifest(args, manifest_dir, {"rows": complete.data.n, "seed_used": complete.seed})
    print(f"wrote {complete.data.n} rows to {args.out} (seed {complete.seed})")
    return EXIT_OK


def cmd_verify(args):
    report = verify.run_verify(base_seed=args.seed, seeds=args.seeds,
                               corrupt=args.corrupt)
    for r in report.results:
        print(r.line())
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_json(out_dir / "verify.json", report.to_dict())
        _write_manifest(args, out_dir)
    if not report.all_passed:
        _error_record("check", "one or more verification checks failed")
        return EXIT_CHECK
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dispsens",
        description="Causal decomposition of group disparities with "
                    "sensitivity analysis for omitted mediator-outcome confounding.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="initial disparity, reduction, remaining")
    _add_data_args(p)
    p.add_argument("--ci", choices=["normal", "percentile"], default="normal")
    p.add_argument("--ci-level", type=float, default=0.95)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("sens-coef", help="coefficient-scale sensitivity grid")
    _add_data_args(p)
    p.add_argument("--comparison", help="comparison group (default: all)")
    p.add_argument("--beta-u-range", default="-2:2", help="a:b range for beta_u")
    p.add_argument("--delta-m-range", default="-1:1", help="a:b range for delta_m")
    p.add_argument("--res", type=int, default=201, help="grid resolution per axis")
    p.set_defaults(func=cmd_sens_coef)

    p = sub.add_parser("sens-r2", help="partial R^2 sensitivity grid and robustness values")
    _add_data_args(p)
    p.add_argument("--comparison", help="comparison group (default: all)")
    p.add_argument("--quantity", choices=["delta", "zeta", "both"], default="both")
    p.add_argument("--max-r2", type=float, default=0.3)
    p.add_argument("--res", type=int, default=201)
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_sens_r2)

    p = sub.add_parser("rv", help="robustness values only (no grids)")
    _add_data_args(p)
    p.add_argument("--comparison", help="comparison group (default: all)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_rv)

    p = sub.add_parser("simulate", help="generate synthetic data from a spec")
    p.add_argument("--spec", help="generator spec JSON (default: built-in example)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--schema-out", help="also write the matching schema JSON")
    p.add_argument("--drop-unobserved", action="store_true",
                   help="omit the confounder column from the CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run the formula-vs-brute-force battery")
    p.add_argument("--seed", type=int, default=20240)
    p.add_argument("--seeds", type=int, default=1, help="number of seeds to aggregate")
    p.add_argument("--corrupt", help="perturb the named check (self-test hook)")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors already; normalize other codes
        return EXIT_USAGE if exc.code not in (0,) else 0
    try:
        return args.func(args)
    except _USAGE_ERRORS as exc:
        _error_record("io", exc)
        return EXIT_USAGE
    except _NUMERIC_ERRORS as exc:
        _error_record("numeric", exc)
        return EXIT_NUMERIC
    except DispsensError as exc:
        _error_record("error", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
