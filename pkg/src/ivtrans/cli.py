"""Command-line entry point: ``fit``, ``simulate`` and ``calibrate``.

Exit codes: 0 success, 2 invalid input or configuration, 3 estimation did
not converge, 4 file I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from .errors import CalibrationError, ConvergenceError, ReportIOError, StudyQualityError, ValidationError
from .estimate import FitOptions, fit
from .fileio import ColumnMapping, comparison_table, read_dataset, write_report
from .hazard import HazardFamily
from .simulate import CaseSpec, calibrate_censoring, coverage_study

EXIT_OK, EXIT_VALIDATION, EXIT_CONVERGENCE, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("ivtrans")


def _names(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(s) for s in _names(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _unit_interval(text: str) -> float:
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ivtrans",
        description="Transformation-model survival regression with instrument-corrected covariates.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit naive and instrument-corrected models to a CSV file")
    f.add_argument("--input", required=True)
    f.add_argument("--time-col", required=True)
    f.add_argument("--status-col", required=True)
    f.add_argument("--z-cols", required=True, type=_names, help="comma-separated surrogate columns")
    f.add_argument("--w-cols", required=True, type=_names, help="comma-separated instrument columns")
    f.add_argument("--family", default="ph", help="ph, po or r=<float>")
    f.add_argument("--variance", choices=("plugin", "bootstrap"), default="plugin")
    f.add_argument("--boot-reps", type=int, default=200)
    f.add_argument("--boot-seed", type=int, default=0)
    f.add_argument("--ci-level", type=_unit_interval, default=0.95)
    f.add_argument("--components", action="store_true", help="include variance component matrices")
    f.add_argument("--out", required=True)

    s = sub.add_parser("simulate", help="replicated simulation study for one design")
    s.add_argument("--case", choices=("i", "ii", "iii"), required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--beta", type=_floats, required=True)
    s.add_argument("--family", default="ph")
    s.add_argument("--reps", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--target-censoring", type=float, default=0.2)
    s.add_argument("--censoring-constant", type=float, default=None,
                   help="skip calibration and use this censoring bound")
    s.add_argument("--ci-level", type=_unit_interval, default=0.95)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", required=True)

    c = sub.add_parser("calibrate", help="censoring bound for a target censoring rate")
    c.add_argument("--case", choices=("i", "ii", "iii"), required=True)
    c.add_argument("--beta", type=_floats, required=True)
    c.add_argument("--family", default="ph")
    c.add_argument("--target-censoring", type=float, default=0.2)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", default=None)
    return parser


def _config(args: argparse.Namespace) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "verbose"}
    return json.loads(json.dumps(cfg, default=list))


def _cmd_fit(args) -> int:
    mapping = ColumnMapping(args.time_col, args.status_col, args.z_cols, args.w_cols)
    dataset = read_dataset(args.input, mapping)
    family = HazardFamily.parse(args.family)
    options = FitOptions(variance=args.variance, ci_level=args.ci_level,
                         boot_reps=args.boot_reps, boot_seed=args.boot_seed)
    fits, code = {}, EXIT_OK
    for label, naive in (("naive", True), ("proposed", False)):
        try:
            fits[label] = fit(dataset, family, options, naive=naive)
        except ConvergenceError as exc:
            result = getattr(exc, "result", None)
            print(f"{label} fit failed: {exc}", file=sys.stderr)
            code = EXIT_CONVERGENCE
            if result is not None:
                fits[label] = result
    if fits:
        write_report(fits, args.out, config=_config(args), include_components=args.components)
        title = f"{family.label} model, n = {dataset.n}, {dataset.status.sum()} events"
        print(comparison_table(fits, title))
    return code


def _cmd_simulate(args) -> int:
    spec = CaseSpec.for_case(
        args.case, args.n, args.beta, family_r=HazardFamily.parse(args.family).r, reps=args.reps,
        seed=args.seed, target_censoring=args.target_censoring,
        censoring_constant=args.censoring_constant,
    )
    try:
        report = coverage_study(spec, ci_level=args.ci_level, workers=args.workers)
        code = EXIT_OK
    except StudyQualityError as exc:
        print(str(exc), file=sys.stderr)
        report, code = exc.report, EXIT_CONVERGENCE
    write_report(report, args.out, config=_config(args))
    d = report.to_dict(include_replicates=False)
    for key in ("bias", "mse", "coverage_probability", "average_width", "mean_se", "mc_sd"):
        print(f"{key:>22}: " + "  ".join(f"{v:.4f}" for v in d[key]))
    print(f"{'censoring rate':>22}: {d['empirical_censoring_rate']:.4f}")
    print(f"{'convergence rate':>22}: {d['convergence_rate']:.4f}")
    return code


def _cmd_calibrate(args) -> int:
    spec = CaseSpec.for_case(args.case, 100, args.beta, family_r=HazardFamily.parse(args.family).r,
                             seed=args.seed, target_censoring=args.target_censoring)
    c = calibrate_censoring(spec)
    print(repr(c))
    if args.out:
        doc = {"kind": "calibration", "config": _config(args),
               "spec": replace(spec, censoring_constant=c).to_dict(), "censoring_constant": c}
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                json.dump(doc, fh, indent=2)
        except OSError as exc:
            raise ReportIOError(f"cannot write {args.out}: {exc}") from exc
    return EXIT_OK


COMMANDS = {"fit": _cmd_fit, "simulate": _cmd_simulate, "calibrate": _cmd_calibrate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, CalibrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ReportIOError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
