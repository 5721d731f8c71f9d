"""Command line front end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

from . import density as dens
from . import model as mdl
from . import report as rep
from .data import DEFAULT_LAMBDA, FACTOR_NAMES, diebold_li_fit, load_csv, load_yields
from .errors import HCRError, InvalidInputError
from .normalize import (
    GAUSSIAN,
    KINDS,
    LAPLACE,
    cdf,
    difference_series,
    empirical_cdf,
    fit_gaussian,
    fit_laplace,
    fit_normalizers,
    normalize_series,
)

EXIT_USAGE = 1
EXIT_DATA = 2
DEFAULT_SEED = 0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_int_list(text: str) -> list[int]:
    """``"1..9"`` (inclusive range) or ``"0,1,2"``."""
    text = text.strip()
    m = re.fullmatch(r"(-?\d+)\.\.(-?\d+)", text)
    try:
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a list like 0,1,2 or a range like 1..9, got {text!r}")


def parse_float_list(text: str) -> list[float]:
    if ".." in text and re.fullmatch(r"-?\d+\.\.-?\d+", text.strip()):
        return [float(v) for v in parse_int_list(text)]
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers like 0,1,2.5 or a range like 0..10, got {text!r}")


def _names(text: str) -> list[str]:
    names = [p.strip() for p in text.split(",") if p.strip()]
    if not names:
        raise argparse.ArgumentTypeError("empty column list")
    return names


# ---------------------------------------------------------------------------
# argument groups
# ---------------------------------------------------------------------------


def _add_input(p, required=True):
    p.add_argument("--input", required=required, type=Path, help="CSV file with a header row")
    p.add_argument("--columns", type=_names, help="comma-separated value columns (maturities with --from-yields)")
    p.add_argument("--date-column", help="name of an optional date label column")
    p.add_argument("--from-yields", action="store_true", help="input holds yields; fit level/slope/curvature factors first")
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA, help="factor decay per month (default %(default)s)")
    p.add_argument("--variables", type=_names, help="factors to model with --from-yields (default b1,b2,b3)")


def _add_fit(p):
    p.add_argument("--degree", type=int, help="maximal polynomial degree per coordinate (default 9)")
    p.add_argument("--order", type=int, help="number of previous time steps in the context (default 0)")
    p.add_argument("--normalizer", choices=KINDS, help="residual distribution (default laplace)")
    p.add_argument("--prune-sigmas", type=float, help="drop coefficients smaller than this many noise sigmas")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hcr", description="Polynomial joint density models of time-series residuals.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a model and save it")
    _add_input(p)
    _add_fit(p)
    p.add_argument("--output", required=True, type=Path)

    p = sub.add_parser("eval", help="evaluate predicted densities at observed values")
    _add_input(p)
    p.add_argument("--model", type=Path, help="evaluate a saved model on every vector of the input")
    _add_fit(p)
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--in-sample", action="store_true", help="train and test on all vectors (no hold-out)")
    p.add_argument("--thresholds", type=parse_float_list, default=list(mdl.DEFAULT_THRESHOLDS))
    p.add_argument("--output", required=True, type=Path)

    p = sub.add_parser("matrix", help="hold-out evaluation over orders x degrees")
    _add_input(p)
    p.add_argument("--variable-set", action="append", type=_names, dest="variable_sets",
                   help="additional variable set to compare (repeatable)")
    p.add_argument("--orders", type=parse_int_list, default=[0, 1, 2])
    p.add_argument("--degrees", type=parse_int_list, default=list(range(1, 10)))
    p.add_argument("--normalizer", choices=KINDS, default=LAPLACE)
    p.add_argument("--test-fraction", type=float, default=mdl.DEFAULT_TEST_FRACTION)
    p.add_argument("--seed", type=int)
    p.add_argument("--thresholds", type=parse_float_list, default=list(mdl.DEFAULT_THRESHOLDS))
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--output", required=True, type=Path, help="output directory")

    p = sub.add_parser("grid", help="pair marginal density on a regular grid")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--pair", required=True, type=parse_int_list)
    p.add_argument("--resolution", type=int, default=100)
    _add_input(p, required=False)
    p.add_argument("--output", required=True, type=Path)

    p = sub.add_parser("topk", help="largest coefficients with noise levels")
    p.add_argument("--model", required=True, type=Path)
    _add_input(p)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--output", required=True, type=Path)

    p = sub.add_parser("normalize", help="residuals, fitted CDFs and uniform series")
    _add_input(p)
    p.add_argument("--normalizer", choices=KINDS, default=LAPLACE)
    p.add_argument("--output", required=True, type=Path)

    p = sub.add_parser("region", help="volume and mass of the region where density exceeds a threshold")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--threshold", required=True, type=parse_float_list)
    p.add_argument("--resolution", type=int)
    p.add_argument("--mc-samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--output", required=True, type=Path)
    return parser


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _load_raw(args, variables=None):
    if args.from_yields:
        table = load_yields(args.input, args.columns, args.date_column)
        raw = diebold_li_fit(table, args.lam)
        wanted = variables or args.variables or list(FACTOR_NAMES)
        return raw.select(wanted)
    if args.variables:
        raise UsageError("--variables applies only with --from-yields; use --columns")
    columns = variables if args.columns is None and variables else args.columns
    raw = load_csv(args.input, columns, args.date_column)
    return raw.select(variables) if variables else raw


def _config(args, variables) -> mdl.ModelConfig:
    return mdl.ModelConfig(
        tuple(variables),
        order=0 if args.order is None else args.order,
        degree=9 if args.degree is None else args.degree,
        normalizer=args.normalizer or LAPLACE,
        prune_sigmas=args.prune_sigmas,
    )


def _seed(args) -> int:
    if args.seed is None:
        print(f"hcr: using default seed {DEFAULT_SEED}", file=sys.stderr)
        return DEFAULT_SEED
    return args.seed


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", text).strip("-")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_fit(args):
    raw = _load_raw(args)
    model = mdl.fit(_config(args, raw.names), raw)
    mdl.save_model(model, args.output)
    print(f"fitted {model.config.label}: {len(model.coeffs)} coefficients from n={model.coeffs.n}")


def cmd_eval(args):
    fit_flags = [f for f in ("degree", "order", "normalizer", "prune_sigmas") if getattr(args, f) is not None]
    if args.model is not None:
        if fit_flags:
            raise UsageError(f"--model conflicts with fit flags: {', '.join('--' + f.replace('_', '-') for f in fit_flags)}")
        if args.test_fraction is not None or args.seed is not None or args.in_sample:
            raise UsageError("--model evaluates every input vector; drop --test-fraction/--seed/--in-sample")
        model = mdl.load_model(args.model)
        raw = _load_raw(args, list(model.config.variables))
        report = mdl.evaluate(model, mdl.model_vectors(model, raw), args.thresholds)
    else:
        raw = _load_raw(args)
        config = _config(args, raw.names)
        if args.in_sample:
            if args.test_fraction is not None or args.seed is not None:
                raise UsageError("--in-sample conflicts with --test-fraction/--seed")
            report = mdl.in_sample_evaluate(config, raw, args.thresholds)
        else:
            fraction = mdl.DEFAULT_TEST_FRACTION if args.test_fraction is None else args.test_fraction
            report = mdl.holdout_evaluate(config, raw, fraction, _seed(args), args.thresholds)
    rep.report_document(report).write(args.output)
    print(f"{report.label}: n_test={report.n_test} mean density={report.mean_density:.4g} "
          f"negative={100 * report.negative_fraction:.2f}%")


def _union(*lists):
    out = []
    for names in lists:
        out.extend(n for n in names if n not in out)
    return out


def cmd_matrix(args):
    extra = [list(v) for v in (args.variable_sets or [])]
    if args.from_yields:
        raw = _load_raw(args, list(FACTOR_NAMES))
        variable_sets = [args.variables or list(FACTOR_NAMES)] + extra
    else:
        if args.variables:
            raise UsageError("--variables applies only with --from-yields; use --columns")
        if args.columns is None:
            raise UsageError("matrix needs --columns (the variable set to model)")
        variable_sets = [args.columns] + extra
        raw = load_csv(args.input, _union(*variable_sets), args.date_column)
    seed = _seed(args)
    reports = mdl.evaluate_matrix(
        raw, variable_sets, args.orders, args.degrees, args.test_fraction, seed,
        args.thresholds, args.normalizer, args.jobs,
    )
    args.output.mkdir(parents=True, exist_ok=True)
    summary = []
    for r in reports:
        c = r.config
        name = f"report_{_slug('+'.join(c.variables))}_order{c.order}_degree{c.degree}.csv"
        rep.report_document(r).write(args.output / name)
        summary.append((name, "+".join(c.variables), c.order, c.degree, r.n_train, r.n_test,
                        r.mean_density, r.negative_fraction) + tuple(r.threshold_fractions))
    header = ("file", "variables", "order", "degree", "n_train", "n_test", "mean_density",
              "negative_fraction") + tuple(f"above_{rep.fmt(t)}" for t in args.thresholds)
    rep.Table.build(header, summary, {"seed": seed, "test_fraction": args.test_fraction}).write(
        args.output / "summary.csv"
    )
    print(f"wrote {len(reports)} reports to {args.output}")


def cmd_grid(args):
    model = mdl.load_model(args.model)
    if len(args.pair) != 2:
        raise UsageError("--pair takes two coordinate indices, e.g. 0,1")
    names = mdl.coordinate_names(model.config.variables, model.config.order)
    for c in args.pair:
        if not 0 <= c < len(names):
            raise UsageError(f"--pair coordinate {c} outside 0..{len(names) - 1}")
    sample = None
    if args.input is not None:
        sample = mdl.model_vectors(model, _load_raw(args, list(model.config.variables)))
    sheet = rep.emit_pair_grid(model.coeffs, args.pair, args.resolution, sample,
                               (names[args.pair[0]], names[args.pair[1]]))
    sheet.to_document().write(args.output)
    print(f"wrote {args.resolution}x{args.resolution} grid for {sheet.names[0]}, {sheet.names[1]}")


def cmd_topk(args):
    model = mdl.load_model(args.model)
    vectors = mdl.model_vectors(model, _load_raw(args, list(model.config.variables)))
    if model.coeffs.n is not None and model.coeffs.n != len(vectors):
        raise InvalidInputError(
            f"model was estimated from {model.coeffs.n} vectors but the input gives {len(vectors)}; "
            "pass the training data"
        )
    report = dens.top_k(model.coeffs, vectors, args.k)
    table = rep.emit_coefficients(report, model.coeffs.spec.m)
    table.meta["coordinates"] = " ".join(mdl.coordinate_names(model.config.variables, model.config.order))
    table.write(args.output)
    print(f"wrote {len(table)} coefficient rows (baseline sigma {report.baseline_sigma:.4g})")


def cmd_normalize(args):
    raw = _load_raw(args)
    residuals = difference_series(raw)
    params = fit_normalizers(residuals, args.normalizer)
    u = normalize_series(residuals, params)
    param_rows = [(p.name, p.kind, p.mu, p.scale) for p in params]
    series_rows = [
        (raw.times[t + 1],) + tuple(residuals.values[t]) + tuple(u.values[t]) for t in range(len(residuals))
    ]
    cdf_rows = []
    for i, name in enumerate(residuals.names):
        col = residuals.values[:, i]
        lap, gau = fit_laplace(col, name), fit_gaussian(col, name)
        for value, ecdf in empirical_cdf(col):
            cdf_rows.append((name, value, ecdf, cdf(lap, value), cdf(gau, value)))
    doc = rep.Document(
        {
            "params": rep.Table.build(("variable", "kind", "mu", "scale"), param_rows),
            "series": rep.Table.build(
                ("time",) + tuple(f"residual_{n}" for n in residuals.names) + tuple(f"uniform_{n}" for n in residuals.names),
                series_rows,
            ),
            "cdf": rep.Table.build(("variable", "value", "empirical", LAPLACE, GAUSSIAN), cdf_rows),
        },
        {"n_raw": len(raw), "n_residual": len(residuals)},
    )
    doc.write(args.output)
    print(f"normalized {len(residuals.names)} variables over {len(residuals)} residuals")


def cmd_region(args):
    model = mdl.load_model(args.model)
    d = model.coeffs.spec.d
    if args.resolution is not None and args.mc_samples is not None:
        raise UsageError("--resolution and --mc-samples are mutually exclusive")
    if d <= 3:
        if args.mc_samples is not None or args.seed is not None:
            raise UsageError(f"d={d} uses a grid; pass --resolution, not --mc-samples/--seed")
        kwargs = {"resolution": 100 if args.resolution is None else args.resolution}
    else:
        if args.resolution is not None:
            raise UsageError(f"d={d} uses Monte Carlo; pass --mc-samples and --seed, not --resolution")
        kwargs = {"mc_samples": 10**6 if args.mc_samples is None else args.mc_samples, "seed": _seed(args)}
    stats = [dens.region_stats(model.coeffs, t, **kwargs) for t in args.threshold]
    rep.region_table(stats).write(args.output)
    for s in stats:
        print(f"rho > {s.threshold:g}: volume {100 * s.volume_fraction:.2f}%, mass {100 * s.mass_fraction:.2f}%")


COMMANDS = {
    "fit": cmd_fit,
    "eval": cmd_eval,
    "matrix": cmd_matrix,
    "grid": cmd_grid,
    "topk": cmd_topk,
    "normalize": cmd_normalize,
    "region": cmd_region,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"hcr: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HCRError as exc:
        print(f"hcr: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"hcr: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
