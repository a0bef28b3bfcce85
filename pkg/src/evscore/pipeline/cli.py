"""Command-line interface: ingest, fit, predict, verify, select, crossval, simulate.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from ..bayes import inclusion_probabilities, run_chain
from ..errors import (
    ConvergenceError,
    DataError,
    DomainError,
    EvScoreError,
    InfeasibleStartError,
    SingularHessianError,
)
from ..scoring import ForecastCase
from . import config as cfgmod
from .crossval import (
    CrossvalConfig,
    CrossvalReport,
    MethodSpec,
    crossval_run,
    evaluate_cases,
    fit_method,
    load_fitted,
    save_fitted,
    synthetic_daily,
    write_report,
)
from .data import COVARIATES, DailyTable, aggregate_daily, ingest_hourly, normalize

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
METHOD_KINDS = {"mle": "mle", "crps": "crps", "bayes": "bayes", "glm": "glm"}

log = logging.getLogger("evscore")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _floats(text):
    try:
        return tuple(float(x) for x in cfgmod.split_list(text))
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _read_table(path) -> DailyTable:
    if not Path(path).exists():
        raise DataError(f"{path} does not exist")
    return DailyTable.read(path)


def _spec_from_args(args, cp) -> MethodSpec:
    both = cfgmod.split_list(args.covariates) if args.covariates is not None else None
    loc = cfgmod.split_list(args.location_covariates) if args.location_covariates is not None else both
    scale = cfgmod.split_list(args.scale_covariates) if args.scale_covariates is not None else both
    if loc is None:
        loc = cfgmod.split_list(cfgmod._get(cp, ("model",), "location_covariates", ""))
    if scale is None:
        scale = cfgmod.split_list(cfgmod._get(cp, ("model",), "scale_covariates", ""))
    link = cfgmod.parse_link(args.link or cfgmod._get(cp, ("model",), "link", "log"))
    chain = cfgmod.chain_config(
        cp, seed=args.seed, iterations=args.iterations, burn_in=args.burn_in,
        variable_selection=True if args.variable_selection else None,
    )
    return MethodSpec(
        name=args.name or args.method,
        kind=METHOD_KINDS[args.method],
        location_covariates=loc,
        scale_covariates=() if args.method == "glm" else scale,
        link=link,
        optimizer=args.optimizer or cfgmod._get(cp, ("optimizer",), "optimizer", "nelder_mead"),
        budget=args.budget if args.budget is not None else cfgmod._get(cp, ("optimizer",), "budget", None, int),
        chain=chain,
        priors=cfgmod.prior_spec(cp),
    )


# --------------------------------------------------------------------------
# subcommands


def cmd_ingest(args):
    hourly = ingest_hourly(args.input, args.format)
    daily, dropped = aggregate_daily(hourly, args.seed)
    if not daily:
        raise DataError("no complete days in input")
    DailyTable.from_records(daily).write(args.output)
    print(f"{len(daily)} days written to {args.output}; {len(dropped)} incomplete days dropped", file=sys.stderr)
    for d in dropped:
        log.info("dropped %s", d.isoformat())


def cmd_simulate(args):
    synthetic_daily(args.years, args.seed).write(args.output)


def cmd_fit(args):
    cp = cfgmod.load(args.config)
    spec = _spec_from_args(args, cp)
    table = _read_table(args.data)
    fm = fit_method(spec, table, args.seed)
    for p in save_fitted(fm, args.output):
        print(f"wrote {p}", file=sys.stderr)
    w = sys.stdout
    w.write("parameter\testimate\tstd_error\n")
    for name, est, se in fm.parameters():
        w.write(f"{name}\t{float(est)!r}\t{float(se)!r}\n")


def _forecasts(fm, table):
    out = []
    for i in range(len(table)):
        raw = table.row(i)
        out.append(ForecastCase(fm.predict(raw, raw.get("ff", math.nan)), float(table.y_fx[i]), table.dates[i].isoformat(), raw))
    return out


def _describe(fc):
    from ..distributions import GevParams
    from ..scoring import LogNormalGustForecast

    if isinstance(fc, GevParams):
        return "gev", (fc.mu, fc.sigma, fc.xi)
    if isinstance(fc, LogNormalGustForecast):
        return "lognormal_gust", (fc.ff, fc.mean, fc.sd)
    return "sample", (fc.median(), math.sqrt(fc.variance()), math.nan)


def cmd_predict(args):
    fm = load_fitted(args.model)
    table = _read_table(args.data)
    taus = _floats(args.quantiles)
    cases = _forecasts(fm, table)
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write("\t".join(["date", "family", "p1", "p2", "p3", "observation"] + [f"q{t:g}" for t in taus]) + "\n")
        for c in cases:
            fam, ps = _describe(c.forecast)
            qs = [float(c.forecast.quantile(t)) for t in taus]
            fh.write("\t".join([c.case_id, fam] + [repr(float(p)) for p in ps] + [repr(c.observation)] + [repr(q) for q in qs]) + "\n")


def _verification(cases_by_method, args, reference=None):
    cp = cfgmod.load(args.config)
    cfg = cfgmod.crossval_config(cp, args.seed)
    if args.thresholds:
        cfg = CrossvalConfig(**{**cfg.__dict__, "thresholds": _floats(args.thresholds)})
    if args.taus:
        cfg = CrossvalConfig(**{**cfg.__dict__, "quantiles": _floats(args.taus)})
    if args.bootstrap is not None:
        cfg = CrossvalConfig(**{**cfg.__dict__, "bootstrap_replicates": args.bootstrap})
    cfg = CrossvalConfig(**{**cfg.__dict__, "reference": reference})
    return cfg, evaluate_cases(cases_by_method, cfg)


def cmd_verify(args):
    cases = {}
    for model_path in args.model:
        fm = load_fitted(model_path)
        table = _read_table(args.data)
        cases[fm.spec.name] = _forecasts(fm, table)
    if args.reference is not None and args.reference not in cases:
        raise UsageError(f"reference {args.reference!r} is not one of the models")
    cfg, ev = _verification(cases, args, args.reference)
    report = CrossvalReport(list(cases), [], cases, ev["summaries"], ev["skills"], [], [], ev["pits"],
                            ev["histograms"], ev["residual_quantiles"], ev["sharpness"], cfg, args.reference)
    for p in write_report(report, args.output_dir):
        print(f"wrote {p}", file=sys.stderr)


def cmd_select(args):
    cp = cfgmod.load(args.config)
    table = _read_table(args.data)
    names = cfgmod.split_list(args.covariates) if args.covariates else tuple(c for c in COVARIATES if c in table.covariates)
    norm, _ = normalize(table, columns=names)
    chain = cfgmod.chain_config(cp, seed=args.seed, iterations=args.iterations, burn_in=args.burn_in, variable_selection=True)
    sample = run_chain(norm.design(names), cfgmod.prior_spec(cp), chain, names, names)
    probs = dict(zip(sample.indicator_names, inclusion_probabilities(sample)))
    lines = ["covariate\tlocation\tscale"]
    for c in names:
        lines.append(f"{c}\t{100 * probs[f'mu:{c}']:.1f}\t{100 * probs[f'logsigma:{c}']:.1f}")
    text = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def cmd_crossval(args):
    if args.config:
        cp = cfgmod.load(args.config)
    else:
        cp = cfgmod.default_benchmark()
    if args.data:
        table = _read_table(args.data)
    else:
        table = synthetic_daily(args.synthetic_years, args.seed)
    methods = cfgmod.method_specs(cp)
    if not methods:
        raise UsageError("config defines no methods")
    cfg = cfgmod.crossval_config(cp, args.seed)
    report = crossval_run(table, methods, cfg)
    for p in write_report(report, args.output_dir):
        print(f"wrote {p}", file=sys.stderr)
    for m in report.methods:
        s = report.summaries.get((m, "crps"))
        if s is not None:
            print(f"{m}\tCRPS {s.mean_score:.4f} ({s.bootstrap_sd:.4f})")
    if report.failures:
        print(f"{len(report.failures)} fold failures, see failures.tsv", file=sys.stderr)


# --------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="evscore", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="hourly station file -> daily table")
    s.add_argument("--input", required=True)
    s.add_argument("--format", choices=["generic", "knmi"], default="generic")
    s.add_argument("--output", required=True)
    s.add_argument("--seed", type=int, default=0, help="dither seed")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("simulate", help="write a synthetic daily table")
    s.add_argument("--years", type=int, default=9)
    s.add_argument("--output", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", help="fit one method on a daily table")
    s.add_argument("--data", required=True)
    s.add_argument("--method", choices=sorted(METHOD_KINDS), required=True)
    s.add_argument("--name")
    s.add_argument("--link", choices=["id", "identity", "log"])
    s.add_argument("--covariates", help="covariates for both location and scale")
    s.add_argument("--location-covariates")
    s.add_argument("--scale-covariates")
    s.add_argument("--optimizer", choices=["nelder_mead", "simulated_annealing", "chained"])
    s.add_argument("--budget", type=int)
    s.add_argument("--iterations", type=int)
    s.add_argument("--burn-in", type=int)
    s.add_argument("--variable-selection", action="store_true")
    s.add_argument("--config")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output", required=True, help="model JSON file")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("predict", help="predictive parameters and quantiles for each row")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--quantiles", default="0.1,0.5,0.9")
    s.add_argument("--output", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("verify", help="scores, PIT and residual-quantile data for fitted models")
    s.add_argument("--model", required=True, action="append", help="repeatable")
    s.add_argument("--data", required=True)
    s.add_argument("--reference")
    s.add_argument("--thresholds")
    s.add_argument("--taus")
    s.add_argument("--bootstrap", type=int)
    s.add_argument("--config")
    s.add_argument("--output-dir", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("select", help="Bayesian variable selection: inclusion probabilities")
    s.add_argument("--data", required=True)
    s.add_argument("--covariates")
    s.add_argument("--iterations", type=int)
    s.add_argument("--burn-in", type=int)
    s.add_argument("--config")
    s.add_argument("--output")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("crossval", help="leave-one-year-out benchmark")
    src = s.add_mutually_exclusive_group()
    src.add_argument("--data")
    src.add_argument("--synthetic-years", type=int, default=9)
    s.add_argument("--config")
    s.add_argument("--output-dir", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_crossval)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, SingularHessianError, InfeasibleStartError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, DomainError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EvScoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
