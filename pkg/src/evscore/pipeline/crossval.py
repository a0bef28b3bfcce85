"""Leave-one-year-out cross-validation of competing peak-wind forecasters."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from ..bayes import ChainConfig, PriorSpec, posterior_predictive_sample, run_chain
from ..distributions import GevParams
from ..errors import DomainError, EvScoreError
from ..estimate import NonStationaryGevModel, fit, predictive_params
from ..scoring import ForecastCase, SampleForecast, ScoreRule, ScoreSummary, mean_scores, skill_score
from ..verify import pit, pit_histogram, residual_quantile_data, sharpness
from .data import COVARIATES, DailyTable, NormStats, normalize
from .glm import glm_fit, glm_predict

log = logging.getLogger(__name__)

METHOD_KINDS = ("mle", "crps", "bayes", "glm")
DEFAULT_THRESHOLDS = (14.0, 18.0, 25.0)
DEFAULT_QUANTILES = (0.75, 0.9, 0.95, 0.99)
# calm days make the gust factor undefined; the GLM forecast uses this floor
GLM_MIN_FF = 0.1


@dataclass(frozen=True)
class CvFold:
    held_out_year: int
    train_rows: np.ndarray
    test_rows: np.ndarray


def leave_one_year_out(table: DailyTable) -> list[CvFold]:
    """One fold per calendar year present, in year order."""
    years = table.years
    distinct = sorted(set(years.tolist()))
    if len(distinct) < 2:
        raise DomainError("leave-one-year-out needs at least two calendar years")
    idx = np.arange(len(table))
    return [CvFold(y, idx[years != y], idx[years == y]) for y in distinct]


@dataclass(frozen=True)
class MethodSpec:
    """One forecaster: its kind, covariates and estimation settings."""

    name: str
    kind: str
    location_covariates: tuple = ()
    scale_covariates: tuple = ()
    link: str = "log"
    optimizer: str = "nelder_mead"
    budget: int | None = None
    chain: ChainConfig = field(default_factory=lambda: ChainConfig(20_000, 5_000))
    priors: PriorSpec = field(default_factory=PriorSpec)
    predictive_draws: int = 4000

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise DomainError(f"method kind must be one of {METHOD_KINDS}")
        object.__setattr__(self, "location_covariates", tuple(self.location_covariates))
        object.__setattr__(self, "scale_covariates", tuple(self.scale_covariates))
        if self.kind == "bayes" and self.link != "log":
            raise DomainError("the Bayesian method supports the log link only")

    @property
    def covariates(self):
        return tuple(dict.fromkeys(self.location_covariates + self.scale_covariates))


@dataclass
class FittedMethod:
    """A method fitted on one training set, ready to predict raw rows."""

    spec: MethodSpec
    stats: NormStats | None
    model: object
    std_errors: np.ndarray | None = None
    seed: int = 0
    model_full: object = None

    def predict(self, raw_row, ff):
        row = self.stats.apply_row(raw_row) if self.stats is not None else {}
        if self.spec.kind == "glm":
            return glm_predict(self.model, max(float(ff), GLM_MIN_FF), row)
        if self.spec.kind == "bayes":
            return SampleForecast(posterior_predictive_sample(self.model, row, 1, self.seed))
        return predictive_params(self.model, row)

    def parameters(self):
        """(name, estimate, standard error) triples."""
        if self.spec.kind == "glm":
            names = ["(Intercept)"] + list(self.model.covariates)
            return list(zip(names, self.model.coeffs, self.model.std_errors)) + [
                ("residual_sd", self.model.residual_sd, math.nan)
            ]
        if self.spec.kind == "bayes":
            d = self.model_full
            return list(zip(d.names, d.draws.mean(axis=0), d.draws.std(axis=0, ddof=1)))
        ses = self.std_errors if self.std_errors is not None else np.full(self.model.n_params, np.nan)
        return list(zip(self.model.param_names(), self.model.to_vector(), ses))


def _thin(sample, n):
    if sample.n_draws <= n:
        return sample
    keep = np.linspace(0, sample.n_draws - 1, n).round().astype(int)
    return replace(sample, draws=sample.draws[keep], indicator_draws=None if sample.indicator_draws is None else sample.indicator_draws[keep])


def fit_method(spec: MethodSpec, train: DailyTable, seed: int = 0) -> FittedMethod:
    """Fit ``spec`` on raw training rows; normalisation stats come from ``train`` only."""
    cov = spec.covariates
    stats = None
    norm = train
    if cov:
        norm, stats = normalize(train, columns=cov)
    if spec.kind == "glm":
        model = glm_fit(train.y_fx, train.covariates["ff"], norm.covariates, spec.location_covariates)
        return FittedMethod(spec, stats, model, seed=seed)
    data = norm.design(cov)
    if spec.kind == "bayes":
        cfg = ChainConfig(
            spec.chain.iterations,
            spec.chain.burn_in,
            spec.chain.proposal_sds,
            seed,
            spec.chain.variable_selection,
            spec.chain.adapt,
            spec.chain.adapt_batch,
            spec.chain.initial_sd_factor,
        )
        sample = run_chain(data, spec.priors, cfg, spec.location_covariates, spec.scale_covariates)
        return FittedMethod(spec, stats, _thin(sample, spec.predictive_draws), seed=seed, model_full=sample)
    template = NonStationaryGevModel.template(spec.location_covariates, spec.scale_covariates, spec.link)
    objective = "mle" if spec.kind == "mle" else "min_crps"
    res = fit(template, data, objective, spec.optimizer, seed=seed, budget=spec.budget)
    return FittedMethod(spec, stats, res.model, res.std_errors, seed=seed)


@dataclass(frozen=True)
class CrossvalConfig:
    thresholds: tuple = DEFAULT_THRESHOLDS
    quantiles: tuple = DEFAULT_QUANTILES
    bootstrap_replicates: int = 1000
    seed: int = 0
    reference: str | None = None
    pit_bins: int = 10
    rq_reference: str = "gumbel"
    rq_replicates: int = 1000

    def rules(self):
        out = [ScoreRule("crps"), ScoreRule("ignorance")]
        out += [ScoreRule("brier", float(t)) for t in self.thresholds]
        out += [ScoreRule("quantile", float(q)) for q in self.quantiles]
        return out


@dataclass
class CrossvalReport:
    methods: list
    folds: list
    cases: dict
    summaries: dict
    skills: dict
    parameters: list
    failures: list
    pit_sets: dict
    pit_histograms: dict
    residual_quantiles: dict
    sharpness: dict
    config: CrossvalConfig
    reference: str | None = None

    def summary(self, method, label) -> ScoreSummary:
        return self.summaries[(method, label)]


def _fold_seed(master, year, index):
    return int(np.random.SeedSequence([master, year, index]).generate_state(1)[0])


def crossval_run(table: DailyTable, methods: Sequence[MethodSpec], config: CrossvalConfig = CrossvalConfig()):
    """Fit every method on each leave-one-year-out training set and score the held-out year.

    A method failing on one fold is recorded in ``failures`` and leaves that
    fold's cases out of its scores; other folds and methods continue.
    """
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        raise DomainError("method names must be unique")
    if config.reference is not None and config.reference not in names:
        raise DomainError(f"reference method {config.reference!r} is not among the methods")
    folds = leave_one_year_out(table)
    cases = {n: [] for n in names}
    params, failures = [], []
    for fold in folds:
        train = table.subset(fold.train_rows)
        for mi, spec in enumerate(methods):
            seed = _fold_seed(config.seed, fold.held_out_year, mi)
            try:
                fitted = fit_method(spec, train, seed)
                fold_cases = []
                for i in fold.test_rows:
                    raw = table.row(i)
                    fc = fitted.predict(raw, raw.get("ff", math.nan))
                    fold_cases.append(ForecastCase(fc, float(table.y_fx[i]), table.dates[i].isoformat(), raw))
            except EvScoreError as exc:
                log.warning("method %s failed on %d: %s", spec.name, fold.held_out_year, exc)
                failures.append((spec.name, fold.held_out_year, str(exc)))
                continue
            cases[spec.name].extend(fold_cases)
            for pname, est, se in fitted.parameters():
                params.append((spec.name, fold.held_out_year, pname, float(est), float(se)))

    ev = evaluate_cases(cases, config)
    return CrossvalReport(
        names, folds, cases, ev["summaries"], ev["skills"], params, failures, ev["pits"], ev["histograms"],
        ev["residual_quantiles"], ev["sharpness"], config, config.reference,
    )


def evaluate_cases(cases: dict, config: CrossvalConfig = CrossvalConfig()) -> dict:
    """Scores, skills, PIT diagnostics and sharpness for each method's cases."""
    names = list(cases)
    summaries, skills = {}, {}
    rules = config.rules()
    for n in names:
        if not cases[n]:
            continue
        for rule in rules:
            summaries[(n, rule.label)] = mean_scores(cases[n], rule, config.bootstrap_replicates, config.seed)
    if config.reference is not None and cases.get(config.reference):
        for n in names:
            for rule in rules:
                key = (n, rule.label)
                ref = summaries.get((config.reference, rule.label))
                if key not in summaries or ref is None:
                    continue
                try:
                    skills[key] = skill_score(summaries[key].mean_score, ref.mean_score, 0.0)
                except DomainError:
                    skills[key] = math.nan

    pits, hists, rqs, sharp = {}, {}, {}, {}
    for n in names:
        if not cases[n]:
            continue
        pits[n] = pit(cases[n])
        hists[n] = pit_histogram(pits[n], config.pit_bins)
        if len(pits[n]) >= 10:
            rqs[n] = residual_quantile_data(pits[n], config.rq_reference, config.rq_replicates, config.seed)
        try:
            sharp[n] = sharpness(cases[n])
        except DomainError as exc:
            log.warning("sharpness unavailable for %s: %s", n, exc)
    return {
        "summaries": summaries, "skills": skills, "pits": pits, "histograms": hists,
        "residual_quantiles": rqs, "sharpness": sharp,
    }


def _fmt(x):
    return repr(float(x))


def write_report(report: CrossvalReport, outdir) -> list[Path]:
    """Write tab-delimited tables plus ``summary.json``; returns the paths."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def table(name, header, rows):
        path = out / name
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\t".join(header) + "\n")
            for r in rows:
                fh.write("\t".join(str(v) for v in r) + "\n")
        written.append(path)

    labels = [r.label for r in report.config.rules()]
    table(
        "scores.tsv",
        ["method", "score", "mean", "bootstrap_sd", "n_cases", "n_infinite", "skill"],
        [
            (m, lab, _fmt(s.mean_score), _fmt(s.bootstrap_sd), s.n_cases, s.n_infinite, _fmt(report.skills.get((m, lab), math.nan)))
            for m in report.methods
            for lab in labels
            if (s := report.summaries.get((m, lab))) is not None
        ],
    )
    table("parameters.tsv", ["method", "held_out_year", "parameter", "estimate", "std_error"],
          [(m, y, p, _fmt(e), _fmt(s)) for m, y, p, e, s in report.parameters])
    table("pit.tsv", ["method", "case_id", "pit"],
          [(m, cid, _fmt(v)) for m, ps in report.pit_sets.items() for cid, v in zip(ps.case_ids, ps.values)])
    table("pit_histogram.tsv", ["method", "bin_lower", "bin_upper", "count"],
          [(m, _fmt(i / len(h)), _fmt((i + 1) / len(h)), int(c)) for m, h in report.pit_histograms.items() for i, c in enumerate(h)])
    table("residual_quantiles.tsv", ["method", "reference", "model_quantile", "empirical_quantile", "band_lower", "band_upper"],
          [(m, d.reference, _fmt(a), _fmt(b), _fmt(lo), _fmt(hi))
           for m, d in report.residual_quantiles.items()
           for a, b, lo, hi in zip(d.model_quantiles, d.empirical_quantiles, d.band_lower, d.band_upper)])
    table("sharpness.tsv", ["method", "mean_predictive_sd", "sd_of_predictive_sd"],
          [(m, _fmt(a), _fmt(b)) for m, (a, b) in report.sharpness.items()])
    table("failures.tsv", ["method", "held_out_year", "message"], report.failures)

    summary = {
        "methods": report.methods,
        "reference": report.reference,
        "folds": [f.held_out_year for f in report.folds],
        "scores": {
            m: {lab: {"mean": s.mean_score, "bootstrap_sd": s.bootstrap_sd, "n_cases": s.n_cases,
                      "n_infinite": s.n_infinite, "skill": report.skills.get((m, lab))}
                for lab in labels if (s := report.summaries.get((m, lab))) is not None}
            for m in report.methods
        },
        "failures": [{"method": m, "year": y, "message": msg} for m, y, msg in report.failures],
    }
    path = out / "summary.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, allow_nan=True)
    written.append(path)
    return written


# --------------------------------------------------------------------------
# synthetic benchmark data

SYNTHETIC_TRUTH = {
    # effects per population-standardised covariate
    "location": {"(Intercept)": 13.0, "ff": 4.0, "ffVar": 1.0, "rMax": 0.6, "dP": -0.5},
    "logscale": {"(Intercept)": math.log(1.4), "ff": 0.1, "ffVar": 0.35},
    "shape": 0.15,
}


def synthetic_daily(years: int = 9, seed: int = 0, start_year: int = 2001) -> DailyTable:
    """Daily table whose peak wind follows a known non-stationary GEV.

    Covariates are drawn independently from fixed distributions; the peak
    wind is GEV given the covariates with the coefficients in
    ``SYNTHETIC_TRUTH`` applied to population-standardised covariates.
    """
    rng = np.random.default_rng(seed)
    start = date(start_year, 1, 1)
    end = date(start_year + years, 1, 1)
    n = (end - start).days
    dates = [start + timedelta(days=i) for i in range(n)]
    shape_k, scale_k = 9.0, 0.7
    raw = {
        "ff": rng.gamma(shape_k, scale_k, n),
        "ffVar": rng.gamma(2.0, 0.75, n),
        "rr": rng.exponential(0.2, n),
        "rMax": rng.exponential(1.0, n),
        "P": rng.normal(1013.0, 10.0, n),
        "dP": rng.normal(0.0, 5.0, n),
    }
    pop = {
        "ff": (shape_k * scale_k, math.sqrt(shape_k) * scale_k),
        "ffVar": (1.5, math.sqrt(2.0) * 0.75),
        "rr": (0.2, 0.2),
        "rMax": (1.0, 1.0),
        "P": (1013.0, 10.0),
        "dP": (0.0, 5.0),
    }
    z = {k: (v - pop[k][0]) / pop[k][1] for k, v in raw.items()}
    mu = np.full(n, SYNTHETIC_TRUTH["location"]["(Intercept)"])
    for k, b in SYNTHETIC_TRUTH["location"].items():
        if k != "(Intercept)":
            mu += b * z[k]
    ls = np.full(n, SYNTHETIC_TRUTH["logscale"]["(Intercept)"])
    for k, b in SYNTHETIC_TRUTH["logscale"].items():
        if k != "(Intercept)":
            ls += b * z[k]
    u = rng.random(n)
    u[u == 0.0] = np.nextafter(0.0, 1.0)
    y = np.asarray(GevParams(mu, np.exp(ls), SYNTHETIC_TRUTH["shape"]).quantile(u))
    return DailyTable(dates, y, {k: raw[k] for k in COVARIATES})


# --------------------------------------------------------------------------
# persistence of fitted methods


def save_fitted(fm: FittedMethod, path) -> list[Path]:
    """JSON model file; a Bayesian fit also writes its draws next to it."""
    from ..bayes import save_sample

    path = Path(path)
    spec = fm.spec
    doc = {
        "name": spec.name,
        "kind": spec.kind,
        "link": spec.link,
        "location_covariates": list(spec.location_covariates),
        "scale_covariates": list(spec.scale_covariates),
        "norm_stats": fm.stats.to_dict() if fm.stats is not None else None,
        "seed": fm.seed,
    }
    written = [path]
    if spec.kind == "glm":
        doc["glm"] = fm.model.to_dict()
    elif spec.kind == "bayes":
        draws_path = path.with_suffix(".posterior.tsv")
        save_sample(fm.model_full if fm.model_full is not None else fm.model, draws_path)
        doc["posterior"] = draws_path.name
        doc["predictive_draws"] = spec.predictive_draws
        written.append(draws_path)
    else:
        doc["coefficients"] = dict(zip(fm.model.param_names(), map(float, fm.model.to_vector())))
        ses = fm.std_errors if fm.std_errors is not None else np.full(fm.model.n_params, np.nan)
        doc["std_errors"] = [None if not math.isfinite(s) else float(s) for s in ses]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
    return written


def load_fitted(path) -> FittedMethod:
    from ..bayes import load_sample

    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        spec = MethodSpec(
            doc["name"], doc["kind"], tuple(doc["location_covariates"]), tuple(doc["scale_covariates"]), doc["link"],
            predictive_draws=doc.get("predictive_draws", 4000),
        )
    except (OSError, ValueError, KeyError) as exc:
        from ..errors import DataError

        raise DataError(f"cannot read model file {path}: {exc}") from None
    stats = NormStats.from_dict(doc["norm_stats"]) if doc.get("norm_stats") else None
    seed = int(doc.get("seed", 0))
    if spec.kind == "glm":
        from .glm import GlmFit

        return FittedMethod(spec, stats, GlmFit.from_dict(doc["glm"]), seed=seed)
    if spec.kind == "bayes":
        sample = load_sample(path.parent / doc["posterior"])
        return FittedMethod(spec, stats, _thin(sample, spec.predictive_draws), seed=seed, model_full=sample)
    template = NonStationaryGevModel.template(spec.location_covariates, spec.scale_covariates, spec.link)
    coeffs = doc["coefficients"]
    model = template.with_vector([coeffs[n] for n in template.param_names()])
    ses = np.array([math.nan if s is None else s for s in doc.get("std_errors", [])] or np.full(model.n_params, np.nan))
    return FittedMethod(spec, stats, model, ses, seed=seed)
