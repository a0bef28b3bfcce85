"""INI configuration for fits, chains and cross-validation runs.

Sections (all optional)::

    [model]      link, location_covariates, scale_covariates
    [optimizer]  optimizer, budget
    [chain]      iterations, burn_in, variable_selection, adapt, initial_sd_factor
    [prior]      coeff_variance, shape_variance
    [crossval]   methods, reference, thresholds, quantiles, bootstrap_replicates,
                 pit_bins, rq_reference, rq_replicates
    [method:NAME]  kind plus any [model]/[optimizer]/[chain] key, overriding them

Lists are comma separated.  The master seed always comes from ``--seed``.
"""

from __future__ import annotations

import configparser
from pathlib import Path

from ..bayes import ChainConfig, PriorSpec
from ..errors import DataError
from .crossval import DEFAULT_QUANTILES, DEFAULT_THRESHOLDS, CrossvalConfig, MethodSpec

LINK_ALIASES = {"id": "identity", "identity": "identity", "log": "log", "logarithmic": "log"}


def split_list(text):
    return tuple(x.strip() for x in (text or "").split(",") if x.strip())


def parse_link(text):
    try:
        return LINK_ALIASES[text.strip().lower()]
    except KeyError:
        raise DataError(f"unknown link {text!r}") from None


def load(path=None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    if path is not None:
        if not Path(path).exists():
            raise DataError(f"config file {path} does not exist")
        try:
            cp.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise DataError(f"bad config file: {exc}") from None
    return cp


def _get(cp, sections, key, default=None, kind=str):
    for sec in sections:
        if cp.has_option(sec, key):
            raw = cp.get(sec, key)
            try:
                if kind is bool:
                    return cp.getboolean(sec, key)
                return kind(raw) if raw.strip() != "" else default
            except ValueError:
                raise DataError(f"[{sec}] {key}: cannot parse {raw!r}") from None
    return default


def chain_config(cp, sections=("chain",), seed=0, **overrides) -> ChainConfig:
    vals = dict(
        iterations=_get(cp, sections, "iterations", 100_000, int),
        burn_in=_get(cp, sections, "burn_in", 25_000, int),
        variable_selection=_get(cp, sections, "variable_selection", False, bool),
        adapt=_get(cp, sections, "adapt", True, bool),
        initial_sd_factor=_get(cp, sections, "initial_sd_factor", 0.05, float),
    )
    vals.update({k: v for k, v in overrides.items() if v is not None})
    return ChainConfig(seed=seed, **vals)


def prior_spec(cp) -> PriorSpec:
    return PriorSpec(
        _get(cp, ("prior",), "coeff_variance", 1e4, float),
        _get(cp, ("prior",), "shape_variance", 1e2, float),
    )


def method_specs(cp) -> list[MethodSpec]:
    """Method list from ``[crossval] methods`` and the ``[method:NAME]`` sections."""
    names = split_list(_get(cp, ("crossval",), "methods", ""))
    if not names:
        names = tuple(s.split(":", 1)[1] for s in cp.sections() if s.startswith("method:"))
    specs = []
    for name in names:
        sec = f"method:{name}"
        if not cp.has_section(sec):
            raise DataError(f"method {name!r} has no [{sec}] section")
        chain_secs = (sec, "chain")
        specs.append(
            MethodSpec(
                name=name,
                kind=_get(cp, (sec,), "kind", "mle"),
                location_covariates=split_list(_get(cp, (sec, "model"), "location_covariates", "")),
                scale_covariates=split_list(_get(cp, (sec, "model"), "scale_covariates", "")),
                link=parse_link(_get(cp, (sec, "model"), "link", "log")),
                optimizer=_get(cp, (sec, "optimizer"), "optimizer", "nelder_mead"),
                budget=_get(cp, (sec, "optimizer"), "budget", None, int),
                chain=chain_config(cp, chain_secs, 0,
                                   iterations=_get(cp, chain_secs, "iterations", 20_000, int),
                                   burn_in=_get(cp, chain_secs, "burn_in", 5_000, int)),
                priors=prior_spec(cp),
                predictive_draws=_get(cp, (sec,), "predictive_draws", 4000, int),
            )
        )
    return specs


def crossval_config(cp, seed=0) -> CrossvalConfig:
    sec = ("crossval",)
    thresholds = split_list(_get(cp, sec, "thresholds", ""))
    quantiles = split_list(_get(cp, sec, "quantiles", ""))
    try:
        return CrossvalConfig(
            thresholds=tuple(float(t) for t in thresholds) or DEFAULT_THRESHOLDS,
            quantiles=tuple(float(q) for q in quantiles) or DEFAULT_QUANTILES,
            bootstrap_replicates=_get(cp, sec, "bootstrap_replicates", 1000, int),
            seed=seed,
            reference=_get(cp, sec, "reference", None),
            pit_bins=_get(cp, sec, "pit_bins", 10, int),
            rq_reference=_get(cp, sec, "rq_reference", "gumbel"),
            rq_replicates=_get(cp, sec, "rq_replicates", 1000, int),
        )
    except ValueError as exc:
        raise DataError(f"[crossval]: {exc}") from None


DEFAULT_BENCHMARK = """\
[crossval]
methods = stationary, gev_mle_ff, gev_mle, gev_crps, gev_bayes_vs, glm
reference = stationary

[method:stationary]
kind = mle

[method:gev_mle_ff]
kind = mle
location_covariates = ff
scale_covariates = ff

[method:gev_mle]
kind = mle
location_covariates = ff, ffVar, rr, rMax, P, dP
scale_covariates = ff, ffVar, rr, rMax, P, dP

[method:gev_crps]
kind = crps
location_covariates = ff, ffVar, rr, rMax, P, dP
scale_covariates = ff, ffVar, rr, rMax, P, dP

[method:gev_bayes_vs]
kind = bayes
location_covariates = ff, ffVar, rr, rMax, P, dP
scale_covariates = ff, ffVar, rr, rMax, P, dP
variable_selection = true
iterations = 10000
burn_in = 2500

[method:glm]
kind = glm
location_covariates = ffVar, rr, rMax, P, dP
"""


def default_benchmark() -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp.read_string(DEFAULT_BENCHMARK)
    return cp
