"""Bayesian non-stationary GEV with Metropolis-within-Gibbs and variable selection.

The scale always uses the log link.  Coefficients get independent normal
priors and the shape its own normal prior.  With variable selection on,
every covariate coefficient is written ``beta_j = z_j * nu_j`` with
``z_j ~ Bernoulli(1/2)`` and ``nu_j`` carrying the coefficient prior; ``z_j``
is drawn from its full conditional, ``nu_j`` by random-walk Metropolis while
included and straight from its prior while excluded.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numba import njit
from scipy.special import logsumexp

from .distributions import XI_ZERO_TOL, GevParams
from .errors import DomainError, EvScoreError
from .estimate import (
    DesignMatrix,
    NonStationaryGevModel,
    SHAPE_BOUNDS,
    fit,
    neg_log_likelihood,
)

log = logging.getLogger(__name__)

ACCEPTANCE_BAND = (0.05, 0.8)
_TARGET_ACCEPTANCE = 0.44


@dataclass(frozen=True)
class PriorSpec:
    """Prior variances for regression coefficients and for the shape."""

    coeff_variance: float = 1e4
    shape_variance: float = 1e2

    def __post_init__(self):
        if not (self.coeff_variance > 0 and self.shape_variance > 0):
            raise DomainError("prior variances must be positive")


@dataclass(frozen=True)
class ChainConfig:
    """Chain length, proposal scales and switches.

    ``proposal_sds=None`` derives them from a preliminary maximum-likelihood
    fit (``initial_sd_factor`` times each standard error).  With ``adapt``
    the sds are tuned towards an acceptance rate of 0.44 during burn-in only
    and frozen afterwards.
    """

    iterations: int = 100_000
    burn_in: int = 25_000
    proposal_sds: tuple | None = None
    seed: int = 0
    variable_selection: bool = False
    adapt: bool = True
    adapt_batch: int = 50
    initial_sd_factor: float = 0.05

    def __post_init__(self):
        if self.iterations < 1 or self.burn_in < 0 or self.burn_in >= self.iterations:
            raise DomainError("need 0 <= burn_in < iterations")
        if self.proposal_sds is not None:
            sds = tuple(float(s) for s in self.proposal_sds)
            if not all(s > 0 for s in sds):
                raise DomainError("proposal sds must be positive")
            object.__setattr__(self, "proposal_sds", sds)
        if self.adapt_batch < 1:
            raise DomainError("adapt_batch must be at least 1")


@dataclass
class PosteriorSample:
    """Post-burn-in draws of the effective coefficients ``z_j * nu_j`` and shape."""

    names: list
    draws: np.ndarray
    indicator_names: list | None
    indicator_draws: np.ndarray | None
    acceptance_rates: np.ndarray
    proposal_sds: np.ndarray
    location_covariates: tuple = ()
    scale_covariates: tuple = ()
    attempts: np.ndarray | None = None

    @property
    def n_draws(self):
        return self.draws.shape[0]

    def column(self, name):
        return self.draws[:, self.names.index(name)]

    def model_at(self, i) -> NonStationaryGevModel:
        p = 1 + len(self.location_covariates)
        q = 1 + len(self.scale_covariates)
        row = self.draws[i]
        return NonStationaryGevModel(
            row[:p], row[p : p + q], row[p + q], "log", self.location_covariates, self.scale_covariates
        )

    def posterior_mean_model(self) -> NonStationaryGevModel:
        m = self.model_at(0)
        return m.with_vector(self.draws.mean(axis=0))

    def interval(self, level=0.9):
        a = (1.0 - level) / 2.0
        return np.quantile(self.draws, [a, 1.0 - a], axis=0)

    def acceptance_flags(self, band=ACCEPTANCE_BAND, min_attempts=100):
        """Names of parameters whose acceptance rate lies outside ``band``.

        Coefficients that were rarely proposed (an excluded covariate under
        variable selection) have no meaningful rate and are skipped.
        """
        out = []
        tries = self.attempts if self.attempts is not None else np.full(len(self.names), np.inf)
        for name, r, n in zip(self.names, self.acceptance_rates, tries):
            if n >= min_attempts and np.isfinite(r) and not band[0] < r < band[1]:
                out.append(name)
        return out


# --------------------------------------------------------------------------
# likelihood and prior


@njit(cache=True)
def _gev_loglik_sum(y, mu, logsig, xi, xi_tol):
    small = abs(xi) < xi_tol
    xi_eff = 0.0 if small else xi
    total = 0.0
    for i in range(y.size):
        z = (y[i] - mu[i]) * math.exp(-logsig[i])
        if small:
            t = z
        else:
            a = xi * z
            if a <= -1.0:
                return -math.inf
            t = math.log1p(a) / xi
        total += -(1.0 + xi_eff) * t - math.exp(-t) - logsig[i]
    return total


def gev_loglik(y, mu, logsig, xi):
    """Summed GEV log density with log-scale predictor ``logsig``."""
    if not math.isfinite(xi):
        return -math.inf
    return _gev_loglik_sum(
        np.ascontiguousarray(y, dtype=float),
        np.ascontiguousarray(mu, dtype=float),
        np.ascontiguousarray(logsig, dtype=float),
        float(xi),
        XI_ZERO_TOL,
    )


def _normal_logpdf(x, var):
    return -0.5 * (math.log(2.0 * math.pi * var) + x * x / var)


def log_prior(model: NonStationaryGevModel, priors: PriorSpec) -> float:
    coeffs = np.concatenate([model.location_coeffs, model.scale_coeffs])
    lp = float(np.sum(-0.5 * (np.log(2.0 * math.pi * priors.coeff_variance) + coeffs**2 / priors.coeff_variance)))
    return lp + _normal_logpdf(model.shape, priors.shape_variance)


def log_posterior(model: NonStationaryGevModel, data: DesignMatrix | None, priors: PriorSpec = PriorSpec()) -> float:
    """Unnormalised log posterior; ``-inf`` for infeasible states.

    ``data=None`` (or a design with no rows) evaluates the prior alone.
    """
    if model.scale_link != "log":
        raise DomainError("the Bayesian model uses the log scale link only")
    lp = log_prior(model, priors)
    if data is None or data.rows == 0:
        return lp
    nll = neg_log_likelihood(model, data)
    return -math.inf if not math.isfinite(nll) else lp - nll


# --------------------------------------------------------------------------
# sampler


LikelihoodFn = Callable[[np.ndarray, np.ndarray, np.ndarray, float], np.ndarray]


class _State:
    """Current coefficients, linear predictors and cached log likelihood."""

    def __init__(self, x_loc, x_scale, y, theta, z, nu, loglik_fn):
        self.x_loc, self.x_scale, self.y = x_loc, x_scale, y
        self.p = x_loc.shape[1]
        self.theta = theta  # effective coefficients
        self.z = z
        self.nu = nu
        self.loglik_fn = loglik_fn
        self.mu = x_loc @ theta[: self.p]
        self.logsig = x_scale @ theta[self.p : -1]
        self.ll = self.loglik(self.mu, self.logsig, theta[-1])

    def loglik(self, mu, logsig, xi):
        if self.loglik_fn is None:
            return gev_loglik(self.y, mu, logsig, xi)
        with np.errstate(over="ignore"):
            v = float(np.sum(self.loglik_fn(self.y, mu, np.exp(logsig), xi)))
        return v if not math.isnan(v) else -math.inf

    def trial(self, k, value):
        """Log likelihood and predictors with coefficient ``k`` set to ``value``."""
        delta = value - self.theta[k]
        mu, logsig, xi = self.mu, self.logsig, self.theta[-1]
        if k == self.theta.size - 1:
            xi = value
        elif k < self.p:
            mu = self.mu + delta * self.x_loc[:, k]
        else:
            logsig = self.logsig + delta * self.x_scale[:, k - self.p]
        return self.loglik(mu, logsig, xi), mu, logsig

    def commit(self, k, value, ll, mu, logsig):
        self.theta[k] = value
        self.mu, self.logsig, self.ll = mu, logsig, ll


def _selectable(p, q):
    """Indices of covariate (non-intercept, non-shape) coefficients."""
    return [k for k in range(p + q) if k not in (0, p)]


def _initial_state(template, data, priors, cfg, init):
    """Starting coefficients and proposal sds, from a likelihood fit when possible."""
    k = template.n_params
    if init is not None:
        theta = init.to_vector()
        sds = np.full(k, 0.05)
    else:
        sds = np.full(k, 0.05)
        try:
            res = fit(template, data, "mle", "nelder_mead", seed=cfg.seed, min_rows_per_param=1)
            theta = res.model.to_vector()
            ok = np.isfinite(res.std_errors) & (res.std_errors > 0)
            sds[ok] = cfg.initial_sd_factor * res.std_errors[ok]
        except EvScoreError as exc:
            log.warning("preliminary fit failed (%s); starting from moments", exc)
            from .estimate import moment_start

            theta = moment_start(template, data, 0.0).to_vector()
    if cfg.proposal_sds is not None:
        if len(cfg.proposal_sds) != k:
            raise DomainError(f"expected {k} proposal sds, got {len(cfg.proposal_sds)}")
        sds = np.asarray(cfg.proposal_sds, dtype=float)
    return np.asarray(theta, dtype=float).copy(), sds


def run_chain(
    data: DesignMatrix,
    priors: PriorSpec = PriorSpec(),
    cfg: ChainConfig = ChainConfig(),
    location_covariates: Sequence[str] | None = None,
    scale_covariates: Sequence[str] | None = None,
    likelihood: LikelihoodFn | None = None,
    init: NonStationaryGevModel | None = None,
    min_rows: int = 50,
) -> PosteriorSample:
    """Metropolis-within-Gibbs sampler for the log-link non-stationary GEV.

    Parameters
    ----------
    location_covariates, scale_covariates
        Covariate names entering the location and log scale; default is every
        covariate of ``data`` in both.
    likelihood
        Optional replacement likelihood ``(y, mu, sigma, xi) -> per-row log
        densities``, used to check the sampler against known posteriors.
    init
        Starting model; by default a maximum-likelihood fit.
    """
    if data.rows < min_rows:
        raise DomainError(f"need at least {min_rows} rows, got {data.rows}")
    names = list(data.covariates)
    loc_cov = tuple(names if location_covariates is None else location_covariates)
    scale_cov = tuple(names if scale_covariates is None else scale_covariates)
    template = NonStationaryGevModel.template(loc_cov, scale_cov, "log")
    x_loc = data.columns(loc_cov)
    x_scale = data.columns(scale_cov)
    p, q = x_loc.shape[1], x_scale.shape[1]
    n_par = p + q + 1

    if init is None and likelihood is not None:
        # no point fitting the GEV likelihood when it is not the target
        init = template.with_vector(np.r_[np.mean(data.response), np.zeros(p - 1), 0.0, np.zeros(q - 1), 0.0])
    theta, sds = _initial_state(template, data, priors, cfg, init)
    rng = np.random.default_rng(cfg.seed)

    selectable = _selectable(p, q) if cfg.variable_selection else []
    z = np.ones(n_par, dtype=np.int8)
    nu = theta.copy()
    state = _State(x_loc, x_scale, data.response, theta, z, nu, likelihood)
    if not math.isfinite(state.ll):
        raise DomainError("initial state has a non-finite log likelihood")

    cvar, svar = priors.coeff_variance, priors.shape_variance
    prior_var = np.full(n_par, cvar)
    prior_var[-1] = svar
    csd = math.sqrt(cvar)

    n_keep = cfg.iterations - cfg.burn_in
    draws = np.empty((n_keep, n_par))
    ind_draws = np.empty((n_keep, len(selectable)), dtype=np.int8) if selectable else None
    accepted = np.zeros(n_par)
    attempted = np.zeros(n_par)
    batch_acc = np.zeros(n_par)
    batch_att = np.zeros(n_par)
    batch_no = 0
    sel_set = set(selectable)
    lo, hi = SHAPE_BOUNDS

    for it in range(cfg.iterations):
        burning = it < cfg.burn_in
        for k in range(n_par):
            if k in sel_set:
                # Gibbs step for the indicator given nu_k
                if z[k] == 1:
                    ll1 = state.ll
                    ll0, mu0, ls0 = state.trial(k, 0.0)
                else:
                    ll0 = state.ll
                    ll1, mu1, ls1 = state.trial(k, nu[k])
                d = ll0 - ll1
                prob1 = 0.0 if d == math.inf else (1.0 if d == -math.inf else 1.0 / (1.0 + math.exp(min(d, 700.0))))
                new_z = 1 if rng.random() < prob1 else 0
                if new_z != z[k]:
                    if new_z == 1:
                        state.commit(k, nu[k], ll1, mu1, ls1)
                    else:
                        state.commit(k, 0.0, ll0, mu0, ls0)
                    z[k] = new_z
                if z[k] == 0:
                    nu[k] = csd * rng.standard_normal()
                    continue
            cur = state.theta[k]
            prop = cur + sds[k] * rng.standard_normal()
            u = rng.random()
            attempted[k] += not burning
            batch_att[k] += 1
            if k == n_par - 1 and not lo < prop < hi:
                continue
            ll_new, mu_new, ls_new = state.trial(k, prop)
            log_ratio = ll_new - state.ll + (cur * cur - prop * prop) / (2.0 * prior_var[k])
            if math.isfinite(ll_new) and math.log(u) < log_ratio:
                state.commit(k, prop, ll_new, mu_new, ls_new)
                nu[k] = prop
                accepted[k] += not burning
                batch_acc[k] += 1

        if burning and cfg.adapt and (it + 1) % cfg.adapt_batch == 0:
            batch_no += 1
            step = min(0.5, 1.0 / math.sqrt(batch_no))
            tried = batch_att > 0
            rate = np.divide(batch_acc, batch_att, out=np.zeros(n_par), where=tried)
            sds[tried] *= np.exp(np.where(rate[tried] > _TARGET_ACCEPTANCE, step, -step))
            batch_acc[:] = 0.0
            batch_att[:] = 0.0
        if not burning:
            row = it - cfg.burn_in
            draws[row] = state.theta
            if ind_draws is not None:
                ind_draws[row] = z[selectable]

    with np.errstate(invalid="ignore", divide="ignore"):
        rates = np.where(attempted > 0, accepted / np.maximum(attempted, 1), np.nan)
    sample = PosteriorSample(
        names=template.param_names(),
        draws=draws,
        indicator_names=[template.param_names()[k] for k in selectable] if selectable else None,
        indicator_draws=ind_draws,
        acceptance_rates=rates,
        proposal_sds=sds.copy(),
        location_covariates=loc_cov,
        scale_covariates=scale_cov,
        attempts=attempted.copy(),
    )
    flagged = sample.acceptance_flags()
    if flagged:
        log.warning("acceptance rates outside %s for %s", ACCEPTANCE_BAND, flagged)
    return sample


# --------------------------------------------------------------------------
# summaries


def inclusion_probabilities(s: PosteriorSample) -> np.ndarray:
    """Posterior inclusion probability of each selectable coefficient."""
    if s.indicator_draws is None:
        raise DomainError("chain was run without variable selection")
    return s.indicator_draws.mean(axis=0)


def batch_means_se(x, n_batches=20):
    """Monte Carlo standard error of the mean of a correlated series."""
    x = np.asarray(x, dtype=float)
    m = x.size // n_batches
    if m < 1:
        raise DomainError("series too short for batch means")
    means = x[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(np.std(means, ddof=1) / math.sqrt(n_batches))


def running_means(s: PosteriorSample) -> np.ndarray:
    """Cumulative mean of every parameter, one row per draw (trace diagnostics)."""
    return np.cumsum(s.draws, axis=0) / np.arange(1, s.n_draws + 1)[:, None]


def posterior_predictive_sample(s: PosteriorSample, covariate_row, n_per_draw: int = 1, seed: int = 0) -> np.ndarray:
    """GEV draws at every posterior draw's parameters, draw-major order."""
    if n_per_draw < 1:
        raise DomainError("n_per_draw must be at least 1")
    p = 1 + len(s.location_covariates)
    q = 1 + len(s.scale_covariates)
    xl = np.r_[1.0, [float(covariate_row[c]) for c in s.location_covariates]]
    xs = np.r_[1.0, [float(covariate_row[c]) for c in s.scale_covariates]]
    mu = s.draws[:, :p] @ xl
    sigma = np.exp(s.draws[:, p : p + q] @ xs)
    xi = s.draws[:, p + q]
    u = np.random.default_rng(seed).random((s.n_draws, n_per_draw))
    u[u == 0.0] = np.nextafter(0.0, 1.0)
    params = GevParams(mu[:, None], sigma[:, None], xi[:, None])
    return np.asarray(params.quantile(u)).ravel()


def silverman_bandwidth(sample) -> float:
    x = np.asarray(sample, dtype=float)
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.quantile(x, [0.75, 0.25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return 0.9 * spread * x.size ** (-0.2)


def predictive_log_density_estimate(sample, y, min_size: int = 100):
    """Log of the Gaussian kernel density estimate (Silverman bandwidth) at ``y``.

    Summed in log space, so points far outside the sample get a large
    negative value instead of underflowing to ``-inf``.
    """
    x = np.asarray(sample, dtype=float).ravel()
    if x.size < min_size:
        raise DomainError(f"density estimate needs at least {min_size} sample points")
    h = silverman_bandwidth(x)
    if not h > 0:
        raise DomainError("sample has zero spread")
    yy = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.empty(yy.size)
    log_norm = -math.log(x.size * h * math.sqrt(2.0 * math.pi))
    for i, v in enumerate(yy):
        out[i] = log_norm + logsumexp(-0.5 * ((v - x) / h) ** 2)
    return float(out[0]) if np.ndim(y) == 0 else out


def predictive_density_estimate(sample, y, min_size: int = 100):
    """Gaussian kernel density estimate (Silverman bandwidth) at ``y``."""
    return _ret_exp(predictive_log_density_estimate(sample, y, min_size))


def _ret_exp(v):
    return float(math.exp(v)) if np.ndim(v) == 0 else np.exp(v)


# --------------------------------------------------------------------------
# persistence


def save_sample(s: PosteriorSample, path) -> None:
    """Write draws as whitespace-free tab-delimited text with a header row."""
    header = list(s.names)
    cols = [s.draws]
    if s.indicator_draws is not None:
        header += [f"z|{n}" for n in s.indicator_names]
        cols.append(s.indicator_draws.astype(float))
    table = np.hstack(cols)
    meta = {
        "location": ",".join(s.location_covariates),
        "scale": ",".join(s.scale_covariates),
        "acceptance": ",".join(repr(float(r)) for r in s.acceptance_rates),
        "proposal_sds": ",".join(repr(float(r)) for r in s.proposal_sds),
    }
    with open(path, "w", encoding="utf-8") as fh:
        for key, val in meta.items():
            fh.write(f"# {key}={val}\n")
        fh.write("\t".join(header) + "\n")
        np.savetxt(fh, table, delimiter="\t", fmt="%.17g")


def load_sample(path) -> PosteriorSample:
    meta = {}
    with open(path, encoding="utf-8") as fh:
        line = fh.readline()
        while line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key] = val
            line = fh.readline()
        header = line.rstrip("\n").split("\t")
        table = np.loadtxt(fh, delimiter="\t", ndmin=2)

    def split(v):
        return tuple(x for x in v.split(",") if x)

    is_ind = [h.startswith("z|") for h in header]
    par_idx = [i for i, f in enumerate(is_ind) if not f]
    ind_idx = [i for i, f in enumerate(is_ind) if f]
    return PosteriorSample(
        names=[header[i] for i in par_idx],
        draws=table[:, par_idx],
        indicator_names=[header[i][2:] for i in ind_idx] or None,
        indicator_draws=table[:, ind_idx].astype(np.int8) if ind_idx else None,
        acceptance_rates=np.array([float(x) for x in split(meta.get("acceptance", ""))]),
        proposal_sds=np.array([float(x) for x in split(meta.get("proposal_sds", ""))]),
        location_covariates=split(meta.get("location", "")),
        scale_covariates=split(meta.get("scale", "")),
    )
