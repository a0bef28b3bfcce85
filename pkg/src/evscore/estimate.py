"""Non-stationary GEV regression fitted by optimum score estimation.

The location is linear in the covariates, the scale is linear on the
identity or log scale, and the shape is a single constant::

    mu(x) = m0 + m1 x1 + ...,   h(sigma(x)) = s0 + s1 x1 + ...,   xi = xi0

Parameters are estimated by minimising either the summed ignorance score
(maximum likelihood) or the summed closed-form CRPS, with Nelder-Mead,
simulated annealing, or annealing followed by a Nelder-Mead polish.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .distributions import GevParams, gev_logpdf
from .errors import DomainError, InfeasibleScaleError, InfeasibleStartError, SingularHessianError
from .scoring import crps_gev
from .specfun import EULER_GAMMA

log = logging.getLogger(__name__)

OBJECTIVES = ("mle", "min_crps")
OPTIMIZERS = ("nelder_mead", "simulated_annealing", "chained")
LINKS = ("identity", "log")

# shape box used while optimising; outside it the objective is +inf
SHAPE_BOUNDS = (-0.99, 0.95)


@dataclass
class NonStationaryGevModel:
    """Regression coefficients of a non-stationary GEV."""

    location_coeffs: np.ndarray
    scale_coeffs: np.ndarray
    shape: float
    scale_link: str = "identity"
    location_covariates: tuple = ()
    scale_covariates: tuple = ()

    def __post_init__(self):
        self.location_coeffs = np.asarray(self.location_coeffs, dtype=float).ravel()
        self.scale_coeffs = np.asarray(self.scale_coeffs, dtype=float).ravel()
        self.shape = float(self.shape)
        self.location_covariates = tuple(self.location_covariates)
        self.scale_covariates = tuple(self.scale_covariates)
        if self.scale_link not in LINKS:
            raise ValueError(f"scale_link must be one of {LINKS}")
        if self.location_coeffs.size != 1 + len(self.location_covariates):
            raise ValueError("need one location coefficient per covariate plus an intercept")
        if self.scale_coeffs.size != 1 + len(self.scale_covariates):
            raise ValueError("need one scale coefficient per covariate plus an intercept")

    @classmethod
    def template(cls, location_covariates=(), scale_covariates=(), scale_link="identity"):
        """Model with all-zero coefficients for the given covariate lists."""
        return cls(
            np.zeros(1 + len(location_covariates)),
            np.zeros(1 + len(scale_covariates)),
            0.0,
            scale_link,
            tuple(location_covariates),
            tuple(scale_covariates),
        )

    @property
    def n_params(self):
        return self.location_coeffs.size + self.scale_coeffs.size + 1

    @property
    def covariates(self):
        """All covariate names used by the model, without duplicates."""
        return tuple(dict.fromkeys(self.location_covariates + self.scale_covariates))

    def param_names(self):
        scale_prefix = "logsigma" if self.scale_link == "log" else "sigma"
        names = ["mu:(Intercept)"] + [f"mu:{c}" for c in self.location_covariates]
        names += [f"{scale_prefix}:(Intercept)"] + [f"{scale_prefix}:{c}" for c in self.scale_covariates]
        return names + ["xi"]

    def to_vector(self):
        return np.concatenate([self.location_coeffs, self.scale_coeffs, [self.shape]])

    def with_vector(self, theta):
        theta = np.asarray(theta, dtype=float)
        p = self.location_coeffs.size
        q = self.scale_coeffs.size
        return replace(
            self,
            location_coeffs=theta[:p].copy(),
            scale_coeffs=theta[p : p + q].copy(),
            shape=float(theta[p + q]),
        )


@dataclass
class DesignMatrix:
    """Covariate columns (by name) and the response column.

    Covariates are normally standardised first (see
    :func:`evscore.pipeline.normalize`), but nothing here requires it.
    """

    covariates: Mapping[str, np.ndarray]
    response: np.ndarray

    def __post_init__(self):
        self.response = np.asarray(self.response, dtype=float).ravel()
        self.covariates = {k: np.asarray(v, dtype=float).ravel() for k, v in self.covariates.items()}
        for name, col in self.covariates.items():
            if col.size != self.response.size:
                raise DomainError(f"covariate {name!r} has {col.size} rows, response has {self.response.size}")
            if not np.all(np.isfinite(col)):
                raise DomainError(f"covariate {name!r} has missing or non-finite values")
        if not np.all(np.isfinite(self.response)):
            raise DomainError("response has missing or non-finite values")

    @property
    def rows(self):
        return self.response.size

    def columns(self, names):
        """Matrix with an intercept column followed by the named covariates."""
        missing = [n for n in names if n not in self.covariates]
        if missing:
            raise DomainError(f"unknown covariates: {missing}")
        cols = [np.ones(self.rows)] + [self.covariates[n] for n in names]
        return np.column_stack(cols)

    def subset(self, index):
        index = np.asarray(index)
        return DesignMatrix({k: v[index] for k, v in self.covariates.items()}, self.response[index])

    def row(self, i):
        return {k: float(v[i]) for k, v in self.covariates.items()}


@dataclass
class FitResult:
    """Outcome of :func:`fit`; ``std_errors`` holds NaN where undefined."""

    model: NonStationaryGevModel
    objective_value: float
    std_errors: np.ndarray
    converged: bool
    evaluations: int
    objective: str = "mle"
    optimizer: str = "nelder_mead"
    history: list = field(default_factory=list, repr=False)


# --------------------------------------------------------------------------
# predictive parameters and objectives


def _scale_from_predictor(eta, link):
    if link == "log":
        return np.exp(eta)
    return eta


def predictive_params(model: NonStationaryGevModel, covariate_row) -> GevParams:
    """GEV parameters for one covariate row (a name -> value mapping).

    Raises
    ------
    InfeasibleScaleError
        If the identity link gives a non-positive scale.
    """
    loc = model.location_coeffs[0] + sum(
        b * float(covariate_row[c]) for b, c in zip(model.location_coeffs[1:], model.location_covariates)
    )
    eta = model.scale_coeffs[0] + sum(
        b * float(covariate_row[c]) for b, c in zip(model.scale_coeffs[1:], model.scale_covariates)
    )
    sigma = float(_scale_from_predictor(eta, model.scale_link))
    if not sigma > 0:
        raise InfeasibleScaleError(f"scale predictor gives sigma = {sigma:g} <= 0")
    return GevParams(float(loc), sigma, model.shape)


def predictive_params_all(model: NonStationaryGevModel, data: DesignMatrix) -> GevParams:
    """Vectorised :func:`predictive_params` over all rows of ``data``."""
    mu = data.columns(model.location_covariates) @ model.location_coeffs
    eta = data.columns(model.scale_covariates) @ model.scale_coeffs
    sigma = _scale_from_predictor(eta, model.scale_link)
    if not np.all(sigma > 0):
        raise InfeasibleScaleError("scale predictor is non-positive on some rows")
    return GevParams(mu, sigma, model.shape)


class _Problem:
    """Design arrays and row-wise objective for one (template, data, objective)."""

    def __init__(self, template, data, objective, shape_bounds=None):
        if objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        self.template = template
        self.objective = objective
        self.shape_bounds = shape_bounds
        self.x_loc = data.columns(template.location_covariates)
        self.x_scale = data.columns(template.scale_covariates)
        self.y = data.response
        self.p = self.x_loc.shape[1]
        self.q = self.x_scale.shape[1]
        self.evaluations = 0

    def rows(self, theta):
        """Per-row contributions; an all-inf array marks an infeasible point."""
        self.evaluations += 1
        theta = np.asarray(theta, dtype=float)
        xi = theta[-1]
        if not np.isfinite(theta).all():
            return np.full(self.y.size, np.inf)
        if self.shape_bounds is not None and not self.shape_bounds[0] < xi < self.shape_bounds[1]:
            return np.full(self.y.size, np.inf)
        mu = self.x_loc @ theta[: self.p]
        eta = self.x_scale @ theta[self.p : self.p + self.q]
        sigma = _scale_from_predictor(eta, self.template.scale_link)
        if not np.all(sigma > 0) or not np.all(np.isfinite(sigma)):
            return np.full(self.y.size, np.inf)
        params = GevParams(mu, sigma, xi)
        if self.objective == "mle":
            return -np.asarray(gev_logpdf(params, self.y))
        if xi >= 1.0:
            return np.full(self.y.size, np.inf)
        return np.asarray(crps_gev(params, self.y))

    def value(self, theta):
        v = float(np.sum(self.rows(theta)))
        return v if not math.isnan(v) else math.inf


def neg_log_likelihood(model: NonStationaryGevModel, data: DesignMatrix) -> float:
    """Summed ignorance score; ``inf`` if any row is outside its support."""
    if data.rows == 0:
        raise DomainError("no data")
    return _Problem(model, data, "mle").value(model.to_vector())


def total_crps(model: NonStationaryGevModel, data: DesignMatrix) -> float:
    """Summed closed-form CRPS; ``inf`` where the scale is infeasible."""
    if data.rows == 0:
        raise DomainError("no data")
    if model.shape >= 1.0:
        from .errors import ShapeRangeError

        raise ShapeRangeError("CRPS needs shape < 1")
    return _Problem(model, data, "min_crps").value(model.to_vector())


def objective_value(model, data, objective):
    return neg_log_likelihood(model, data) if objective == "mle" else total_crps(model, data)


# --------------------------------------------------------------------------
# starting values and parameter scales


def moment_start(template: NonStationaryGevModel, data: DesignMatrix, shape=0.1) -> NonStationaryGevModel:
    """Gumbel method-of-moments start: covariate coefficients zero."""
    y = data.response
    sigma = float(np.std(y, ddof=1)) * math.sqrt(6.0) / math.pi
    if not sigma > 0:
        sigma = 1.0
    mu = float(np.mean(y)) - EULER_GAMMA * sigma
    loc = np.zeros(template.location_coeffs.size)
    loc[0] = mu
    sc = np.zeros(template.scale_coeffs.size)
    sc[0] = math.log(sigma) if template.scale_link == "log" else sigma
    return replace(template, location_coeffs=loc, scale_coeffs=sc, shape=shape)


def parameter_scales(template: NonStationaryGevModel, data: DesignMatrix) -> np.ndarray:
    """Typical magnitude of each parameter, used for step sizes."""
    sigma = float(np.std(data.response, ddof=1)) * math.sqrt(6.0) / math.pi or 1.0
    loc = np.full(template.location_coeffs.size, sigma)
    sc = np.full(template.scale_coeffs.size, 1.0 if template.scale_link == "log" else sigma)
    # shape lives on a much smaller natural scale than location/scale
    return np.concatenate([loc, sc, [0.1]])


def _feasible_start(problem, template, data, init):
    if init is not None:
        theta = init.to_vector()
        if not math.isfinite(problem.value(theta)):
            raise InfeasibleStartError("supplied initial model has an infinite objective")
        return theta
    for shape in (0.1, 0.0, -0.1):
        theta = moment_start(template, data, shape).to_vector()
        if math.isfinite(problem.value(theta)):
            return theta
    raise InfeasibleStartError("no feasible moment-based starting point")


# --------------------------------------------------------------------------
# optimisers


def _nelder_mead(problem, theta0, scales, budget, fatol=1e-8, restarts=3):
    """Nelder-Mead with restarts from the incumbent until it stops improving."""
    theta = np.asarray(theta0, dtype=float)
    f = problem.value(theta)
    used = 0
    converged = False
    for _ in range(restarts + 1):
        simplex = np.vstack([theta] + [theta + 0.1 * scales[i] * np.eye(theta.size)[i] for i in range(theta.size)])
        res = minimize(
            problem.value,
            theta,
            method="Nelder-Mead",
            options={
                "maxfev": max(budget - used, theta.size + 2),
                "fatol": fatol,
                "xatol": np.inf,
                "initial_simplex": simplex,
                "adaptive": theta.size > 4,
            },
        )
        used += res.nfev
        improved = f - res.fun
        if res.fun <= f:
            theta, f = res.x, res.fun
        if not res.success or used >= budget:
            converged = False
            break
        converged = True
        if improved < fatol:
            break
    return theta, f, converged, used


def _simulated_annealing(problem, theta0, scales, budget, rng, probes=50, per_temp=20, cooling=0.95):
    """Metropolis annealing with geometric cooling and Gaussian proposals."""
    step = 0.1 * scales
    x = np.asarray(theta0, dtype=float)
    fx = problem.value(x)
    best_x, best_f = x.copy(), fx
    used = 1

    probe_vals = []
    for _ in range(probes):
        v = problem.value(x + step * rng.standard_normal(x.size))
        used += 1
        if math.isfinite(v):
            probe_vals.append(v)
    spread = float(np.std(probe_vals)) if len(probe_vals) > 1 else 0.0
    t0 = spread if spread > 0 else max(1.0, abs(fx) * 1e-3)

    k = 0
    best_at = 0
    while used < budget:
        temp = t0 * cooling**k
        for _ in range(per_temp):
            if used >= budget:
                break
            cand = x + step * rng.standard_normal(x.size)
            fc = problem.value(cand)
            used += 1
            u = rng.random()
            if fc <= fx or (math.isfinite(fc) and u < math.exp(-(fc - fx) / temp)):
                x, fx = cand, fc
                if fx < best_f - 1e-8:
                    best_at = used
                if fx < best_f:
                    best_x, best_f = x.copy(), fx
        k += 1
    # no improvement over the final quarter of the budget counts as settled
    converged = best_at <= 0.75 * budget
    return best_x, best_f, converged, used


def fit(
    template: NonStationaryGevModel,
    data: DesignMatrix,
    objective: str = "mle",
    optimizer: str = "nelder_mead",
    seed: int = 0,
    budget: int | None = None,
    init: NonStationaryGevModel | None = None,
    compute_std_errors: bool = True,
    min_rows_per_param: int = 10,
) -> FitResult:
    """Fit a non-stationary GEV by maximum likelihood or minimum CRPS.

    Parameters
    ----------
    template
        Supplies the covariate lists and scale link; its coefficients are ignored.
    objective
        ``"mle"`` or ``"min_crps"``.
    optimizer
        ``"nelder_mead"``, ``"simulated_annealing"`` or ``"chained"``
        (annealing, then a Nelder-Mead polish of its best point).
    budget
        Maximum objective evaluations per optimiser stage (defaults: 100000
        for Nelder-Mead, 10000 for annealing).
    init
        Optional starting model; otherwise a Gumbel moment start.

    The returned ``objective_value`` is the objective re-evaluated at the
    returned model.  Results are deterministic given ``seed``.
    """
    if optimizer not in OPTIMIZERS:
        raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
    if data.rows < min_rows_per_param * template.n_params:
        raise DomainError(
            f"{data.rows} rows is too few for {template.n_params} parameters "
            f"(need {min_rows_per_param} per parameter)"
        )
    problem = _Problem(template, data, objective, SHAPE_BOUNDS)
    theta0 = _feasible_start(problem, template, data, init)
    f0 = problem.value(theta0)
    scales = parameter_scales(template, data)
    rng = np.random.default_rng(seed)
    history = [("start", f0)]

    theta, converged = theta0, False
    if optimizer in ("simulated_annealing", "chained"):
        sa_budget = budget or 10_000
        theta, f, converged, _ = _simulated_annealing(problem, theta, scales, sa_budget, rng)
        history.append(("simulated_annealing", f))
    if optimizer in ("nelder_mead", "chained"):
        theta, f, converged, _ = _nelder_mead(problem, theta, scales, budget or 100_000)
        history.append(("nelder_mead", f))

    model = template.with_vector(theta)
    value = objective_value(model, data, objective)
    if value > f0:  # never hand back something worse than the start
        model, value = template.with_vector(theta0), f0
    if not converged:
        log.warning("%s/%s fit stopped without meeting its tolerance", objective, optimizer)

    ses = np.full(model.n_params, np.nan)
    if compute_std_errors:
        try:
            ses = std_errors(model, data, objective)
        except SingularHessianError as exc:
            log.warning("standard errors unavailable: %s", exc)
    return FitResult(model, value, ses, converged, problem.evaluations, objective, optimizer, history)


# --------------------------------------------------------------------------
# standard errors


def _hessian(fun, theta, steps):
    k = theta.size
    h = np.zeros((k, k))
    f0 = fun(theta)
    eye = np.eye(k)
    for i in range(k):
        ei = eye[i] * steps[i]
        h[i, i] = (fun(theta + ei) - 2.0 * f0 + fun(theta - ei)) / steps[i] ** 2
        for j in range(i):
            ej = eye[j] * steps[j]
            v = fun(theta + ei + ej) - fun(theta + ei - ej) - fun(theta - ei + ej) + fun(theta - ei - ej)
            h[i, j] = h[j, i] = v / (4.0 * steps[i] * steps[j])
    return h


def _row_gradients(rows, theta, steps):
    grads = []
    for i in range(theta.size):
        e = np.zeros(theta.size)
        e[i] = steps[i]
        grads.append((rows(theta + e) - rows(theta - e)) / (2.0 * steps[i]))
    return np.column_stack(grads)


def std_errors(model, data, objective="mle", kind=None, rel_step=1e-4, singular_tol=1e-9):
    """Standard errors from the numerical Hessian of the summed objective.

    ``kind="hessian"`` uses ``sqrt(diag(H^-1))``, which is the right thing for
    a log-likelihood.  ``kind="sandwich"`` uses ``H^-1 J H^-1`` with ``J``
    the outer product of per-row score gradients; that is what a general
    M-estimator such as minimum CRPS needs.  The default is ``hessian`` for
    ``mle`` and ``sandwich`` for ``min_crps``.  Entries whose variance comes
    out non-positive are returned as NaN.

    Raises
    ------
    SingularHessianError
        If the design is rank deficient or the Hessian is numerically singular.
    """
    if kind is None:
        kind = "hessian" if objective == "mle" else "sandwich"
    if kind not in ("hessian", "sandwich"):
        raise ValueError("kind must be 'hessian' or 'sandwich'")
    for names in (model.location_covariates, model.scale_covariates):
        cols = data.columns(names)
        if np.linalg.matrix_rank(cols) < cols.shape[1]:
            raise SingularHessianError("design matrix is rank deficient")

    problem = _Problem(model, data, objective)
    theta = model.to_vector()
    if not math.isfinite(problem.value(theta)):
        raise DomainError("objective is infinite at the supplied model")
    steps = rel_step * np.maximum(np.abs(theta), parameter_scales(model, data))
    hess = _hessian(problem.value, theta, steps)
    if not np.all(np.isfinite(hess)):
        raise SingularHessianError("Hessian has non-finite entries (model on a support boundary?)")
    eig = np.linalg.eigvalsh(hess)
    if eig.max() <= 0 or abs(eig).min() <= singular_tol * abs(eig).max():
        raise SingularHessianError("Hessian is numerically singular")
    h_inv = np.linalg.inv(hess)
    if kind == "hessian":
        cov = h_inv
    else:
        g = _row_gradients(problem.rows, theta, steps)
        cov = h_inv @ (g.T @ g) @ h_inv
    var = np.diag(cov).copy()
    out = np.full(var.size, np.nan)
    ok = var > 0
    out[ok] = np.sqrt(var[ok])
    return out


# --------------------------------------------------------------------------
# covariate rescaling


def denormalize_model(model: NonStationaryGevModel, means: Mapping, sds: Mapping) -> NonStationaryGevModel:
    """Re-express a model fitted on standardised covariates on the raw scale.

    With ``x_std = (x - m) / s`` a coefficient ``b`` becomes ``b / s`` and the
    intercept absorbs ``-b m / s``; predictions are unchanged.
    """

    def convert(coeffs, names):
        out = coeffs.copy()
        for j, name in enumerate(names, start=1):
            out[j] = coeffs[j] / sds[name]
            out[0] -= coeffs[j] * means[name] / sds[name]
        return out

    return replace(
        model,
        location_coeffs=convert(model.location_coeffs, model.location_covariates),
        scale_coeffs=convert(model.scale_coeffs, model.scale_covariates),
    )


def normalize_model(model: NonStationaryGevModel, means: Mapping, sds: Mapping) -> NonStationaryGevModel:
    """Inverse of :func:`denormalize_model`."""

    def convert(coeffs, names):
        out = coeffs.copy()
        for j, name in enumerate(names, start=1):
            out[j] = coeffs[j] * sds[name]
            out[0] += coeffs[j] * means[name]
        return out

    return replace(
        model,
        location_coeffs=convert(model.location_coeffs, model.location_covariates),
        scale_coeffs=convert(model.scale_coeffs, model.scale_covariates),
    )


def simulate_design(
    n: int,
    location_coeffs: Sequence[float],
    scale_coeffs: Sequence[float],
    shape: float,
    scale_link: str = "log",
    n_covariates: int | None = None,
    seed: int = 0,
    location_covariates: Sequence[str] | None = None,
    scale_covariates: Sequence[str] | None = None,
):
    """Synthetic standard-normal covariates and GEV responses from a known model.

    Covariates are named ``x1, x2, ...``; by default the first
    ``len(location_coeffs) - 1`` drive the location and the first
    ``len(scale_coeffs) - 1`` drive the scale.  Returns ``(data, true_model)``.
    """
    location_coeffs = np.asarray(location_coeffs, dtype=float)
    scale_coeffs = np.asarray(scale_coeffs, dtype=float)
    k = max(location_coeffs.size, scale_coeffs.size) - 1
    n_cov = max(k, n_covariates or 0)
    names = [f"x{i + 1}" for i in range(n_cov)]
    loc_names = tuple(location_covariates or names[: location_coeffs.size - 1])
    scale_names = tuple(scale_covariates or names[: scale_coeffs.size - 1])
    rng = np.random.default_rng(seed)
    cov = {name: rng.standard_normal(n) for name in names}
    truth = NonStationaryGevModel(location_coeffs, scale_coeffs, shape, scale_link, loc_names, scale_names)
    placeholder = DesignMatrix(cov, np.zeros(n))
    params = predictive_params_all(truth, placeholder)
    u = rng.random(n)
    u[u == 0.0] = np.nextafter(0.0, 1.0)
    y = np.asarray(params.quantile(u))
    return DesignMatrix(cov, y), truth
