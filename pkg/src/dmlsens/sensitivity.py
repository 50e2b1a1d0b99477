"""Omitted-variable-bias sensitivity analysis.

The bias of the covariate-adjusted estimate relative to the estimate that
also adjusts for a latent confounder satisfies

    bias^2 = rho^2 * cf_y * (cf_d / (1 - cf_d)) * sigma2 * nu2,

where cf_y is the share of residual outcome variation explained by the
confounder, cf_d the share of the average treatment odds it explains, rho
the correlation between the two confounding errors, and sigma2 * nu2 a
scale estimable from observed data. Everything else here - theta bounds,
one-sided confidence bounds, robustness values, benchmarking against
observed covariates, contour grids - is bookkeeping around that identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .engine import (
    FoldAssignment,
    cross_fit_nuisances,
    riesz_values,
    sensitivity_input,
    solve_theta,
)
from .errors import (
    DegenerateShortModel,
    DomainError,
    InvalidConfig,
    NoFiniteRV,
    UnknownVariable,
)
from .learners import LearnerConfig
from .types import (
    Dataset,
    Estimand,
    EstimateResult,
    SensitivityInput,
    SensitivityParams,
    SensitivityResult,
    _frozen_array,
)

THETA_LOWER = "theta_lower"
THETA_UPPER = "theta_upper"
CI_LOWER = "ci_lower"
CI_UPPER = "ci_upper"
_BOUND_KINDS = (THETA_LOWER, THETA_UPPER, CI_LOWER, CI_UPPER)


def cd2_of(cf_d: float) -> float:
    """Map the odds-explained share cf_d in [0, 1) to cf_d / (1 - cf_d)."""
    if not (0.0 <= cf_d < 1.0):
        raise DomainError(f"cf_d must lie in [0, 1) for a finite bound, got {cf_d}")
    return cf_d / (1.0 - cf_d)


def bias_bound(sigma2: float, nu2: float, params: SensitivityParams) -> float:
    """Worst-case absolute bias sqrt(rho^2 * cf_y * cd2 * sigma2 * nu2)."""
    if sigma2 < 0 or nu2 < 0:
        raise DomainError(f"sigma2 and nu2 must be >= 0, got {sigma2}, {nu2}")
    return float(np.sqrt(params.rho**2 * params.cf_y * cd2_of(params.cf_d) * sigma2 * nu2))


def theta_bounds(theta_hat: float, bias: float) -> tuple[float, float]:
    """Symmetric bounds theta_hat -+ bias."""
    if bias < 0:
        raise DomainError(f"bias must be >= 0, got {bias}")
    return (theta_hat - bias, theta_hat + bias)


def _combined_sds(est: EstimateResult, sens: SensitivityInput, bias: float) -> tuple[float, float]:
    """sd of the influence functions of (theta_hat - bias, theta_hat + bias)."""
    if bias == 0.0:
        # removable singularity: d bias / d sigma2 -> 0 as the bound collapses
        sd = float(np.std(est.psi))
        return sd, sd
    grad = bias / (2.0 * sens.sigma2) * sens.psi_sigma2 + bias / (2.0 * sens.nu2) * sens.psi_nu2
    return float(np.std(est.psi - grad)), float(np.std(est.psi + grad))


def bound_se(
    est: EstimateResult, sens: SensitivityInput, params: SensitivityParams
) -> tuple[float, float]:
    """Standard errors of the lower and upper theta bound.

    Delta method on (theta_hat -+ bias): the bias gradient with respect to
    sigma2 is bias/(2 sigma2) and with respect to nu2 is bias/(2 nu2), so the
    lower bound's score subtracts the weighted scale scores and the upper
    bound's adds them.
    """
    if est.n != sens.n:
        raise InvalidConfig(f"estimate has n={est.n} but sensitivity input has n={sens.n}")
    bias = bias_bound(sens.sigma2, sens.nu2, params)
    sd_lower, sd_upper = _combined_sds(est, sens, bias)
    root_n = np.sqrt(est.n)
    return sd_lower / root_n, sd_upper / root_n


def bound_ci(
    bounds: tuple[float, float], ses: tuple[float, float], level: float
) -> tuple[float, float]:
    """One-sided normal confidence bounds around the theta bounds."""
    if not (0.0 < level < 1.0):
        raise DomainError(f"level must lie strictly in (0, 1), got {level}")
    z = float(stats.norm.ppf(level))
    return (bounds[0] - z * ses[0], bounds[1] + z * ses[1])


def robustness_value(
    theta_hat: float, h0: float, sigma2: float, nu2: float, rho: float = 1.0
) -> float:
    """Smallest common value rv of (cf_y, cf_d) whose bias reaches |theta_hat - h0|.

    Closed form of rv^2 / (1 - rv) = delta^2 / S^2 with S^2 = rho^2 sigma2 nu2,
    written as 2 delta / (delta + sqrt(delta^2 + 4 S^2)) to stay stable when
    S is small.
    """
    delta = abs(theta_hat - h0)
    if delta == 0.0:
        return 0.0
    s2 = rho**2 * sigma2 * nu2
    if s2 <= 0.0:
        raise NoFiniteRV(
            f"no finite robustness value: |theta_hat - h0| = {delta} but rho^2*sigma2*nu2 = {s2}"
        )
    return float(2.0 * delta / (delta + np.sqrt(delta**2 + 4.0 * s2)))


def robustness_value_a(
    est: EstimateResult,
    sens: SensitivityInput,
    h0: float = 0.0,
    level: float = 0.95,
    rho: float = 1.0,
) -> float:
    """Smallest rv at which the relevant one-sided confidence bound reaches h0.

    Uses the lower bound when theta_hat > h0 and the upper bound otherwise.
    Returns 0 when the confidence bound at rv = 0 already includes h0;
    solved by bisection on [0, 1) otherwise and capped at the point-estimate
    robustness value (sampling uncertainty can only shrink it).
    """
    theta_hat = est.theta_hat
    if theta_hat == h0:
        return 0.0
    z = float(stats.norm.ppf(level))
    sign = 1.0 if theta_hat > h0 else -1.0

    def margin(rv: float) -> float:
        params = SensitivityParams(cf_y=rv, cf_d=rv, rho=rho)
        bias = bias_bound(sens.sigma2, sens.nu2, params)
        se_lower, se_upper = bound_se(est, sens, params)
        if sign > 0:
            return (theta_hat - bias - z * se_lower) - h0
        return h0 - (theta_hat + bias + z * se_upper)

    if margin(0.0) <= 0.0:
        return 0.0
    if rho**2 * sens.sigma2 * sens.nu2 <= 0.0:
        raise NoFiniteRV("confidence bound excludes h0 but the bias bound is identically zero")
    lo, hi = 0.0, 1.0 - 1e-9
    if margin(hi) > 0.0:
        raise NoFiniteRV("confidence bound stays on one side of h0 for every rv below 1")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if margin(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    rva = 0.5 * (lo + hi)
    rv = robustness_value(theta_hat, h0, sens.sigma2, sens.nu2, rho)
    return min(rva, rv)


def scenario_result(
    est: EstimateResult,
    sens: SensitivityInput,
    params: SensitivityParams,
    h0: float = 0.0,
    level: float = 0.95,
) -> SensitivityResult:
    """Full sensitivity summary for one confounding scenario."""
    bias = bias_bound(sens.sigma2, sens.nu2, params)
    lower, upper = theta_bounds(est.theta_hat, bias)
    ses = bound_se(est, sens, params)
    ci_lower, ci_upper = bound_ci((lower, upper), ses, level)
    rv = robustness_value(est.theta_hat, h0, sens.sigma2, sens.nu2, params.rho)
    rva = robustness_value_a(est, sens, h0, level, params.rho)
    return SensitivityResult(
        params=params,
        bias=bias,
        theta_lower=lower,
        theta_upper=upper,
        ci_lower=ci_lower,
        ci_upper=ci_upper,
        rv=rv,
        rva=rva,
    )


@dataclass(frozen=True, eq=False)
class ContourGrid:
    """Selected bound evaluated on a (cf_y, cf_d) grid.

    ``values[i, j]`` is the bound at (cf_y_axis[i], cf_d_axis[j]). Scenario
    marks are (cf_d, cf_y, label) triples; ``rv_mark`` is the robustness
    value placed at (rv, rv).
    """

    cf_d_axis: np.ndarray
    cf_y_axis: np.ndarray
    values: np.ndarray
    which: str
    scenarios: tuple[tuple[float, float, str], ...] = ()
    rv_mark: tuple[float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "cf_d_axis", _frozen_array(self.cf_d_axis))
        object.__setattr__(self, "cf_y_axis", _frozen_array(self.cf_y_axis))
        object.__setattr__(self, "values", _frozen_array(self.values))
        if self.which not in _BOUND_KINDS:
            raise DomainError(f"bound selector must be one of {_BOUND_KINDS}, got {self.which!r}")
        if self.values.shape != (self.cf_y_axis.size, self.cf_d_axis.size):
            raise InvalidConfig(
                f"values shape {self.values.shape} does not match axes "
                f"({self.cf_y_axis.size}, {self.cf_d_axis.size})"
            )
        # the bias bound grows in each argument, so theta bounds move monotonically
        if self.which in (THETA_LOWER, THETA_UPPER):
            diffs_d = np.diff(self.values, axis=1)
            diffs_y = np.diff(self.values, axis=0)
            tol = 1e-12 * max(1.0, float(np.max(np.abs(self.values))))
            increasing = self.which == THETA_UPPER
            for name, diffs in (("cf_d", diffs_d), ("cf_y", diffs_y)):
                bad = np.any(diffs < -tol) if increasing else np.any(diffs > tol)
                if bad:
                    raise InvalidConfig(f"{self.which} grid is not monotone along {name}")


def _validate_axis(name: str, axis: np.ndarray, upper_open: bool) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    if axis.ndim != 1 or axis.size < 1:
        raise DomainError(f"{name} must be a non-empty 1-d axis")
    if np.any(np.diff(axis) <= 0.0):
        raise DomainError(f"{name} must be strictly increasing")
    if axis[0] < 0.0 or (axis[-1] >= 1.0 if upper_open else axis[-1] > 1.0):
        raise DomainError(f"{name} must stay within [0, 1{')' if upper_open else ']'}")
    return axis


def contour_grid(
    est: EstimateResult,
    sens: SensitivityInput,
    cf_d_axis,
    cf_y_axis,
    which: str = THETA_LOWER,
    rho: float = 1.0,
    scenarios=(),
    include_rv_mark: bool = True,
    h0: float = 0.0,
    level: float = 0.95,
) -> ContourGrid:
    """Evaluate the selected bound on every (cf_y, cf_d) grid combination.

    The robustness-value mark uses the point-estimate value for theta
    bounds and the confidence-bound value for CI bounds.
    """
    if which not in _BOUND_KINDS:
        raise DomainError(f"bound selector must be one of {_BOUND_KINDS}, got {which!r}")
    cf_d_axis = _validate_axis("cf_d_axis", cf_d_axis, upper_open=True)
    cf_y_axis = _validate_axis("cf_y_axis", cf_y_axis, upper_open=False)
    values = np.empty((cf_y_axis.size, cf_d_axis.size))
    for i, cf_y in enumerate(cf_y_axis):
        for j, cf_d in enumerate(cf_d_axis):
            params = SensitivityParams(cf_y=float(cf_y), cf_d=float(cf_d), rho=rho)
            bias = bias_bound(sens.sigma2, sens.nu2, params)
            lower, upper = theta_bounds(est.theta_hat, bias)
            if which == THETA_LOWER:
                values[i, j] = lower
            elif which == THETA_UPPER:
                values[i, j] = upper
            else:
                ci = bound_ci((lower, upper), bound_se(est, sens, params), level)
                values[i, j] = ci[0] if which == CI_LOWER else ci[1]
    rv_mark = None
    if include_rv_mark:
        if which in (THETA_LOWER, THETA_UPPER):
            rv = robustness_value(est.theta_hat, h0, sens.sigma2, sens.nu2, rho)
        else:
            rv = robustness_value_a(est, sens, h0, level, rho)
        rv_mark = (rv, rv)
    marks = tuple((float(cd), float(cy), str(label)) for cd, cy, label in scenarios)
    return ContourGrid(
        cf_d_axis=cf_d_axis,
        cf_y_axis=cf_y_axis,
        values=values,
        which=which,
        scenarios=marks,
        rv_mark=rv_mark,
    )


@dataclass(frozen=True)
class BenchmarkResult:
    """Confounding strength calibrated against observed covariates."""

    benchmark_vars: tuple[str, ...]
    cf_y: float
    cf_d: float
    rho_hat: float
    delta_theta: float

    def __post_init__(self):
        if not (0.0 <= self.cf_y <= 1.0):
            raise InvalidConfig(f"cf_y must lie in [0, 1], got {self.cf_y}")
        if not (0.0 <= self.cf_d < 1.0):
            raise InvalidConfig(f"cf_d must lie in [0, 1), got {self.cf_d}")
        if not (-1.0 <= self.rho_hat <= 1.0):
            raise InvalidConfig(f"rho_hat must lie in [-1, 1], got {self.rho_hat}")

    def params(self) -> SensitivityParams:
        """Scenario with the calibrated strengths."""
        return SensitivityParams(cf_y=self.cf_y, cf_d=self.cf_d, rho=self.rho_hat)


def _safe_corr(a: np.ndarray, b: np.ndarray) -> float:
    sa, sb = float(np.std(a)), float(np.std(b))
    if sa == 0.0 or sb == 0.0:
        return 0.0
    r = float(np.corrcoef(a, b)[0, 1])
    return float(np.clip(r, -1.0, 1.0))


def benchmark(
    ds: Dataset,
    benchmark_vars,
    folds: FoldAssignment,
    cfg_g: LearnerConfig,
    cfg_m: LearnerConfig,
    estimand: Estimand,
    eps: float = 0.01,
    nu2_method: str = "plugin",
) -> BenchmarkResult:
    """Calibrate confounding strength by omitting the benchmark covariates.

    Refits all nuisances without the benchmark variables (same folds, same
    configs) and compares residual scales: cf_y is the share of residual
    outcome variance the variables explain, cf_d the share of the weighting
    second moment, rho_hat the correlation of the two error directions.
    Negative finite-sample differences are truncated at zero.
    """
    names = tuple(benchmark_vars)
    if not names:
        raise InvalidConfig("benchmark needs at least one covariate name")
    missing = [nm for nm in names if nm not in ds.covariate_names]
    if missing:
        raise UnknownVariable(f"benchmark variables not in dataset: {missing}")
    kept = [nm for nm in ds.covariate_names if nm not in names]
    if not kept:
        raise DegenerateShortModel("omitting the benchmark variables leaves no covariates")

    short_ds = ds.select_covariates(kept)
    fits_long = cross_fit_nuisances(ds, folds, cfg_g, cfg_m, eps)
    fits_short = cross_fit_nuisances(short_ds, folds, cfg_g, cfg_m, eps)

    est_long = solve_theta(ds, fits_long, estimand)
    est_short = solve_theta(short_ds, fits_short, estimand)
    sens_long = sensitivity_input(ds, fits_long, estimand, nu2_method)
    sens_short = sensitivity_input(short_ds, fits_short, estimand, nu2_method)

    cf_y = 0.0
    if sens_short.sigma2 > 0.0:
        cf_y = max(0.0, (sens_short.sigma2 - sens_long.sigma2) / sens_short.sigma2)
    cf_d = 0.0
    if sens_long.nu2 > 0.0:
        cf_d = max(0.0, (sens_long.nu2 - sens_short.nu2) / sens_long.nu2)
    cf_d = min(cf_d, 1.0 - 1e-12)

    g_diff = fits_long.g_at_d(ds.d) - fits_short.g_at_d(ds.d)
    a_diff = riesz_values(ds, fits_long, estimand) - riesz_values(short_ds, fits_short, estimand)
    rho_hat = _safe_corr(g_diff, a_diff)

    return BenchmarkResult(
        benchmark_vars=names,
        cf_y=min(cf_y, 1.0),
        cf_d=cf_d,
        rho_hat=rho_hat,
        delta_theta=float(est_short.theta_hat - est_long.theta_hat),
    )
