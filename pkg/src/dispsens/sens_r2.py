"""Sensitivity analysis parameterized by partial R-squared values.

Reparameterizes the coefficient-scale bias into two scale-free quantities:
r2_yu, the share of residual outcome variance the omitted confounder would
explain given group, confounders, mediator, and covariates; and r2_mu, the
share of residual mediator variance it would explain given group,
confounders, and covariates. On that scale the bias magnitude is

    |bias| = |alpha_r| * se(beta_res_m) * sqrt(df * r2_yu * r2_mu / (1 - r2_mu)),

with se(beta_res_m) and df taken from the outcome model fitted without the
confounder. The same k = sqrt(df * r2_yu*r2_mu/(1-r2_mu)) drives the
adjusted mediator coefficient, the adjusted delta-method variance of the
disparity reduction, and the bootstrap-covariance correction for the
disparity remaining. The robustness value RV is the equal-association
strength r2_yu = r2_mu that makes the bias match the estimate exactly;
RV_alpha, found by bisection along that diagonal, is the strength at which
the confidence interval first touches zero.

With group-by-mediator interaction in the outcome model, beta_res_m and its
standard error for a comparison group come from refitting with that group
as the reference level (equivalently, from the combined coefficient and
variance of the original fit); `reference_switch` implements the refit.
"""

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.stats

from .contours import Curve, MarkedPoint, SensitivityGrid, zero_contours
from .decomp import _outcome_design
from .errors import DependencyError, DomainError, SearchError
from .regress import ols_fit

RV_ALPHA_TOL = 1e-3
RV_ALPHA_MAX_ITER = 50
_BRACKET_PROBES = 9

QUANTITIES = ("delta", "zeta")


@dataclass(frozen=True)
class R2Params:
    """Partial R-squared sensitivity parameters, each in [0, 1)."""

    r2_yu: float
    r2_mu: float

    def __post_init__(self):
        for name, v in (("r2_yu", self.r2_yu), ("r2_mu", self.r2_mu)):
            if not np.isfinite(v) or v < 0.0 or v >= 1.0:
                raise DomainError(f"{name} must lie in [0, 1), got {v!r}")


def k_value(params, df):
    """sqrt(df * r2_yu * r2_mu / (1 - r2_mu)); the shared bias multiplier."""
    return float(np.sqrt(df * params.r2_yu * params.r2_mu / (1.0 - params.r2_mu)))


@dataclass(frozen=True)
class R2Inputs:
    """Per-comparison-group ingredients for the R-squared formulas.

    The bootstrap covariance fields are only needed for the adjusted
    variance of the disparity remaining; they come from a CovBundle.
    """

    group: str
    alpha_r: float
    se_alpha_r: float
    beta_res_m: float
    se_beta_res_m: float
    df: int
    delta_res: float
    zeta_res: float
    tau: float
    var_tau: float | None = None
    cov_tau_deltares: float | None = None
    cov_tau_alpha: float | None = None
    cov_tau_se_betam: float | None = None

    def __post_init__(self):
        if self.df < 2:
            raise DomainError(f"need outcome-model df >= 2, got {self.df}")
        if self.se_beta_res_m < 0 or self.se_alpha_r < 0:
            raise DomainError("standard errors must be nonnegative")

    def estimate(self, quantity):
        if quantity not in QUANTITIES:
            raise ValueError(f"quantity must be one of {QUANTITIES}, got {quantity!r}")
        return self.delta_res if quantity == "delta" else self.zeta_res

    def has_cov(self):
        return None not in (self.var_tau, self.cov_tau_deltares,
                            self.cov_tau_alpha, self.cov_tau_se_betam)


def inputs_for(analysis, group):
    """Build R2Inputs for one comparison group of a decomposition Analysis."""
    system = analysis.system
    res = analysis.result[group]
    alpha_r, var_alpha = system.alpha(group)
    beta_res_m, var_betam = system.mediator_effect(group)
    cov = analysis.cov
    return R2Inputs(
        group=group,
        alpha_r=alpha_r,
        se_alpha_r=float(np.sqrt(var_alpha)),
        beta_res_m=beta_res_m,
        se_beta_res_m=float(np.sqrt(var_betam)),
        df=system.outcome_fit.df,
        delta_res=res.delta,
        zeta_res=res.zeta,
        tau=res.tau,
        var_tau=None if cov is None else cov.var_tau(group),
        cov_tau_deltares=None if cov is None else cov.cov_tau_deltares(group),
        cov_tau_alpha=None if cov is None else cov.cov_tau_alpha(group),
        cov_tau_se_betam=None if cov is None else cov.cov_tau_se_betam(group),
    )


def bias_r2(inputs, params):
    """Absolute bias of disparity reduction (and remaining) at these R^2 values."""
    return abs(inputs.alpha_r) * inputs.se_beta_res_m * k_value(params, inputs.df)


def _signed_shift(reference, magnitude, direction):
    if direction not in ("toward_zero", "away_from_zero"):
        raise ValueError(f"direction must be 'toward_zero' or 'away_from_zero', got {direction!r}")
    sign = np.sign(reference)
    return -sign * magnitude if direction == "toward_zero" else sign * magnitude


def adjusted_beta_m(inputs, params, direction="toward_zero"):
    """Mediator coefficient after removing the hypothesized confounding.

    Shifted from beta_res_m by se * k, toward zero by default (the
    explaining-away convention: confounding inflated the estimate)."""
    shift = _signed_shift(inputs.beta_res_m, inputs.se_beta_res_m * k_value(params, inputs.df),
                          direction)
    return inputs.beta_res_m + shift


def adjust_point_r2(inputs, params, direction="toward_zero"):
    """Adjusted (delta, zeta); zeta is tau minus the adjusted delta, so the
    pair re-sums to the initial disparity exactly."""
    delta_adj = inputs.alpha_r * adjusted_beta_m(inputs, params, direction)
    return delta_adj, inputs.tau - delta_adj


def adjusted_estimate(inputs, params, quantity="delta", direction="toward_zero"):
    """Adjusted value of one quantity, moved toward (or away from) zero.

    For delta this equals alpha_r times the adjusted mediator coefficient;
    for zeta the same bias magnitude is applied to the remaining estimate
    (its bias has the opposite sign, so explaining away the remaining
    disparity corresponds to the mirrored coefficient configuration).
    """
    est = inputs.estimate(quantity)
    return est + _signed_shift(est, bias_r2(inputs, params), direction)


def adjusted_var_delta(inputs, params, beta_m=None):
    """Delta-method variance of the adjusted disparity reduction,

        Var(delta) = alpha_r^2 Var(beta_m) + beta_m^2 Var(alpha_r),

    where Var(beta_m) rescales the no-confounding variance by
    (1 - r2_yu)/(1 - r2_mu) * df/(df - 1). `beta_m` defaults to the
    toward-zero adjusted coefficient.
    """
    var_betam = (inputs.se_beta_res_m**2
                 * (1.0 - params.r2_yu) / (1.0 - params.r2_mu)
                 * inputs.df / (inputs.df - 1.0))
    if beta_m is None:
        beta_m = adjusted_beta_m(inputs, params)
    return inputs.alpha_r**2 * var_betam + beta_m**2 * inputs.se_alpha_r**2


def adjusted_var_zeta(inputs, params, beta_m=None):
    """Variance of the adjusted disparity remaining.

    Built from tau's bootstrap variance, the adjusted reduction variance,
    and the bootstrap covariances of tau with the unadjusted reduction, the
    mediator-model group coefficient, and the mediator-coefficient standard
    error, the last two scaled by k. Expectations in the k terms are
    replaced by point estimates. Returns (variance, clamped); a negative
    combination is clamped to zero and flagged.
    """
    if not inputs.has_cov():
        raise DependencyError(
            "adjusted variance of disparity remaining needs bootstrap covariances "
            "(run bootstrap_cov and build R2Inputs from the full analysis)"
        )
    k = k_value(params, inputs.df)
    value = (inputs.var_tau
             + adjusted_var_delta(inputs, params, beta_m=beta_m)
             - 2.0 * inputs.cov_tau_deltares
             + 2.0 * k * inputs.se_beta_res_m * inputs.cov_tau_alpha
             + 2.0 * k * inputs.alpha_r * inputs.cov_tau_se_betam)
    if value < 0.0:
        return 0.0, True
    return float(value), False


def _implied_beta_m(inputs, quantity, est_adj):
    """beta_m consistent with an adjusted estimate of `quantity`."""
    delta_adj = est_adj if quantity == "delta" else inputs.tau - est_adj
    if inputs.alpha_r == 0.0:
        return inputs.beta_res_m
    return delta_adj / inputs.alpha_r


def adjusted_ci(inputs, params, quantity="delta", alpha=0.05, direction="toward_zero"):
    """(lo, hi, se, clamped) for the adjusted quantity.

    Critical values are t with df - 1 degrees of freedom (the adjusted
    variance already carries the df/(df-1) factor).
    """
    est = adjusted_estimate(inputs, params, quantity, direction)
    beta_m = _implied_beta_m(inputs, quantity, est)
    if quantity == "delta":
        var, clamped = adjusted_var_delta(inputs, params, beta_m=beta_m), False
    else:
        var, clamped = adjusted_var_zeta(inputs, params, beta_m=beta_m)
    se = float(np.sqrt(var))
    t_crit = _t_crit(alpha, inputs.df - 1)
    return est - t_crit * se, est + t_crit * se, se, clamped


@lru_cache(maxsize=256)
def _t_crit(alpha, df):
    return float(scipy.stats.t.ppf(1.0 - alpha / 2.0, df))


def g_value(inputs, quantity="delta"):
    """Estimate magnitude in units of |alpha_r| * se(beta_res_m) * sqrt(df)."""
    denom = abs(inputs.alpha_r) * inputs.se_beta_res_m * np.sqrt(inputs.df)
    if denom == 0.0:
        return float("inf")
    return abs(inputs.estimate(quantity)) / denom


def rv(g):
    """Robustness value: the nonnegative root of RV^2 / (1 - RV) = g^2.

    Strictly increasing in g, 0 at g = 0, approaching 1 as g grows.
    """
    if g < 0:
        raise ValueError(f"g must be nonnegative, got {g}")
    if not np.isfinite(g):
        return 1.0
    if g == 0.0:
        return 0.0
    g2 = g * g
    # rationalized quadratic root, then one Newton polish for full precision
    value = 2.0 * g2 / (np.sqrt(g2 * g2 + 4.0 * g2) + g2)
    value -= (value * value + g2 * value - g2) / (2.0 * value + g2)
    return float(value)


def _nearest_zero_bound(inputs, v, quantity, alpha):
    """CI bound nearest zero on the equal-association diagonal at strength v."""
    params = R2Params(r2_yu=v, r2_mu=v)
    lo, hi, _, _ = adjusted_ci(inputs, params, quantity, alpha)
    return hi if inputs.estimate(quantity) < 0 else lo


def rv_alpha(inputs, quantity="delta", alpha=0.05, tol=RV_ALPHA_TOL):
    """Equal-association strength at which the CI first covers zero.

    Returns 0 when the baseline (no-confounding) interval already covers
    zero. Otherwise bisects v in [0, rv_point] on the CI bound nearest
    zero, after verifying the bound moves monotonically across the bracket,
    and returns the v at which that bound is within `tol` of zero.
    """
    est = inputs.estimate(quantity)
    h0 = _nearest_zero_bound(inputs, 0.0, quantity, alpha)
    est_sign = np.sign(est) if est != 0 else 1.0
    if h0 * est_sign <= 0.0:
        return 0.0  # baseline CI already covers zero

    rv_point = rv(g_value(inputs, quantity))
    lo, hi = 0.0, rv_point
    h_hi = _nearest_zero_bound(inputs, hi, quantity, alpha)
    if h_hi * est_sign > 0.0:
        raise SearchError(
            f"CI bound does not cross zero on [0, {rv_point:.6f}] "
            f"(h(0)={h0:.6g}, h(rv)={h_hi:.6g})"
        )
    probes = np.linspace(lo, hi, _BRACKET_PROBES)
    values = [_nearest_zero_bound(inputs, v, quantity, alpha) * est_sign for v in probes]
    diffs = np.diff(values)
    if not (np.all(diffs <= 1e-12) or np.all(diffs >= -1e-12)):
        raise SearchError(
            f"CI bound is not monotone over the bracket [0, {rv_point:.6f}]; "
            f"probe values {['%.6g' % v for v in values]}"
        )

    mid = 0.5 * (lo + hi)
    for _ in range(RV_ALPHA_MAX_ITER):
        mid = 0.5 * (lo + hi)
        h_mid = _nearest_zero_bound(inputs, mid, quantity, alpha)
        if abs(h_mid) < tol:
            return float(mid)
        if h_mid * est_sign > 0.0:
            lo = mid
        else:
            hi = mid
    warnings.warn(
        f"rv_alpha bisection hit {RV_ALPHA_MAX_ITER} iterations with "
        f"|bound| = {abs(h_mid):.3g} >= tol={tol}; returning midpoint"
    )
    return float(mid)


@dataclass(frozen=True)
class QuantityRobustness:
    quantity: str
    g: float
    rv: float
    rv_alpha: float
    baseline_ci_covers_zero: bool

    def to_dict(self):
        return {
            "quantity": self.quantity,
            "g": self.g,
            "rv": self.rv,
            "rv_alpha": self.rv_alpha,
            "baseline_ci_covers_zero": self.baseline_ci_covers_zero,
        }


@dataclass(frozen=True)
class RobustnessReport:
    """g statistics, robustness values, and significance robustness values
    for disparity reduction and remaining of one comparison group."""

    group: str
    delta: QuantityRobustness
    zeta: QuantityRobustness
    alpha: float
    tol: float
    df: int

    def to_dict(self):
        return {
            "group": self.group,
            "alpha": self.alpha,
            "tol": self.tol,
            "df": self.df,
            "delta": self.delta.to_dict(),
            "zeta": self.zeta.to_dict(),
        }

    def summary_lines(self):
        lines = []
        for q in (self.delta, self.zeta):
            label = "disparity reduction" if q.quantity == "delta" else "disparity remaining"
            lines.append(
                f"The {label} keeps its sign as long as the omitted confounder "
                f"explains less than {100 * q.rv:.1f}% of the residual variance of "
                f"both the mediator and the outcome (RV = {q.rv:.4f})."
            )
            if q.baseline_ci_covers_zero:
                lines.append(
                    f"The {label} is not significant at the "
                    f"{100 * (1 - self.alpha):.0f}% level to begin with, so no "
                    f"confounding is needed to change its significance (RV_alpha = 0)."
                )
            else:
                lines.append(
                    f"It stays significant at the {100 * (1 - self.alpha):.0f}% level "
                    f"as long as the confounder explains less than "
                    f"{100 * q.rv_alpha:.1f}% of both (RV_alpha = {q.rv_alpha:.4f})."
                )
        return lines


def robustness_report(inputs, alpha=0.05, tol=RV_ALPHA_TOL):
    parts = {}
    for quantity in QUANTITIES:
        g = g_value(inputs, quantity)
        point = rv(g)
        ra = rv_alpha(inputs, quantity, alpha=alpha, tol=tol)
        parts[quantity] = QuantityRobustness(
            quantity=quantity,
            g=g,
            rv=point,
            rv_alpha=ra,
            baseline_ci_covers_zero=(ra == 0.0),
        )
    return RobustnessReport(
        group=inputs.group,
        delta=parts["delta"],
        zeta=parts["zeta"],
        alpha=alpha,
        tol=tol,
        df=inputs.df,
    )


def reference_switch(data, group, interaction=True):
    """Mediator coefficient and SE with `group` recoded as the reference.

    Refits the outcome model after swapping the reference level, so the
    main mediator coefficient reads as the mediator effect for `group`.
    Equals beta_m + beta_{group,m} (with combined variance) from the
    original interaction fit; with no interaction the coefficient is
    unchanged.
    """
    switched = data.with_reference(group)
    design, names = _outcome_design(switched, interaction)
    fit = ols_fit(switched.outcome, design, names)
    return fit.coef(data.mediator_name), fit.se(data.mediator_name)


def grid_r2(inputs, resolution=201, max_r2=0.3, quantity="delta", alpha=0.05,
            direction="toward_zero"):
    """Adjusted estimate, SE, and CI over an equal (r2_yu, r2_mu) grid.

    Emits the estimate-zero boundary ("estimate_zero"), the boundary where
    the CI bound nearest zero crosses zero ("ci_zero"), and the diagonal RV
    and RV_alpha points.
    """
    if resolution < 2:
        raise ValueError(f"resolution must be >= 2, got {resolution}")
    if not (0.0 < max_r2 < 1.0):
        raise DomainError(f"max_r2 must be in (0, 1), got {max_r2}")
    axis = np.linspace(0.0, max_r2, resolution)
    est = np.empty((resolution, resolution))
    se = np.empty_like(est)
    ci_lo = np.empty_like(est)
    ci_hi = np.empty_like(est)
    clamped_any = False
    for i, vy in enumerate(axis):       # r2_yu on x
        for j, vm in enumerate(axis):   # r2_mu on y
            params = R2Params(r2_yu=vy, r2_mu=vm)
            lo, hi, s, clamped = adjusted_ci(inputs, params, quantity, alpha, direction)
            est[i, j] = adjusted_estimate(inputs, params, quantity, direction)
            se[i, j] = s
            ci_lo[i, j], ci_hi[i, j] = lo, hi
            clamped_any = clamped_any or clamped
    if clamped_any:
        warnings.warn("some adjusted disparity-remaining variances were negative "
                      "and clamped to zero")

    negative = inputs.estimate(quantity) < 0
    bound = ci_hi if negative else ci_lo

    def est_func(a, b):
        return adjusted_estimate(inputs, R2Params(a, b), quantity, direction)

    def bound_func(a, b):
        lo, hi, _, _ = adjusted_ci(inputs, R2Params(a, b), quantity, alpha, direction)
        return hi if negative else lo

    curves = []
    for k, line in enumerate(zero_contours(axis, axis, est, func=est_func)):
        curves.append(Curve(f"estimate_zero_{k}", line))
    for k, line in enumerate(zero_contours(axis, axis, bound, func=bound_func)):
        curves.append(Curve(f"ci_zero_{k}", line))

    point_rv = rv(g_value(inputs, quantity))
    points = [MarkedPoint("rv", point_rv, point_rv)]
    ra = rv_alpha(inputs, quantity, alpha=alpha)
    if ra > 0.0:
        points.append(MarkedPoint("rv_alpha", ra, ra))
    return SensitivityGrid(
        x_name="r2_yu",
        y_name="r2_mu",
        x=axis,
        y=axis,
        values={"estimate_adj": est, "se_adj": se, "ci_lo": ci_lo, "ci_hi": ci_hi},
        curves=tuple(curves),
        points=tuple(points),
    )
