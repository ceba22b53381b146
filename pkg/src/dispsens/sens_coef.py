"""Sensitivity analysis parameterized by regression coefficients.

The confounding strength is expressed with two coefficients: beta_u, the
outcome shift per unit of the omitted confounder given group, mediator, and
observed confounders; and delta_m, the shift in the omitted confounder per
unit of the mediator given group and observed confounders. Under linear
outcome and confounder models the bias of the disparity reduction is the
triple product

    bias(delta) = alpha_r * delta_m * beta_u        (bias(zeta) = -bias(delta)),

optionally with a group-specific increment beta_ru added to beta_u when the
confounder's outcome effect differs by group. The initial disparity is an
observed contrast, so the two biases cancel and adjusted estimates always
re-sum to tau.

For worlds that are not linear, `general_bias_discrete` evaluates the
assumption-free bias over finite supports from user-specified (or
empirically estimated) conditional tables.
"""

from dataclasses import dataclass

import numpy as np

from .contours import Curve, SensitivityGrid, zero_contours
from .errors import DomainError, ValidationError


@dataclass(frozen=True)
class CoefParams:
    """Coefficient-scale sensitivity parameters.

    beta_ru is a group-specific increment to beta_u; leave it None unless
    the omitted confounder's effect on the outcome differs for the
    comparison group. The scale of delta_m is the caller's: for a binary
    confounder it reads as a prevalence difference per mediator unit, for a
    continuous one it depends on how the confounder is standardized.
    """

    beta_u: float
    delta_m: float
    beta_ru: float | None = None

    def __post_init__(self):
        vals = [self.beta_u, self.delta_m]
        if self.beta_ru is not None:
            vals.append(self.beta_ru)
        if not all(np.isfinite(v) for v in vals):
            raise DomainError(f"sensitivity coefficients must be finite, got {self}")

    @property
    def beta_u_total(self):
        return self.beta_u + (self.beta_ru or 0.0)


def bias_coef(alpha_r, params):
    """Bias pair (bias_delta, bias_zeta) at the given coefficients."""
    bias_delta = alpha_r * params.delta_m * params.beta_u_total
    return bias_delta, -bias_delta


def adjust_coef(group_result, alpha_r, params):
    """Confounding-adjusted (delta, zeta) for one comparison group.

    Subtracts the hypothesized bias from each estimate; the two adjustments
    cancel, so delta_adj + zeta_adj equals the group's tau exactly.
    """
    bias_delta, bias_zeta = bias_coef(alpha_r, params)
    return group_result.delta - bias_delta, group_result.zeta - bias_zeta


def explain_away_coef(target, alpha_r, beta_u_total):
    """The delta_m at which the bias equals `target`.

    With `target` set to the estimated disparity reduction this is the
    mediator-confounder association that drives the adjusted reduction to
    zero at the given outcome effect. (For disparity remaining the same
    magnitude applies; because the two biases have opposite signs, the
    sign of delta_m that nullifies the remaining estimate is the negative
    of the value returned here.)
    """
    denom = alpha_r * beta_u_total
    if denom == 0.0:
        raise DomainError(
            "no solution: the bias is identically zero when the group does not "
            "shift the mediator (alpha_r = 0) or the confounder does not shift "
            "the outcome (beta_u = 0)"
        )
    return target / denom


def grid_coef(group_result, alpha_r, beta_u_range, delta_m_range, resolution=201):
    """Adjusted-estimate surface over a (beta_u, delta_m) rectangle.

    Returns a SensitivityGrid with delta_adj and zeta_adj values and the
    zero-level polylines of each ("delta_zero", "zeta_zero"). The surface
    is bilinear, so the interpolated contours are exact on cell edges.
    """
    if resolution < 2:
        raise ValueError(f"resolution must be >= 2 per axis, got {resolution}")
    lo_u, hi_u = beta_u_range
    lo_m, hi_m = delta_m_range
    if not (np.isfinite([lo_u, hi_u, lo_m, hi_m]).all()):
        raise ValueError("grid ranges must be finite")
    bu = np.linspace(lo_u, hi_u, resolution)
    dm = np.linspace(lo_m, hi_m, resolution)
    bias = alpha_r * np.outer(bu, dm)
    delta_adj = group_result.delta - bias
    zeta_adj = group_result.zeta + bias

    curves = []
    for name, surface in (("delta_zero", delta_adj), ("zeta_zero", zeta_adj)):
        for k, line in enumerate(zero_contours(bu, dm, surface)):
            curves.append(Curve(f"{name}_{k}", line))
    return SensitivityGrid(
        x_name="beta_u",
        y_name="delta_m",
        x=bu,
        y=dm,
        values={"delta_adj": delta_adj, "zeta_adj": zeta_adj},
        curves=tuple(curves),
    )


@dataclass(frozen=True)
class DiscreteWorld:
    """Finite-support conditional tables for one comparison group.

    Axes are indexed (c, x, m, u) over the supplied supports. The tables:

    ey[c, x, m, u]            mean outcome in the (x, m, c, u) stratum
    p_u_given_xc[c, x, u]     confounder distribution given (x, c)
    p_u_given_xmc[c, x, m, u] confounder distribution given (x, m, c)
    p_x[c, x]                 confounder-pattern distribution given c
    p_m_ref[c, m]             reference-group mediator distribution given c
    c_weights[c]              stratum weights (comparison group's c distribution)

    u_ref_index picks the reference confounder value; the bias is invariant
    to that choice because the probability contrasts sum to zero over u.
    """

    x_support: tuple
    m_support: tuple
    u_support: tuple
    c_support: tuple
    ey: np.ndarray
    p_u_given_xc: np.ndarray
    p_u_given_xmc: np.ndarray
    p_x: np.ndarray
    p_m_ref: np.ndarray
    c_weights: np.ndarray
    u_ref_index: int = 0

    def validate(self):
        n_c, n_x = len(self.c_support), len(self.x_support)
        n_m, n_u = len(self.m_support), len(self.u_support)
        shapes = {
            "ey": (self.ey.shape, (n_c, n_x, n_m, n_u)),
            "p_u_given_xc": (self.p_u_given_xc.shape, (n_c, n_x, n_u)),
            "p_u_given_xmc": (self.p_u_given_xmc.shape, (n_c, n_x, n_m, n_u)),
            "p_x": (self.p_x.shape, (n_c, n_x)),
            "p_m_ref": (self.p_m_ref.shape, (n_c, n_m)),
            "c_weights": (self.c_weights.shape, (n_c,)),
        }
        for name, (got, want) in shapes.items():
            if got != want:
                raise ValidationError(f"{name} has shape {got}, expected {want}")
        if not (0 <= self.u_ref_index < n_u):
            raise ValidationError(f"u_ref_index {self.u_ref_index} outside support of size {n_u}")
        for name, table, axis in (
            ("p_u_given_xc", self.p_u_given_xc, -1),
            ("p_u_given_xmc", self.p_u_given_xmc, -1),
            ("p_x", self.p_x, -1),
            ("p_m_ref", self.p_m_ref, -1),
        ):
            if np.any(table < -1e-12):
                raise ValidationError(f"{name} has negative entries")
            sums = table.sum(axis=axis)
            if not np.allclose(sums, 1.0, atol=1e-8):
                raise ValidationError(f"{name} does not sum to 1 over its argument "
                                      f"(max |sum-1| = {np.abs(sums - 1).max():.2e})")
        if np.any(self.c_weights < -1e-12) or not np.isclose(self.c_weights.sum(), 1.0, atol=1e-8):
            raise ValidationError("c_weights must be a distribution over the c support")
        if not np.all(np.isfinite(self.ey)):
            raise ValidationError("ey has non-finite entries")

    def with_u_ref(self, index):
        return DiscreteWorld(
            x_support=self.x_support, m_support=self.m_support,
            u_support=self.u_support, c_support=self.c_support,
            ey=self.ey, p_u_given_xc=self.p_u_given_xc,
            p_u_given_xmc=self.p_u_given_xmc, p_x=self.p_x,
            p_m_ref=self.p_m_ref, c_weights=self.c_weights,
            u_ref_index=index,
        )


def general_bias_discrete(world):
    """Assumption-free bias of the disparity reduction over a DiscreteWorld.

    Sums, over every (x, m, u) cell and c stratum,

        {E[Y|x,m,c,u] - E[Y|x,m,c,u_ref]}
        * {P(u|x,c) - P(u|x,m,c)} * P(x|c) * P(m_ref|c),

    weighted by the c distribution. Returns bias_delta; the matching
    disparity-remaining bias is its negative.
    """
    world.validate()
    dey = world.ey - world.ey[:, :, :, [world.u_ref_index]]
    dp = world.p_u_given_xc[:, :, None, :] - world.p_u_given_xmc
    per_c = np.einsum("cxmu,cxmu,cx,cm->c", dey, dp, world.p_x, world.p_m_ref)
    return float(world.c_weights @ per_c)
