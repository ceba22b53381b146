"""Disparity decomposition via a system of linear models.

Fits, for each dataset: one mediator model (mediator on group indicators and
baseline covariates), one model per intermediate confounder (same design),
and one outcome model (outcome on indicators, confounders, mediator, and
covariates, optionally with group-by-mediator interaction columns). From
those fits it forms, per comparison group r:

  initial disparity  tau(r)  -- group coefficient of a reduced outcome-on-
                                indicators-and-covariates regression
  disparity reduction delta(r) = alpha_r * beta_m            (no interaction)
                               = alpha_r * (beta_m + beta_rm) (interaction)
  disparity remaining zeta(r) = beta_r + sum_j beta_xj * gamma_rj
                               [+ beta_rm * (alpha_0 + alpha_c . mean(C))]

Without the interaction columns, tau = delta + zeta holds exactly on any
full-rank dataset (nested least-squares identity); with them it holds
exactly only when there are no baseline covariates, and is checked, not
assumed, elsewhere.

Standard errors: delta uses the product-of-coefficients delta method;
tau and zeta use a seeded nonparametric bootstrap (rows resampled with
replacement), which also supplies the covariances the adjusted-variance
formulas in the R^2 sensitivity layer need.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.stats

from .errors import (BootstrapError, CollinearityError, MismatchError,
                     NameLookupError)
from .regress import ModelFit, ols_fit

DEFAULT_BOOTSTRAP_REPS = 1000
MAX_DROP_FRACTION = 0.05


def indicator_name(level):
    return f"I({level})"


def interaction_name(level, mediator_name):
    return f"I({level}):{mediator_name}"


def _base_design(data):
    """const + group indicators + baseline covariates."""
    cols = [np.ones(data.n), data.indicators, data.covariates]
    names = ["const"] + [indicator_name(g) for g in data.comparison_levels]
    names += list(data.covariate_names)
    return np.column_stack(cols), names


def _outcome_design(data, interaction):
    cols = [np.ones(data.n), data.indicators, data.confounders,
            data.mediator.reshape(-1, 1)]
    names = ["const"] + [indicator_name(g) for g in data.comparison_levels]
    names += list(data.confounder_names) + [data.mediator_name]
    if interaction:
        cols.append(data.indicators * data.mediator.reshape(-1, 1))
        names += [interaction_name(g, data.mediator_name) for g in data.comparison_levels]
    cols.append(data.covariates)
    names += list(data.covariate_names)
    return np.column_stack(cols), names


@dataclass(frozen=True)
class FittedSystem:
    """The mediator, confounder, and outcome fits for one dataset."""

    mediator_fit: ModelFit
    confounder_fits: tuple  # ((name, ModelFit), ...) in confounder order
    outcome_fit: ModelFit
    interaction: bool
    covariate_means: np.ndarray
    covariate_names: tuple
    comparison_groups: tuple
    mediator_name: str
    n: int

    def mediator_effect(self, group):
        """Mediator coefficient relevant for `group` and its variance.

        With interaction columns this is beta_m + beta_rm and the matching
        combined variance; identical to refitting with `group` as the
        reference level.
        """
        fit = self.outcome_fit
        est = fit.coef(self.mediator_name)
        var = fit.var(self.mediator_name)
        if self.interaction:
            rm = interaction_name(group, self.mediator_name)
            est += fit.coef(rm)
            var += fit.var(rm) + 2.0 * fit.cov_between(self.mediator_name, rm)
        return est, var

    def alpha(self, group):
        """Group coefficient of the mediator model and its variance."""
        name = indicator_name(group)
        return self.mediator_fit.coef(name), self.mediator_fit.var(name)

    def predicted_reference_mediator_mean(self):
        """Mediator-model intercept plus covariate terms at mean covariates."""
        fit = self.mediator_fit
        value = fit.coef("const")
        for name, mean in zip(self.covariate_names, self.covariate_means):
            value += fit.coef(name) * mean
        return value


def fit_system(data, interaction=False, covariate_mean_group=None):
    """Fit the full model system.

    Parameters
    ----------
    data : EncodedDataset
    interaction : bool
        Include group-by-mediator columns in the outcome model.
    covariate_mean_group : str, optional
        Compute the covariate mean over this group's rows instead of the
        full sample (only enters interaction-case disparity remaining).
    """
    base, base_names = _base_design(data)

    def fit(kind, response, design, names):
        try:
            return ols_fit(response, design, names)
        except CollinearityError as err:
            raise CollinearityError(f"{kind} model: {err}", columns=err.columns) from None

    mediator_fit = fit("mediator", data.mediator, base, base_names)
    confounder_fits = tuple(
        (name, fit(f"confounder {name!r}", data.confounders[:, j], base, base_names))
        for j, name in enumerate(data.confounder_names)
    )
    out_design, out_names = _outcome_design(data, interaction)
    outcome_fit = fit("outcome", data.outcome, out_design, out_names)

    if covariate_mean_group is None:
        cov_means = data.covariates.mean(axis=0) if data.n else np.zeros(0)
    else:
        mask = data.group_labels == covariate_mean_group
        if not mask.any():
            raise NameLookupError(f"no rows for group {covariate_mean_group!r}")
        cov_means = data.covariates[mask].mean(axis=0)

    return FittedSystem(
        mediator_fit=mediator_fit,
        confounder_fits=confounder_fits,
        outcome_fit=outcome_fit,
        interaction=interaction,
        covariate_means=np.asarray(cov_means, dtype=np.float64),
        covariate_names=data.covariate_names,
        comparison_groups=tuple(data.comparison_levels),
        mediator_name=data.mediator_name,
        n=data.n,
    )


@dataclass(frozen=True)
class InitialDisparity:
    """Group coefficients of the reduced outcome regression (outcome on
    indicators and baseline covariates only)."""

    fit: ModelFit
    tau: dict
    se: dict
    n: int


def initial_disparity(data):
    base, base_names = _base_design(data)
    fit = ols_fit(data.outcome, base, base_names)
    tau = {g: fit.coef(indicator_name(g)) for g in data.comparison_levels}
    se = {g: fit.se(indicator_name(g)) for g in data.comparison_levels}
    return InitialDisparity(fit=fit, tau=tau, se=se, n=data.n)


def _point_estimates(system, group):
    """(delta, zeta) for one comparison group from a fitted system."""
    alpha_r, _ = system.alpha(group)
    eff, _ = system.mediator_effect(group)
    delta = alpha_r * eff

    out = system.outcome_fit
    zeta = out.coef(indicator_name(group))
    for name, cfit in system.confounder_fits:
        zeta += out.coef(name) * cfit.coef(indicator_name(group))
    if system.interaction:
        b_rm = out.coef(interaction_name(group, system.mediator_name))
        zeta += b_rm * system.predicted_reference_mediator_mean()
    return delta, zeta


@dataclass(frozen=True)
class GroupDecomposition:
    comparison: str
    tau: float
    delta: float
    zeta: float
    pct_reduction: float
    se_tau: float | None
    se_delta: float
    se_zeta: float | None
    ci_tau: tuple | None
    ci_delta: tuple | None
    ci_zeta: tuple | None

    def to_dict(self):
        def ci(pair):
            return None if pair is None else [pair[0], pair[1]]

        return {
            "comparison": self.comparison,
            "tau": self.tau,
            "delta": self.delta,
            "zeta": self.zeta,
            "pct_reduction": self.pct_reduction,
            "se_tau": self.se_tau,
            "se_delta": self.se_delta,
            "se_zeta": self.se_zeta,
            "ci_tau": ci(self.ci_tau),
            "ci_delta": ci(self.ci_delta),
            "ci_zeta": ci(self.ci_zeta),
        }


@dataclass(frozen=True)
class DecompositionResult:
    groups: dict
    ci_level: float
    ci_method: str
    interaction: bool
    n: int
    bootstrap_reps: int | None
    seed: int | None

    def __getitem__(self, group):
        return self.groups[group]

    def to_dict(self):
        return {
            "results": [g.to_dict() for g in self.groups.values()],
            "ci_level": self.ci_level,
            "ci_method": self.ci_method,
            "interaction": self.interaction,
            "n": self.n,
            "B": self.bootstrap_reps,
            "seed": self.seed,
        }


def decompose(system, tau_fit, cov=None, ci_level=0.95, ci_method="normal"):
    """Combine a FittedSystem and an InitialDisparity into a decomposition.

    delta's standard error is the product-of-coefficients delta method,

        Var(delta) = alpha_r^2 Var(beta_m) + beta_m^2 Var(alpha_r),

    tau's and zeta's come from the bootstrap bundle when one is supplied
    (tau falls back to its own regression SE otherwise; zeta has no
    bootstrap-free SE). ci_method "percentile" requires a bundle.
    """
    if tau_fit.n != system.n:
        raise MismatchError(
            f"initial-disparity fit has n={tau_fit.n}, system has n={system.n}"
        )
    if cov is not None and cov.n != system.n:
        raise MismatchError(f"bootstrap bundle has n={cov.n}, system has n={system.n}")
    if ci_method not in ("normal", "percentile"):
        raise ValueError(f"ci_method must be 'normal' or 'percentile', got {ci_method!r}")
    if ci_method == "percentile" and cov is None:
        raise MismatchError("percentile intervals need a bootstrap bundle")

    z = scipy.stats.norm.ppf(0.5 + ci_level / 2.0)
    lo_q, hi_q = 100 * (0.5 - ci_level / 2.0), 100 * (0.5 + ci_level / 2.0)
    groups = {}
    for g in system.comparison_groups:
        delta, zeta = _point_estimates(system, g)
        tau = tau_fit.tau[g]
        alpha_r, var_alpha = system.alpha(g)
        eff, var_eff = system.mediator_effect(g)
        se_delta = float(np.sqrt(alpha_r**2 * var_eff + eff**2 * var_alpha))
        if cov is not None:
            se_tau = cov.sd("tau", g)
            se_zeta = cov.sd("zeta", g)
        else:
            se_tau = tau_fit.se[g]
            se_zeta = None

        def normal_ci(est, se):
            return None if se is None else (est - z * se, est + z * se)

        if ci_method == "normal":
            ci_tau = normal_ci(tau, se_tau)
            ci_delta = normal_ci(delta, se_delta)
            ci_zeta = normal_ci(zeta, se_zeta)
        else:
            ci_tau = cov.percentile("tau", g, (lo_q, hi_q))
            ci_delta = cov.percentile("delta", g, (lo_q, hi_q))
            ci_zeta = cov.percentile("zeta", g, (lo_q, hi_q))

        groups[g] = GroupDecomposition(
            comparison=g,
            tau=tau,
            delta=delta,
            zeta=zeta,
            pct_reduction=float("nan") if tau == 0 else 100.0 * delta / tau,
            se_tau=se_tau,
            se_delta=se_delta,
            se_zeta=se_zeta,
            ci_tau=ci_tau,
            ci_delta=ci_delta,
            ci_zeta=ci_zeta,
        )
    return DecompositionResult(
        groups=groups,
        ci_level=ci_level,
        ci_method=ci_method,
        interaction=system.interaction,
        n=system.n,
        bootstrap_reps=None if cov is None else cov.B,
        seed=None if cov is None else cov.seed,
    )


REPLICATE_STATS = ("tau", "delta", "zeta", "alpha", "se_betam")


@dataclass(frozen=True)
class CovBundle:
    """Bootstrap replicate statistics and the covariances built from them.

    Per comparison group the replicate arrays hold tau, delta, zeta, the
    mediator-model group coefficient, and the (combined, if interaction)
    standard error of the outcome-model mediator coefficient. All moments
    use sample (ddof=1) covariances. Deterministic given (data, B, seed).
    """

    comparison_groups: tuple
    replicates: dict  # group -> stat name -> np.ndarray
    B: int
    seed: int
    n: int
    n_dropped: int
    interaction: bool

    def _arr(self, stat, group):
        if group not in self.replicates:
            raise NameLookupError(f"no bootstrap replicates for group {group!r}")
        return self.replicates[group][stat]

    def sd(self, stat, group):
        return float(np.std(self._arr(stat, group), ddof=1))

    def percentile(self, stat, group, qs):
        arr = self._arr(stat, group)
        return tuple(float(v) for v in np.percentile(arr, qs))

    def _cov(self, stat_a, stat_b, group):
        a, b = self._arr(stat_a, group), self._arr(stat_b, group)
        return float(np.cov(a, b, ddof=1)[0, 1])

    def var_tau(self, group):
        return float(np.var(self._arr("tau", group), ddof=1))

    def var_alpha(self, group):
        return float(np.var(self._arr("alpha", group), ddof=1))

    def cov_tau_deltares(self, group):
        return self._cov("tau", "delta", group)

    def cov_tau_alpha(self, group):
        return self._cov("tau", "alpha", group)

    def cov_tau_se_betam(self, group):
        return self._cov("tau", "se_betam", group)


def _replicate_stats(data, interaction):
    system = fit_system(data, interaction=interaction)
    tau_fit = initial_disparity(data)
    out = {}
    for g in system.comparison_groups:
        delta, zeta = _point_estimates(system, g)
        alpha_r, _ = system.alpha(g)
        _, var_eff = system.mediator_effect(g)
        out[g] = (tau_fit.tau[g], delta, zeta, alpha_r, float(np.sqrt(var_eff)))
    return out


def bootstrap_cov(data, interaction=False, B=DEFAULT_BOOTSTRAP_REPS, seed=0,
                  threads=None):
    """Nonparametric bootstrap of the decomposition statistics.

    Rows are resampled with replacement; each replicate refits the whole
    system. Replicates whose resample produces a rank-deficient design
    (e.g. a group level vanished) are dropped and counted; more than
    MAX_DROP_FRACTION dropped is an error. Each replicate has its own
    spawned RNG stream, so results are identical for a fixed seed whether
    replicates run serially or on a thread pool (DISPSENS_THREADS or the
    `threads` argument).
    """
    if B < 200:
        raise ValueError(f"need B >= 200 bootstrap replicates for stable covariances, got {B}")
    if threads is None:
        threads = int(os.environ.get("DISPSENS_THREADS", "1"))

    streams = np.random.SeedSequence(seed).spawn(B)
    results = [None] * B

    def run_one(b):
        rng = np.random.Generator(np.random.Philox(streams[b]))
        idx = rng.integers(0, data.n, data.n)
        try:
            return _replicate_stats(data.take(idx), interaction)
        except (CollinearityError, np.linalg.LinAlgError):
            return None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for b, res in enumerate(pool.map(run_one, range(B))):
                results[b] = res
    else:
        for b in range(B):
            results[b] = run_one(b)

    kept = [r for r in results if r is not None]
    n_dropped = B - len(kept)
    if n_dropped > MAX_DROP_FRACTION * B:
        raise BootstrapError(
            f"{n_dropped}/{B} bootstrap replicates dropped for rank deficiency "
            f"(limit {MAX_DROP_FRACTION:.0%}); data too sparse to bootstrap"
        )

    groups = tuple(data.comparison_levels)
    replicates = {
        g: {stat: np.array([rep[g][k] for rep in kept])
            for k, stat in enumerate(REPLICATE_STATS)}
        for g in groups
    }
    return CovBundle(
        comparison_groups=groups,
        replicates=replicates,
        B=B,
        seed=seed,
        n=data.n,
        n_dropped=n_dropped,
        interaction=interaction,
    )


@dataclass(frozen=True)
class Analysis:
    """One dataset's fitted system, initial disparity, bootstrap, and result."""

    data: object
    system: FittedSystem
    initial: InitialDisparity
    cov: CovBundle | None
    result: DecompositionResult


def analyze(data, interaction=False, B=DEFAULT_BOOTSTRAP_REPS, seed=0,
            ci_level=0.95, ci_method="normal", bootstrap=True, threads=None,
            covariate_mean_group=None):
    """Fit, bootstrap, and decompose in one call."""
    system = fit_system(data, interaction=interaction,
                        covariate_mean_group=covariate_mean_group)
    initial = initial_disparity(data)
    cov = bootstrap_cov(data, interaction=interaction, B=B, seed=seed,
                        threads=threads) if bootstrap else None
    result = decompose(system, initial, cov=cov, ci_level=ci_level,
                       ci_method=ci_method)
    return Analysis(data=data, system=system, initial=initial, cov=cov,
                    result=result)
