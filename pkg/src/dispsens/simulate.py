"""Synthetic data with a known omitted confounder, plus brute-force oracles.

The generator simulates a linear-Gaussian system in topological order:
baseline covariates, group label, (confounder if intermediate), intermediate
confounders, mediator, outcome. Any of the covariate/confounder/mediator/
confounder columns may be dichotomized by thresholding the latent Gaussian
at its median. The omitted confounder can be an effect of group status
("intermediate") or independent of it ("pre_exposure"); the same bias
formulas are expected to hold for both, and the oracles here let the
formula modules prove that on data rather than assume it.

Three oracles:

* `oracle_np_identify` -- the stratified nonparametric estimator of
  disparity reduction and remaining on fully discrete data.
* `saturated_regression_decompose` -- the same quantities with the stratum
  means produced by a fully-interacted least-squares fit instead of direct
  averaging (a dual numerical route on saturated designs).
* `oracle_bias` -- empirical bias from refitting with the confounder made
  observable, together with the realized sensitivity coefficients and
  partial R-squared values computed from the same data.
"""

import json
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, replace

import numpy as np

from .dataset import EncodedDataset, encode
from .decomp import _outcome_design, _point_estimates, fit_system
from .errors import DependencyError, PositivityError, ValidationError
from .regress import ols_fit, residuals
from .sens_coef import DiscreteWorld

KINDS = ("continuous", "binary")
TIMINGS = ("intermediate", "pre_exposure")


@dataclass(frozen=True)
class SemSpec:
    """Coefficients, noise scales, and variable kinds for one generator.

    Blocks are stored as (nested) tuples so specs serialize to JSON and
    hash cleanly. Group-indexed blocks have one entry per non-reference
    level, in group_levels order. A "binary" kind dichotomizes the latent
    Gaussian column at its empirical median.
    """

    group_levels: tuple
    group_probs: tuple
    # intermediate confounders X
    x_intercept: tuple
    x_group: tuple        # (G-1, p_x)
    x_cov: tuple          # (p_c, p_x)
    x_noise_sd: tuple
    # mediator M
    m_intercept: float
    m_group: tuple        # (G-1,)
    m_cov: tuple          # (p_c,)
    m_confounder: tuple   # (p_x,)
    m_unobserved: float
    m_noise_sd: float
    # outcome Y
    y_intercept: float
    y_group: tuple
    y_cov: tuple
    y_confounder: tuple
    y_mediator: float
    y_unobserved: float
    y_noise_sd: float
    y_group_mediator: tuple | None = None    # group-by-mediator effects
    y_group_unobserved: tuple | None = None  # group-by-confounder effects
    # omitted confounder U
    u_group: tuple = ()
    u_noise_sd: float = 1.0
    u_timing: str = "intermediate"
    covariate_kinds: tuple = ()
    confounder_kinds: tuple = ()
    mediator_kind: str = "continuous"
    unobserved_kind: str = "binary"
    seed: int = 0

    @property
    def n_groups(self):
        return len(self.group_levels)

    @property
    def n_confounders(self):
        return len(self.x_intercept)

    @property
    def n_covariates(self):
        return len(self.m_cov)

    def validate(self):
        g, p_x, p_c = self.n_groups, self.n_confounders, self.n_covariates
        if g < 2:
            raise ValidationError("need at least two group levels")
        if len(self.group_probs) != g:
            raise ValidationError(f"{len(self.group_probs)} group probabilities for {g} levels")
        probs = np.asarray(self.group_probs, dtype=np.float64)
        if np.any(probs <= 0) or not np.isclose(probs.sum(), 1.0, atol=1e-8):
            raise ValidationError("group probabilities must be positive and sum to 1")

        def block_elems(name, want):
            block = np.asarray(getattr(self, name), dtype=np.float64)
            if block.size != want:
                raise ValidationError(f"{name} has {block.size} entries, expected {want}")

        block_elems("x_group", (g - 1) * p_x)
        block_elems("x_cov", p_c * p_x)
        block_elems("x_noise_sd", p_x)
        block_elems("m_group", g - 1)
        block_elems("m_cov", p_c)
        block_elems("m_confounder", p_x)
        block_elems("y_group", g - 1)
        block_elems("y_cov", p_c)
        block_elems("y_confounder", p_x)
        if len(self.u_group) not in (0, g - 1):
            raise ValidationError(f"u_group needs 0 or {g - 1} entries, got {len(self.u_group)}")
        for opt_name in ("y_group_mediator", "y_group_unobserved"):
            block = getattr(self, opt_name)
            if block is not None and len(block) != g - 1:
                raise ValidationError(f"{opt_name} needs {g - 1} entries, got {len(block)}")
        for name in ("m_noise_sd", "y_noise_sd", "u_noise_sd"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be nonnegative")
        if any(sd < 0 for sd in self.x_noise_sd):
            raise ValidationError("x_noise_sd entries must be nonnegative")
        if self.u_timing not in TIMINGS:
            raise ValidationError(f"u_timing must be one of {TIMINGS}, got {self.u_timing!r}")
        if self.u_timing == "pre_exposure" and any(v != 0.0 for v in self.u_group):
            raise ValidationError(
                "pre_exposure timing requires zero group-to-confounder coefficients "
                "(the confounder must be independent of group status)"
            )
        for name, kinds, count in (("covariate_kinds", self.covariate_kinds, p_c),
                                   ("confounder_kinds", self.confounder_kinds, p_x)):
            if kinds and len(kinds) != count:
                raise ValidationError(f"{name} needs {count} entries, got {len(kinds)}")
            if any(k not in KINDS for k in kinds):
                raise ValidationError(f"{name} entries must be in {KINDS}")
        if self.mediator_kind not in KINDS or self.unobserved_kind not in KINDS:
            raise ValidationError(f"variable kinds must be in {KINDS}")

    def to_json(self, path=None):
        text = json.dumps(asdict(self), indent=2)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)

        def tup(v):
            if isinstance(v, list):
                return tuple(tup(item) for item in v)
            return v

        spec = cls(**{k: tup(v) for k, v in raw.items()})
        spec.validate()
        return spec


@dataclass(frozen=True)
class CompleteDataset:
    """A generated dataset with its confounder column and generating spec."""

    data: EncodedDataset
    spec: SemSpec
    seed: int


def _threshold_median(values):
    return (values > np.median(values)).astype(np.float64)


def generate(spec, n, seed=None):
    """Simulate n rows from a SemSpec.

    Deterministic given (spec, n, seed); seed defaults to spec.seed. Raises
    if any declared group level fails to appear in the sample.
    """
    spec.validate()
    if n < 50:
        raise ValidationError(f"need n >= 50 to fit the model system, got {n}")
    used_seed = spec.seed if seed is None else int(seed)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(used_seed)))
    g, p_x, p_c = spec.n_groups, spec.n_confounders, spec.n_covariates

    c = rng.standard_normal((n, p_c))
    for j, kind in enumerate(spec.covariate_kinds or ("continuous",) * p_c):
        if kind == "binary":
            c[:, j] = _threshold_median(c[:, j])

    r_idx = rng.choice(g, size=n, p=np.asarray(spec.group_probs))
    missing = [spec.group_levels[i] for i in range(g) if not np.any(r_idx == i)]
    if missing:
        raise ValidationError(f"group level(s) {missing} absent at n={n}; increase n")
    labels = np.array([spec.group_levels[i] for i in r_idx], dtype=object)
    ind = np.zeros((n, g - 1))
    for j in range(g - 1):
        ind[:, j] = r_idx == j + 1

    u_lat = rng.normal(0.0, spec.u_noise_sd, n)
    if spec.u_timing == "intermediate" and len(spec.u_group):
        u_lat = u_lat + ind @ np.asarray(spec.u_group, dtype=np.float64)
    u = _threshold_median(u_lat) if spec.unobserved_kind == "binary" else u_lat

    x = np.empty((n, p_x))
    if p_x:
        x_group = np.asarray(spec.x_group, dtype=np.float64).reshape(g - 1, p_x)
        x_cov = np.asarray(spec.x_cov, dtype=np.float64).reshape(p_c, p_x)
        x = (np.asarray(spec.x_intercept) + ind @ x_group + c @ x_cov
             + rng.standard_normal((n, p_x)) * np.asarray(spec.x_noise_sd))
        for j, kind in enumerate(spec.confounder_kinds or ("continuous",) * p_x):
            if kind == "binary":
                x[:, j] = _threshold_median(x[:, j])

    m = (spec.m_intercept + ind @ np.asarray(spec.m_group)
         + c @ np.asarray(spec.m_cov) + x @ np.asarray(spec.m_confounder)
         + spec.m_unobserved * u + rng.normal(0.0, spec.m_noise_sd, n))
    if spec.mediator_kind == "binary":
        m = _threshold_median(m)

    y = (spec.y_intercept + ind @ np.asarray(spec.y_group)
         + c @ np.asarray(spec.y_cov) + x @ np.asarray(spec.y_confounder)
         + spec.y_mediator * m + spec.y_unobserved * u
         + rng.normal(0.0, spec.y_noise_sd, n))
    if spec.y_group_mediator is not None:
        y = y + (ind @ np.asarray(spec.y_group_mediator)) * m
    if spec.y_group_unobserved is not None:
        y = y + (ind @ np.asarray(spec.y_group_unobserved)) * u

    data = encode(labels, m, y, x, c, spec.group_levels[0], unobserved=u)
    return CompleteDataset(data=data, spec=spec, seed=used_seed)


def default_spec(seed=0, interaction=False, differential_u=False,
                 u_timing="intermediate", with_covariates=True):
    """Verification-shaped generator: 4 groups, 2 intermediate confounders,
    2 baseline covariates, binary omitted confounder, continuous mediator
    and outcome."""
    p_c = 2 if with_covariates else 0
    u_group = (0.8, 0.5, 0.3) if u_timing == "intermediate" else (0.0, 0.0, 0.0)
    return SemSpec(
        group_levels=("g0", "g1", "g2", "g3"),
        group_probs=(0.4, 0.2, 0.2, 0.2),
        x_intercept=(0.2, -0.1),
        x_group=((-0.6, 0.5), (-0.3, 0.2), (0.2, -0.2)),
        x_cov=((0.3, 0.1), (-0.2, 0.25))[:p_c],
        x_noise_sd=(1.0, 1.0),
        m_intercept=0.5,
        m_group=(-1.2, -0.7, -0.4),
        m_cov=(0.25, -0.15)[:p_c],
        m_confounder=(0.35, -0.3),
        m_unobserved=0.6,
        m_noise_sd=1.0,
        y_intercept=1.0,
        y_group=(-0.5, -0.3, -0.1),
        y_cov=(0.2, 0.1)[:p_c],
        y_confounder=(0.3, -0.25),
        y_mediator=0.6,
        y_group_mediator=(0.15, -0.1, 0.05) if interaction else None,
        y_unobserved=0.9,
        y_group_unobserved=(0.3, 0.1, -0.2) if differential_u else None,
        y_noise_sd=1.0,
        u_group=u_group,
        u_noise_sd=1.0,
        u_timing=u_timing,
        covariate_kinds=("continuous",) * p_c,
        confounder_kinds=("continuous", "continuous"),
        mediator_kind="continuous",
        unobserved_kind="binary",
        seed=seed,
    )


def discrete_spec(seed=0, interaction=False, with_covariate=True):
    """All-binary group/confounder/mediator/covariate world (outcome stays
    continuous) for the saturated-design equivalence checks."""
    p_c = 1 if with_covariate else 0
    return SemSpec(
        group_levels=("g0", "g1"),
        group_probs=(0.55, 0.45),
        x_intercept=(0.1,),
        x_group=((-0.7,),),
        x_cov=((0.4,),)[:p_c] if p_c else (),
        x_noise_sd=(1.0,),
        m_intercept=0.2,
        m_group=(-0.9,),
        m_cov=(0.5,)[:p_c],
        m_confounder=(0.6,),
        m_unobserved=0.5,
        m_noise_sd=1.0,
        y_intercept=0.5,
        y_group=(-0.4,),
        y_cov=(0.3,)[:p_c],
        y_confounder=(0.5,),
        y_mediator=0.8,
        y_group_mediator=(0.25,) if interaction else None,
        y_unobserved=0.7,
        y_noise_sd=1.0,
        u_group=(0.6,),
        u_noise_sd=1.0,
        u_timing="intermediate",
        covariate_kinds=("binary",) * p_c,
        confounder_kinds=("binary",),
        mediator_kind="binary",
        unobserved_kind="binary",
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Nonparametric oracles on discrete data
# ---------------------------------------------------------------------------

MAX_DISCRETE_LEVELS = 25


def _as_encoded(data):
    return data.data if isinstance(data, CompleteDataset) else data


def _check_discrete(data):
    def uniques(values, name):
        u = np.unique(values)
        if len(u) > MAX_DISCRETE_LEVELS:
            raise ValidationError(
                f"{name} has {len(u)} distinct values; the stratified oracle "
                f"needs discrete data (<= {MAX_DISCRETE_LEVELS} levels)"
            )

    uniques(data.mediator, "mediator")
    for j, name in enumerate(data.confounder_names):
        uniques(data.confounders[:, j], f"confounder {name!r}")
    for j, name in enumerate(data.covariate_names):
        uniques(data.covariates[:, j], f"covariate {name!r}")


def _strata(data):
    c_keys = [tuple(row) for row in data.covariates]
    x_keys = [tuple(row) for row in data.confounders]
    by_gc = defaultdict(list)
    by_g = defaultdict(list)
    for i, label in enumerate(data.group_labels):
        by_g[label].append(i)
        by_gc[(label, c_keys[i])].append(i)
    return c_keys, x_keys, by_g, by_gc


def _np_decompose(data, cell_mean):
    """Shared stratified-estimator skeleton.

    cell_mean(level, x, m, c) must return the estimated outcome mean for
    that stratum or raise PositivityError. The group and reference means
    E[Y|r,c], E[Y|0,c] are assembled from the same cell means weighted by
    the joint empirical (x, m) distribution, so the two oracle routes share
    only the raw counts, not the averaging code path.
    """
    c_keys, x_keys, by_g, by_gc = _strata(data)
    ref = data.reference_level

    def stratum_mean(level, c_key, rows):
        joint = Counter((x_keys[i], data.mediator[i]) for i in rows)
        total = len(rows)
        return sum(cnt / total * cell_mean(level, xk, mv, c_key)
                   for (xk, mv), cnt in sorted(joint.items()))

    out = {}
    for r in data.comparison_levels:
        rows_r = by_g[r]
        delta = zeta = 0.0
        for c_key in sorted({c_keys[i] for i in rows_r}):
            rows_rc = by_gc[(r, c_key)]
            rows_0c = by_gc.get((ref, c_key))
            if not rows_0c:
                raise PositivityError(
                    f"no reference-group rows in covariate stratum c={c_key}",
                    cell=(ref, c_key),
                )
            w_c = len(rows_rc) / len(rows_r)
            p_x = Counter(x_keys[i] for i in rows_rc)
            p_m = Counter(data.mediator[i] for i in rows_0c)
            s = 0.0
            for xk, n_x in sorted(p_x.items()):
                for mv, n_m in sorted(p_m.items()):
                    s += (n_x / len(rows_rc)) * (n_m / len(rows_0c)) \
                        * cell_mean(r, xk, mv, c_key)
            ey_rc = stratum_mean(r, c_key, rows_rc)
            ey_0c = stratum_mean(ref, c_key, rows_0c)
            delta += w_c * (ey_rc - s)
            zeta += w_c * (s - ey_0c)
        out[r] = (delta, zeta)
    return out


def oracle_np_identify(data):
    """Stratified nonparametric disparity reduction and remaining.

    Requires discrete group, confounders, mediator, and covariates; every
    stratum the estimator touches must be nonempty. Returns
    {comparison group: (delta, zeta)}.
    """
    data = _as_encoded(data)
    _check_discrete(data)
    c_keys, x_keys, _, _ = _strata(data)
    cells = defaultdict(list)
    for i, label in enumerate(data.group_labels):
        cells[(label, x_keys[i], data.mediator[i], c_keys[i])].append(i)
    means = {key: float(np.mean(data.outcome[rows])) for key, rows in cells.items()}

    def cell_mean(level, xk, mv, c_key):
        key = (level, xk, mv, c_key)
        if key not in means:
            raise PositivityError(
                f"empty cell: group={level}, x={xk}, m={mv}, c={c_key}", cell=key
            )
        return means[key]

    return _np_decompose(data, cell_mean)


def saturated_regression_decompose(data):
    """Stratified estimator with cell means taken from a fully-interacted
    least-squares fit (one indicator column per observed stratum).

    On discrete data this must agree with `oracle_np_identify`; the two
    compute the same estimand through independent numerical routes.
    """
    data = _as_encoded(data)
    _check_discrete(data)
    c_keys, x_keys, _, _ = _strata(data)
    keys = [(data.group_labels[i], x_keys[i], data.mediator[i], c_keys[i])
            for i in range(data.n)]
    cell_ids = sorted(set(keys))
    col_of = {key: j for j, key in enumerate(cell_ids)}
    design = np.zeros((data.n, len(cell_ids)))
    for i, key in enumerate(keys):
        design[i, col_of[key]] = 1.0
    if data.n - len(cell_ids) < 1:
        raise ValidationError(
            f"saturated design has {len(cell_ids)} cells for {data.n} rows; "
            "not enough replication to fit"
        )
    fit = ols_fit(data.outcome, design, [f"cell{j}" for j in range(len(cell_ids))])

    def cell_mean(level, xk, mv, c_key):
        key = (level, xk, mv, c_key)
        if key not in col_of:
            raise PositivityError(
                f"empty cell: group={level}, x={xk}, m={mv}, c={c_key}", cell=key
            )
        return float(fit.coefficients[col_of[key]])

    return _np_decompose(data, cell_mean)


# ---------------------------------------------------------------------------
# Refit-with-confounder oracle
# ---------------------------------------------------------------------------

def promote_unobserved(data):
    """Treat the held-out confounder as one more observed intermediate
    confounder (it joins the X block of every downstream fit)."""
    data = _as_encoded(data)
    if data.unobserved is None:
        raise DependencyError("dataset has no held-out confounder column")
    return replace(
        data,
        confounders=np.column_stack([data.confounders, data.unobserved]),
        confounder_names=tuple(data.confounder_names) + (data.unobserved_name,),
        unobserved=None,
    )


def _partial_r2(a, b, controls):
    ra = residuals(a, controls)
    rb = residuals(b, controls)
    denom = float(np.linalg.norm(ra) * np.linalg.norm(rb))
    if denom == 0.0:
        return 0.0
    return float((ra @ rb) / denom) ** 2


@dataclass(frozen=True)
class GroupOracleBias:
    """Empirical bias and realized sensitivity parameters for one group."""

    group: str
    delta_res: float
    zeta_res: float
    delta_true: float
    zeta_true: float
    alpha_r: float
    beta_u: float
    delta_m: float
    beta_res_m: float
    se_beta_res_m: float
    df: int
    r2_yu: float
    r2_mu: float
    r2_yu_pooled: float
    r2_mu_pooled: float

    @property
    def bias_delta(self):
        return self.delta_res - self.delta_true

    @property
    def bias_zeta(self):
        return self.zeta_res - self.zeta_true

    @property
    def coef_prediction(self):
        """alpha_r * delta_m * beta_u at the realized coefficients."""
        return self.alpha_r * self.delta_m * self.beta_u


def oracle_bias(data, interaction=False):
    """Empirical bias from refitting with the confounder observable.

    The "true" system adds the held-out confounder to the observed
    intermediate-confounder block and refits everything; bias is the
    with-minus-without difference of each estimate. Realized coefficients
    come from the same data: beta_u is the confounder's outcome coefficient
    in the augmented fit, delta_m the mediator coefficient when regressing
    the confounder on the short outcome design. Realized partial
    R-squared values are squared partial correlations computed within the
    comparison group (and, for the no-interaction system, pooled across
    groups given the group indicators, which makes the R-squared bias
    identity exact in sample).

    Returns {comparison group: GroupOracleBias}.
    """
    data = _as_encoded(data)
    if data.unobserved is None:
        raise DependencyError("oracle_bias needs the held-out confounder column")
    u = data.unobserved
    res_system = fit_system(data, interaction=interaction)
    true_system = fit_system(promote_unobserved(data), interaction=interaction)
    beta_u = true_system.outcome_fit.coef(data.unobserved_name)

    short_design, short_names = _outcome_design(data, interaction)
    aux = ols_fit(u, short_design, short_names)
    delta_m = aux.coef(data.mediator_name)

    # pooled partial R^2 (no-interaction designs)
    design_no_int, _ = _outcome_design(data, False)
    m_col = 1 + len(data.comparison_levels) + data.confounders.shape[1]
    design_wo_m = np.delete(design_no_int, m_col, axis=1)
    if interaction:
        r2_yu_pooled = r2_mu_pooled = float("nan")
    else:
        r2_yu_pooled = _partial_r2(data.outcome, u, design_no_int)
        r2_mu_pooled = _partial_r2(data.mediator, u, design_wo_m)

    out = {}
    for g in data.comparison_levels:
        delta_res, zeta_res = _point_estimates(res_system, g)
        delta_true, zeta_true = _point_estimates(true_system, g)
        alpha_r, _ = res_system.alpha(g)
        beta_res_m, var_betam = res_system.mediator_effect(g)

        mask = data.group_labels == g
        controls_y = np.column_stack([np.ones(mask.sum()), data.confounders[mask],
                                      data.mediator[mask], data.covariates[mask]])
        controls_m = np.column_stack([np.ones(mask.sum()), data.confounders[mask],
                                      data.covariates[mask]])
        out[g] = GroupOracleBias(
            group=g,
            delta_res=delta_res,
            zeta_res=zeta_res,
            delta_true=delta_true,
            zeta_true=zeta_true,
            alpha_r=alpha_r,
            beta_u=beta_u,
            delta_m=delta_m,
            beta_res_m=beta_res_m,
            se_beta_res_m=float(np.sqrt(var_betam)),
            df=res_system.outcome_fit.df,
            r2_yu=_partial_r2(data.outcome[mask], u[mask], controls_y),
            r2_mu=_partial_r2(data.mediator[mask], u[mask], controls_m),
            r2_yu_pooled=r2_yu_pooled,
            r2_mu_pooled=r2_mu_pooled,
        )
    return out


# ---------------------------------------------------------------------------
# Discrete-world extraction
# ---------------------------------------------------------------------------

def world_from_discrete_data(data, group, u_ref_index=0):
    """Estimate a DiscreteWorld's tables for one comparison group by
    exhaustive cell frequencies and means.

    Probability rows for strata the comparison group never occupies are
    filled uniformly; they receive zero weight in the bias sum. Strata the
    estimator does touch must contain every confounder level.
    """
    data = _as_encoded(data)
    if data.unobserved is None:
        raise DependencyError("world extraction needs the held-out confounder column")
    _check_discrete(data)
    c_keys, x_keys, by_g, by_gc = _strata(data)
    u_vals = data.unobserved
    ref = data.reference_level

    rows_r = by_g[group]
    if not rows_r:
        raise PositivityError(f"no rows for comparison group {group!r}")
    c_support = sorted({c_keys[i] for i in rows_r})
    x_support = sorted({x_keys[i] for i in rows_r})
    m_support = sorted({data.mediator[i] for i in by_g[ref]})
    u_support = sorted(set(np.unique(u_vals)))
    n_c, n_x, n_m, n_u = len(c_support), len(x_support), len(m_support), len(u_support)
    c_of = {k: i for i, k in enumerate(c_support)}
    x_of = {k: i for i, k in enumerate(x_support)}
    m_of = {k: i for i, k in enumerate(m_support)}
    u_of = {k: i for i, k in enumerate(u_support)}

    ey = np.zeros((n_c, n_x, n_m, n_u))
    p_u_xc = np.full((n_c, n_x, n_u), 1.0 / n_u)
    p_u_xmc = np.full((n_c, n_x, n_m, n_u), 1.0 / n_u)
    p_x = np.zeros((n_c, n_x))
    p_m_ref = np.zeros((n_c, n_m))
    c_weights = np.zeros(n_c)

    cell_rows = defaultdict(list)   # (c, x, m) -> group rows
    xc_rows = defaultdict(list)     # (c, x) -> group rows
    for i in rows_r:
        ci, xi = c_of[c_keys[i]], x_of[x_keys[i]]
        xc_rows[(ci, xi)].append(i)
        mi = m_of.get(data.mediator[i])
        if mi is not None:
            cell_rows[(ci, xi, mi)].append(i)

    for c_key in c_support:
        ci = c_of[c_key]
        rows_rc = by_gc[(group, c_key)]
        rows_0c = by_gc.get((ref, c_key))
        if not rows_0c:
            raise PositivityError(
                f"no reference-group rows in covariate stratum c={c_key}",
                cell=(ref, c_key),
            )
        c_weights[ci] = len(rows_rc) / len(rows_r)
        for i in rows_rc:
            p_x[ci, x_of[x_keys[i]]] += 1.0 / len(rows_rc)
        for i in rows_0c:
            p_m_ref[ci, m_of[data.mediator[i]]] += 1.0 / len(rows_0c)

        for xk in {x_keys[i] for i in rows_rc}:
            xi = x_of[xk]
            rows_xc = xc_rows[(ci, xi)]
            counts = Counter(u_vals[i] for i in rows_xc)
            p_u_xc[ci, xi] = [counts.get(uv, 0) / len(rows_xc) for uv in u_support]
            for mv, p in enumerate(p_m_ref[ci]):
                if p == 0.0:
                    continue
                rows_cell = cell_rows.get((ci, xi, mv))
                if not rows_cell:
                    raise PositivityError(
                        f"empty cell: group={group}, x={xk}, m={m_support[mv]}, c={c_key}",
                        cell=(group, xk, m_support[mv], c_key),
                    )
                u_counts = Counter(u_vals[i] for i in rows_cell)
                p_u_xmc[ci, xi, mv] = [u_counts.get(uv, 0) / len(rows_cell)
                                       for uv in u_support]
                for uv, ui in u_of.items():
                    urows = [i for i in rows_cell if u_vals[i] == uv]
                    if not urows:
                        raise PositivityError(
                            f"empty cell: group={group}, x={xk}, m={m_support[mv]}, "
                            f"c={c_key}, u={uv}",
                            cell=(group, xk, m_support[mv], c_key, uv),
                        )
                    ey[ci, xi, mv, ui] = float(np.mean(data.outcome[urows]))

    world = DiscreteWorld(
        x_support=tuple(x_support),
        m_support=tuple(m_support),
        u_support=tuple(u_support),
        c_support=tuple(c_support),
        ey=ey,
        p_u_given_xc=p_u_xc,
        p_u_given_xmc=p_u_xmc,
        p_x=p_x,
        p_m_ref=p_m_ref,
        c_weights=c_weights,
        u_ref_index=u_ref_index,
    )
    world.validate()
    return world
