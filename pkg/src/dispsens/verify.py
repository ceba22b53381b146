"""Self-checks that pit every closed-form formula against brute force.

Each check builds its own oracle (direct enumeration, refit with the
confounder observable, stratified estimation, fixed-point replay) and
compares the package's formula path against it, reporting the worst
observed discrepancy next to the tolerance. A `corrupt` hook perturbs a
check's measured value by 0.1% so the battery can demonstrate it actually
fails when a formula is wrong.
"""

from dataclasses import dataclass

import numpy as np

from . import decomp, sens_coef, sens_r2, simulate
from .errors import DispsensError

_CORRUPT_FACTOR = 1.001


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    margin: float      # worst |discrepancy| observed
    tolerance: float
    detail: str

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: worst |err| = {self.margin:.3e} "
                f"(tol {self.tolerance:.1e}) {self.detail}")


def random_world(rng, n_c=1, n_x=2, n_m=2, n_u=2):
    """A random internally-valid DiscreteWorld (tables need not cohere as a
    joint distribution; the bias identities hold regardless)."""
    def dist(*shape):
        v = rng.random(shape) + 0.05
        return v / v.sum(axis=-1, keepdims=True)

    return sens_coef.DiscreteWorld(
        x_support=tuple(range(n_x)),
        m_support=tuple(range(n_m)),
        u_support=tuple(range(n_u)),
        c_support=tuple(range(n_c)),
        ey=rng.normal(0.0, 2.0, (n_c, n_x, n_m, n_u)),
        p_u_given_xc=dist(n_c, n_x, n_u),
        p_u_given_xmc=dist(n_c, n_x, n_m, n_u),
        p_x=dist(n_c, n_x),
        p_m_ref=dist(n_c, n_m),
        c_weights=dist(n_c),
        u_ref_index=int(rng.integers(n_u)),
    )


def bias_by_definition(world):
    """Disparity-reduction bias as the literal difference of the naive and
    confounder-aware stratified sums (no reference value involved)."""
    ey_naive = np.einsum("cxmu,cxmu->cxm", world.ey, world.p_u_given_xmc)
    s_res = np.einsum("cxm,cx,cm->c", ey_naive, world.p_x, world.p_m_ref)
    s_true = np.einsum("cxmu,cxu,cx,cm->c", world.ey, world.p_u_given_xc,
                       world.p_x, world.p_m_ref)
    return float(world.c_weights @ (s_true - s_res))


def check_general_bias(seed=0, n_worlds=100, corrupt=False):
    """Contrast-form bias equals the definitional difference on random
    worlds, and is invariant to the reference confounder value."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    worst_eq = worst_ref = 0.0
    for _ in range(n_worlds):
        n_c = int(rng.integers(1, 3))
        n_x = int(rng.integers(1, 4))
        n_m = int(rng.integers(2, 4))
        n_u = int(rng.integers(2, 5))
        world = random_world(rng, n_c, n_x, n_m, n_u)
        got = sens_coef.general_bias_discrete(world)
        if corrupt:
            got *= _CORRUPT_FACTOR
        worst_eq = max(worst_eq, abs(got - bias_by_definition(world)))
        base = sens_coef.general_bias_discrete(world.with_u_ref(0))
        for u_ref in range(1, n_u):
            alt = sens_coef.general_bias_discrete(world.with_u_ref(u_ref))
            worst_ref = max(worst_ref, abs(alt - base))
    passed = worst_eq <= 1e-10 and worst_ref <= 1e-12
    return CheckResult(
        "general-bias-discrete", passed, max(worst_eq, worst_ref), 1e-10,
        f"[definition diff {worst_eq:.2e}, reference-value drift {worst_ref:.2e}, "
        f"{n_worlds} worlds]",
    )


def check_bias_refit(seed=0, n=20000, corrupt=False):
    """Triple-product bias formula vs refitting with the confounder
    observable, for confounding that is an effect of group status and for
    confounding independent of it."""
    worst = 0.0
    details = []
    for timing in simulate.TIMINGS:
        spec = simulate.default_spec(seed=seed, u_timing=timing)
        data = simulate.generate(spec, n)
        oracle = simulate.oracle_bias(data)
        for g, ob in oracle.items():
            pred = ob.coef_prediction
            if corrupt:
                pred *= _CORRUPT_FACTOR
            worst = max(worst, abs(ob.bias_delta - pred),
                        abs(ob.bias_zeta + ob.bias_delta))
        details.append(f"{timing}: ok")
    passed = worst <= 1e-8
    return CheckResult(
        "bias-formula-vs-refit", passed, worst, 1e-8,
        f"[n={n}, both confounder timings]",
    )


def check_r2_bridge(seed=0, n=20000, corrupt=False):
    """Partial-R^2 bias formula vs the coefficient-scale bias on the same
    data. Pooled partial R^2 values reproduce the refit bias exactly;
    within-group values agree at sampling precision."""
    spec = simulate.default_spec(seed=seed)
    data = simulate.generate(spec, n)
    oracle = simulate.oracle_bias(data)
    analysis = decomp.analyze(data.data, bootstrap=False)
    worst_exact = worst_within = 0.0
    for g, ob in oracle.items():
        inputs = sens_r2.inputs_for(analysis, g)
        exact = sens_r2.bias_r2(
            inputs, sens_r2.R2Params(ob.r2_yu_pooled, ob.r2_mu_pooled))
        if corrupt:
            exact *= _CORRUPT_FACTOR
        worst_exact = max(worst_exact, abs(exact - abs(ob.bias_delta)))
        within = sens_r2.bias_r2(inputs, sens_r2.R2Params(ob.r2_yu, ob.r2_mu))
        worst_within = max(worst_within, abs(within - abs(ob.coef_prediction)))
    passed = worst_exact <= 1e-6 and worst_within <= 0.05
    return CheckResult(
        "r2-bridge", passed, worst_exact, 1e-6,
        f"[within-group vs coefficient-scale diff {worst_within:.2e} (tol 5e-2), n={n}]",
    )


def check_np_saturated(seed=0, n=4000, corrupt=False):
    """Stratified oracle vs fully-interacted regression on all-binary data,
    plus the exact product-form equivalence when the standard outcome model
    is itself saturated (binary mediator, no other regressors)."""
    data = simulate.generate(simulate.discrete_spec(seed=seed), n)
    direct = simulate.oracle_np_identify(data)
    regression = simulate.saturated_regression_decompose(data)
    worst = 0.0
    for g in direct:
        dd, dz = direct[g]
        rd, rz = regression[g]
        if corrupt:
            rd *= _CORRUPT_FACTOR
        worst = max(worst, abs(dd - rd), abs(dz - rz))

    # pure world: standard interaction decomposition is saturated
    pure = simulate.generate(_pure_binary_spec(seed), n)
    system = decomp.fit_system(pure.data, interaction=True)
    tau_fit = decomp.initial_disparity(pure.data)
    result = decomp.decompose(system, tau_fit)
    oracle = simulate.oracle_np_identify(pure)
    worst_pure = 0.0
    for g, (od, oz) in oracle.items():
        worst_pure = max(worst_pure, abs(result[g].delta - od), abs(result[g].zeta - oz))
    passed = worst <= 1e-8 and worst_pure <= 1e-8
    return CheckResult(
        "nonparametric-vs-saturated-regression", passed, max(worst, worst_pure), 1e-8,
        f"[saturated fit diff {worst:.2e}; product-form diff {worst_pure:.2e}, n={n}]",
    )


def _pure_binary_spec(seed):
    """Binary mediator, no intermediate confounders, no covariates."""
    return simulate.SemSpec(
        group_levels=("g0", "g1"),
        group_probs=(0.55, 0.45),
        x_intercept=(),
        x_group=((),),
        x_cov=(),
        x_noise_sd=(),
        m_intercept=0.2,
        m_group=(-0.9,),
        m_cov=(),
        m_confounder=(),
        m_unobserved=0.5,
        m_noise_sd=1.0,
        y_intercept=0.5,
        y_group=(-0.4,),
        y_cov=(),
        y_confounder=(),
        y_mediator=0.8,
        y_group_mediator=(0.3,),
        y_unobserved=0.7,
        y_noise_sd=1.0,
        u_group=(0.6,),
        u_timing="intermediate",
        confounder_kinds=(),
        mediator_kind="binary",
        unobserved_kind="binary",
        seed=seed,
    )


def check_rv_fixed_point(seed=0, n_draws=100, corrupt=False):
    """rv(g) replayed through the bias formula reproduces the estimate it is
    supposed to explain away, and the adjusted estimate lands on zero."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    worst = 0.0
    for _ in range(n_draws):
        g = float(rng.uniform(1e-6, 5.0))
        alpha_r = float(rng.uniform(0.2, 3.0)) * (1 if rng.random() < 0.5 else -1)
        se = float(rng.uniform(0.01, 1.0))
        df = int(rng.integers(5, 500))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        target = sign * g * abs(alpha_r) * se * np.sqrt(df)
        inputs = sens_r2.R2Inputs(
            group="g", alpha_r=alpha_r, se_alpha_r=0.1,
            beta_res_m=target / alpha_r, se_beta_res_m=se, df=df,
            delta_res=target, zeta_res=-target / 2.0, tau=target / 2.0,
        )
        v = sens_r2.rv(g)
        if corrupt:
            v *= _CORRUPT_FACTOR
        params = sens_r2.R2Params(v, v)
        worst = max(worst, abs(sens_r2.bias_r2(inputs, params) - abs(target)))
        delta_adj, _ = sens_r2.adjust_point_r2(inputs, params)
        worst = max(worst, abs(delta_adj))
    passed = worst <= 1e-10
    return CheckResult("rv-fixed-point", passed, worst, 1e-10,
                       f"[{n_draws} random strengths]")


def check_decomposition_identity(seed=0, n=5000, n_datasets=20, corrupt=False):
    """tau = delta + zeta, exactly without interaction (with covariates),
    and for the interaction system on covariate-free data."""
    worst_plain = worst_inter = 0.0
    for k in range(n_datasets):
        data = simulate.generate(simulate.default_spec(seed=seed + k), n)
        res = decomp.decompose(decomp.fit_system(data.data),
                               decomp.initial_disparity(data.data))
        for g in res.groups:
            gap = res[g].tau - res[g].delta - res[g].zeta
            if corrupt:
                gap += (_CORRUPT_FACTOR - 1.0)
            worst_plain = max(worst_plain, abs(gap))

        spec_i = simulate.default_spec(seed=seed + k, interaction=True,
                                       with_covariates=False)
        data_i = simulate.generate(spec_i, n)
        res_i = decomp.decompose(decomp.fit_system(data_i.data, interaction=True),
                                 decomp.initial_disparity(data_i.data))
        for g in res_i.groups:
            gap = res_i[g].tau - res_i[g].delta - res_i[g].zeta
            worst_inter = max(worst_inter, abs(gap))
    passed = worst_plain <= 1e-10 and worst_inter <= 1e-8
    return CheckResult(
        "decomposition-identity", passed, max(worst_plain, worst_inter), 1e-8,
        f"[no interaction {worst_plain:.2e} (tol 1e-10); interaction {worst_inter:.2e}; "
        f"{n_datasets} datasets]",
    )


def check_rv_alpha(seed=0, n=1500, corrupt=False):
    """The significance robustness value lands the CI bound within tolerance
    of zero on replay and never exceeds the point robustness value."""
    data = simulate.generate(simulate.default_spec(seed=seed), n)
    analysis = decomp.analyze(data.data, B=200, seed=seed)
    worst = 0.0
    detail = []
    for g in analysis.system.comparison_groups:
        inputs = sens_r2.inputs_for(analysis, g)
        for quantity in sens_r2.QUANTITIES:
            ra = sens_r2.rv_alpha(inputs, quantity)
            point = sens_r2.rv(sens_r2.g_value(inputs, quantity))
            if ra == 0.0:
                continue
            if corrupt:
                ra = min(ra * (1 + 0.5), point)  # large perturbation; bound check must fail
            bound = sens_r2._nearest_zero_bound(inputs, ra, quantity, 0.05)
            worst = max(worst, abs(bound))
            if ra > point + 1e-12:
                worst = max(worst, ra - point)
            detail.append(f"{g}/{quantity}: rv_a={ra:.4f} <= rv={point:.4f}")
    passed = worst < sens_r2.RV_ALPHA_TOL
    return CheckResult("rv-alpha-replay", passed, worst, sens_r2.RV_ALPHA_TOL,
                       "[" + "; ".join(detail) + "]")


def check_reference_switch(seed=0, n=4000, corrupt=False):
    """Reference switching equals the combined coefficient and combined
    variance read off the original interaction fit."""
    data = simulate.generate(simulate.default_spec(seed=seed, interaction=True), n)
    system = decomp.fit_system(data.data, interaction=True)
    worst_coef = worst_se = 0.0
    for g in system.comparison_groups:
        est, var = system.mediator_effect(g)
        switched_est, switched_se = sens_r2.reference_switch(data.data, g, interaction=True)
        if corrupt:
            switched_est *= _CORRUPT_FACTOR
        worst_coef = max(worst_coef, abs(switched_est - est))
        worst_se = max(worst_se, abs(switched_se - np.sqrt(var)))
    passed = worst_coef <= 1e-10 and worst_se <= 1e-8
    return CheckResult(
        "reference-switch", passed, max(worst_coef, worst_se), 1e-8,
        f"[coefficient {worst_coef:.2e} (tol 1e-10); se {worst_se:.2e}]",
    )


ALL_CHECKS = {
    "general-bias-discrete": check_general_bias,
    "bias-formula-vs-refit": check_bias_refit,
    "r2-bridge": check_r2_bridge,
    "nonparametric-vs-saturated-regression": check_np_saturated,
    "rv-fixed-point": check_rv_fixed_point,
    "decomposition-identity": check_decomposition_identity,
    "rv-alpha-replay": check_rv_alpha,
    "reference-switch": check_reference_switch,
}


@dataclass(frozen=True)
class VerifyReport:
    results: tuple
    seeds: tuple

    @property
    def all_passed(self):
        return all(r.passed for r in self.results)

    def to_dict(self):
        return {
            "seeds": list(self.seeds),
            "all_passed": self.all_passed,
            "checks": [{
                "name": r.name, "passed": r.passed, "margin": r.margin,
                "tolerance": r.tolerance, "detail": r.detail,
            } for r in self.results],
        }


def run_verify(base_seed=20240, seeds=1, corrupt=None, checks=None):
    """Run the oracle battery over one or more seeds.

    With several seeds, each check reports the worst margin across seeds
    and its pass count. `corrupt` names a check whose measured value is
    perturbed (a self-test that the battery can fail).
    """
    if corrupt is not None and corrupt not in ALL_CHECKS:
        raise DispsensError(f"unknown check {corrupt!r}; have {sorted(ALL_CHECKS)}")
    selected = checks or list(ALL_CHECKS)
    seed_list = tuple(base_seed + k for k in range(seeds))
    results = []
    for name in selected:
        fn = ALL_CHECKS[name]
        per_seed = [fn(seed=s, corrupt=(name == corrupt)) for s in seed_list]
        worst = max(per_seed, key=lambda r: r.margin)
        n_pass = sum(r.passed for r in per_seed)
        detail = worst.detail
        if seeds > 1:
            detail = f"[{n_pass}/{seeds} seeds pass] " + detail
        results.append(CheckResult(
            name=name,
            passed=n_pass == seeds,
            margin=worst.margin,
            tolerance=worst.tolerance,
            detail=detail,
        ))
    return VerifyReport(results=tuple(results), seeds=seed_list)
