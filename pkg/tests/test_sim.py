"""Monte-Carlo engine: analytic anchors, scheme agreement, convergence, determinism."""

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from extractopt.model import (
    CostParams,
    InitialState,
    LevyMeasureSpec,
    MarketModel,
    RegimeParams,
    SwitchGenerator,
    example_model,
)
from extractopt.sim import (
    Policy,
    SimConfig,
    SimOverflowError,
    estimate_payoff,
    run_paths,
    sample_regime_path,
    simulate_path_euler,
    simulate_path_exact,
    truncation_bound,
    zero_policy_value,
)


def _single(mu, sigma, gamma=0.0, levy=None, lam=0.001, beta=0.1, theta=0.01,
            bigK=10.0, r=0.02):
    return MarketModel(
        regimes=(RegimeParams(mu, sigma, gamma),),
        switch=SwitchGenerator(q=((0.0,),)),
        levy=levy or LevyMeasureSpec.none(),
        cost=CostParams(beta=beta, theta=theta, bigK=bigK, r=r),
        impact=lam,
    )


def test_zero_policy_value_long_horizon_limit():
    model, init, _ = example_model(1)
    # theta*y0 + K/r = 0.01*1e4 + 10/0.02 = 600 currency units
    assert zero_policy_value(model, init.y0, 1e9) == pytest.approx(-600.0)
    assert zero_policy_value(model, init.y0, 0.0) == 0.0


@pytest.mark.parametrize("n", [1, 2])
@pytest.mark.parametrize("scheme", ["exact", "euler"])
def test_zero_policy_estimate_is_exact(n, scheme):
    model, init, _ = example_model(n)
    cfg = SimConfig(horizon=50.0, scheme=scheme, dt=0.05, n_paths=64, master_seed=5)
    est = estimate_payoff(model, Policy.zero(), init, cfg)
    target = zero_policy_value(model, init.y0, cfg.horizon)
    # segment boundaries differ across paths, so payoffs agree only to
    # rounding; "exact" here means within 1e-12
    assert est.std_error <= 1e-12
    if scheme == "exact":
        # discount integration is closed-form on each segment
        assert est.mean == pytest.approx(target, rel=1e-12)
    else:
        # left-point rule: O(dt) bias only
        assert est.mean == pytest.approx(target, rel=1e-3)


def test_euler_matches_ode_oracle_when_deterministic():
    """sigma = gamma = 0 with a constant rate: the price follows a linear ODE
    and the payoff is a deterministic integral; solve_ivp is the oracle."""
    model = _single(mu=0.03, sigma=0.0, lam=0.4)
    u0, T = 2.0, 5.0
    init = InitialState(x0=10.0, y0=100.0, regime=1)
    c = model.cost

    def rhs(t, s):
        x, y, J = s
        return [model.regimes[0].mu * x - model.impact * u0, -u0,
                math.exp(-c.r * t) * (x * u0 - (c.beta * u0**2 + c.theta * u0
                                                + c.r * c.theta * y + c.bigK))]

    sol = solve_ivp(rhs, (0.0, T), [init.x0, init.y0, 0.0], rtol=1e-11, atol=1e-12)
    oracle = sol.y[2, -1]
    cfg = SimConfig(horizon=T, scheme="euler", dt=1e-3, n_paths=2, master_seed=0)
    est = estimate_payoff(model, Policy.constant(u0), init, cfg)
    assert est.std_error == 0.0
    assert est.mean == pytest.approx(oracle, rel=2e-4)


def test_euler_constant_rate_hand_integral():
    """mu = sigma = 0, lambda = 0: x stays at x0 and the discounted payoff
    integrates in closed form."""
    model = _single(mu=0.0, sigma=0.0, lam=0.0)
    c = model.cost
    u0, T, x0, y0 = 3.0, 10.0, 2.0, 50.0
    r = c.r
    # integrand: a + b*t with a = x0*u0 - beta*u0^2 - theta*u0 - r*theta*y0 - K,
    # b = r*theta*u0 (reserve decreases linearly)
    a = x0 * u0 - c.beta * u0**2 - c.theta * u0 - r * c.theta * y0 - c.bigK
    b = r * c.theta * u0
    phi1 = (1.0 - math.exp(-r * T)) / r
    phi2 = (phi1 - T * math.exp(-r * T)) / r
    oracle = a * phi1 + b * phi2
    cfg = SimConfig(horizon=T, scheme="euler", dt=5e-4, n_paths=1, master_seed=0)
    est = estimate_payoff(model, Policy.constant(u0), InitialState(x0, y0, 1), cfg)
    assert est.mean == pytest.approx(oracle, rel=1e-4)


def test_exact_scheme_lognormal_terminal_moments():
    model = _single(mu=0.05, sigma=0.2, lam=0.0)
    init = InitialState(x0=1.0, y0=0.0, regime=1)
    cfg = SimConfig(horizon=1.0, scheme="exact", grid_step=0.25, n_paths=40000, master_seed=11)
    out = run_paths(model, Policy.zero(), init, cfg)
    x = out["xT"]
    m1, m2 = math.exp(0.05), math.exp(2 * 0.05 + 0.04)
    for sample, target in ((x, m1), (x * x, m2)):
        se = sample.std(ddof=1) / math.sqrt(len(sample))
        assert abs(sample.mean() - target) < 4 * se


def test_exact_scheme_jump_second_moment_symmetric():
    """E[X_T^2] = x0^2 exp((2 mu + sigma^2 + I) T) with I = 2 gamma^2 for the
    symmetric infinite-activity measure; exercises the compound-Poisson tail,
    the rejection sampler, and the Gaussian small-jump compensation."""
    gamma = 0.3
    model = _single(mu=0.0, sigma=0.1, gamma=gamma, levy=LevyMeasureSpec.symmetric(), lam=0.0)
    init = InitialState(x0=1.0, y0=0.0, regime=1)
    cfg = SimConfig(horizon=1.0, scheme="exact", grid_step=0.5, eps=1e-2,
                    n_paths=30000, master_seed=17)
    out = run_paths(model, Policy.zero(), init, cfg)
    x2 = out["xT"] ** 2
    target = math.exp(0.1**2 + 2.0 * gamma**2)
    se = x2.std(ddof=1) / math.sqrt(len(x2))
    assert abs(x2.mean() - target) < 4 * se


def test_exact_scheme_jump_second_moment_exponential():
    """Same identity for the finite-activity exponential measure,
    I = 2 g (g + eta (1+eta) e^-eta) / eta^2."""
    gamma, eta = 0.25, 1.0
    model = _single(mu=0.0, sigma=0.1, gamma=gamma,
                    levy=LevyMeasureSpec.exponential(eta), lam=0.0)
    init = InitialState(x0=1.0, y0=0.0, regime=1)
    cfg = SimConfig(horizon=1.0, scheme="exact", grid_step=0.5, n_paths=30000, master_seed=23)
    out = run_paths(model, Policy.zero(), init, cfg)
    x2 = out["xT"] ** 2
    jump = 2.0 * gamma * (gamma + eta * (1.0 + eta) * math.exp(-eta)) / eta**2
    target = math.exp(0.1**2 + jump)
    se = x2.std(ddof=1) / math.sqrt(len(x2))
    assert abs(x2.mean() - target) < 4 * se


def test_regime_chain_stationary_occupation():
    """Generator ((-0.3, 0.3), (0.5, -0.5)) has stationary mass
    0.5/0.8 = 0.625 in regime 1."""
    model, _, _ = example_model(1)
    T = 200000.0
    events = sample_regime_path(model.switch, 1, T, seed=123)
    occ = 0.0
    for (t0, i), (t1, _) in zip(events, events[1:] + [(T, 0)]):
        if i == 1:
            occ += t1 - t0
    assert occ / T == pytest.approx(0.625, abs=0.005)


def test_regime_path_structure():
    model, _, _ = example_model(1)
    events = sample_regime_path(model.switch, 2, 50.0, seed=7)
    assert events[0] == (0.0, 2)
    times = [t for t, _ in events]
    assert times == sorted(times)
    for (_, a), (_, b) in zip(events, events[1:]):
        assert a != b  # two-state chain must alternate


def test_euler_and_exact_schemes_agree(ex1, ex1_formula_solution):
    model, init, _ = ex1
    policy = Policy.feedback(ex1_formula_solution)
    n, T = 8000, 20.0
    e1 = estimate_payoff(model, policy, init,
                         SimConfig(horizon=T, scheme="exact", n_paths=n, master_seed=31))
    e2 = estimate_payoff(model, policy, init,
                         SimConfig(horizon=T, scheme="euler", dt=0.005, n_paths=n, master_seed=32))
    gap = abs(e1.mean - e2.mean)
    assert gap <= 3.0 * (e1.std_error + e2.std_error) + 0.5  # 0.5: O(dt) bias slack


def test_euler_weak_error_shrinks_under_refinement(ex1, ex1_formula_solution):
    """Common random numbers across substep counts isolate the time-step
    bias: halving dt should shrink it by roughly half (weak order one)."""
    model, init, _ = ex1
    policy = Policy.feedback(ex1_formula_solution)
    cfg = SimConfig(horizon=10.0, scheme="euler", n_paths=4000, master_seed=41)
    outs = {ns: run_paths(model, policy, init, cfg, dt_base=0.01, n_sub=ns)["payoff"]
            for ns in (4, 2, 1)}
    d41 = float(np.mean(outs[4] - outs[1]))
    d21 = float(np.mean(outs[2] - outs[1]))
    assert abs(d41) > abs(d21) > 0
    assert abs(d41) / abs(d21) >= 1.5  # ~3 expected for weak order 1


def test_halving_jump_truncation_changes_little(ex2, ex2_formula_solution):
    """Gaussian compensation of the sub-eps jumps: halving eps must move the
    estimate by less than one standard error."""
    model, init, _ = ex2
    policy = Policy.feedback(ex2_formula_solution)
    ests = [estimate_payoff(model, policy, init,
                            SimConfig(horizon=30.0, scheme="exact", eps=eps,
                                      n_paths=1500, master_seed=61))
            for eps in (2e-3, 1e-3)]
    assert abs(ests[0].mean - ests[1].mean) < max(e.std_error for e in ests)


def test_feedback_payoff_matches_value_in_contracting_regime():
    """With r large enough that discounted moments decay, the truncation
    bound is negligible and the Monte-Carlo mean must hit the closed-form
    value within a few standard errors."""
    from extractopt.solver import build_system, select_admissible, solve_all_roots

    model = _single(mu=0.0, sigma=0.1, lam=0.001, r=0.1)
    sol = select_admissible(solve_all_roots(build_system(model, mode="formula")), model)
    init = InitialState(x0=1.0, y0=100.0, regime=1)
    cfg = SimConfig(horizon=200.0, scheme="exact", n_paths=20000, master_seed=57)
    est = estimate_payoff(model, Policy.feedback(sol), init, cfg)
    v = sol.value_at(init.x0, init.y0, init.regime)
    assert est.truncation_bound < 1e-4
    assert abs(est.mean - v) <= 3.5 * est.std_error + est.truncation_bound
    assert est.std_error < 0.05 * abs(v)


def test_estimates_are_deterministic_across_runs_and_workers(ex1, ex1_reference_solution):
    model, init, _ = ex1
    policy = Policy.feedback(ex1_reference_solution)
    base = SimConfig(horizon=30.0, scheme="exact", n_paths=2000, master_seed=99, workers=1)
    e1 = estimate_payoff(model, policy, init, base)
    e2 = estimate_payoff(model, policy, init, base)
    e4 = estimate_payoff(model, policy, init,
                         SimConfig(horizon=30.0, scheme="exact", n_paths=2000,
                                   master_seed=99, workers=4))
    assert e1.to_dict() == e2.to_dict() == e4.to_dict()


def test_single_path_helpers_match_batch_path_zero(ex1, ex1_reference_solution):
    model, init, _ = ex1
    policy = Policy.feedback(ex1_reference_solution)
    for scheme, helper in (("exact", simulate_path_exact), ("euler", simulate_path_euler)):
        cfg = SimConfig(horizon=5.0, scheme=scheme, dt=0.01, n_paths=3, master_seed=77)
        batch = run_paths(model, policy, init, cfg)["payoff"]
        assert helper(model, policy, init, cfg, path_seed=77) == batch[0]


def test_truncation_bound_zero_policy_closed_form(ex1):
    model, init, _ = ex1
    T = 400.0
    want = math.exp(-model.cost.r * T) * (model.cost.theta * init.y0
                                          + model.cost.bigK / model.cost.r)
    assert truncation_bound(model, Policy.zero(), init, T) == pytest.approx(want, rel=1e-12)


def test_truncation_bound_decays_with_horizon(ex1, ex1_formula_solution):
    model, init, _ = ex1
    policy = Policy.feedback(ex1_formula_solution)
    # growth exceeds the discount here, so the bound rises with T instead
    b1 = truncation_bound(model, policy, init, 100.0)
    b2 = truncation_bound(model, Policy.zero(), init, 100.0)
    assert b1 > b2 > truncation_bound(model, Policy.zero(), init, 200.0)


def test_overflowing_paths_raise():
    model = _single(mu=1e4, sigma=0.0, lam=0.0)
    cfg = SimConfig(horizon=20.0, scheme="euler", dt=0.1, n_paths=4, master_seed=0)
    with pytest.raises(SimOverflowError):
        estimate_payoff(model, Policy.constant(0.0), InitialState(1.0, 0.0, 1), cfg)


def test_invalid_model_rejected():
    bad = _single(mu=0.0, sigma=-1.0)
    cfg = SimConfig(horizon=1.0, n_paths=2)
    with pytest.raises(ValueError, match="invalid model"):
        run_paths(bad, Policy.zero(), InitialState(1.0, 0.0, 1), cfg)


def test_exact_scheme_rejects_clamped_feedback(ex1, ex1_reference_solution):
    model, init, _ = ex1
    cfg = SimConfig(horizon=1.0, scheme="exact", n_paths=2)
    with pytest.raises(ValueError):
        run_paths(model, Policy.feedback(ex1_reference_solution, clamp=(0.0, 1.0)), init, cfg)
    with pytest.raises(ValueError):
        run_paths(model, Policy.constant(1.0), init, cfg)
