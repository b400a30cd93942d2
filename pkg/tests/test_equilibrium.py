import numpy as np
import pytest

from kyleback import pricing, strategies
from kyleback.admissibility import validate_admissibility
from kyleback.equilibrium import (Thresholds, check_equilibrium_known_tau, check_rationality, compute_wealth,
                                  estimate_expected_wealth, perturbation_derivative, riemann_rent)
from kyleback.errors import IncompleteBundle, InvalidStrategy, PerturbationInadmissible
from kyleback.model import FundamentalModel, MarketModel, TimeGrid
from kyleback.simulate import simulate
from kyleback.stats import lag1_autocorrelation, ols_cluster, refinement_exponent

RULE = pricing.make_linear_rule(0.0, 1.0)
BRIDGE = strategies.bridge_strategy(strategies.rule_target(RULE, 1.0), 1.0, 1.0)
GRIDS = [TimeGrid(0, 1, n) for n in (50, 200, 800)]


def test_bridge_passes_known_tau_checks():
    rep = check_equilibrium_known_tau(RULE, BRIDGE, MarketModel(), GRIDS, 1000, 1,
                                      Thresholds(efficiency_rms=0.1))
    assert rep.names() == ["terminal_identity", "sigma_m", "no_jumps", "compensated_martingale",
                           "constant_price_pressure"]
    assert rep.passed, [c.to_dict() for c in rep.conditions]


def test_zero_strategy_fails_efficiency():
    rep = check_equilibrium_known_tau(RULE, strategies.zero_strategy(), MarketModel(), GRIDS, 500, 1)
    assert not rep["terminal_identity"].passed


def test_jumps_fail_no_jump_condition():
    rep = check_equilibrium_known_tau(RULE, BRIDGE.with_jumps([(0.5, 1.0)]), MarketModel(), GRIDS, 300, 1,
                                      Thresholds(efficiency_rms=0.1))
    assert not rep["no_jumps"].passed


def test_nonconstant_lambda_flagged_when_tau_known():
    rule = pricing.make_linear_rule(0.0, profile="1 + 0.5*t")
    rep = check_equilibrium_known_tau(rule, BRIDGE, MarketModel(), GRIDS, 300, 1)
    assert not rep["constant_price_pressure"].passed


def test_rationality_bridge_and_biased_rule():
    b = simulate(RULE, BRIDGE, MarketModel(), TimeGrid(0, 1, 200), 2000, 3)
    assert check_rationality(b).passed
    biased = pricing.make_linear_rule(0.5, 1.0)
    bb = simulate(biased, strategies.bridge_strategy(strategies.rule_target(biased, 1.0), 1.0, 1.0),
                  MarketModel(), TimeGrid(0, 1, 200), 2000, 3)
    assert not check_rationality(bb).passed


def test_rationality_inconclusive_bins():
    b = simulate(RULE, BRIDGE, MarketModel(), TimeGrid(0, 1, 50), 60, 3)
    res = check_rationality(b)
    assert res.details["inconclusive"] and not res.passed


def test_wealth_and_riemann_rent_agree_in_mean():
    b = simulate(RULE, BRIDGE, MarketModel(), TimeGrid(0, 1, 1000), 4000, 5)
    W = compute_wealth(b)
    R = riemann_rent(b)
    assert abs(W.mean() - R.mean()) < 4 * np.std(W - R) / np.sqrt(len(W)) + 0.02
    # continuous-time equilibrium profit is sigma_V sigma_Z = 1
    J = estimate_expected_wealth(BRIDGE, RULE, MarketModel(), TimeGrid(0, 1, 1000), 4000, 5)
    assert J.J == pytest.approx(1.0, abs=4 * J.SE + 0.03)


def test_incomplete_bundle():
    b = simulate(RULE, BRIDGE, MarketModel(), TimeGrid(0, 1, 10), 3, 0)
    b.P = None
    with pytest.raises(IncompleteBundle):
        compute_wealth(b)


def test_perturbation_inadmissible_direction():
    g = TimeGrid(0, 1, 20)
    with pytest.raises(PerturbationInadmissible):
        perturbation_derivative(BRIDGE, lambda b: np.full_like(b.theta, np.nan), RULE, MarketModel(), g,
                                n_paths=100, seed=0)


def test_admissibility_flags_divergent_drift():
    g = TimeGrid(0, 1, 200)
    assert validate_admissibility(RULE, BRIDGE, MarketModel(), g, 500, 0).passed
    wild = strategies.drift_strategy(lambda t, s: np.full_like(s.Y, 1.0 / (1.0 - t) ** 2))
    rep = validate_admissibility(RULE, wild, MarketModel(), g, 500, 0)
    assert not rep.passed and rep["A3"].divergent
    with pytest.raises(InvalidStrategy):
        strategies.drift_strategy(None)
    with pytest.raises(InvalidStrategy):
        validate_admissibility(RULE, strategies.zero_strategy().with_jumps([(np.inf, 1.0)]), MarketModel(), g, 500, 0)


def test_ols_cluster_recovers_coefficients_and_drops_collinear():
    rng = np.random.default_rng(0)
    x = rng.normal(size=2000)
    X = np.column_stack([np.ones(2000), x, 2 * x])
    y = 1.0 + 3.0 * x + rng.normal(size=2000)
    out = ols_cluster(y, X, np.arange(2000) // 10, names=["c", "x", "x2"])
    assert out["c"][0] == pytest.approx(1.0, abs=0.1)
    assert out["x"][0] == pytest.approx(3.0, abs=0.1)
    assert np.isnan(out["x2"][0]) and out["x2"][2] == 0.0


def test_stats_helpers():
    inc = np.random.default_rng(1).normal(size=(100, 500))
    rho, n = lag1_autocorrelation(inc)
    assert abs(rho) < 3 / np.sqrt(n)
    assert refinement_exponent([1e-2, 1e-3], [1e-1, 1e-1 / np.sqrt(10)]) == pytest.approx(0.5)


def test_lognormal_fundamental_known_tau():
    m, v, sigma, alpha, lam0 = 0.0, 0.5, 1.0, 0.3, 1.0
    rule = pricing.make_lognormal_rule(m, v, sigma, alpha, lam0)
    st = strategies.correlated_bridge_strategy(m, v, sigma, alpha, lam0)
    model = MarketModel(fundamental=FundamentalModel(law="lognormal", m=m, v=v))
    rep = check_equilibrium_known_tau(rule, st, model, GRIDS, 1000, 2, Thresholds(efficiency_rms=0.1))
    assert rep["sigma_m"].passed and rep["terminal_identity"].passed
    assert rep["compensated_martingale"].passed
