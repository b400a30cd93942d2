import numpy as np
import pytest

from kyleback import _accel, calibration, filtering, pricing, strategies
from kyleback.errors import InvalidRule, InvalidStrategy
from kyleback.model import FundamentalModel, MarketModel, NoiseModel, ReleaseTime, TimeGrid
from kyleback.simulate import auto_chunk, iter_simulate, simulate


def bridge_case():
    rule = pricing.make_linear_rule(0.0, 1.0)
    return rule, strategies.bridge_strategy(strategies.rule_target(rule, 1.0), 1.0, 1.0), MarketModel()


def cs_case(two_phase=False):
    rel = ReleaseTime("exponential", mu=0.5)
    fm = FundamentalModel(kind="arithmetic-BM", sigma_v="sqrt(exp(-t))", Sigma0=1.0)
    lam0 = calibration.calibrate_cs_lambda0(1.0, "exp(-t)", 0.5)
    prof = pricing.lambda_profile(rel, lam0, False)
    beta = filtering.equilibrium_gain(prof, 1.0, "exp(-t)")
    st = strategies.cs_feedback_strategy(beta)
    return pricing.make_linear_rule(0.0, profile=prof), st, MarketModel(NoiseModel(1.0), fm, rel)


def barrier_case(scheme="implicit"):
    rel = ReleaseTime("first-passage", T=1.0, barrier=-1.0)
    return (pricing.make_linear_rule(0.0, 1.0), strategies.default_bridge_strategy(rel, scheme),
            MarketModel(fundamental=FundamentalModel(kind="default-indicator"), release=rel))


@pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")
@pytest.mark.parametrize("case,grid", [(bridge_case, TimeGrid(0, 1, 200)),
                                       (cs_case, TimeGrid(0, 10, 500)),
                                       (barrier_case, TimeGrid(0, 1, 500))])
def test_kernels_match_generic_stepper(case, grid):
    rule, st, model = case()
    a = simulate(rule, st, model, grid, 64, 3, use_kernel=True)
    b = simulate(rule, st, model, grid, 64, 3, use_kernel=False)
    for name in ("X", "Y", "xi", "P"):
        assert np.allclose(getattr(a, name), getattr(b, name), rtol=0, atol=1e-12), name
    assert np.array_equal(a.flagged, b.flagged)


def test_backend_switch_selects_numpy():
    rule, st, model = bridge_case()
    prev = _accel.set_backend("numpy")
    try:
        b = simulate(rule, st, model, TimeGrid(0, 1, 50), 8, 1)
    finally:
        _accel.set_backend(prev)
    c = simulate(rule, st, model, TimeGrid(0, 1, 50), 8, 1, use_kernel=False)
    assert np.array_equal(b.X, c.X)
    with pytest.raises(ValueError):
        _accel.set_backend("fortran")


def test_chunking_is_invisible():
    rule, st, model = bridge_case()
    g = TimeGrid(0, 1, 100)
    whole = simulate(rule, st, model, g, 30, 9)
    parts = list(iter_simulate(rule, st, model, g, 30, 9, chunk=7))
    for name in ("Z", "V", "X", "P"):
        assert np.array_equal(getattr(whole, name), np.vstack([getattr(p, name) for p in parts]))
    assert auto_chunk(g) >= 16


def test_bundle_accounting_identities():
    rule, st, model = bridge_case()
    b = simulate(rule, st, model, TimeGrid(0, 1, 100), 20, 2)
    assert np.array_equal(b.Y, b.X + b.Z)
    assert np.allclose(b.P, rule.H(b.grid.times, b.xi))
    assert np.allclose(np.diff(b.xi, axis=1), b.lam[:-1] * np.diff(b.Y, axis=1))
    assert np.all(b.stop_index == 100)


def test_bridge_hits_target():
    rule, st, model = bridge_case()
    b = simulate(rule, st, model, TimeGrid(0, 1, 2000), 200, 4)
    # the last drift step closes the gap; only the final noise increment remains
    assert np.allclose(b.Y[:, -1] - b.V[:, -1], b.Z[:, -1] - b.Z[:, -2], atol=1e-10)


def test_correlated_bridge_lognormal():
    m, v, sigma, alpha, lam0 = 0.0, 0.5, 1.0, 0.3, 1.0
    rule = pricing.make_lognormal_rule(m, v, sigma, alpha, lam0)
    st = strategies.correlated_bridge_strategy(m, v, sigma, alpha, lam0)
    model = MarketModel(fundamental=FundamentalModel(law="lognormal", m=m, v=v))
    b = simulate(rule, st, model, TimeGrid(0, 1, 4000), 400, 5)
    dz_last = b.Z[:, -1] - b.Z[:, -2]
    assert np.allclose(np.log(b.P[:, -1] / b.V[:, -1]), v / sigma * dz_last, atol=1e-9)
    # prices are martingales: E[P_1] = E[V]
    assert abs(np.mean(b.P[:, 2000]) - model.fundamental.mean()) < 4 * np.std(b.P[:, 2000]) / 20


def test_two_phase_switch_reaches_value():
    sv = sz = 1.0
    sol = calibration.solve_cs_switch_time(1.0, sv, sz, 0.5)
    lam = calibration.cs_two_phase_lambda(sol.lambda_T, sol.T, 0.5)
    beta = filtering.equilibrium_gain(lam, 1.0, 1.0, 1.0)
    st = strategies.cs_two_phase_strategy(sol.T, sv, sz, beta)
    model = MarketModel(NoiseModel(sz), FundamentalModel(kind="arithmetic-BM", sigma_v=sv, Sigma0=1.0),
                        ReleaseTime("deterministic", T=3.0))
    g = TimeGrid(0.0, 3.0, 3000)
    b = simulate(pricing.make_linear_rule(0.0, profile=lam), st, model, g, 50, 6)
    k = int(np.ceil(sol.T / g.dt - 1e-9))
    assert np.allclose(b.P[:, k], b.V[:, k], atol=1e-12)
    # after the switch the price tracks V exactly
    assert np.allclose(b.P[:, k:], b.V[:, k:], atol=1e-10)


def test_explicit_scheme_flags_overshoot():
    rule, st, model = barrier_case("explicit")
    b = simulate(rule, st, model, TimeGrid(0, 1, 200), 500, 7, use_kernel=False)
    assert b.flagged.any()
    assert not b.valid()[b.flagged].any()


def test_strategy_validation():
    with pytest.raises(InvalidStrategy):
        strategies.bridge_strategy(0.0, 1.0, 0.0)
    with pytest.raises(InvalidStrategy):
        strategies.default_bridge_strategy(ReleaseTime("deterministic"))
    with pytest.raises(InvalidStrategy):
        strategies.cs_two_phase_strategy(1.0, 0.0, 1.0, 1.0)
    with pytest.raises(InvalidRule):
        simulate(pricing.make_linear_rule(0.0, profile=lambda t: 1.0 - t), strategies.zero_strategy(),
                 MarketModel(), TimeGrid(0, 2, 10), 2, 0)


def test_bridge_gain_time_varying_sigma():
    g = strategies.bridge_gain("sqrt(1+t)", 1.0)
    # sigma^2 / int_t^1 sigma^2 = (1+t) / ((1 - t)(3 + t)/2)
    t = np.array([0.0, 0.5])
    assert np.allclose(g(t), (1 + t) / ((1 - t) * (3 + t) / 2), rtol=1e-10)


def test_jumps_shift_demand():
    st = strategies.zero_strategy().with_jumps([(0.5, 2.0)])
    b = simulate(pricing.make_linear_rule(0.0, 1.0), st, MarketModel(), TimeGrid(0, 1, 10), 3, 0)
    assert np.allclose(b.X[:, 5:], 2.0) and np.allclose(b.X[:, :5], 0.0)


def test_env_flag_disables_numba():
    import os
    import subprocess
    import sys
    env = dict(os.environ, KB_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", "from kyleback import _accel; print(_accel.backend())"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "numpy"
