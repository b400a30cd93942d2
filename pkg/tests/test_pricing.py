import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hs

from kyleback import pricing
from kyleback.errors import InvalidRule, OutOfRange
from kyleback.model import ReleaseTime, survival


def test_linear_rule():
    r = pricing.make_linear_rule(2.0, 0.5)
    assert r.H(0.3, 1.5) == 3.5
    assert r.H_inv(0.3, 3.5) == pytest.approx(1.5)
    assert r.lam(7.0) == 0.5 and r.lam_prime(1.0) == 0.0
    with pytest.raises(InvalidRule):
        pricing.make_linear_rule(0.0, 0.0)


def test_lognormal_rule_solves_pde():
    r = pricing.make_lognormal_rule(0.2, 0.7, 1.3, 0.25, 0.9)
    T, Y = np.meshgrid(np.linspace(0, 1, 7), np.linspace(-2, 2, 9))
    assert np.max(np.abs(pricing.pde_residual(r, r.sigma_eff_sq, T, Y)) / r.H(T, Y)) < 1e-12
    d = pricing.check_derivatives(r, np.linspace(0, 1, 5), np.linspace(-1, 1, 5))
    assert max(d.values()) < 1e-6


def test_lognormal_mean_is_ev_at_zero():
    m, v = 0.1, 0.6
    r = pricing.make_lognormal_rule(m, v, 1.0, 0.5, 1.0)
    assert r.H(0.0, 0.0) == pytest.approx(math.exp(m + v * v / 2))


def test_lognormal_inverse_and_range():
    r = pricing.make_lognormal_rule(0.0, 1.0, 1.0, 0.5, 1.0)
    with pytest.raises(OutOfRange):
        r.H_inv(0.5, -1.0)
    with pytest.raises(InvalidRule):
        pricing.make_lognormal_rule(0.0, 1.0, 1.0, 1.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(hs.floats(0.0, 1.0), hs.floats(-3.0, 3.0))
def test_invert_rule_roundtrip(t, y):
    r = pricing.make_lognormal_rule(0.0, 0.8, 1.0, 0.3, 1.1)
    assert pricing.invert_rule(r, t, r.H(t, y)) == pytest.approx(y, abs=1e-9)


def test_wrong_sigma_breaks_pde():
    r = pricing.make_lognormal_rule(0.0, 1.0, 1.0, 0.5, 1.0)
    assert abs(pricing.pde_residual(r, 1.0, 0.2, 0.1)) > 1e-3


def test_profiles():
    c = 1.7
    known = pricing.lambda_profile(ReleaseTime("exponential", mu=1.0), c, True)
    assert known(5.0) == c
    rel = ReleaseTime("bounded-random", T=1.0, values=(0.3, 0.9), probs=(0.5, 0.5))
    prof = pricing.lambda_profile(rel, c, False)
    ts = np.array([0.1, 0.5, 0.95])
    assert np.allclose(prof(ts), c * survival(rel, ts))
    with pytest.raises(InvalidRule):
        pricing.lambda_profile(rel, 0.0, False)


def test_check_monotone():
    r = pricing.make_linear_rule(0.0, 1.0)
    assert pricing.check_monotone(r, np.linspace(0, 1, 3), np.linspace(-1, 1, 5))
