"""Calibrations for the exponential-release feedback equilibrium: initial
price pressure, switch time, and expected insider wealth."""
import math
import warnings
from collections import namedtuple

import numpy as np

from . import functions as tf
from .errors import DegenerateCalibration, DivergentWealth, NoRoot, NoSolution

SwitchSolution = namedtuple("SwitchSolution", "T lambda_T residual dSigma_T")


def calibrate_cs_lambda0(Sigma0, sigma_v_sq, mu, sigma_z_sq=1.0):
    """lambda_0 = sqrt(2 mu (Sigma0 + int_0^inf sigma_v^2) / sigma_z^2).

    This is the choice that drives the filtering error to zero at infinity.
    Raises NoSolution when the integral diverges.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    sv = tf.parse(sigma_v_sq)
    try:
        total, _ = tf.integrate_to_infinity(sv)
    except ValueError as exc:
        raise NoSolution(f"int sigma_v^2 diverges ({exc}); no price pressure empties the filter") from exc
    mass = float(Sigma0) + total
    if mass <= 0.0:
        warnings.warn("no information to reveal: lambda_0 = 0", DegenerateCalibration, stacklevel=2)
        return 0.0
    return math.sqrt(2.0 * mu * mass / float(sigma_z_sq))


def _switch_eq(T, Sigma0, sv2, mu):
    # Sigma0 + sv2 T - sv2/(2 mu) (e^{2 mu T} - 1), overflow-safe
    x = 2.0 * mu * T
    if x > 700:
        return -math.inf
    return Sigma0 + sv2 * T - sv2 / (2.0 * mu) * math.expm1(x)


def solve_cs_switch_time(Sigma0, sigma_v, sigma_z, mu, tol=1e-15):
    """Switch time T of the two-phase strategy, by bracketing and bisection.

    T solves Sigma0 + sigma_v^2 T = sigma_v^2/(2 mu) (e^{2 mu T} - 1); at T the
    price pressure is lambda_T = sigma_v/sigma_z, where dSigma/dt vanishes.
    """
    if Sigma0 < 0 or not sigma_v > 0 or not mu > 0 or not sigma_z > 0:
        raise ValueError("need Sigma0 >= 0 and positive sigma_v, sigma_z, mu")
    sv2 = sigma_v * sigma_v
    lam_T = sigma_v / sigma_z
    dsig = sv2 - sigma_z * sigma_z * lam_T * lam_T
    if Sigma0 == 0:
        return SwitchSolution(0.0, lam_T, 0.0, dsig)
    lo, hi = 0.0, 1.0 / mu
    while _switch_eq(hi, Sigma0, sv2, mu) > 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e6 / mu:
            raise NoRoot("switch equation has no root below 1e6/mu")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if _switch_eq(mid, Sigma0, sv2, mu) > 0:
            lo = mid
        else:
            hi = mid
    T = lo if abs(_switch_eq(lo, Sigma0, sv2, mu)) <= abs(_switch_eq(hi, Sigma0, sv2, mu)) else hi
    return SwitchSolution(T, lam_T, _switch_eq(T, Sigma0, sv2, mu), dsig)


def cs_two_phase_lambda(lambda_T, T, mu):
    """lambda_T e^{mu (T - t)} before T, lambda_T afterwards (continuous at T)."""
    lam0 = lambda_T * math.exp(mu * T)

    def fn(t):
        t = np.asarray(t, dtype=float)
        return np.where(t < T, lam0 * np.exp(-mu * np.minimum(t, T)), lambda_T)
    prof = tf.TimeFunction(fn, f"two-phase({lambda_T!r},{T!r},{mu!r})")
    prof.prime = lambda t: np.where(np.asarray(t, float) < T, -mu * fn(t), 0.0)
    prof.lambda0 = lam0
    return prof


def cs_expected_wealth(lam, T, mu, sigma_z, sigma_v, cut=1e-12):
    """J = sigma_z^2 int_0^T e^{-mu t} lambda dt + sigma_v^2 int_T^inf e^{-mu t}/lambda dt."""
    lam = tf.parse(lam)
    sz = tf.parse(sigma_z)
    sv = tf.parse(sigma_v)
    pre = tf.TimeFunction(lambda t: sz(t) ** 2 * np.exp(-mu * t) * lam(t)).integral(0.0, T) if T > 0 else 0.0
    horizon = T + max(0.0, -math.log(cut) / mu - T)

    def post(t):
        with np.errstate(divide="ignore", over="ignore"):
            return sv(t) ** 2 * np.exp(-mu * np.asarray(t, float)) / lam(t)

    far = np.asarray(post(np.array([horizon, 4 * horizon])), float)
    ref = abs(float(post(T)))
    if not np.all(np.isfinite(far)) or abs(far[1]) > 1e-6 * max(ref, 1e-300):
        raise DivergentWealth("post-switch integrand does not decay; wealth diverges")
    if lam.is_constant and sv.is_constant:
        tail = sv.const ** 2 / lam.const * math.exp(-mu * T) / mu
    else:
        tail = tf.TimeFunction(post).integral(T, horizon)
    return pre + tail


def cs_switch_foc(T, lambda_T, mu, sigma_z, sigma_v):
    """sigma_z^2 e^{-mu T} lambda_T - sigma_v^2 e^{-mu T} / lambda_T."""
    e = math.exp(-mu * T)
    return sigma_z ** 2 * e * lambda_T - sigma_v ** 2 * e / lambda_T


def post_switch_profit(sigma_v, sigma_z, mu, n_paths, seed, dt=1e-2, cut=1e-8, chunk=None):
    """Monte Carlo estimate of E int_0^h e^{-mu t} d[V, X] for the post-switch
    demand started from P = V, with h where e^{-mu h} < cut.

    Each step's covariation increment is weighted by the cell average of the
    discount factor, which makes the estimator unbiased for the truncated
    integral.  Returns (estimate, SE, truncated closed form).
    """
    from .model import FundamentalModel, MarketModel, NoiseModel, ReleaseTime, TimeGrid
    from .pricing import make_linear_rule
    from .simulate import auto_chunk, iter_simulate
    from .stats import mean_se
    from .strategies import tracking_strategy

    h = -math.log(cut) / mu
    n = int(math.ceil(h / dt))
    grid = TimeGrid(0.0, n * dt, n)
    model = MarketModel(noise=NoiseModel(sigma_z),
                        fundamental=FundamentalModel(kind="arithmetic-BM", sigma_v=sigma_v, P0=0.0, Sigma0=0.0),
                        release=ReleaseTime("deterministic", T=grid.t_end))
    rule = make_linear_rule(0.0, sigma_v / sigma_z)
    t = grid.times
    w = -np.diff(np.exp(-mu * t)) / (mu * dt)
    gains = []
    for b in iter_simulate(rule, tracking_strategy(sigma_v, sigma_z), model, grid, n_paths, seed,
                           chunk=chunk or auto_chunk(grid)):
        gains.append(np.sum(np.diff(b.V, axis=1) * np.diff(b.X, axis=1) * w, axis=1))
    est, se = mean_se(np.concatenate(gains))
    exact = sigma_z * sigma_v / mu * (1.0 - math.exp(-mu * grid.t_end))
    return est, se, exact
