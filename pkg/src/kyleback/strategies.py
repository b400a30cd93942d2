"""Insider strategy constructors.

Drifts read the per-path scenario state (Y, P, V, target, tau_bar, ...) and
return rates.  Strategies with a scheme-specific update also carry ``step``;
the numba kernels implement the same updates.
"""
import numpy as np

from . import functions as tf
from .errors import InvalidStrategy, SingularDrift
from .model import PhaseSwitch, ReleaseTime, Strategy


def zero_strategy():
    return Strategy(kind="zero", theta=lambda t, s: np.zeros_like(s.Y))


def constant_drift_strategy(rate=1.0):
    rate = float(rate)
    return Strategy(kind="constant", theta=lambda t, s: np.full_like(s.Y, rate),
                    params={"rate": rate})


def drift_strategy(theta, kind="custom", **kw):
    """Wrap an arbitrary drift theta(t, state)."""
    return Strategy(kind=kind, theta=theta, **kw)


def bridge_gain(sigma, horizon):
    """t -> sigma(t)^2 / int_t^horizon sigma^2, zero at or after the horizon."""
    sig = tf.parse(sigma)
    if sig.is_constant:
        if sig.const == 0.0:
            def gain(t):
                raise SingularDrift("bridge volatility is identically zero", time=float(np.min(t)))
            return gain

        def gain(t):
            t = np.asarray(t, dtype=float)
            with np.errstate(divide="ignore"):
                return np.where(t < horizon, 1.0 / (horizon - t), 0.0)
        return gain
    sq = sig.square()

    def gain(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros_like(t)
        for k, s in enumerate(t):
            if s >= horizon:
                continue
            den = sq.integral(s, horizon)
            if den <= 0.0:
                raise SingularDrift(f"bridge denominator vanishes at t={s!r}", time=float(s))
            out[k] = sq(s) / den
        return out
    return gain


def _as_target(target):
    if callable(target):
        return target
    val = float(target)
    return lambda V: np.full(np.shape(V), val)


def rule_target(rule, horizon):
    """V -> total demand Y* with H(horizon, lambda Y*) = V (constant lambda)."""
    from .pricing import invert_rule
    lam = float(rule.lam(horizon))
    return lambda V: np.asarray(invert_rule(rule, horizon, V), dtype=float) / lam


def _bridge(target_fn, gain, horizon, kappa=0.0, kind="bridge", **kw):
    def theta(t, s):
        return (s.target - s.Y + kappa * t) * gain(t) + kappa

    def prepare(state):
        return {"target": np.asarray(target_fn(state.V0), dtype=float)}

    params = dict(kw.pop("params", {}))
    params.update(kernel="bridge", gain=gain, kappa=kappa, horizon=horizon)
    return Strategy(kind=kind, theta=theta, prepare=prepare, params=params, **kw)


def bridge_strategy(target, sigma=1.0, horizon=1.0):
    """Drift (Y* - Y_s) sigma^2(s) / int_s^horizon sigma^2 steering Y to the target.

    ``target`` maps the fundamental value to the target total demand Y*, or is
    a constant.
    """
    if not horizon > 0:
        raise InvalidStrategy("horizon must be positive")
    return _bridge(_as_target(target), bridge_gain(sigma, horizon), float(horizon),
                   params={"sigma": tf.parse(sigma)})


def correlated_bridge_strategy(m, v, sigma, alpha, lambda0, horizon=1.0):
    """Bridge for the log-normal rule with a martingale component -alpha Z.

    X = -alpha Z + int (Ybar_1 - Ybar_s)/(1-s) ds + v sigma alpha t with
    Ybar = Y - v sigma alpha t and Ybar_1 = sigma(1-alpha)(log V - m)/v.
    Assumes sigma_Z = sigma.
    """
    if not (0.0 < alpha < 1.0):
        raise InvalidStrategy(f"alpha must lie in (0,1), got {alpha}")
    if not (v > 0 and sigma > 0 and lambda0 > 0):
        raise InvalidStrategy("v, sigma and lambda0 must be positive")
    kappa = v * sigma * alpha

    def target(V):
        V = np.asarray(V, dtype=float)
        if np.any(V <= 0):
            raise InvalidStrategy("log-normal target needs V > 0")
        return sigma * (1 - alpha) * (np.log(V) - m) / v

    return _bridge(target, bridge_gain(1.0, horizon), float(horizon), kappa=kappa,
                   kind="correlated_bridge",
                   mart_vol=tf.constant(sigma * alpha),
                   corr_with_Z=tf.constant(-alpha * sigma * sigma),
                   load_z=tf.constant(-alpha),
                   params={"m": m, "v": v, "sigma": sigma, "alpha": alpha, "lambda0": lambda0})


def _implicit_barrier_root(b, dt):
    # positive root of u^2 - b u - dt = 0, written to avoid cancellation for b < 0
    r = np.sqrt(b * b + 4.0 * dt)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(b >= 0, 0.5 * (b + r), 2.0 * dt / (r - b))


def default_bridge_strategy(tau_bar: ReleaseTime = None, scheme="implicit"):
    """Bridge of 1 + Y to zero at the insider-known first passage time tau_bar.

    Drift 1/(1+Y) - (1+Y)/(tau_bar - s) before tau_bar - dt, zero afterwards.
    ``scheme='implicit'`` treats the 1/(1+Y) term implicitly (keeps 1+Y > 0);
    ``'explicit'`` is plain Euler with overshooting paths flagged and frozen.
    """
    if scheme not in ("implicit", "explicit"):
        raise InvalidStrategy(f"unknown scheme {scheme!r}")
    if tau_bar is not None and tau_bar.kind != "first-passage":
        raise InvalidStrategy("default bridge needs a first-passage release time")

    def theta(t, s):
        u = 1.0 + s.Y
        with np.errstate(divide="ignore", invalid="ignore"):
            th = 1.0 / u - u / (s.tau_bar - t)
        return np.where((s.i < s.kstop) & ~s.flagged, th, 0.0)

    def step(t, dt, s, dz):
        u = 1.0 + s.Y
        on = (s.i < s.kstop) & ~s.flagged
        with np.errstate(divide="ignore", invalid="ignore"):
            if scheme == "implicit":
                b = u * (1.0 - dt / (s.tau_bar - t)) + dz
                dA = _implicit_barrier_root(b, dt) - u - dz
            else:
                dA = (1.0 / u - u / (s.tau_bar - t)) * dt
                bad = on & (u + dA + dz <= 0.0)
                s.flagged[bad] = True
        return np.where(on, dA, 0.0)

    def prepare(state):
        if state.tau_bar is None or np.all(np.isnan(state.tau_bar)):
            raise InvalidStrategy("default bridge needs per-path tau_bar draws")
        g = state.grid
        k = np.floor((state.tau_bar - g.dt - g.t_start) / g.dt + 1e-9)
        return {"kstop": np.clip(k, 0, g.n_steps).astype(np.int64)}

    return Strategy(kind="default_bridge", theta=theta, step=step, prepare=prepare,
                    params={"kernel": "barrier", "scheme": scheme})


def cs_feedback_strategy(beta):
    """theta = beta(t)(V - P).

    Integrated with the exact solution of the linear gap dynamics over a step,
    dX = (V - P)(1 - exp(-k beta dt))/k with k = lambda dH_y, which agrees with
    Euler to first order and stays stable when k beta dt is large.
    """
    beta = tf.parse(beta)

    def theta(t, s):
        return beta(t) * (s.V - s.P)

    def step(t, dt, s, dz):
        k = s.lam * s.rule.dH_y(t, s.xi)
        g = k * beta(t)
        return (s.V - s.P) * (-np.expm1(-g * dt)) / k

    return Strategy(kind="cs_feedback", theta=theta, step=step,
                    params={"kernel": "feedback", "beta": beta})


def cs_two_phase_strategy(T_switch, sigma_v, sigma_z, beta_pre):
    """Feedback trading before T_switch, then dX = (sigma_z/sigma_v) dV - dZ.

    The last pre-switch step closes the gap so that P = V at the switch.
    """
    if not T_switch > 0:
        raise InvalidStrategy("T_switch must be positive")
    sv, sz = tf.parse(sigma_v), tf.parse(sigma_z)
    if sv.is_constant and sv.const == 0.0:
        raise InvalidStrategy("sigma_v = 0 leaves nothing to track after the switch")
    base = cs_feedback_strategy(beta_pre)
    ratio = tf.TimeFunction(lambda t: sz(t) / sv(t), f"({sz.source})/({sv.source})") \
        if not (sv.is_constant and sz.is_constant) else tf.constant(sz.const / sv.const)
    T = float(T_switch)

    def post(val_pre, val_post):
        return tf.TimeFunction(lambda t: np.where(np.asarray(t) < T, val_pre(t), val_post(t)))

    # M = (sz/sv) V - Z after the switch: d[M] = 2 sz^2 dt, d[M,Z] = -sz^2 dt
    mart = post(tf.constant(0.0), tf.TimeFunction(lambda t: np.sqrt(2.0) * sz(t)))
    corr = post(tf.constant(0.0), tf.TimeFunction(lambda t: -sz(t) ** 2))
    sw = PhaseSwitch(time=T, load_z=tf.constant(-1.0), load_v=ratio, catch_up=True)
    params = dict(base.params)
    params.update(T_switch=T, sigma_v=sv, sigma_z=sz)
    return Strategy(kind="cs_two_phase", theta=base.theta, step=base.step,
                    mart_vol=mart, corr_with_Z=corr, phase_switch=sw, params=params)


def tracking_strategy(sigma_v, sigma_z):
    """Post-switch demand alone: dX = (sigma_z/sigma_v) dV - dZ, so dP = dV
    under price pressure sigma_v/sigma_z."""
    sv, sz = tf.parse(sigma_v), tf.parse(sigma_z)
    if sv.is_constant and sv.const == 0.0:
        raise InvalidStrategy("sigma_v = 0 leaves nothing to track")
    ratio = tf.TimeFunction(lambda t: sz(t) / sv(t))
    if sv.is_constant and sz.is_constant:
        ratio = tf.constant(sz.const / sv.const)
    return Strategy(kind="tracking", theta=lambda t, s: np.zeros_like(s.Y),
                    mart_vol=tf.TimeFunction(lambda t: np.sqrt(2.0) * sz(t)),
                    corr_with_Z=tf.TimeFunction(lambda t: -sz(t) ** 2),
                    load_z=tf.constant(-1.0), load_v=ratio)
