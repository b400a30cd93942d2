"""Pricing-rule families, the pricing PDE residual, price-pressure profiles
and rule inversion."""
import numpy as np

from . import functions as tf
from .errors import InvalidRule, OutOfRange
from .model import PricingRule, ReleaseTime, survival


def _sig(sigma_sq, t):
    return sigma_sq(t) if callable(sigma_sq) else sigma_sq


def make_linear_rule(p0=0.0, lambda0=1.0, profile=None):
    """H(t, y) = p0 + y with price pressure lambda0 (or a time profile)."""
    if profile is None:
        if not lambda0 > 0:
            raise InvalidRule(f"lambda0 must be positive, got {lambda0}")
        lam = tf.constant(lambda0)
        prime = None
    else:
        lam = tf.parse(profile)
        prime = getattr(profile, "prime", None)
    p0 = float(p0)

    def H(t, y):
        return p0 + np.asarray(y, dtype=float)

    def zeros(t, y):
        return np.zeros(np.broadcast(np.asarray(t), np.asarray(y)).shape) if np.ndim(y) or np.ndim(t) else 0.0

    def ones(t, y):
        return zeros(t, y) + 1.0

    def H_inv(t, p):
        return np.asarray(p, dtype=float) - p0

    return PricingRule(H=H, dH_t=zeros, dH_y=ones, dH_yy=zeros, lam=lam, H_inv=H_inv,
                       lam_prime_fn=prime, sigma_eff_sq=None, kind="linear",
                       params={"p0": p0, "lambda0": float(lam(0.0))}, linear=True)


def make_lognormal_rule(m, v, sigma, alpha, lambda0):
    """H(t,u) = exp{m + v^2/2 + b u - c t} with b = v/(lambda0 sigma (1-alpha)),
    c = (1+alpha) v^2 / (2(1-alpha)); consistent with sigma_eff^2 = sigma^2(1-alpha^2)."""
    if not (0.0 < alpha < 1.0):
        raise InvalidRule(f"alpha must lie in (0,1), got {alpha}")
    if not (v > 0 and sigma > 0 and lambda0 > 0):
        raise InvalidRule("v, sigma and lambda0 must be positive")
    a0 = m + 0.5 * v * v
    b = v / (lambda0 * sigma * (1.0 - alpha))
    c = 0.5 * (1.0 + alpha) / (1.0 - alpha) * v * v

    def H(t, u):
        return np.exp(a0 + b * np.asarray(u, dtype=float) - c * np.asarray(t, dtype=float))

    def dH_t(t, u):
        return -c * H(t, u)

    def dH_y(t, u):
        return b * H(t, u)

    def dH_yy(t, u):
        return b * b * H(t, u)

    def H_inv(t, p):
        p = np.asarray(p, dtype=float)
        if np.any(p <= 0):
            raise OutOfRange("log-normal rule only attains positive prices")
        return (np.log(p) - a0 + c * np.asarray(t, dtype=float)) / b

    return PricingRule(H=H, dH_t=dH_t, dH_y=dH_y, dH_yy=dH_yy, lam=tf.constant(lambda0),
                       H_inv=H_inv, sigma_eff_sq=tf.constant(sigma * sigma * (1 - alpha * alpha)),
                       kind="lognormal",
                       params={"m": m, "v": v, "sigma": sigma, "alpha": alpha,
                               "lambda0": lambda0, "a0": a0, "b": b, "c": c},
                       y_range=(-np.inf, np.inf))


def pde_residual(rule, sigma_sq, t, y):
    """d_t H + 1/2 d_yy H lambda^2 sigma^2 with analytic derivatives."""
    lam = rule.lam(t)
    return rule.dH_t(t, y) + 0.5 * rule.dH_yy(t, y) * lam * lam * _sig(sigma_sq, t)


def pde_residual_fd(rule, sigma_sq, t, y, h_t=1e-5, h_y=1e-4):
    """Same residual from central differences of H alone."""
    H = rule.H
    ht = h_t * np.maximum(1.0, np.abs(t))
    hy = h_y * np.maximum(1.0, np.abs(y))
    d_t = (H(t + ht, y) - H(t - ht, y)) / (2 * ht)
    d_yy = (H(t, y + hy) - 2 * H(t, y) + H(t, y - hy)) / (hy * hy)
    lam = rule.lam(t)
    return d_t + 0.5 * d_yy * lam * lam * _sig(sigma_sq, t)


def check_derivatives(rule, ts, ys, step=1e-5):
    """Max relative gap between analytic and central-difference derivatives."""
    T, Yv = np.meshgrid(np.asarray(ts, float), np.asarray(ys, float), indexing="ij")
    ht = step * np.maximum(1.0, np.abs(T))
    hy = step * np.maximum(1.0, np.abs(Yv))
    H = rule.H
    fd = {
        "dH_t": (H(T + ht, Yv) - H(T - ht, Yv)) / (2 * ht),
        "dH_y": (H(T, Yv + hy) - H(T, Yv - hy)) / (2 * hy),
        "dH_yy": (rule.dH_y(T, Yv + hy) - rule.dH_y(T, Yv - hy)) / (2 * hy),
    }
    out = {}
    for name, approx in fd.items():
        exact = getattr(rule, name)(T, Yv)
        scale = np.maximum(1.0, np.abs(H(T, Yv)))
        out[name] = float(np.max(np.abs(approx - exact) / scale))
    return out


def lambda_profile(rt: ReleaseTime, c, insider_knows_tau):
    """lambda(t) = c when tau is known to the insider, c P(tau > t) otherwise."""
    if not c > 0:
        raise InvalidRule(f"price-pressure scale must be positive, got {c}")
    c = float(c)
    if insider_knows_tau:
        prof = tf.constant(c)
        prof.prime = lambda t: np.zeros_like(np.asarray(t, float)) if np.ndim(t) else 0.0
    elif rt.kind == "exponential":
        mu = rt.mu
        prof = tf.TimeFunction(lambda t: c * np.exp(-mu * np.asarray(t, float)), f"{c!r}*exp(-{mu!r}*t)")
        prof.prime = lambda t: -mu * c * np.exp(-mu * np.asarray(t, float))
    else:
        def fn(t):
            return c * survival(rt, np.maximum(np.asarray(t, float), 0.0))
        prof = tf.TimeFunction(fn, f"{c!r}*survival")

        def prime(t, h=1e-6):
            t = np.asarray(t, float)
            return (fn(t + h) - fn(np.maximum(t - h, 0.0))) / (t + h - np.maximum(t - h, 0.0))
        prof.prime = prime
    prof.c = c
    prof.release = rt
    prof.insider_knows_tau = bool(insider_knows_tau)
    return prof


def invert_rule(rule, t, p, tol=1e-12):
    """xi with H(t, xi) = p."""
    if rule.H_inv is not None:
        y = rule.H_inv(t, p)
        return float(y) if np.ndim(y) == 0 else y
    if np.ndim(p):
        return np.array([invert_rule(rule, t, pi, tol) for pi in np.ravel(p)]).reshape(np.shape(p))
    p = float(p)
    f = lambda y: float(rule.H(t, y)) - p
    lo, hi = -1.0, 1.0
    for _ in range(200):
        if f(lo) <= 0:
            break
        lo *= 2
    else:
        raise OutOfRange(f"price {p} below the range of H({t}, .)")
    for _ in range(200):
        if f(hi) >= 0:
            break
        hi *= 2
    else:
        raise OutOfRange(f"price {p} above the range of H({t}, .)")
    if not (f(lo) <= 0 <= f(hi)):
        raise OutOfRange(f"price {p} not bracketed")
    while hi - lo > tol * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    y = 0.5 * (lo + hi)
    for _ in range(3):  # Newton polish
        d = float(rule.dH_y(t, y))
        if d <= 0 or not np.isfinite(d):
            break
        step = f(y) / d
        if abs(step) > hi - lo + tol:
            break
        y -= step
    return y


def check_monotone(rule, ts, ys):
    T, Yv = np.meshgrid(np.asarray(ts, float), np.asarray(ys, float), indexing="ij")
    return bool(np.all(rule.dH_y(T, Yv) > 0) and np.all(np.diff(rule.H(T, Yv), axis=1) > 0))
