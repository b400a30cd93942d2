"""Market-maker filter for the arithmetic-BM fundamental observed through a
linear price: conditional mean m and filtering error Sigma."""
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import functions as tf
from .errors import FilterDegenerate, NegativeVarianceWarning
from .model import TimeGrid


@dataclass
class FilterState:
    m: np.ndarray
    Sigma: np.ndarray
    beta: np.ndarray


def riccati_closed_form(t, Sigma0, sigma_v_sq, sigma_z_sq, lam, warn=True):
    """Sigma_0 + int_0^t sigma_v^2 - int_0^t sigma_z^2 lambda^2 (adaptive quadrature).

    ``t`` may be an increasing array; integrals are accumulated piecewise.
    """
    sv = tf.parse(sigma_v_sq)
    sz = tf.parse(sigma_z_sq)
    lam = tf.parse(lam)
    if lam.is_constant and sz.is_constant:
        drain = tf.constant(sz.const * lam.const ** 2)
    else:
        drain = tf.TimeFunction(lambda s: sz(s) * lam(s) ** 2)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty_like(ts)
    acc, prev = float(Sigma0), 0.0
    for k, s in enumerate(ts):
        if s < prev:
            acc, prev = float(Sigma0), 0.0
        acc += sv.integral(prev, s) - drain.integral(prev, s)
        out[k] = acc
        prev = s
    if warn and np.any(out < 0):
        warnings.warn("filtering error turned negative; parameters are inconsistent",
                      NegativeVarianceWarning, stacklevel=2)
    return float(out[0]) if np.ndim(t) == 0 else out


def _tail_sigma(lam, sigma_v_sq, sigma_z_sq, t_far):
    """Sigma_t = int_t^inf (sigma_z^2 lambda^2 - sigma_v^2) when Sigma_inf = 0.

    Equivalent to the forward closed form under that calibration but free of
    the cancellation that ruins the forward form once Sigma is tiny."""
    f = lambda s: float(sigma_z_sq(s) * lam(s) ** 2 - sigma_v_sq(s))
    far, _ = integrate.quad(f, t_far, np.inf, epsabs=0.0, epsrel=1e-12, limit=400)

    def sigma(t):
        if t >= t_far:
            val, _ = integrate.quad(f, t, np.inf, epsabs=0.0, epsrel=1e-12, limit=400)
            return val
        val, _ = integrate.quad(f, t, t_far, epsabs=0.0, epsrel=1e-12, limit=400)
        return val + far
    return sigma


def equilibrium_gain(lam, Sigma0, sigma_v_sq, sigma_z_sq=1.0, calibrated=None):
    """beta(t) = lambda sigma_z^2 / Sigma(t) (infinite where Sigma has reached zero).

    When lambda empties the filter at infinity (``calibrated`` True, or None to
    detect it) Sigma is evaluated from its tail integral."""
    lam = tf.parse(lam)
    sz = tf.parse(sigma_z_sq)
    sv = tf.parse(sigma_v_sq)
    if calibrated is None:
        try:
            total, _ = tf.integrate_to_infinity(tf.TimeFunction(lambda s: sv(s) - sz(s) * lam(s) ** 2))
            calibrated = abs(Sigma0 + total) <= 1e-10 * max(1.0, Sigma0)
        except ValueError:
            calibrated = False
    sigma_fn = _tail_sigma(lam, sv, sz, 1.0) if calibrated else \
        (lambda s: riccati_closed_form(s, Sigma0, sv, sz, lam, warn=False))
    cache = {}

    def beta(t):
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty_like(ts)
        for k, s in enumerate(ts):
            key = float(s)
            if key not in cache:
                sig = sigma_fn(key)
                cache[key] = np.inf if sig <= 0 else float(lam(key) * sz(key) / sig)
            out[k] = cache[key]
        return float(out[0]) if np.ndim(t) == 0 else out
    g = tf.TimeFunction(beta, "equilibrium-gain")
    g.calibrated = bool(calibrated)
    return g


def _rk4_sigma(grid, Sigma0, sv, sz, beta):
    t = grid.times
    h = grid.dt

    def f(s, x):
        b = beta(s)
        return sv(s) - (x * b) ** 2 / sz(s)

    out = np.empty(len(t))
    out[0] = Sigma0
    x = float(Sigma0)
    for i in range(grid.n_steps):
        s = t[i]
        k1 = f(s, x)
        k2 = f(s + h / 2, x + h / 2 * k1)
        k3 = f(s + h / 2, x + h / 2 * k2)
        k4 = f(s + h, x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = x
    return out


def run_filter(P_path, lam, beta, sigma_z, sigma_v, m0, Sigma0, grid: TimeGrid, switch_time=None):
    """Filter a price path (or stack of paths).

    ``beta`` is a gain function, or the string ``"equilibrium"`` for the
    consistency regime beta = lambda sigma_z^2 / Sigma with Sigma in closed
    form.  With a gain function Sigma solves its Riccati ODE by RK4.  The mean
    is updated by Euler:
        dm = (Sigma beta / (lambda sigma_z^2)) (dP - lambda beta (m - P) dt).
    Returns a FilterState of arrays on the grid.
    """
    P = np.asarray(P_path, dtype=float)
    if P.shape[-1] != grid.n_steps + 1:
        raise ValueError("price path does not match grid")
    t = grid.times
    dt = grid.dt
    lam = tf.parse(lam)
    sz, sv = tf.parse(sigma_z), tf.parse(sigma_v)
    sz2 = sz.square()
    sv2 = sv.square()
    lam_t = np.asarray(lam(t), float) * np.ones(len(t))
    sz2_t = np.asarray(sz2(t), float) * np.ones(len(t))
    T_sw = np.inf if switch_time is None else float(switch_time)

    if isinstance(beta, str):
        if beta != "equilibrium":
            raise ValueError(f"unknown gain mode {beta!r}")
        Sigma = riccati_closed_form(t, Sigma0, sv2, sz2, lam, warn=False)
        with np.errstate(divide="ignore"):
            beta_t = np.where(Sigma > 0, lam_t * sz2_t / np.where(Sigma > 0, Sigma, 1.0), np.inf)
        bad = np.nonzero((Sigma[:-1] <= 0) & (t[:-1] < T_sw))[0]
        if len(bad):
            tb = float(t[bad[0]])
            raise FilterDegenerate(f"filtering error reached zero at t={tb!r} with gain 1/Sigma", time=tb)
        coef = np.where(np.isfinite(beta_t), Sigma * beta_t / (lam_t * sz2_t), 1.0)
    else:
        bfn = tf.parse(beta)
        beta_t = np.asarray(bfn(t), float) * np.ones(len(t))
        Sigma = _rk4_sigma(grid, Sigma0, sv2, sz2, bfn)
        coef = Sigma * beta_t / (lam_t * sz2_t)

    m = np.empty_like(P)
    m[..., 0] = m0
    cur = np.full(P.shape[:-1], float(m0))
    for i in range(grid.n_steps):
        dP = P[..., i + 1] - P[..., i]
        if t[i] >= T_sw or not np.isfinite(beta_t[i]):
            cur = cur + dP
        else:
            cur = cur + coef[i] * (dP - lam_t[i] * beta_t[i] * (cur - P[..., i]) * dt)
        m[..., i + 1] = cur
    return FilterState(m=m, Sigma=Sigma, beta=beta_t)
