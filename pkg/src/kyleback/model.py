"""Shared domain types: grids, rules, noise, fundamentals, release times,
strategies, path bundles and reports."""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtr, ndtri

from . import functions as tf
from .errors import InvalidGrid, InvalidModel, InvalidStrategy

ZERO = tf.constant(0.0)


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    n_steps: int

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise InvalidGrid(f"n_steps must be a positive integer, got {self.n_steps}")
        if not (np.isfinite(self.t_start) and np.isfinite(self.t_end)) or self.t_end <= self.t_start:
            raise InvalidGrid(f"need t_end > t_start, got [{self.t_start}, {self.t_end}]")

    @property
    def dt(self):
        return (self.t_end - self.t_start) / self.n_steps

    @property
    def times(self):
        # t_start + i*dt rather than linspace so refinements share points exactly
        return self.t_start + np.arange(self.n_steps + 1) * self.dt

    def refined(self, factor=2):
        return TimeGrid(self.t_start, self.t_end, self.n_steps * factor)

    def with_steps(self, n):
        return TimeGrid(self.t_start, self.t_end, int(n))


# ---------------------------------------------------------------- pricing rule

@dataclass(frozen=True, eq=False)
class PricingRule:
    """P = H(t, xi) with xi = int lambda dY."""
    H: Callable
    dH_t: Callable
    dH_y: Callable
    dH_yy: Callable
    lam: tf.TimeFunction
    H_inv: Optional[Callable] = None
    lam_prime_fn: Optional[Callable] = None
    sigma_eff_sq: Optional[tf.TimeFunction] = None
    kind: str = "custom"
    params: dict = field(default_factory=dict)
    linear: bool = False
    y_range: tuple = (-np.inf, np.inf)

    def lam_prime(self, t):
        if self.lam_prime_fn is not None:
            return self.lam_prime_fn(t)
        if self.lam.is_constant:
            return np.zeros_like(np.asarray(t, dtype=float)) if np.ndim(t) else 0.0
        h = 1e-6
        return (self.lam(np.asarray(t) + h) - self.lam(np.asarray(t) - h)) / (2 * h)

    def lambda_at(self, times):
        return np.asarray(self.lam(np.asarray(times, dtype=float)), dtype=float)


# ---------------------------------------------------------------------- noise

@dataclass(frozen=True)
class NoiseModel:
    sigma_Z: tf.TimeFunction = tf.constant(1.0)

    def __post_init__(self):
        object.__setattr__(self, "sigma_Z", tf.parse(self.sigma_Z))


# ---------------------------------------------------------------- fundamental

FUNDAMENTAL_KINDS = ("terminal-draw", "arithmetic-BM", "default-indicator")


@dataclass(frozen=True)
class FundamentalModel:
    kind: str = "terminal-draw"
    law: str = "normal"          # terminal-draw: normal or lognormal
    m: float = 0.0               # mean (of V, or of log V)
    v: float = 1.0               # std dev (of V, or of log V)
    sigma_v: tf.TimeFunction = ZERO   # arithmetic-BM volatility
    P0: float = 0.0
    Sigma0: float = 0.0
    signal: str = ""

    def __post_init__(self):
        object.__setattr__(self, "sigma_v", tf.parse(self.sigma_v))
        if self.kind not in FUNDAMENTAL_KINDS:
            raise InvalidModel(f"unknown fundamental kind {self.kind!r}")
        if self.kind == "terminal-draw" and self.law not in ("normal", "lognormal"):
            raise InvalidModel(f"unknown terminal law {self.law!r}")
        if self.v < 0 or self.Sigma0 < 0:
            raise InvalidModel("variances must be non-negative")

    @property
    def sigma_V(self):
        return self.sigma_v if self.kind == "arithmetic-BM" else ZERO

    def mean(self):
        if self.kind == "arithmetic-BM":
            return self.P0
        if self.law == "lognormal":
            return float(np.exp(self.m + 0.5 * self.v ** 2))
        return self.m

    def draw_initial(self, u):
        """Initial value from uniforms u (terminal value for terminal-draw)."""
        z = ndtri(np.clip(u, 1e-300, 1 - 1e-16))
        if self.kind == "arithmetic-BM":
            return self.P0 + np.sqrt(self.Sigma0) * z
        if self.kind == "default-indicator":
            return np.full(np.shape(u), np.nan)
        x = self.m + self.v * z
        return np.exp(x) if self.law == "lognormal" else x


# ---------------------------------------------------------------- release time

RELEASE_KINDS = ("deterministic", "bounded-random", "exponential", "first-passage")


@dataclass(frozen=True)
class ReleaseTime:
    kind: str = "deterministic"
    T: float = 1.0                 # deterministic time, bound, or first-passage cap
    mu: float = 0.0                # exponential rate
    values: tuple = ()             # bounded-random support
    probs: tuple = ()
    barrier: float = -1.0          # first passage of a standard BM to this level

    def __post_init__(self):
        if self.kind not in RELEASE_KINDS:
            raise InvalidModel(f"unknown release kind {self.kind!r}")
        if self.kind == "exponential" and not self.mu > 0:
            raise InvalidModel("exponential release needs mu > 0")
        if self.kind == "bounded-random":
            v, p = np.asarray(self.values, float), np.asarray(self.probs, float)
            if len(v) == 0 or len(v) != len(p) or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
                raise InvalidModel("bounded-random law needs matching values/probs summing to 1")
            if np.any(v < 0) or np.any(v > self.T):
                raise InvalidModel("bounded-random support must lie in [0, T]")
        if self.kind == "first-passage" and self.barrier == 0:
            raise InvalidModel("barrier must be non-zero")

    @property
    def insider_knows(self):
        return self.kind != "exponential"

    @property
    def ess_sup(self):
        return np.inf if self.kind == "exponential" else self.T

    def survival(self, t):
        return survival(self, t)

    def sample(self, u_tau, u_bar):
        """(tau, tau_bar) per path from two uniform arrays."""
        u_tau = np.clip(np.asarray(u_tau, float), 1e-300, 1 - 1e-16)
        nan = np.full(u_tau.shape, np.nan)
        if self.kind == "deterministic":
            return np.full(u_tau.shape, float(self.T)), nan
        if self.kind == "exponential":
            return -np.log1p(-u_tau) / self.mu, nan
        if self.kind == "bounded-random":
            cdf = np.cumsum(self.probs)
            idx = np.minimum(np.searchsorted(cdf, u_tau, side="right"), len(cdf) - 1)
            return np.asarray(self.values, float)[idx], nan
        # reflection principle: tau_bar = b^2 / N^2 with N standard normal
        u = np.clip(np.asarray(u_bar, float), 1e-300, 1 - 1e-16)
        n = ndtri(0.5 + 0.5 * u)
        tau_bar = self.barrier ** 2 / np.maximum(n * n, 1e-300)
        return np.minimum(tau_bar, self.T), tau_bar


def survival(rt: ReleaseTime, t):
    """P(tau > t)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("survival needs t >= 0")
    if rt.kind == "deterministic":
        out = np.where(t < rt.T, 1.0, 0.0)
    elif rt.kind == "exponential":
        out = np.exp(-rt.mu * t)
    elif rt.kind == "bounded-random":
        v, p = np.asarray(rt.values, float), np.asarray(rt.probs, float)
        out = np.array([p[v > s].sum() for s in np.atleast_1d(t)]).reshape(t.shape)
        out = np.minimum(out, 1.0)
    else:
        a = abs(rt.barrier)
        with np.errstate(divide="ignore"):
            pos = np.where(t > 0, 2.0 * ndtr(a / np.sqrt(np.where(t > 0, t, 1.0))) - 1.0, 1.0)
        out = np.where(t < rt.T, pos, 0.0)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- strategy

@dataclass(frozen=True, eq=False)
class PhaseSwitch:
    time: float
    load_z: tf.TimeFunction = ZERO
    load_v: tf.TimeFunction = ZERO
    catch_up: bool = True


@dataclass(frozen=True, eq=False)
class Strategy:
    """X = M + jumps + int theta ds with dM = load_z dZ + load_v dV + load_w dW.

    ``theta(t, state)`` returns drift rates per path.  ``step`` optionally
    replaces theta*dt with a scheme-specific drift increment.
    """
    kind: str
    theta: Callable
    mart_vol: tf.TimeFunction = ZERO
    corr_with_Z: tf.TimeFunction = ZERO
    jumps: tuple = ()
    phase_switch: Optional[PhaseSwitch] = None
    load_z: tf.TimeFunction = ZERO
    load_v: tf.TimeFunction = ZERO
    load_w: tf.TimeFunction = ZERO
    prepare: Optional[Callable] = None
    step: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.theta is None and self.step is None:
            raise InvalidStrategy("strategy needs a drift or a step rule")
        for name in ("mart_vol", "corr_with_Z", "load_z", "load_v", "load_w"):
            object.__setattr__(self, name, tf.parse(getattr(self, name)))
        try:
            jumps = tuple((float(s), float(x)) for s, x in self.jumps)
        except TypeError as exc:
            raise InvalidStrategy("jump schedule must be a finite list of (time, size)") from exc
        object.__setattr__(self, "jumps", jumps)

    def with_jumps(self, jumps):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["jumps"] = tuple(jumps)
        d["kind"] = self.kind + "+jumps"
        return Strategy(**d)


class State:
    """Read-only view handed to strategy drifts; attributes are per-path arrays."""

    def __init__(self, **kw):
        self.__dict__.update(kw)

    def get(self, name, default=None):
        return self.__dict__.get(name, default)


@dataclass(frozen=True)
class MarketModel:
    noise: NoiseModel = NoiseModel()
    fundamental: FundamentalModel = FundamentalModel()
    release: ReleaseTime = ReleaseTime()


# ---------------------------------------------------------------- bundles

@dataclass(eq=False)
class PathBundle:
    """Simulated paths aligned on one grid; arrays have shape (n_paths, n_steps+1)."""
    grid: TimeGrid
    Z: np.ndarray
    V: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    xi: np.ndarray
    P: np.ndarray
    theta: np.ndarray
    lam: np.ndarray
    tau: np.ndarray
    stop_index: np.ndarray
    path_ids: np.ndarray
    tau_bar: Optional[np.ndarray] = None
    flagged: Optional[np.ndarray] = None
    extras: dict = field(default_factory=dict)
    wealth: Optional[np.ndarray] = None
    rule: Optional[PricingRule] = None

    @property
    def n_paths(self):
        return self.X.shape[0]

    @property
    def t(self):
        return self.grid.times

    def _running(self, a, b):
        inc = np.diff(a, axis=1) * np.diff(b, axis=1)
        out = np.zeros_like(a)
        np.cumsum(inc, axis=1, out=out[:, 1:])
        return out

    @property
    def cov_VX(self):
        return self._running(self.V, self.X)

    @property
    def cov_PX(self):
        return self._running(self.P, self.X)

    @property
    def cov_YY(self):
        return self._running(self.Y, self.Y)

    @property
    def tau_realized(self):
        return self.tau

    @property
    def pre_tau_index(self):
        """Last grid index strictly before tau."""
        t = self.grid.times
        k = self.stop_index.copy()
        on_grid = np.isclose(t[k], self.tau, rtol=0, atol=1e-9 * self.grid.dt)
        return np.where(on_grid & (k > 0), k - 1, k)

    def valid(self):
        if self.flagged is None:
            return np.ones(self.n_paths, bool)
        return ~self.flagged

    def subset(self, idx):
        idx = np.asarray(idx)
        sl = lambda a: None if a is None else a[idx]
        ex = {k: (v[idx] if isinstance(v, np.ndarray) and v.ndim >= 1 and v.shape[0] == self.n_paths else v)
              for k, v in self.extras.items()}
        return PathBundle(self.grid, self.Z[idx], self.V[idx], self.X[idx], self.Y[idx],
                          self.xi[idx], self.P[idx], self.theta[idx], self.lam, self.tau[idx],
                          self.stop_index[idx], self.path_ids[idx], sl(self.tau_bar),
                          sl(self.flagged), ex, sl(self.wealth), self.rule)


# ---------------------------------------------------------------- reports

@dataclass
class ConditionResult:
    name: str
    statistic: float
    threshold: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, "statistic": self.statistic,
                "threshold": self.threshold, "pass": bool(self.passed),
                "details": self.details}


@dataclass
class EquilibriumReport:
    name: str = ""
    conditions: list = field(default_factory=list)
    calibration: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.conditions)

    def add(self, cond: ConditionResult):
        if any(c.name == cond.name for c in self.conditions):
            raise ValueError(f"condition {cond.name!r} reported twice")
        self.conditions.append(cond)
        return cond

    def __getitem__(self, name):
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def names(self):
        return [c.name for c in self.conditions]


@dataclass
class AdmissibilityEntry:
    name: str
    estimate: float
    refined: float
    growth: float
    finite: bool
    divergent: bool

    @property
    def passed(self):
        return self.finite and not self.divergent


@dataclass
class AdmissibilityReport:
    entries: list

    @property
    def passed(self):
        return all(e.passed for e in self.entries)

    def __getitem__(self, name):
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)


