"""Deterministic functions of time (volatilities, gains, price pressure).

A ``TimeFunction`` evaluates on scalars or arrays, remembers whether it is a
constant (so integrals have closed forms), and keeps a source string so that
configs round-trip.
"""
import ast
import math

import numpy as np
from scipy import integrate

_ALLOWED_FUNCS = {
    "exp": np.exp, "log": np.log, "sqrt": np.sqrt, "sin": np.sin,
    "cos": np.cos, "abs": np.abs, "expm1": np.expm1, "tanh": np.tanh,
}
_ALLOWED_NAMES = {"t": None, "pi": math.pi, "e": math.e}
_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load,
    ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
)

QUAD_TOL = 1e-12


class TimeFunction:
    def __init__(self, fn, source=None, const=None):
        self._fn = fn
        self.source = source
        self.const = None if const is None else float(const)

    @property
    def is_constant(self):
        return self.const is not None

    def __call__(self, t):
        if self.const is not None:
            if np.ndim(t) == 0:
                return self.const
            return np.full(np.shape(t), self.const)
        return self._fn(t)

    def __repr__(self):
        return f"TimeFunction({self.source!r})"

    def square(self):
        if self.const is not None:
            return constant(self.const ** 2)
        src = None if self.source is None else f"({self.source})**2"
        f = self._fn
        return TimeFunction(lambda t: f(t) ** 2, src)

    def scaled(self, c):
        if self.const is not None:
            return constant(c * self.const)
        f = self._fn
        src = None if self.source is None else f"{c!r}*({self.source})"
        return TimeFunction(lambda t: c * f(t), src)

    def integral(self, a, b):
        """Integral over [a, b]."""
        if b <= a:
            return 0.0
        if self.const is not None:
            return self.const * (b - a)
        val, _ = integrate.quad(lambda s: float(self._fn(s)), a, b,
                                epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=400)
        return val


def constant(c):
    return TimeFunction(None, repr(float(c)), const=c)


def _check(node):
    for sub in ast.walk(node):
        if not isinstance(sub, _ALLOWED_NODES):
            raise ValueError(f"disallowed syntax in time expression: {type(sub).__name__}")
        if isinstance(sub, ast.Name) and sub.id not in _ALLOWED_NAMES and sub.id not in _ALLOWED_FUNCS:
            raise ValueError(f"unknown name {sub.id!r} in time expression")
        if isinstance(sub, ast.Call) and not (isinstance(sub.func, ast.Name) and sub.func.id in _ALLOWED_FUNCS):
            raise ValueError("only elementary functions may be called")


def parse(src):
    """Build a TimeFunction from a number or an expression in ``t``.

    >>> parse("exp(-t)")(0.0)
    1.0
    """
    if isinstance(src, TimeFunction):
        return src
    if isinstance(src, (int, float, np.floating)):
        return constant(float(src))
    if callable(src):
        return TimeFunction(src)
    text = str(src).strip()
    try:
        return constant(float(text))
    except ValueError:
        pass
    tree = ast.parse(text, mode="eval")
    _check(tree)
    code = compile(tree, "<time-fn>", "eval")
    env = dict(_ALLOWED_FUNCS)
    env.update({k: v for k, v in _ALLOWED_NAMES.items() if v is not None})

    def fn(t):
        out = eval(code, {"__builtins__": {}}, dict(env, t=t))
        if np.ndim(t) and np.ndim(out) == 0:
            out = np.full(np.shape(t), out)
        return out

    return TimeFunction(fn, text)


def integrate_to_infinity(f, a=0.0, rel_cut=1e-12, t_max=1e6):
    """Integral of f over [a, inf).

    The tail is truncated at the first doubling point where |f| drops below
    ``rel_cut`` of its running peak.  Returns (value, cutoff) or raises
    ValueError if the integrand never decays before ``t_max``.
    """
    f = parse(f)
    if f.is_constant:
        if f.const == 0.0:
            return 0.0, a
        raise ValueError("constant non-zero integrand has no finite integral")
    grid = a + np.concatenate(([0.0], np.geomspace(1e-3, t_max, 400)))
    vals = np.abs(np.asarray(f(grid), dtype=float))
    if not np.all(np.isfinite(vals)):
        raise ValueError("integrand not finite")
    peak = np.maximum.accumulate(vals)
    small = np.nonzero((vals <= rel_cut * peak) | (peak == 0.0))[0]
    # require the integrand to stay small afterwards
    cut = None
    for k in small:
        if np.all(vals[k:] <= rel_cut * max(peak[k], 1e-300)):
            cut = grid[k]
            break
    if cut is None:
        raise ValueError("integrand does not decay; integral diverges")
    total, pieces = 0.0, np.concatenate(([a], grid[(grid > a) & (grid <= cut)]))
    for lo, hi in zip(pieces[:-1], pieces[1:]):
        total += f.integral(lo, hi)
    tail, _ = integrate.quad(lambda s: float(f(s)), cut, np.inf, epsabs=1e-15, epsrel=QUAD_TOL)
    return total + tail, cut
