"""Noise generation, Euler-Maruyama, discrete stochastic integrals and
covariations on uniform grids."""
import numpy as np

from . import rng
from .errors import GridMismatch, SingularDrift
from .model import NoiseModel, TimeGrid


def pairwise_sum(x, axis=0):
    """Sum along ``axis`` with a fixed balanced tree (order independent of chunking)."""
    x = np.moveaxis(np.asarray(x, dtype=float), axis, 0)
    if x.shape[0] == 0:
        return np.zeros(x.shape[1:])
    while x.shape[0] > 1:
        if x.shape[0] % 2:
            x = np.concatenate([x, np.zeros((1,) + x.shape[1:])])
        x = x[0::2] + x[1::2]
    return x[0]


def pairwise_mean(x, axis=0):
    x = np.asarray(x, dtype=float)
    return pairwise_sum(x, axis) / x.shape[axis]


def noise_increments(noise: NoiseModel, grid: TimeGrid, paths, seed, purpose=rng.NOISE_Z):
    sig = np.asarray(noise.sigma_Z(grid.times[:-1]), dtype=float)
    if np.any(sig < 0):
        raise ValueError("sigma_Z must be non-negative")
    if not np.any(sig):
        return np.zeros((len(paths), grid.n_steps))
    return rng.normals(seed, paths, grid.n_steps, purpose) * (sig * np.sqrt(grid.dt))


def cumulate(inc, start=0.0):
    out = np.empty(inc.shape[:-1] + (inc.shape[-1] + 1,))
    out[..., 0] = start
    np.cumsum(inc, axis=-1, out=out[..., 1:])
    if np.any(start):
        out[..., 1:] += np.asarray(start)[..., None] if np.ndim(start) else start
    return out


def generate_noise_paths(noise: NoiseModel, grid: TimeGrid, n_paths, seed, first_path=0):
    """Z paths (n_paths, n_steps+1) with Z_0 = 0 and N(0, sigma_Z(t_i)^2 dt) increments."""
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    paths = np.arange(first_path, first_path + n_paths)
    return cumulate(noise_increments(noise, grid, paths, seed))


def integrate_sde(drift, diffusion, driving, grid: TimeGrid, init=0.0):
    """Explicit Euler: S_{i+1} = S_i + drift(t_i, S_i) dt + diffusion(t_i) dW_i.

    ``driving`` is a path (or stack of paths) on ``grid`` whose increments are dW.
    """
    W = np.asarray(driving, dtype=float)
    if W.shape[-1] != grid.n_steps + 1:
        raise GridMismatch(f"driving path has {W.shape[-1]} points, grid has {grid.n_steps + 1}")
    dW = np.diff(W, axis=-1)
    t = grid.times
    dt = grid.dt
    S = np.empty(W.shape)
    S[..., 0] = init
    cur = S[..., 0].copy()
    for i in range(grid.n_steps):
        mu = np.asarray(drift(t[i], cur), dtype=float)
        if not np.all(np.isfinite(mu)):
            raise SingularDrift(f"non-finite drift at t={t[i]!r}", time=float(t[i]))
        cur = cur + mu * dt + diffusion(t[i]) * dW[..., i]
        S[..., i + 1] = cur
    return S


def _same_grid(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise GridMismatch(f"paths have {a.shape[-1]} and {b.shape[-1]} points")
    return a, b


def stochastic_integral(integrand, integrator, convention="left"):
    """Running sum of f(t_i) dG_i (left) or f(t_{i+1}) dG_i (backward)."""
    f, G = _same_grid(integrand, integrator)
    dG = np.diff(G, axis=-1)
    if convention == "left":
        inc = f[..., :-1] * dG
    elif convention == "backward":
        inc = f[..., 1:] * dG
    else:
        raise ValueError(f"unknown convention {convention!r}")
    return cumulate(inc)


def quadratic_covariation(a, b):
    """Running sum of da_i db_i."""
    a, b = _same_grid(a, b)
    return cumulate(np.diff(a, axis=-1) * np.diff(b, axis=-1))
