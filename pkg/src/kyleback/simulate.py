"""Market simulation: draws scenarios, runs the insider strategy through the
pricing rule, and packs the result into a PathBundle.

Paths own their random streams, so ``simulate(..., first_path=k)`` on any
chunking reproduces the same paths.
"""
import numpy as np

from . import _accel, kernels, rng
from .engine import cumulate, noise_increments
from .errors import InvalidRule, InvalidStrategy, SingularDrift
from .model import MarketModel, PathBundle, State, Strategy, TimeGrid

DEFAULT_CHUNK = 500


def _step_index(grid, s):
    """Index i of the step (t_i, t_{i+1}] containing time s."""
    return int(np.ceil((s - grid.t_start) / grid.dt - 1e-9)) - 1


def _switch_index(grid, T):
    return int(np.ceil((T - grid.t_start) / grid.dt - 1e-9))


def draw_scenarios(model: MarketModel, grid: TimeGrid, paths, seed):
    """V0, tau, tau_bar per path from the scenario stream."""
    U = rng.scenario_uniforms(seed, paths, 4)
    tau, tau_bar = model.release.sample(U[:, 1], U[:, 2])
    fm = model.fundamental
    if fm.kind == "default-indicator":
        if model.release.kind != "first-passage":
            raise InvalidStrategy("default-indicator fundamentals need a first-passage release")
        V0 = (tau_bar > model.release.T).astype(float)
    else:
        V0 = fm.draw_initial(U[:, 0])
    return V0, tau, tau_bar


def _fundamental_path(model, grid, paths, seed, V0):
    fm = model.fundamental
    if fm.kind == "arithmetic-BM":
        sig = np.asarray(fm.sigma_v(grid.times[:-1]), dtype=float)
        if np.any(sig):
            dV = rng.normals(seed, paths, grid.n_steps, rng.NOISE_V) * (sig * np.sqrt(grid.dt))
        else:
            dV = np.zeros((len(paths), grid.n_steps))
        return cumulate(dV, V0), dV
    V = np.repeat(np.asarray(V0, float)[:, None], grid.n_steps + 1, axis=1)
    return V, np.zeros((len(paths), grid.n_steps))


def _loading(fn, times):
    return np.asarray(fn(times), dtype=float) * np.ones(len(times))


def _kernel_ok(rule, strategy, model):
    k = strategy.params.get("kernel")
    if _accel.backend() != "numba" or k is None or strategy.jumps:
        return False
    if not (strategy.load_w.is_constant and strategy.load_w.const == 0.0):
        return False
    if k == "bridge":
        return rule.kind in ("linear", "lognormal") and strategy.load_v.const == 0.0
    if k == "feedback":
        return rule.linear and (strategy.load_z.const == 0.0 and strategy.load_v.const == 0.0)
    if k == "barrier":
        return strategy.load_z.const == 0.0 and strategy.load_v.const == 0.0
    return False


def simulate(rule, strategy: Strategy, model: MarketModel, grid: TimeGrid, n_paths, seed,
             first_path=0, use_kernel=None):
    """Simulate paths [first_path, first_path + n_paths) and return a PathBundle."""
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    paths = np.arange(first_path, first_path + n_paths, dtype=np.int64)
    t = grid.times
    dt = grid.dt
    N = grid.n_steps
    lam = rule.lambda_at(t)
    if np.any(lam[:-1] <= 0) or not np.all(np.isfinite(lam)):
        raise InvalidRule("price pressure must be positive and finite on the grid")

    V0, tau, tau_bar = draw_scenarios(model, grid, paths, seed)
    dz = noise_increments(model.noise, grid, paths, seed)
    Z = cumulate(dz)
    V, dV = _fundamental_path(model, grid, paths, seed, V0)
    stop = np.clip(np.floor((tau - grid.t_start) / dt + 1e-9), 0, N).astype(np.int64)

    init = State(V0=V0, tau=tau, tau_bar=None if np.all(np.isnan(tau_bar)) else tau_bar,
                 grid=grid, rule=rule, paths=paths)
    extras = dict(strategy.prepare(init)) if strategy.prepare is not None else {}

    if use_kernel is None:
        use_kernel = _kernel_ok(rule, strategy, model)
    p0 = float(rule.H(t[0], 0.0))
    kind = strategy.params.get("kernel")
    flagged = np.zeros(n_paths, bool)

    if use_kernel and kind == "bridge":
        gain = np.asarray(strategy.params["gain"](t[:-1]), dtype=float) * np.ones(N)
        if not np.all(np.isfinite(gain)):
            bad = int(np.nonzero(~np.isfinite(gain))[0][0])
            raise SingularDrift(f"bridge gain not finite at t={t[bad]!r}", time=float(t[bad]))
        dm = dz * _loading(strategy.load_z, t[:-1])
        X, xi, th = kernels.bridge_paths(Z, dz, dm, extras["target"], gain,
                                         float(strategy.params["kappa"]), t, lam, dt)
        P = rule.H(t, xi)
    elif use_kernel and kind == "feedback":
        beta = np.asarray(strategy.params["beta"](t[:-1]), dtype=float) * np.ones(N)
        sw = strategy.phase_switch
        ks = N + 1 if sw is None else _switch_index(grid, sw.time)
        catch = sw is not None and sw.catch_up and ks >= 1
        if sw is not None:
            lzp, lvp = _loading(sw.load_z, t[:-1]), _loading(sw.load_v, t[:-1])
        else:
            lzp = lvp = np.zeros(N)
        X, xi, th = kernels.feedback_paths(dz, dV, V, lam, beta, lzp, lvp, p0, ks, catch, dt)
        P = rule.H(t, xi)
    elif use_kernel and kind == "barrier":
        X, xi, th, flagged = kernels.barrier_paths(Z, dz, init.tau_bar, extras["kstop"], t, lam, dt,
                                                   strategy.params["scheme"] == "implicit")
        P = rule.H(t, xi)
    else:
        X, xi, P, th = _generic(rule, strategy, grid, Z, dz, V, dV, lam, extras, init, flagged, seed, paths)

    extras.pop("flagged", None)
    return PathBundle(grid=grid, Z=Z, V=V, X=X, Y=X + Z, xi=xi, P=P, theta=th, lam=lam, tau=tau,
                      stop_index=stop, path_ids=paths, tau_bar=init.tau_bar,
                      flagged=flagged, extras=extras, rule=rule)


def _generic(rule, strategy, grid, Z, dz, V, dV, lam, extras, init, flagged, seed, paths):
    t = grid.times
    dt = grid.dt
    n, N = dz.shape
    X = np.zeros((n, N + 1))
    xi = np.zeros((n, N + 1))
    P = np.empty((n, N + 1))
    P[:, 0] = rule.H(t[0], xi[:, 0])
    th = np.zeros((n, N))

    J = np.zeros(N)
    for s, size in strategy.jumps:
        i = _step_index(grid, s)
        if 0 <= i < N:
            J[i] += size
    lw = strategy.load_w
    dW = None
    if not (lw.is_constant and lw.const == 0.0):
        dW = rng.normals(seed, paths, N, rng.NOISE_W) * np.sqrt(dt)

    sw = strategy.phase_switch
    ks = N + 1 if sw is None else _switch_index(grid, sw.time)
    catch = sw is not None and sw.catch_up and ks >= 1

    for i in range(N):
        ti = t[i]
        if i >= ks:
            dA = np.zeros(n)
            dX = sw.load_z(ti) * dz[:, i] + sw.load_v(ti) * dV[:, i]
        else:
            dM = strategy.load_z(ti) * dz[:, i] + strategy.load_v(ti) * dV[:, i]
            if dW is not None:
                dM = dM + lw(ti) * dW[:, i]
            if catch and i == ks - 1:
                target = rule.H_inv(t[i + 1], V[:, i + 1]) if not rule.linear else None
                if rule.linear:
                    dX = (V[:, i + 1] - P[:, i]) / lam[i] - dz[:, i]
                else:
                    dX = (target - xi[:, i]) / lam[i] - dz[:, i]
                dA = dX - dM
            else:
                st = State(t=ti, i=i, dt=dt, X=X[:, i], Y=X[:, i] + Z[:, i], Z=Z[:, i], V=V[:, i],
                           xi=xi[:, i], P=P[:, i], lam=lam[i], rule=rule, flagged=flagged,
                           tau_bar=init.tau_bar, **extras)
                if strategy.step is not None:
                    dA = strategy.step(ti, dt, st, dz[:, i])
                else:
                    dA = np.asarray(strategy.theta(ti, st), dtype=float) * dt
                if not np.all(np.isfinite(dA)):
                    raise SingularDrift(f"non-finite drift at t={ti!r}", time=float(ti))
                dX = dA + dM
        if J[i]:
            dX = dX + J[i]
        X[:, i + 1] = X[:, i] + dX
        xi[:, i + 1] = xi[:, i] + lam[i] * (dX + dz[:, i])
        P[:, i + 1] = rule.H(t[i + 1], xi[:, i + 1])
        th[:, i] = dA / dt
    return X, xi, P, th


def iter_simulate(rule, strategy, model, grid, n_paths, seed, chunk=DEFAULT_CHUNK, **kw):
    """Yield PathBundles covering paths 0..n_paths-1 in chunks."""
    chunk = max(1, int(chunk))
    for a in range(0, n_paths, chunk):
        yield simulate(rule, strategy, model, grid, min(chunk, n_paths - a), seed, first_path=a, **kw)


def auto_chunk(grid, budget_bytes=64_000_000):
    """Chunk size keeping one (chunk, n_steps+1) array under the budget."""
    return int(max(16, min(5000, budget_bytes // (8 * (grid.n_steps + 1)))))
