"""Monte Carlo screening of the integrability conditions on (rule, strategy)."""
import numpy as np

from .errors import InvalidRule, InvalidStrategy, OutOfRange
from .model import AdmissibilityEntry, AdmissibilityReport, TimeGrid
from .simulate import auto_chunk, iter_simulate

MAX_JUMPS = 100_000


def _check_rule(rule, grid):
    t = grid.times
    lam = rule.lambda_at(t[:-1])
    if np.any(~np.isfinite(lam)) or np.any(lam <= 0):
        raise InvalidRule("price pressure must be positive on the grid")
    ts = np.linspace(grid.t_start, grid.t_end, 11)
    ys = np.linspace(-5.0, 5.0, 41)
    T, Y = np.meshgrid(ts, ys, indexing="ij")
    d = np.asarray(rule.dH_y(T, Y), float)
    Hv = np.asarray(rule.H(T, Y), float)
    if np.any(d <= 0) or np.any(np.diff(Hv, axis=1) <= 0):
        raise InvalidRule("H(t, .) is not strictly increasing")


def _check_strategy(strategy, grid):
    if len(strategy.jumps) > MAX_JUMPS:
        raise InvalidStrategy("jump schedule is not finite on the horizon")
    for s, size in strategy.jumps:
        if not (np.isfinite(s) and np.isfinite(size)):
            raise InvalidStrategy("jump schedule has non-finite entries")
    mv = np.asarray(strategy.mart_vol(grid.times), float)
    if not np.all(np.isfinite(mv)):
        raise InvalidStrategy("martingale volatility is not finite on the grid")


def _functionals(bundle, rule, strategy, model):
    g = bundle.grid
    t = g.times[:-1]
    dt = g.dt
    N = g.n_steps
    mask = np.arange(N)[None, :] < bundle.stop_index[:, None]
    xi, P, V = bundle.xi[:, :-1], bundle.P[:, :-1], bundle.V[:, :-1]
    dHy = np.asarray(rule.dH_y(t[None, :], xi), float)
    dHyy = np.asarray(rule.dH_yy(t[None, :], xi), float)
    sz2 = np.asarray(model.noise.sigma_Z(t), float) ** 2 * np.ones(N)
    mv2 = np.asarray(strategy.mart_vol(t), float) ** 2 * np.ones(N)
    cmz = np.abs(np.asarray(strategy.corr_with_Z(t), float)) * np.ones(N)
    sv2 = np.asarray(model.fundamental.sigma_V(t), float) ** 2 * np.ones(N)
    lam = bundle.lam[:-1]

    def tot(x):
        with np.errstate(invalid="ignore", over="ignore"):
            return np.sum(np.where(mask, x, 0.0), axis=1)

    with np.errstate(over="ignore", invalid="ignore"):
        a2 = tot((dHy ** 2 + P ** 2 + V ** 2) * (sz2 + mv2) * dt)
        a3 = tot((np.abs(dHy) + np.abs(P) + np.abs(V)) * np.abs(bundle.theta) * dt)
        a4 = np.zeros(bundle.n_paths)
        for s, size in strategy.jumps:
            i = int(np.ceil((s - g.t_start) / dt - 1e-9)) - 1
            if 0 <= i < N:
                live = i < bundle.stop_index
                a4 += np.where(live, np.abs(rule.dH_y(s, bundle.xi[:, i])) * abs(size), 0.0)
        if np.any(sv2):
            try:
                hinv = np.asarray(rule.H_inv(bundle.tau[:, None], V), float) if rule.H_inv is not None \
                    else np.full(V.shape, np.nan)
            except OutOfRange:
                hinv = np.full(V.shape, np.inf)
            a5 = tot((hinv ** 2 + bundle.Z[:, :-1] ** 2 + bundle.X[:, :-1] ** 2) * sv2 * dt)
        else:
            a5 = np.zeros(bundle.n_paths)
        a6 = tot(lam * np.abs(dHyy) * (mv2 + cmz) * dt)
    return {"A2": a2, "A3": a3, "A4": a4, "A5": a5, "A6": a6}


def _estimates(rule, strategy, model, grid, n, seed):
    parts = {k: [] for k in ("A2", "A3", "A4", "A5", "A6")}
    for b in iter_simulate(rule, strategy, model, grid, n, seed, chunk=auto_chunk(grid)):
        ok = b.valid()
        for k, v in _functionals(b, rule, strategy, model).items():
            parts[k].append(v[ok])
    with np.errstate(over="ignore", invalid="ignore"):
        return {k: float(np.mean(np.concatenate(v))) for k, v in parts.items()}


def validate_admissibility(rule, strategy, model, grid: TimeGrid, mc_budget=1000, seed=0, growth_limit=2.0):
    """Estimate the integrability functionals at dt and dt/2.

    A functional is flagged divergent when it grows by more than
    ``growth_limit`` under the refinement.  The decomposition condition is
    checked from the strategy's declared parts.
    """
    if mc_budget < 100:
        raise ValueError("mc_budget must be >= 100")
    _check_rule(rule, grid)
    _check_strategy(strategy, grid)
    coarse = _estimates(rule, strategy, model, grid, mc_budget, seed)
    fine = _estimates(rule, strategy, model, grid.refined(2), mc_budget, seed)
    entries = [AdmissibilityEntry("A1", float(len(strategy.jumps)), float(len(strategy.jumps)), 1.0, True, False)]
    for k in ("A2", "A3", "A4", "A5", "A6"):
        a, b = coarse[k], fine[k]
        finite = bool(np.isfinite(a) and np.isfinite(b))
        if a > 0:
            growth = b / a
        else:
            growth = 1.0 if b == 0 else np.inf
        entries.append(AdmissibilityEntry(k, a, b, float(growth), finite,
                                          bool(not finite or growth > growth_limit)))
    return AdmissibilityReport(entries)
