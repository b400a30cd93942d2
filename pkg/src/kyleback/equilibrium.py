"""Insider wealth, expected-wealth and perturbation estimates, and numerical
checks of the equilibrium conditions for known and unknown release times.

Checks consume simulations chunk by chunk and keep only small per-path
summaries, so fine grids with many paths fit in memory.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .engine import cumulate, pairwise_mean
from .errors import EstimateUnreliable, IncompleteBundle, PerturbationInadmissible
from .model import ConditionResult, EquilibriumReport, PathBundle, survival
from .simulate import auto_chunk, iter_simulate
from .stats import mean_se, ols_cluster, refinement_exponent


@dataclass
class Thresholds:
    efficiency_rms: float = 0.03
    efficiency_exponent: float = 0.4
    exact_tol: float = 1e-12
    jump_sigmas: float = 6.0
    z_crit: float = 3.0
    blocks: int = 20
    residual_tol: float = 1e-8
    lambda_ratio_tol: float = 1e-12
    rationality_bins: int = 5
    min_bin: int = 30

    @classmethod
    def from_dict(cls, d):
        known = {k: type(getattr(cls(), k))(v) for k, v in (d or {}).items() if k in cls.__dataclass_fields__}
        return cls(**known)


# ---------------------------------------------------------------- wealth

def _stop_mask(stop, N):
    return np.arange(N)[None, :] < np.asarray(stop)[:, None]


def wealth_from_arrays(V, P, X, stop):
    """Left-point discretisation of
    int (V-P) dX + int X dV + [V,X] - [P,X] over steps i < stop."""
    dX = np.diff(X, axis=1)
    dV = np.diff(V, axis=1)
    dP = np.diff(P, axis=1)
    inc = (V[:, :-1] - P[:, :-1]) * dX + X[:, :-1] * dV + dV * dX - dP * dX
    inc = np.where(_stop_mask(stop, X.shape[1] - 1), inc, 0.0)
    return inc.sum(axis=1)


def compute_wealth(bundle: PathBundle):
    """Per-path terminal wealth W_tau; also stored on ``bundle.wealth``."""
    arrs = [bundle.V, bundle.P, bundle.X]
    if any(a is None for a in arrs) or bundle.stop_index is None:
        raise IncompleteBundle("bundle lacks V, P, X or stop indices")
    n, M = bundle.X.shape
    if any(a.shape != (n, M) for a in arrs) or M != bundle.grid.n_steps + 1:
        raise IncompleteBundle("bundle arrays do not cover the grid")
    if np.any(bundle.stop_index > M - 1) or np.any(bundle.stop_index < 0):
        raise IncompleteBundle("stop index outside the simulated grid")
    W = wealth_from_arrays(bundle.V, bundle.P, bundle.X, bundle.stop_index)
    bundle.wealth = W
    return W


def bank_account_wealth(V, P, X, stop):
    """Cash from buying dX_i at the post-trade price P_{i+1}, plus the
    liquidation value of the position at V."""
    n = X.shape[0]
    out = np.empty(n)
    for p in range(n):
        k = int(stop[p])
        cash = -np.sum(P[p, 1:k + 1] * np.diff(X[p, :k + 1]))
        out[p] = cash + X[p, k] * V[p, k] - X[p, 0] * V[p, 0]
    return out


class WealthEstimate(tuple):
    """(J, SE) with extra attributes n_used and n_excluded."""

    def __new__(cls, J, SE, n_used=0, n_excluded=0):
        obj = super().__new__(cls, (J, SE))
        obj.n_used, obj.n_excluded = n_used, n_excluded
        return obj

    J = property(lambda self: self[0])
    SE = property(lambda self: self[1])


def _collect_wealth(bundles):
    ws, bad = [], 0
    for b in bundles:
        W = compute_wealth(b)
        ok = b.valid() & np.isfinite(W)
        bad += int(np.sum(~ok))
        ws.append(W[ok])
    return (np.concatenate(ws) if ws else np.zeros(0)), bad


def estimate_expected_wealth(strategy, rule, model, grid, n_paths, seed, chunk=None, max_excluded=0.01):
    """Monte Carlo E[W_tau] with its standard error."""
    if n_paths < 100:
        raise ValueError("n_paths must be >= 100")
    W, bad = _collect_wealth(iter_simulate(rule, strategy, model, grid, n_paths, seed,
                                           chunk=chunk or auto_chunk(grid)))
    if bad > max_excluded * n_paths:
        raise EstimateUnreliable(f"{bad} of {n_paths} paths excluded")
    J, se = mean_se(W) if len(W) > 1 else (float(W.mean()) if len(W) else 0.0, 0.0)
    return WealthEstimate(J, se, len(W), bad)


# ---------------------------------------------------------------- perturbations

def _dir_constant(b):
    return np.ones_like(b.theta)


def _dir_gap(b):
    return b.V[:, :-1] - b.P[:, :-1]


def _dir_noise(b):
    return b.Z[:, :-1].copy()


def _dir_ramp(b):
    return np.broadcast_to(b.grid.times[:-1], b.theta.shape).copy()


def _dir_flip(b):
    return -b.theta


CANONICAL_DIRECTIONS = {
    "constant": _dir_constant,
    "V-P": _dir_gap,
    "Z": _dir_noise,
    "ramp": _dir_ramp,
    "flip": _dir_flip,
}


@dataclass
class PerturbationResult:
    direction: str
    dJ: float
    SE: float
    eps: float
    curvature: float
    curvature_SE: float
    n_used: int
    by_eps: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.dJ, self.SE))

    def first_order_ok(self, z=3.0):
        return abs(self.dJ) < z * self.SE if self.SE > 0 else abs(self.dJ) < 1e-12


def perturbed_wealth(bundle, beta, eps):
    """Wealth after adding eps * int beta ds to X on the same scenario."""
    dt = bundle.grid.dt
    B = cumulate(beta * dt)
    Bxi = cumulate(beta * (bundle.lam[:-1] * dt))
    X = bundle.X + eps * B
    with np.errstate(over="ignore", invalid="ignore"):
        P = bundle.rule.H(bundle.grid.times, bundle.xi + eps * Bxi)
    return wealth_from_arrays(bundle.V, P, X, bundle.stop_index)


def perturbation_derivative(strategy, direction, rule, model, grid, epsilons=(1e-2,), n_paths=10_000,
                            seed=0, chunk=None, bundles=None):
    """Central-difference dJ/deps along X + eps int beta ds with common random numbers.

    ``direction`` is a canonical name or a function bundle -> beta array of shape
    (n_paths, n_steps) evaluated on the unperturbed paths.  Several directions
    may be passed as a list; then a list of results is returned.
    """
    many = isinstance(direction, (list, tuple))
    dirs = list(direction) if many else [direction]
    fns = [(d, CANONICAL_DIRECTIONS[d]) if isinstance(d, str) else (getattr(d, "__name__", "custom"), d)
           for d in dirs]
    eps_list = sorted(float(e) for e in epsilons)
    if not eps_list or eps_list[0] <= 0:
        raise ValueError("epsilons must be positive")
    if bundles is None:
        bundles = iter_simulate(rule, strategy, model, grid, n_paths, seed, chunk=chunk or auto_chunk(grid))
    acc = {name: {e: ([], []) for e in eps_list} for name, _ in fns}
    for b in bundles:
        b.rule = rule
        W0 = compute_wealth(b)
        ok = b.valid() & np.isfinite(W0)
        for name, fn in fns:
            beta = np.asarray(fn(b), dtype=float)
            if beta.shape != b.theta.shape or not np.all(np.isfinite(beta[ok])):
                raise PerturbationInadmissible(f"direction {name!r} is not a finite drift on the grid")
            for e in eps_list:
                Wp = perturbed_wealth(b, beta, e)
                Wm = perturbed_wealth(b, beta, -e)
                if not (np.all(np.isfinite(Wp[ok])) and np.all(np.isfinite(Wm[ok]))):
                    raise PerturbationInadmissible(f"perturbation {name!r} at eps={e} leaves the admissible set")
                acc[name][e][0].append(((Wp - Wm) / (2 * e))[ok])
                acc[name][e][1].append((Wp + Wm - 2 * W0)[ok])
    results = []
    for name, _ in fns:
        by_eps = {}
        for e in eps_list:
            d, c = np.concatenate(acc[name][e][0]), np.concatenate(acc[name][e][1])
            by_eps[e] = (mean_se(d), mean_se(c))
        (dJ, se), (cv, cse) = by_eps[eps_list[0]]
        results.append(PerturbationResult(name, dJ, se, eps_list[0], cv, cse,
                                          len(np.concatenate(acc[name][eps_list[0]][0])), by_eps))
    return results if many else results[0]


# ---------------------------------------------------------------- efficiency

def _as_chunks(entry):
    return [entry] if isinstance(entry, PathBundle) else entry


def efficiency_gaps(bundle):
    k = bundle.pre_tau_index
    rows = np.arange(bundle.n_paths)
    gap = bundle.P[rows, k] - bundle.V[rows, k]
    return gap[bundle.valid()]


def _efficiency_from_gaps(dts, gap_sets, threshold, min_exponent, name="efficiency"):
    rms = [float(np.sqrt(pairwise_mean(g * g))) for g in gap_sets]
    order = np.argsort(dts)
    finest = rms[order[0]]
    if finest <= 1e-12:
        return ConditionResult(name, finest, threshold, True,
                               {"dt": list(map(float, dts)), "rms": rms, "exponent": None,
                                "note": "no gap to close"})
    if min(rms) <= 0:
        expo = float("nan")
    else:
        expo = refinement_exponent(dts, rms) if len(dts) >= 2 else float("nan")
    ok = bool(len(dts) >= 3 and expo >= min_exponent and finest < threshold)
    return ConditionResult(name, expo, min_exponent, ok,
                           {"dt": list(map(float, dts)), "rms": rms, "finest_rms": finest,
                            "rms_threshold": threshold})


def check_efficiency(bundles, threshold=0.03, min_exponent=0.4):
    """RMS of P - V at the last grid point before tau for each grid, and the
    refinement exponent across grids.  ``bundles`` holds one entry per grid:
    a PathBundle or an iterable of chunk bundles."""
    dts, gaps = [], []
    for entry in bundles:
        chunks = list(_as_chunks(entry))
        dts.append(chunks[0].grid.dt)
        gaps.append(np.concatenate([efficiency_gaps(b) for b in chunks]))
    return _efficiency_from_gaps(dts, gaps, threshold, min_exponent)


# ---------------------------------------------------------------- shared pieces

def _sigma_m_condition(rule, strategy, model, times, tol, linear_branch):
    mv2 = np.asarray(strategy.mart_vol(times), float) ** 2 * np.ones(len(times))
    if linear_branch:
        stat = float(np.max(np.abs(mv2)))
        return ConditionResult("sigma_m", stat, tol, stat <= tol,
                               {"branch": "linear rule: sigma_M = 0"})
    if rule.sigma_eff_sq is None:
        return ConditionResult("sigma_m", float("inf"), tol, False,
                               {"branch": "nonlinear rule without sigma_eff_sq"})
    sz2 = np.asarray(model.noise.sigma_Z(times), float) ** 2
    s2 = np.asarray(rule.sigma_eff_sq(times), float)
    stat = float(np.max(np.abs(mv2 - (sz2 - s2))))
    return ConditionResult("sigma_m", stat, tol, stat <= tol,
                           {"branch": "sigma_M^2 = sigma_Z^2 - sigma^2"})


class _Accumulator:
    """Per-chunk reductions on the main grid."""

    def __init__(self, rule, strategy, model, grid, th, k_end):
        self.rule, self.strategy, self.model, self.grid, self.th = rule, strategy, model, grid, th
        t = grid.times
        self.k_end = k_end
        self.edges = np.unique(np.linspace(0, k_end, th.blocks + 1).round().astype(int))
        self.lam = rule.lambda_at(t)
        self.sz2 = np.asarray(model.noise.sigma_Z(t), float) ** 2 * np.ones(len(t))
        self.mv2 = np.asarray(strategy.mart_vol(t), float) ** 2 * np.ones(len(t))
        self.cmz = np.asarray(strategy.corr_with_Z(t), float) * np.ones(len(t))
        self.sy = np.sqrt(np.maximum(self.sz2 + 2 * self.cmz + self.mv2, 0.0))
        self.rows = {"dC": [], "Y": [], "P": [], "t": [], "g": []}
        self.max_jump = 0.0
        self.res2, self.res3, self.res_u = [], [], []
        self.qv = []
        self.gaps = []

    def add(self, b):
        ok = b.valid()
        t = b.grid.times
        dt = b.grid.dt
        rule = self.rule
        H = b.P
        xi = b.xi
        Tm = t[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = rule.dH_yy(Tm, xi) / rule.dH_y(Tm, xi)
        comp_rate = self.lam[None, :] * ratio * (self.cmz + self.mv2)[None, :]
        C = b.Y + cumulate(comp_rate[:, :-1] * dt)
        e = self.edges
        dC = C[:, e[1:]] - C[:, e[:-1]]
        n, K = dC.shape
        sel = ok
        self.rows["dC"].append(dC[sel].ravel())
        self.rows["Y"].append(b.Y[:, e[:-1]][sel].ravel())
        self.rows["P"].append(b.P[:, e[:-1]][sel].ravel())
        self.rows["t"].append(np.broadcast_to(t[e[:-1]], (n, K))[sel].ravel())
        self.rows["g"].append(np.repeat(b.path_ids[sel], K))

        k = self.k_end
        dY = np.abs(np.diff(b.Y[:, :k + 1], axis=1))[sel]
        sy = self.sy[:k] * math.sqrt(dt)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(sy > 0, dY / np.where(sy > 0, sy, 1.0), np.where(dY > 1e-12, np.inf, 0.0))
        if z.size:
            self.max_jump = max(self.max_jump, float(np.max(z)))

        # necessary-condition residuals on grid points before the end
        ke = self.k_end + 1
        ts = t[:ke]
        Hk = H[:, :ke]
        xk = xi[:, :ke]
        lam = self.lam[:ke]
        s2 = (self.sz2 - self.mv2)[:ke]
        dHt = rule.dH_t(ts[None, :], xk)
        dHyy = rule.dH_yy(ts[None, :], xk)
        lp = np.asarray(rule.lam_prime(ts), float) * np.ones(len(ts))
        V = b.V[:, :ke]
        r2 = lp / lam ** 2 * (V - Hk) + dHt / lam + 0.5 * dHyy * lam * s2
        r3 = dHt + 0.5 * dHyy * lam ** 2 * s2
        self.res2.append(np.sqrt(np.mean(r2 ** 2, axis=1))[sel])
        self.res3.append(np.sqrt(np.mean(r3 ** 2, axis=1))[sel])
        rel = self.model.release
        S = np.asarray(survival(rel, ts), float) * np.ones(len(ts))
        dS = _survival_prime(rel, ts)
        d_ratio = (dS * lam - S * lp) / lam ** 2
        ru = d_ratio * (V - Hk) + (S / lam) * dHt + 0.5 * dHyy * S * lam * s2
        self.res_u.append(np.mean(ru ** 2, axis=1)[sel])

        # martingale part QV diagnostic
        dM = np.diff(b.X, axis=1) - b.theta * dt
        for s, size in self.strategy.jumps:
            i = int(np.ceil((s - t[0]) / dt - 1e-9)) - 1
            if 0 <= i < dM.shape[1]:
                dM[:, i] -= size
        self.qv.append(np.sum(dM[:, :self.k_end] ** 2, axis=1)[sel])

    def regression(self):
        cat = {k: np.concatenate(v) for k, v in self.rows.items()}
        X = np.column_stack([np.ones_like(cat["Y"]), cat["Y"], cat["P"]])
        return ols_cluster(cat["dC"], X, cat["g"], names=["intercept", "Y", "P"])


def _survival_prime(rel, ts):
    ts = np.asarray(ts, float)
    if rel.kind == "exponential":
        return -rel.mu * np.exp(-rel.mu * ts)
    if rel.kind == "deterministic":
        return np.zeros_like(ts)
    h = 1e-6
    lo = np.maximum(ts - h, 0.0)
    return (survival(rel, ts + h) - survival(rel, lo)) / (ts + h - lo)


def _martingale_condition(acc, th):
    reg = acc.regression()
    zs = {k: v[2] for k, v in reg.items()}
    worst = max(abs(z) for z in zs.values())
    return ConditionResult("compensated_martingale", worst, th.z_crit, worst < th.z_crit,
                           {"coefficients": {k: {"estimate": v[0], "se": v[1], "z": v[2]}
                                             for k, v in reg.items()},
                            "blocks": int(len(acc.edges) - 1)})


def _jump_condition(strategy, acc, th):
    structural = len(strategy.jumps) == 0
    ok = structural and acc.max_jump < th.jump_sigmas
    return ConditionResult("no_jumps", acc.max_jump, th.jump_sigmas, ok,
                           {"scheduled_jumps": [list(j) for j in strategy.jumps],
                            "max_increment_sigmas": acc.max_jump})


def _run_grids(rule, strategy, model, grids, n_paths, seed, main, th, k_end_fn, chunk=None):
    """Simulate every grid; gather efficiency gaps everywhere and the detailed
    reductions on the main grid."""
    gaps, dts, acc = [], [], None
    for g in grids:
        gs = []
        if g == main:
            acc = _Accumulator(rule, strategy, model, g, th, k_end_fn(g))
        for b in iter_simulate(rule, strategy, model, g, n_paths, seed, chunk=chunk or auto_chunk(g)):
            gs.append(efficiency_gaps(b))
            if g == main:
                acc.add(b)
        gaps.append(np.concatenate(gs))
        dts.append(g.dt)
    return dts, gaps, acc


def _pre_horizon_index(g, T):
    """Last grid index strictly before min(T, t_end)."""
    if not np.isfinite(T):
        return g.n_steps
    k = int(min(g.n_steps, np.ceil((T - g.t_start) / g.dt - 1e-9)))
    return max(k - 1, 1)


def _pick_main(grids, main):
    grids = sorted(grids, key=lambda g: g.n_steps)
    if main is None:
        main = grids[len(grids) // 2]
    if main not in grids:
        grids.append(main)
        grids.sort(key=lambda g: g.n_steps)
    return grids, main


def _diagnostics(acc):
    r2 = np.concatenate(acc.res2)
    r3 = np.concatenate(acc.res3)
    qv = np.concatenate(acc.qv)
    return {
        "necessary_residual_ii_rms": float(np.sqrt(np.mean(r2 ** 2))),
        "necessary_residual_iii_rms": float(np.sqrt(np.mean(r3 ** 2))),
        "martingale_qv_mean": float(np.mean(qv)),
        "martingale_qv_declared": float(np.sum(acc.mv2[:acc.k_end]) * acc.grid.dt),
    }


def check_equilibrium_known_tau(rule, strategy, model, grids, n_paths, seed, thresholds=None,
                                main_grid=None, chunk=None, name="known_tau"):
    """Numerical verification of the equilibrium conditions when the insider
    knows the release time."""
    th = thresholds or Thresholds()
    grids, main = _pick_main(grids, main_grid)
    linear = bool(rule.linear)
    rep = EquilibriumReport(name=name)

    dts, gaps, acc = _run_grids(rule, strategy, model, grids, n_paths, seed, main, th,
                                lambda g: _pre_horizon_index(g, model.release.ess_sup), chunk)
    rep.add(_efficiency_from_gaps(dts, gaps, th.efficiency_rms, th.efficiency_exponent, "terminal_identity"))
    rep.add(_sigma_m_condition(rule, strategy, model, main.times[:-1], th.exact_tol, linear))
    rep.add(_jump_condition(strategy, acc, th))
    rep.add(_martingale_condition(acc, th))
    lp = np.abs(np.asarray(rule.lam_prime(main.times[:-1]), float))
    gap_any = float(np.sqrt(np.mean(gaps[-1] ** 2))) > th.exact_tol
    lam_ok = not (np.max(lp) > th.exact_tol and gap_any)
    rep.add(ConditionResult("constant_price_pressure", float(np.max(lp)), th.exact_tol, lam_ok,
                            {"note": "non-constant price pressure with V != P" if not lam_ok else ""}))
    rep.diagnostics.update(_diagnostics(acc))
    rep.calibration["lambda_0"] = float(rule.lam(main.t_start))
    return rep


def check_equilibrium_unknown_tau(rule, strategy, model, grids, n_paths, seed, thresholds=None,
                                  main_grid=None, chunk=None, name="unknown_tau"):
    """Numerical verification when the insider does not know the release time
    and the price pressure is proportional to its survival function."""
    th = thresholds or Thresholds()
    grids, main = _pick_main(grids, main_grid)
    rel = model.release
    linear = bool(rule.linear)
    rep = EquilibriumReport(name=name)
    finite_T = np.isfinite(rel.ess_sup)

    def k_end(g):
        return _pre_horizon_index(g, rel.ess_sup) if finite_T else g.n_steps

    if finite_T:
        dts, gaps, acc = _run_grids(rule, strategy, model, grids, n_paths, seed, main, th, k_end, chunk)
        rep.add(_efficiency_from_gaps(dts, gaps, th.efficiency_rms, th.efficiency_exponent, "terminal_identity"))
    else:
        # no release bound: compare P and V at the truncated horizon
        dts, gaps, acc = [], [], None
        for g in grids:
            gs = []
            if g == main:
                acc = _Accumulator(rule, strategy, model, g, th, k_end(g))
            for b in iter_simulate(rule, strategy, model, g, n_paths, seed, chunk=chunk or auto_chunk(g)):
                gs.append((b.P[:, -1] - b.V[:, -1])[b.valid()])
                if g == main:
                    acc.add(b)
            gaps.append(np.concatenate(gs))
            dts.append(g.dt)
        rms = [float(np.sqrt(np.mean(x ** 2))) for x in gaps]
        finest = rms[int(np.argmin(dts))]
        rep.add(ConditionResult("terminal_identity", finest, th.efficiency_rms, finest < th.efficiency_rms,
                                {"dt": list(map(float, dts)), "rms": rms, "at": float(main.t_end)}))
    rep.add(_sigma_m_condition(rule, strategy, model, main.times[:-1], th.exact_tol, linear))
    rep.add(_jump_condition(strategy, acc, th))
    rep.add(_martingale_condition(acc, th))

    # price pressure proportional to survival
    ts = main.times
    S = np.asarray(survival(rel, ts), float) * np.ones(len(ts))
    lam = rule.lambda_at(ts)
    keep = S > 1e-12
    c = float(lam[0] / S[0])
    ratio_err = float(np.max(np.abs(lam[keep] / S[keep] - c))) / max(1.0, c)
    details = {"c": c}
    if rel.kind == "exponential":
        expo_err = float(np.max(np.abs(lam[keep] - lam[0] * np.exp(-rel.mu * ts[keep])) / lam[keep]))
        details["exponential_profile_rel_err"] = expo_err
        ratio_err = max(ratio_err, expo_err)
    rep.add(ConditionResult("lambda_survival_ratio", ratio_err, th.lambda_ratio_tol,
                            ratio_err <= th.lambda_ratio_tol, details))

    ru = np.concatenate(acc.res_u)
    m, se = mean_se(ru)
    flag = m > th.z_crit * se + th.residual_tol ** 2
    rep.add(ConditionResult("necessary_residual", m, th.z_crit * se + th.residual_tol ** 2, not flag,
                            {"mean_sq": m, "se_sq": se, "rms": math.sqrt(max(m, 0.0))}))
    rep.diagnostics.update(_diagnostics(acc))
    rep.calibration["lambda_0"] = float(lam[0])
    rep.calibration["c"] = c
    return rep


# ---------------------------------------------------------------- rationality

def check_rationality(bundles, rule=None, t_check=None, thresholds=None):
    """Observable implications of P_t = E[V | market information]:
    block increments of P are unpredictable from (P, Y, t), and within
    quantile bins of P_t the mean of V_tau matches the mean of P_t."""
    th = thresholds or Thresholds()
    rows = {"dP": [], "P": [], "Y": [], "t": [], "g": []}
    Pm, Vt = [], []
    for b in _as_chunks(bundles) if isinstance(bundles, PathBundle) else bundles:
        for bb in _as_chunks(b):
            ok = bb.valid()
            t = bb.grid.times
            k_end = int(np.min(bb.pre_tau_index)) if bb.n_paths else bb.grid.n_steps
            e = np.unique(np.linspace(0, max(k_end, 1), th.blocks + 1).round().astype(int))
            n, K = bb.n_paths, len(e) - 1
            rows["dP"].append((bb.P[:, e[1:]] - bb.P[:, e[:-1]])[ok].ravel())
            rows["P"].append(bb.P[:, e[:-1]][ok].ravel())
            rows["Y"].append(bb.Y[:, e[:-1]][ok].ravel())
            rows["t"].append(np.broadcast_to(t[e[:-1]], (n, K))[ok].ravel())
            rows["g"].append(np.repeat(bb.path_ids[ok], K))
            kc = bb.grid.n_steps // 2 if t_check is None else int(round((t_check - t[0]) / bb.grid.dt))
            Pm.append(bb.P[:, kc][ok])
            Vt.append(bb.V[np.arange(n), bb.stop_index][ok])
    cat = {k: np.concatenate(v) for k, v in rows.items()}
    X = np.column_stack([np.ones_like(cat["P"]), cat["P"], cat["Y"], cat["t"]])
    reg = ols_cluster(cat["dP"], X, cat["g"], names=["intercept", "P", "Y", "t"])
    worst = max(abs(v[2]) for v in reg.values())
    reg_ok = worst < th.z_crit

    Pm, Vt = np.concatenate(Pm), np.concatenate(Vt)
    spread = float(np.ptp(Pm)) if len(Pm) else 0.0
    bins = []
    if spread <= 1e-12 * max(1.0, float(np.max(np.abs(Pm)))):
        m, se = mean_se(Vt - Pm)
        bins.append({"n": int(len(Pm)), "mean_gap": m, "se": se, "pass": abs(m) <= th.z_crit * se + 1e-12})
        degenerate = True
    else:
        degenerate = False
        q = np.quantile(Pm, np.linspace(0, 1, th.rationality_bins + 1))
        idx = np.clip(np.searchsorted(q, Pm, side="right") - 1, 0, th.rationality_bins - 1)
        for j in range(th.rationality_bins):
            sel = idx == j
            if sel.sum() < th.min_bin:
                bins.append({"n": int(sel.sum()), "status": "InconclusiveBin", "pass": False})
                continue
            m, se = mean_se(Vt[sel] - Pm[sel])
            bins.append({"n": int(sel.sum()), "mean_P": float(np.mean(Pm[sel])), "mean_gap": m, "se": se,
                         "pass": bool(abs(m) <= th.z_crit * se)})
    bin_ok = all(b["pass"] for b in bins)
    inconclusive = any(b.get("status") == "InconclusiveBin" for b in bins)
    return ConditionResult("rationality", worst, th.z_crit, bool(reg_ok and bin_ok),
                           {"regression": {k: {"estimate": v[0], "se": v[1], "z": v[2]} for k, v in reg.items()},
                            "bins": bins, "degenerate": degenerate, "inconclusive": inconclusive})


def riemann_rent(bundle):
    """Left Riemann sum of (V - P) theta dt per path (diagnostic oracle)."""
    m = _stop_mask(bundle.stop_index, bundle.grid.n_steps)
    return np.sum(np.where(m, (bundle.V[:, :-1] - bundle.P[:, :-1]) * bundle.theta, 0.0), axis=1) * bundle.grid.dt


