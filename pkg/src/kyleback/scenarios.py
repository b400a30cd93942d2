"""Scenario orchestration: config in, artifacts and an exit status out.

Exit status is 0 when every configured check passes, 1 when some check
fails (the report is still written) and 2 for an invalid configuration.
"""
import logging
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import io as kio
from .admissibility import validate_admissibility
from .calibration import post_switch_profit
from .equilibrium import (check_equilibrium_known_tau, check_equilibrium_unknown_tau, check_rationality,
                          estimate_expected_wealth, perturbation_derivative, CANONICAL_DIRECTIONS)
from .errors import ConfigError, KyleBackError
from .filtering import riccati_closed_form
from .model import ConditionResult, EquilibriumReport
from .simulate import auto_chunk, iter_simulate, simulate

log = logging.getLogger(__name__)

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
COMMANDS = ("simulate", "verify", "calibrate", "wealth")


def _sigma_trace(sc, times):
    fm = sc.model.fundamental
    if fm.kind != "arithmetic-BM":
        return None
    return riccati_closed_form(times, fm.Sigma0, fm.sigma_v.square(), sc.model.noise.sigma_Z.square(),
                               sc.rule.lam, warn=False)


def _record(sc, out, stride=None):
    """Paths CSV and plot data on the main grid."""
    cfg = sc.config
    n_rec = min(sc.n_paths, int(cfg.get("scenario", "record_paths", "20")))
    stride = stride or max(1, int(cfg.get("scenario", "stride", "0") or 0) or sc.grid.n_steps // 1000)
    b = simulate(sc.rule, sc.strategy, sc.model, sc.grid, n_rec, sc.seed)
    kio.emit_paths_csv([b], out / "paths.csv", stride)
    kio.emit_plot_csv(kio.plot_data([b], _sigma_trace(sc, sc.grid.times)), out / "plot.csv")


def _verify(sc, rep):
    th = sc.thresholds
    checks = sc.checks or ["known_tau" if sc.model.release.insider_knows else "unknown_tau"]
    for c in checks:
        if c in ("known_tau", "unknown_tau"):
            fn = check_equilibrium_known_tau if c == "known_tau" else check_equilibrium_unknown_tau
            sub = fn(sc.rule, sc.strategy, sc.model, sc.grids, sc.n_paths, sc.seed, th, main_grid=sc.grid)
            for cond in sub.conditions:
                rep.add(cond)
            rep.calibration.update({k: v for k, v in sub.calibration.items() if k not in rep.calibration})
            rep.diagnostics.update(sub.diagnostics)
        elif c == "rationality":
            chunks = iter_simulate(sc.rule, sc.strategy, sc.model, sc.grid, sc.n_paths, sc.seed,
                                   chunk=auto_chunk(sc.grid))
            rep.add(check_rationality([list(chunks)], sc.rule, thresholds=th))
        elif c == "admissibility":
            budget = min(sc.n_paths, 1000)
            adm = validate_admissibility(sc.rule, sc.strategy, sc.model, sc.grid, max(budget, 100), sc.seed)
            worst = max(e.growth for e in adm.entries)
            rep.add(ConditionResult("admissibility", worst, 2.0, adm.passed,
                                    {e.name: {"estimate": e.estimate, "refined": e.refined,
                                              "growth": e.growth, "divergent": e.divergent}
                                     for e in adm.entries}))
    _post_profit(sc, rep)


def _post_profit(sc, rep):
    cfg = sc.config
    n = int(float(cfg.get("switch", "post_profit_paths", "0")))
    if not n:
        return
    sv, sz, mu = (float(cfg.get("switch", k)) for k in ("sigma_v", "sigma_z", "mu"))
    est, se, exact = post_switch_profit(sv, sz, mu, n, sc.seed, dt=float(cfg.get("switch", "post_profit_dt", "0.01")))
    z = abs(est - exact) / se if se > 0 else np.inf
    rep.add(ConditionResult("post_T_profit", float(z), sc.thresholds.z_crit, bool(z < sc.thresholds.z_crit),
                            {"estimate": est, "se": se, "closed_form": sz * sv / mu, "truncated": exact}))


def _wealth(sc, rep):
    J = estimate_expected_wealth(sc.strategy, sc.rule, sc.model, sc.grid, sc.n_paths, sc.seed)
    rep.calibration.update(J=J.J, J_se=J.SE, J_paths=J.n_used)
    eps = float(sc.config.get("wealth", "eps", "0.01"))
    raw = sc.config.get("wealth", "directions", "")
    dirs = [d.strip() for d in raw.split(",") if d.strip()] or list(CANONICAL_DIRECTIONS)
    unknown = [d for d in dirs if d not in CANONICAL_DIRECTIONS]
    if unknown:
        raise ConfigError(f"unknown perturbation directions {unknown}")
    z = sc.thresholds.z_crit
    for r in perturbation_derivative(sc.strategy, dirs, sc.rule, sc.model, sc.grid, (eps,), sc.n_paths, sc.seed):
        ratio = abs(r.dJ) / r.SE if r.SE > 0 else (0.0 if abs(r.dJ) < 1e-12 else np.inf)
        rep.add(ConditionResult(f"first_order_{r.direction}", float(ratio), z, r.first_order_ok(z),
                                {"dJ": r.dJ, "se": r.SE, "eps": r.eps, "curvature": r.curvature,
                                 "curvature_se": r.curvature_SE}))


def run_scenario(cfg, command="verify", out=None, seed=None, n_paths=None, n_steps=None,
                 deterministic=False, env=None, record=True):
    """Run one scenario; returns (exit status, report document or None)."""
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    try:
        if isinstance(cfg, (str, Path)):
            cfg = cfgmod.load(cfg)
        sc = cfgmod.build(cfg, seed=seed, n_paths=n_paths, n_steps=n_steps, env=env)
        out = Path(out if out is not None else cfg.get("scenario", "output", "out"))
        rep = EquilibriumReport(name=sc.name, calibration=dict(sc.calibration))
        if command == "verify":
            _verify(sc, rep)
        elif command == "wealth":
            _wealth(sc, rep)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG, None
    except KyleBackError as exc:
        # a model that cannot be simulated as configured is a config problem
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_CONFIG, None

    status = EXIT_PASS if rep.passed else EXIT_FAIL
    meta = {"command": command, "seed": sc.seed, "paths": sc.n_paths,
            "grid": {"t_start": sc.grid.t_start, "t_end": sc.grid.t_end, "n_steps": sc.grid.n_steps},
            "refinement": [g.n_steps for g in sc.grids], "exit_status": status,
            "config": cfg.sections}
    doc = kio.report_document(rep, meta, deterministic)
    kio.emit_report_json(doc, out / "report.json")
    if record and command in ("simulate", "verify"):
        _record(sc, out)
    return status, doc
