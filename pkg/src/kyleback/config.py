"""Scenario configuration files (INI style) and their translation into
model objects.

A config is a set of sections of string key/values.  ``parse`` and
``serialize`` round-trip exactly; ``build`` turns a config into rule,
strategy, model, grids and thresholds.
"""
import configparser
import io
import os
from dataclasses import dataclass, field
from pathlib import Path


from . import calibration, filtering, functions as tf, pricing, strategies
from .equilibrium import Thresholds
from .errors import ConfigError, KyleBackError
from .model import FundamentalModel, MarketModel, NoiseModel, ReleaseTime, TimeGrid

SECTION_ORDER = ("scenario", "grid", "rule", "noise", "fundamental", "release", "strategy",
                 "calibration", "switch", "wealth", "thresholds")
BUNDLED = Path(__file__).parent / "configs"


@dataclass
class ScenarioConfig:
    sections: dict = field(default_factory=dict)
    source: str = ""

    def get(self, section, key, default=None):
        return self.sections.get(section, {}).get(key, default)

    def has(self, section):
        return section in self.sections

    def set(self, section, key, value):
        self.sections.setdefault(section, {})[key] = str(value)

    def __eq__(self, other):
        return isinstance(other, ScenarioConfig) and self.sections == other.sections


def parse(text, source=""):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    secs = {s: {k: v.strip() for k, v in cp.items(s)} for s in cp.sections()}
    unknown = set(secs) - set(SECTION_ORDER)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return ScenarioConfig(secs, source)


def serialize(cfg: ScenarioConfig):
    out = io.StringIO()
    names = [s for s in SECTION_ORDER if s in cfg.sections]
    for k, s in enumerate(names):
        if k:
            out.write("\n")
        out.write(f"[{s}]\n")
        for key, val in cfg.sections[s].items():
            out.write(f"{key} = {val}\n")
    return out.getvalue()


def resolve_path(name):
    """A config path, or the name of a bundled config (with or without a
    directory prefix or .cfg suffix)."""
    p = Path(name)
    if p.is_file():
        return p
    stem = p.name if p.suffix == ".cfg" else p.name + ".cfg"
    cand = BUNDLED / stem
    if cand.is_file():
        return cand
    raise ConfigError(f"config file not found: {name}")


def load(name):
    p = resolve_path(name)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    return parse(text, str(p))


def bundled_configs():
    return sorted(p.stem for p in BUNDLED.glob("*.cfg"))


# ---------------------------------------------------------------- typed access

def _num(cfg, sec, key, default=None, kind=float):
    raw = cfg.get(sec, key)
    if raw is None:
        if default is None:
            raise ConfigError(f"missing [{sec}] {key}")
        return default
    try:
        return kind(float(raw)) if kind is int else kind(raw)
    except ValueError as exc:
        raise ConfigError(f"[{sec}] {key} = {raw!r} is not a number") from exc


def _fn(cfg, sec, key, default=None):
    raw = cfg.get(sec, key, default)
    if raw is None:
        raise ConfigError(f"missing [{sec}] {key}")
    try:
        return tf.parse(raw)
    except (ValueError, SyntaxError) as exc:
        raise ConfigError(f"[{sec}] {key} = {raw!r}: {exc}") from exc


def _list(cfg, sec, key, kind=float):
    raw = cfg.get(sec, key)
    if not raw:
        return []
    try:
        return [kind(float(x)) if kind is int else kind(x) for x in raw.replace(";", ",").split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"[{sec}] {key} = {raw!r} is not a list of numbers") from exc


def resolve_seed(cfg, cli_seed=None, env=None):
    """--seed beats the config, which beats KB_SEED."""
    env = os.environ if env is None else env
    for raw, where in ((cli_seed, "--seed"), (cfg.get("scenario", "seed"), "config"), (env.get("KB_SEED"), "KB_SEED")):
        if raw is None or raw == "":
            continue
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"seed from {where} is not an integer: {raw!r}") from exc
    raise ConfigError("no seed given (use --seed, [scenario] seed, or KB_SEED)")


# ---------------------------------------------------------------- builders

@dataclass
class Scenario:
    name: str
    rule: object
    strategy: object
    model: MarketModel
    grid: TimeGrid
    grids: list
    n_paths: int
    seed: int
    checks: list
    thresholds: Thresholds
    calibration: dict
    config: ScenarioConfig


def build_grid(cfg, n_steps=None):
    t0 = _num(cfg, "grid", "t_start", 0.0)
    t1 = _num(cfg, "grid", "t_end", 1.0)
    n = n_steps or _num(cfg, "grid", "n_steps", 1000, int)
    return TimeGrid(t0, t1, n)


def build_model(cfg):
    noise = NoiseModel(_fn(cfg, "noise", "sigma_z", "1"))
    kind = cfg.get("fundamental", "kind", "terminal-draw")
    fm = FundamentalModel(kind=kind, law=cfg.get("fundamental", "law", "normal"),
                          m=_num(cfg, "fundamental", "m", 0.0), v=_num(cfg, "fundamental", "v", 1.0),
                          sigma_v=_fn(cfg, "fundamental", "sigma_v", "0"),
                          P0=_num(cfg, "fundamental", "P0", 0.0),
                          Sigma0=_num(cfg, "fundamental", "Sigma0", 0.0),
                          signal=cfg.get("fundamental", "signal", ""))
    rk = cfg.get("release", "kind", "deterministic")
    rel = ReleaseTime(kind=rk, T=_num(cfg, "release", "T", 1.0), mu=_num(cfg, "release", "mu", 0.0),
                      values=tuple(_list(cfg, "release", "values")), probs=tuple(_list(cfg, "release", "probs")),
                      barrier=_num(cfg, "release", "barrier", -1.0))
    return MarketModel(noise, fm, rel)


def run_calibrations(cfg):
    out = {}
    if cfg.has("calibration"):
        out["lambda_0"] = calibration.calibrate_cs_lambda0(
            _num(cfg, "calibration", "Sigma0"), _fn(cfg, "calibration", "sigma_v_sq"),
            _num(cfg, "calibration", "mu"), _num(cfg, "calibration", "sigma_z_sq", 1.0))
    if cfg.has("switch"):
        sv, sz, mu = (_num(cfg, "switch", k) for k in ("sigma_v", "sigma_z", "mu"))
        sol = calibration.solve_cs_switch_time(_num(cfg, "switch", "Sigma0"), sv, sz, mu)
        out["T_switch"] = sol.T
        out["lambda_T"] = sol.lambda_T
        out["switch_residual"] = sol.residual
        out["post_T_profit"] = sz * sv / mu
        lam = calibration.cs_two_phase_lambda(sol.lambda_T, sol.T, mu)
        out["lambda_0_two_phase"] = lam.lambda0
        out["expected_wealth"] = calibration.cs_expected_wealth(lam, sol.T, mu, sz, sv)
    return out


def build_rule(cfg, model, cal):
    kind = cfg.get("rule", "kind", "linear")
    if kind == "linear":
        raw = cfg.get("rule", "lambda0", "1")
        if raw == "calibrated":
            if "lambda_0" not in cal:
                raise ConfigError("lambda0 = calibrated needs a [calibration] section")
            lam0 = cal["lambda_0"]
        else:
            lam0 = _num(cfg, "rule", "lambda0", 1.0)
        profile = cfg.get("rule", "profile", "constant")
        p0 = _num(cfg, "rule", "p0", model.fundamental.mean())
        if profile == "constant":
            return pricing.make_linear_rule(p0, lam0)
        if profile == "survival":
            prof = pricing.lambda_profile(model.release, lam0, False)
            return pricing.make_linear_rule(p0, profile=prof)
        if profile == "two-phase":
            if "T_switch" not in cal:
                raise ConfigError("profile = two-phase needs a [switch] section")
            mu = _num(cfg, "switch", "mu")
            return pricing.make_linear_rule(p0, profile=calibration.cs_two_phase_lambda(cal["lambda_T"], cal["T_switch"], mu))
        raise ConfigError(f"unknown price-pressure profile {profile!r}")
    if kind == "lognormal":
        return pricing.make_lognormal_rule(*(_num(cfg, "rule", k) for k in ("m", "v", "sigma", "alpha", "lambda0")))
    raise ConfigError(f"unknown rule kind {kind!r}")


def _jumps(cfg):
    raw = cfg.get("strategy", "jumps")
    if not raw:
        return []
    out = []
    for item in raw.split(","):
        try:
            s, x = item.split(":")
            out.append((float(s), float(x)))
        except ValueError as exc:
            raise ConfigError(f"bad jump entry {item!r} (want time:size)") from exc
    return out


def build_strategy(cfg, rule, model, cal):
    kind = cfg.get("strategy", "kind", "zero")
    fm = model.fundamental
    if kind == "zero":
        st = strategies.zero_strategy()
    elif kind == "constant":
        st = strategies.constant_drift_strategy(_num(cfg, "strategy", "rate", 1.0))
    elif kind == "bridge":
        horizon = _num(cfg, "strategy", "horizon", model.release.T)
        tgt = cfg.get("strategy", "target", "rule")
        target = strategies.rule_target(rule, horizon) if tgt == "rule" else _num(cfg, "strategy", "target")
        st = strategies.bridge_strategy(target, _fn(cfg, "strategy", "sigma", cfg.get("noise", "sigma_z", "1")), horizon)
    elif kind == "correlated_bridge":
        p = {k: _num(cfg, "rule", k) for k in ("m", "v", "sigma", "alpha", "lambda0")}
        st = strategies.correlated_bridge_strategy(horizon=_num(cfg, "strategy", "horizon", 1.0), **p)
    elif kind == "default_bridge":
        st = strategies.default_bridge_strategy(model.release, cfg.get("strategy", "scheme", "implicit"))
    elif kind in ("cs_feedback", "cs_two_phase"):
        braw = cfg.get("strategy", "beta", "equilibrium")
        sz2 = model.noise.sigma_Z.square()
        if braw == "equilibrium":
            beta = filtering.equilibrium_gain(rule.lam, fm.Sigma0, fm.sigma_v.square(), sz2)
        else:
            beta = _fn(cfg, "strategy", "beta")
        if kind == "cs_feedback":
            st = strategies.cs_feedback_strategy(beta)
        else:
            T = cal.get("T_switch") if cfg.get("strategy", "T_switch", "calibrated") == "calibrated" \
                else _num(cfg, "strategy", "T_switch")
            if T is None:
                raise ConfigError("T_switch = calibrated needs a [switch] section")
            st = strategies.cs_two_phase_strategy(T, fm.sigma_v, model.noise.sigma_Z, beta)
    else:
        raise ConfigError(f"unknown strategy kind {kind!r}")
    jumps = _jumps(cfg)
    return st.with_jumps(jumps) if jumps else st


def build(cfg: ScenarioConfig, seed=None, n_paths=None, n_steps=None, env=None):
    """Validate a config and construct everything a run needs."""
    try:
        seed = resolve_seed(cfg, seed, env)
        model = build_model(cfg)
        cal = run_calibrations(cfg)
        rule = build_rule(cfg, model, cal)
        strategy = build_strategy(cfg, rule, model, cal)
        grid = build_grid(cfg, n_steps)
        refine = _list(cfg, "grid", "refinement", int)
        grids = sorted({grid.with_steps(n) for n in refine} | {grid}, key=lambda g: g.n_steps)
        paths = n_paths or _num(cfg, "scenario", "paths", 1000, int)
        checks = [c.strip() for c in cfg.get("scenario", "checks", "").split(",") if c.strip()]
        for c in checks:
            if c not in ("known_tau", "unknown_tau", "rationality", "admissibility"):
                raise ConfigError(f"unknown check {c!r}")
        th = Thresholds.from_dict(cfg.sections.get("thresholds", {}))
    except ConfigError:
        raise
    except (KyleBackError, ValueError) as exc:
        raise ConfigError(f"invalid scenario: {exc}") from exc
    if paths < 1:
        raise ConfigError("paths must be positive")
    name = cfg.get("scenario", "name", Path(cfg.source).stem if cfg.source else "scenario")
    if "lambda_0" not in cal:
        cal["lambda_0"] = float(rule.lam(grid.t_start))
    return Scenario(name, rule, strategy, model, grid, grids, paths, seed, checks, th, cal, cfg)


