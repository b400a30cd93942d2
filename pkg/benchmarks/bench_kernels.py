"""Time the numba path kernels against the generic numpy stepper.

    python3 benchmarks/bench_kernels.py [--paths 2000] [--steps 1000] [--repeat 3]
"""
import argparse
import time

import numpy as np

from kyleback import calibration, filtering, pricing, strategies
from kyleback.model import FundamentalModel, MarketModel, NoiseModel, ReleaseTime, TimeGrid
from kyleback.simulate import simulate


def cases(steps):
    rule = pricing.make_linear_rule(0.0, 1.0)
    yield "bridge", rule, strategies.bridge_strategy(strategies.rule_target(rule, 1.0), 1.0, 1.0), \
        MarketModel(), TimeGrid(0.0, 1.0, steps)

    rel = ReleaseTime("exponential", mu=0.5)
    lam0 = calibration.calibrate_cs_lambda0(1.0, "exp(-t)", 0.5)
    prof = pricing.lambda_profile(rel, lam0, False)
    fm = FundamentalModel(kind="arithmetic-BM", sigma_v="sqrt(exp(-t))", Sigma0=1.0)
    beta = filtering.equilibrium_gain(prof, 1.0, "exp(-t)")
    yield "feedback", pricing.make_linear_rule(0.0, profile=prof), strategies.cs_feedback_strategy(beta), \
        MarketModel(NoiseModel(1.0), fm, rel), TimeGrid(0.0, 10.0, steps)

    fp = ReleaseTime("first-passage", T=1.0, barrier=-1.0)
    yield "barrier", rule, strategies.default_bridge_strategy(fp), \
        MarketModel(release=fp, fundamental=FundamentalModel(kind="default-indicator")), TimeGrid(0.0, 1.0, steps)


def best_of(fn, repeat):
    ts = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        ts.append(time.perf_counter() - t0)
    return min(ts), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=2000)
    ap.add_argument("--steps", type=int, default=1000)
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args()
    print(f"{'case':<10}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}{'max |dX|':>12}")
    for name, rule, st, model, grid in cases(a.steps):
        simulate(rule, st, model, grid, 10, 0, use_kernel=True)  # compile
        tn, bn = best_of(lambda: simulate(rule, st, model, grid, a.paths, 0, use_kernel=False), a.repeat)
        tk, bk = best_of(lambda: simulate(rule, st, model, grid, a.paths, 0, use_kernel=True), a.repeat)
        diff = float(np.nanmax(np.abs(bn.X - bk.X)))
        print(f"{name:<10}{tn:>12.4f}{tk:>12.4f}{tn / tk:>10.1f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
