"""Counter-based random streams.

Every (master seed, path index, purpose) triple owns a Philox stream whose
counter block is disjoint from all others, so a path's draws never depend on
how paths are chunked or ordered.
"""
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox, SeedSequence

# purposes
SCENARIO, NOISE_Z, NOISE_V, NOISE_W = 0, 1, 2, 3


@dataclass(frozen=True)
class RngStreamSpec:
    master_seed: int
    stream_index: int

    def generator(self, purpose=NOISE_Z):
        return stream(self.master_seed, self.stream_index, purpose)


def _key(seed):
    return SeedSequence(int(seed)).generate_state(2, np.uint64)


def stream(seed, path, purpose=NOISE_Z):
    ctr = np.array([0, 0, purpose, path], dtype=np.uint64)
    return Generator(Philox(key=_key(seed), counter=ctr))


def normals(seed, paths, n, purpose):
    """Standard normals, one row of length n per path index."""
    key = _key(seed)
    out = np.empty((len(paths), n))
    for row, p in enumerate(paths):
        ctr = np.array([0, 0, purpose, int(p)], dtype=np.uint64)
        out[row] = Generator(Philox(key=key, counter=ctr)).standard_normal(n)
    return out


def scenario_uniforms(seed, paths, k=4):
    """k uniforms per path for scenario-level draws (V, tau, ...)."""
    key = _key(seed)
    out = np.empty((len(paths), k))
    for row, p in enumerate(paths):
        ctr = np.array([0, 0, SCENARIO, int(p)], dtype=np.uint64)
        out[row] = Generator(Philox(key=key, counter=ctr)).random(k)
    return out
