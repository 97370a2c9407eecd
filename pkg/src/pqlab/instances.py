"""Seeded instance generators.  Every draw goes through SplitMix64 streams
keyed by (seed, label), so instances are reproducible across platforms."""
from __future__ import annotations

import numpy as np

from .io import Instance
from .measure import DomainError
from .rng import SplitMix64, derive_seed
from .subspace import gradient_matrix

# stream labels
_WEIGHTS, _BASIS, _A, _B = 1, 2, 3, 4


def _stream(seed: int, label: int) -> SplitMix64:
    return SplitMix64(derive_seed(seed, label))


def _weights(seed: int, count: int, random_weights: bool) -> np.ndarray:
    if not random_weights:
        return np.ones(count)
    return _stream(seed, _WEIGHTS).uniform(count, 0.5, 2.0)


def _data(seed: int, n: int, zero: bool) -> tuple[np.ndarray, np.ndarray]:
    if zero:
        return np.zeros(n), np.zeros(n)
    return _stream(seed, _A).normal(n), _stream(seed, _B).normal(n)


def grid_hodge_instance(rows: int, cols: int, p: float, seed: int = 0,
                        random_weights: bool = False, zero: bool = False) -> Instance:
    """Edge fields of a grid graph; the raw basis is the set of vertex gradients."""
    if rows < 2 or cols < 2:
        raise DomainError("grid needs rows, cols >= 2")
    G = gradient_matrix(rows, cols)
    E = G.shape[0]
    a, b = _data(seed, E, zero)
    meta = {"family": "grid-hodge", "rows": rows, "cols": cols, "seed": seed}
    return Instance(_weights(seed, E, random_weights), 1, G.T.copy(), a, b, p, meta=meta)


def random_instance(N: int, d: int, m: int, p: float, seed: int = 0,
                    random_weights: bool = True, zero: bool = False) -> Instance:
    if N < 1 or d < 1:
        raise DomainError("need N >= 1 and d >= 1")
    n = N * d
    if not 0 <= m <= n:
        raise DomainError(f"subspace dimension m={m} must lie in [0, N*d] = [0, {n}]")
    basis = _stream(seed, _BASIS).normal(m * n).reshape(m, n)
    a, b = _data(seed, n, zero)
    meta = {"family": "random", "N": N, "d": d, "m": m, "seed": seed}
    return Instance(_weights(seed, N, random_weights), d, basis, a, b, p, meta=meta)
