"""The closed subspace L2+ of the coefficient space, its complement L2-, and
the orthogonal projections between them.

An orthonormal basis is kept twice: ``matrix`` holds the basis fields in
original coordinates (orthonormal under the weighted pairing) and ``_scaled``
holds ``W^{1/2} E^T``, an (n, m) matrix with Euclidean-orthonormal columns.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .measure import (
    DomainError,
    Field,
    MeasureSpace,
    SpaceMismatch,
    _check_same,
    _norm_array,
    row_norms,
    s_power,
)
from .rng import SplitMix64

RANK_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SubspacePair:
    space: MeasureSpace
    matrix: np.ndarray  # (m, n) rows = orthonormal basis fields, flattened
    norm_bound_range: tuple[float, float] = (1.0, np.inf)

    def __post_init__(self):
        E = np.array(self.matrix, dtype=np.float64).reshape(-1, self.space.dim)
        E.setflags(write=False)
        object.__setattr__(self, "matrix", E)

    @property
    def dim_plus(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim_minus(self) -> int:
        return self.space.dim - self.dim_plus

    @property
    def basis_plus(self) -> list[Field]:
        return [Field.from_flat(self.space, row) for row in self.matrix]

    @cached_property
    def _sqrt_w(self) -> np.ndarray:
        return np.sqrt(self.space.flat_weights)

    @cached_property
    def minus_matrix(self) -> np.ndarray:
        """Orthonormal basis of the complement, same layout as ``matrix``."""
        n, m = self.space.dim, self.dim_plus
        if m == 0:
            Qm = np.eye(n)
        elif m == n:
            Qm = np.zeros((n, 0))
        else:
            Qp = (self.matrix * self._sqrt_w).T
            Q, _ = np.linalg.qr(Qp, mode="complete")
            Qm = Q[:, m:]
            # one projection sweep keeps the complement orthogonal to Qp at roundoff level
            Qm = Qm - Qp @ (Qp.T @ Qm)
            Qm, _ = np.linalg.qr(Qm)
        E = (Qm / self._sqrt_w[:, None]).T
        E.setflags(write=False)
        return E

    def basis_matrix(self, sign: str) -> np.ndarray:
        if sign == "+":
            return self.matrix
        if sign == "-":
            return self.minus_matrix
        raise ValueError(f"sign must be '+' or '-', got {sign!r}")

    def coefficients(self, flat: np.ndarray, sign: str = "+") -> np.ndarray:
        E = self.basis_matrix(sign)
        return E @ (self.space.flat_weights * flat)

    def project_flat(self, flat: np.ndarray, sign: str = "+") -> np.ndarray:
        """Pi_+ (or Pi_-) of flattened field(s); ``flat`` may be (n,) or (n, k)."""
        flat = np.asarray(flat, dtype=np.float64)
        E = self.matrix
        w = self.space.flat_weights
        wf = w * flat if flat.ndim == 1 else w[:, None] * flat
        plus = E.T @ (E @ wf)
        return plus if sign == "+" else flat - plus


def _weighted_norm(x: np.ndarray, w: np.ndarray) -> float:
    return float(np.sqrt(w @ (x * x)))


def build_subspace(space: MeasureSpace, raw_basis: Sequence[Field]) -> SubspacePair:
    """Weighted modified Gram-Schmidt with one re-orthogonalization pass.

    Vectors whose residual falls below ``RANK_TOL`` times the largest input
    norm are dropped.
    """
    rows = []
    for u in raw_basis:
        if isinstance(u, Field):
            _check_same(space, u.space)
            rows.append(u.flat)
        else:
            arr = np.asarray(u, dtype=np.float64).ravel()
            if arr.size != space.dim:
                raise SpaceMismatch(f"raw basis vector has {arr.size} entries, expected {space.dim}")
            rows.append(arr)
    w = space.flat_weights
    if not rows:
        return SubspacePair(space, np.zeros((0, space.dim)))
    biggest = max(_weighted_norm(r, w) for r in rows)
    cutoff = RANK_TOL * biggest
    kept: list[np.ndarray] = []
    for r in rows:
        v = r.copy()
        for _ in range(2):
            for e in kept:
                v -= (w @ (v * e)) * e
        nv = _weighted_norm(v, w)
        if nv > cutoff and nv > 0:
            kept.append(v / nv)
    return SubspacePair(space, np.array(kept).reshape(len(kept), space.dim))


def project_plus(S: SubspacePair, u: Field) -> Field:
    _check_same(S.space, u.space)
    return Field.from_flat(S.space, S.project_flat(u.flat, "+"))


def project_minus(S: SubspacePair, u: Field) -> Field:
    _check_same(S.space, u.space)
    return Field.from_flat(S.space, S.project_flat(u.flat, "-"))


def project(S: SubspacePair, u: Field, sign: str) -> Field:
    return project_plus(S, u) if sign == "+" else project_minus(S, u)


def grid_edges(rows: int, cols: int) -> list[tuple[int, int]]:
    """Edges of the rows x cols grid as (tail, head) vertex pairs.

    Vertices are numbered row-major; for each vertex in that order its
    rightward edge comes first, then its downward edge.
    """
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    return edges


def gradient_matrix(rows: int, cols: int) -> np.ndarray:
    """(edges, vertices) matrix with (grad u)(e) = u(head) - u(tail)."""
    edges = grid_edges(rows, cols)
    G = np.zeros((len(edges), rows * cols))
    for k, (t, h) in enumerate(edges):
        G[k, t] = -1.0
        G[k, h] = 1.0
    return G


def _edge_weights(edge_weights, count: int) -> np.ndarray:
    w = np.broadcast_to(np.asarray(edge_weights, dtype=np.float64), (count,)).copy()
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise DomainError("edge weights must be positive")
    return w


def grid_hodge(rows: int, cols: int, edge_weights=1.0) -> tuple[MeasureSpace, SubspacePair]:
    """Edge space of a grid graph split into gradients and divergence-free fields."""
    if rows < 2 or cols < 2:
        raise DomainError("grid needs rows, cols >= 2")
    G = gradient_matrix(rows, cols)
    space = MeasureSpace(_edge_weights(edge_weights, G.shape[0]), 1)
    return space, build_subspace(space, list(G.T))


def random_subspace(space: MeasureSpace, m: int, seed: int) -> SubspacePair:
    if m < 0 or m > space.dim:
        raise DomainError(f"subspace dimension {m} outside [0, {space.dim}]")
    raw = SplitMix64(seed).normal(m * space.dim).reshape(m, space.dim)
    S = build_subspace(space, list(raw))
    if S.dim_plus != m:
        raise DomainError("random raw basis was rank deficient")
    return S


def commutator_defect(S: SubspacePair, sign: str, v: Field, eps: float, s: float) -> tuple[float, float]:
    """Norm of Pi(v^{1+eps}) - (Pi v)^{1+eps} and its ratio to |eps| ||v^{1+eps}||_s."""
    if not 1 + eps > 0:
        raise DomainError("commutator needs 1 + eps > 0")
    if s < 1:
        raise DomainError("commutator norm exponent must be >= 1")
    _check_same(S.space, v.space)
    N, d = S.space.point_count, S.space.value_dim
    w = S.space.weights
    powered = s_power(v.values, 1 + eps)
    left = S.project_flat(powered.ravel(), sign).reshape(N, d)
    right = s_power(S.project_flat(v.flat, sign).reshape(N, d), 1 + eps)
    defect = _norm_array(w, row_norms(left - right), s)
    base = _norm_array(w, row_norms(powered), s)
    if eps == 0 or base == 0:
        return defect, 0.0
    return defect, defect / (abs(eps) * base)


def operator_norms(S: SubspacePair, s_grid: Sequence[float], samples: int = 64, seed: int = 0) -> dict:
    """Lower estimates of ||Pi_+|| and ||Pi_-|| on L^s from indicators and random fields."""
    space = S.space
    n, N, d = space.dim, space.point_count, space.value_dim
    probes = np.concatenate([np.eye(n), SplitMix64(seed).normal(samples * n).reshape(samples, n)]).T
    plus = S.project_flat(probes, "+")
    minus = probes - plus
    w = space.weights

    def mags(X):
        return row_norms(X.T.reshape(-1, N, d))

    mp, mm, m0 = mags(plus), mags(minus), mags(probes)
    out = {}
    for s in s_grid:
        den = np.array([_norm_array(w, row, s) for row in m0])
        rp = np.array([_norm_array(w, row, s) for row in mp]) / den
        rm = np.array([_norm_array(w, row, s) for row in mm]) / den
        out[float(s)] = (float(rp.max()), float(rm.max()))
    return out
