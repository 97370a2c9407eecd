"""Structure maps A(x, v) of degree p - 1, their inverses B(x, w), and an
empirical audit of the growth axioms.

Maps are vectorized over points: the callable ``fn(idx, V)`` receives an
integer array of point indices and the matching ``(k, d)`` block of vectors.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .measure import MeasureSpace, conjugate_exponent, s_power
from .rng import SplitMix64

MapFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


class ConvergenceError(RuntimeError):
    """An iterative solve hit its iteration cap."""


class MonotoneMap:
    """Generic Caratheodory map given by a vectorized callable.

    Without an analytic ``jac`` the Jacobian is a central difference with
    step ``1e-6 * (1 + |v|)`` per point.
    """

    canonical = False

    def __init__(self, p: float, fn: MapFn, jac: Optional[Callable] = None, name: str = "generic",
                 axiom_constants: Optional[dict] = None):
        if not p > 1:
            raise ValueError("map degree exponent p must exceed 1")
        self.p = float(p)
        self.q = conjugate_exponent(self.p)
        self._fn = fn
        self._jac = jac
        self.name = name
        self.axiom_constants = axiom_constants

    @property
    def degree_exponent(self) -> float:
        return self.p

    @staticmethod
    def _idx(values: np.ndarray, idx) -> np.ndarray:
        return np.arange(values.shape[0]) if idx is None else np.asarray(idx)

    def evaluate(self, values: np.ndarray, idx=None) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        return np.asarray(self._fn(self._idx(values, idx), values), dtype=np.float64)

    def apply(self, x: int, v) -> np.ndarray:
        v = np.atleast_1d(np.asarray(v, dtype=np.float64))
        return self.evaluate(v[None, :], [x])[0]

    def jacobian(self, values: np.ndarray, idx=None, delta: float = 0.0) -> np.ndarray:
        """(k, d, d) derivative blocks; ``delta`` only affects analytic Jacobians."""
        values = np.asarray(values, dtype=np.float64)
        idx = self._idx(values, idx)
        if self._jac is not None:
            return np.asarray(self._jac(idx, values, delta), dtype=np.float64)
        k, d = values.shape
        h = 1e-6 * (1.0 + np.linalg.norm(values, axis=1))
        J = np.empty((k, d, d))
        for j in range(d):
            step = np.zeros_like(values)
            step[:, j] = h
            J[:, :, j] = (self.evaluate(values + step, idx) - self.evaluate(values - step, idx)) / (2 * h[:, None])
        return J

    def invert_values(self, w: np.ndarray, idx=None, tol: float = 1e-13, max_iter: int = 200) -> np.ndarray:
        """Pointwise damped Newton for A(x, v) = w seeded at w^{q-1}."""
        w = np.asarray(w, dtype=np.float64)
        idx = self._idx(w, idx)
        v = s_power(w, self.q - 1.0)
        target = tol * (1.0 + np.linalg.norm(w, axis=1))
        r = self.evaluate(v, idx) - w
        rn = np.linalg.norm(r, axis=1)
        for _ in range(max_iter):
            active = rn > target
            if not active.any():
                return v
            a = np.flatnonzero(active)
            J = self.jacobian(v[a], idx[a])
            try:
                dv = -np.linalg.solve(J, r[a][:, :, None])[:, :, 0]
            except np.linalg.LinAlgError:
                dv = -r[a]
            step = np.ones(a.size)
            for _ in range(40):
                trial = v[a] + step[:, None] * dv
                tr = self.evaluate(trial, idx[a]) - w[a]
                tn = np.linalg.norm(tr, axis=1)
                ok = tn < rn[a] * (1 - 1e-4 * step) + target[a]
                if ok.all():
                    break
                step = np.where(ok, step, 0.5 * step)
            v[a], r[a], rn[a] = trial, tr, tn
        if np.any(rn > target):
            raise ConvergenceError(f"{self.name}: pointwise inversion did not converge "
                                   "(the map may violate the monotonicity axiom)")
        return v

    def invert(self, x: int, w, tol: float = 1e-13) -> np.ndarray:
        if not tol > 0:
            raise ValueError("tol must be positive")
        w = np.atleast_1d(np.asarray(w, dtype=np.float64))
        return self.invert_values(w[None, :], [x], tol)[0]

    def inverse(self) -> "MonotoneMap":
        outer = self

        def fn(idx, w):
            return outer.invert_values(w, idx)

        def jac(idx, w, delta):
            return np.linalg.inv(outer.jacobian(outer.invert_values(w, idx), idx, delta))

        inv = _InverseMap(self.q, fn, jac, name=f"inverse({self.name})")
        inv._forward = self
        return inv


class _InverseMap(MonotoneMap):
    _forward: MonotoneMap

    def invert_values(self, w, idx=None, tol=1e-13, max_iter=200):
        return self._forward.evaluate(w, idx)

    def inverse(self):
        return self._forward


class PPowerMap(MonotoneMap):
    """A(x, v) = mu(x) |v|^{p-2} v, with mu a bounded positive coefficient."""

    canonical = True

    def __init__(self, p: float, coefficient=None):
        self.coefficient = None
        if coefficient is not None:
            mu = np.array(coefficient, dtype=np.float64).reshape(-1)
            if np.any(mu <= 0) or not np.all(np.isfinite(mu)):
                raise ValueError("coefficient must be finite and strictly positive")
            mu.setflags(write=False)
            self.coefficient = mu
        super().__init__(p, self._eval, self._jacobian, name=f"p-power(p={p:g})")

    def _mu(self, idx) -> np.ndarray | float:
        return 1.0 if self.coefficient is None else self.coefficient[idx][:, None]

    def _eval(self, idx, v):
        return self._mu(idx) * s_power(v, self.p - 1.0)

    def _jacobian(self, idx, v, delta):
        k, d = v.shape
        r2 = np.einsum("ij,ij->i", v, v) + delta * delta
        if self.p == 2:
            scale = np.ones(k)
            r2 = np.where(r2 > 0, r2, 1.0)
        else:
            r2 = np.maximum(r2, 1e-300)
            scale = r2 ** ((self.p - 2.0) / 2.0)
        outer = np.einsum("ij,ik->ijk", v, v) / r2[:, None, None]
        J = np.eye(d)[None] + (self.p - 2.0) * outer
        mu = 1.0 if self.coefficient is None else self.coefficient[idx]
        return (mu * scale)[:, None, None] * J

    def invert_values(self, w, idx=None, tol=1e-13, max_iter=200):
        w = np.asarray(w, dtype=np.float64)
        idx = self._idx(w, idx)
        return s_power(w / self._mu(idx), self.q - 1.0)

    def inverse(self) -> "PPowerMap":
        mu = None if self.coefficient is None else self.coefficient ** (1.0 - self.q)
        return PPowerMap(self.q, mu)


def skew_power_map(p: float, kappa: float = 0.25) -> MonotoneMap:
    """Non-variational planar map |v|^{p-2} R v with R = [[1, -kappa], [kappa, 1]].

    For small ``kappa`` it keeps the growth and monotonicity axioms but is not
    the gradient of any energy, so it exercises the generic code paths.
    """
    R = np.array([[1.0, -kappa], [kappa, 1.0]])

    def fn(idx, v):
        if v.shape[1] != 2:
            raise ValueError("skew map is defined for value_dim = 2")
        return s_power(v, p - 1.0) @ R.T

    return MonotoneMap(p, fn, name=f"skew-power(p={p:g}, kappa={kappa:g})")


def negated_map() -> MonotoneMap:
    """v -> -v: satisfies homogeneity and Lipschitz but is anti-monotone."""
    return MonotoneMap(2.0, lambda idx, v: -v, lambda idx, v, delta: -np.broadcast_to(
        np.eye(v.shape[1]), (v.shape[0], v.shape[1], v.shape[1])), name="negated")


def apply(M: MonotoneMap, x: int, v) -> np.ndarray:
    return M.apply(x, v)


def invert(M: MonotoneMap, x: int, w, tol: float = 1e-13) -> np.ndarray:
    return M.invert(x, w, tol)


@dataclass(frozen=True)
class AxiomReport:
    monotonicity: float  # best c
    lipschitz: float  # best C
    homogeneity_residual: float
    comparability: float  # spread K of |v|^p, <v|A v>, |A v|^q
    samples: int

    @property
    def ok(self) -> bool:
        return self.monotonicity > 0 and np.isfinite(self.lipschitz) and self.homogeneity_residual <= 1e-8


def audit_axioms(M: MonotoneMap, space: MeasureSpace, sample_count: int = 256, seed: int = 0) -> AxiomReport:
    """Measure the implied constants of the growth axioms on random pairs."""
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = SplitMix64(seed)
    N, d = space.point_count, space.value_dim
    k = int(sample_count)
    idx = np.minimum((rng.uniform(k) * N).astype(int), N - 1)
    mag1 = np.exp(rng.uniform(k, -2.0, 2.0))[:, None]
    mag2 = np.exp(rng.uniform(k, -2.0, 2.0))[:, None]
    v1 = rng.normal(k * d).reshape(k, d) * mag1
    v2 = rng.normal(k * d).reshape(k, d) * mag2
    # structured pairs: against zero, antipodal, and nearby
    kk = max(1, k // 8)
    v2[:kk] = 0.0
    v2[kk:2 * kk] = -v1[kk:2 * kk]
    v2[2 * kk:3 * kk] = v1[2 * kk:3 * kk] * (1 + 1e-3)
    diff = v1 - v2
    keep = np.linalg.norm(diff, axis=1) > 0
    idx, v1, v2, diff = idx[keep], v1[keep], v2[keep], diff[keep]
    p = M.p
    A1, A2 = M.evaluate(v1, idx), M.evaluate(v2, idx)
    dA = A1 - A2
    n1, n2, nd = (np.linalg.norm(x, axis=1) for x in (v1, v2, diff))
    growth = (n1 + n2) ** (p - 2.0)
    mono = np.einsum("ij,ij->i", dA, diff) / (growth * nd**2)
    lip = np.linalg.norm(dA, axis=1) / (growth * nd)

    lam = rng.uniform(v1.shape[0], 0.0, 4.0)
    lhs = M.evaluate(lam[:, None] * v1, idx)
    rhs = lam[:, None] ** (p - 1.0) * A1
    hom = np.linalg.norm(lhs - rhs, axis=1) / (np.linalg.norm(rhs, axis=1) + 1e-300)
    hom = np.where(lam > 0, hom, np.linalg.norm(lhs, axis=1))

    pair = np.einsum("ij,ij->i", v1, A1)
    with np.errstate(divide="ignore", invalid="ignore"):
        trio = np.stack([n1**p, pair, np.linalg.norm(A1, axis=1) ** M.q], axis=1)
        spread = trio.max(axis=1) / trio.min(axis=1)
    spread = np.where(trio.min(axis=1) > 0, spread, np.inf)
    return AxiomReport(
        monotonicity=float(mono.min()),
        lipschitz=float(lip.max()),
        homogeneity_residual=float(hom.max()),
        comparability=float(spread.max()),
        samples=int(v1.shape[0]),
    )
