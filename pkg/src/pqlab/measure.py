"""Finite weighted measure spaces, vector fields on them, and the exponent
algebra shared by every other module.

Fields are stored as ``(N, d)`` arrays; a field ``u`` is flattened point-major
(``u.values.ravel()``) whenever it has to be treated as a vector of the
coefficient space of dimension ``N * d``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HOLDER_TOL = 1e-12


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


class SpaceMismatch(ValueError):
    """Two objects that must live on the same measure space do not."""


def row_norms(v: np.ndarray) -> np.ndarray:
    """Euclidean norms along the last axis without squaring underflow."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] == 1:
        return np.abs(v[..., 0])
    return np.hypot.reduce(v, axis=-1)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MeasureSpace:
    """Atoms ``1..N`` with masses ``weights``; fields take values in R^d."""

    weights: np.ndarray
    value_dim: int = 1

    def __post_init__(self):
        w = _frozen(np.atleast_1d(self.weights))
        if w.ndim != 1 or w.size < 1:
            raise DomainError("weights must be a nonempty 1-d array")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise DomainError("weights must be finite and strictly positive")
        if int(self.value_dim) < 1:
            raise DomainError("value_dim must be >= 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "value_dim", int(self.value_dim))

    @property
    def point_count(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        """Dimension of the coefficient space, N * d."""
        return self.point_count * self.value_dim

    @property
    def flat_weights(self) -> np.ndarray:
        return np.repeat(self.weights, self.value_dim)

    def same_as(self, other: "MeasureSpace") -> bool:
        return self is other or (
            self.value_dim == other.value_dim
            and self.weights.shape == other.weights.shape
            and np.array_equal(self.weights, other.weights)
        )

    def field(self, values) -> "Field":
        return Field(self, values)

    def zeros(self) -> "Field":
        return Field(self, np.zeros((self.point_count, self.value_dim)))

    def scalar(self, values) -> "ScalarField":
        return ScalarField(self, values)


def _check_same(x: MeasureSpace, y: MeasureSpace):
    if not x.same_as(y):
        raise SpaceMismatch("objects live on different measure spaces")


@dataclass(frozen=True, eq=False)
class Field:
    """A V-valued function on the atoms, stored as an (N, d) array."""

    space: MeasureSpace
    values: np.ndarray

    def __post_init__(self):
        n, d = self.space.point_count, self.space.value_dim
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 1 and d == 1:
            v = v[:, None]
        if v.shape != (n, d):
            raise SpaceMismatch(f"field shape {v.shape} does not match space ({n}, {d})")
        if not np.all(np.isfinite(v)):
            raise DomainError("field entries must be finite")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def from_flat(cls, space: MeasureSpace, flat) -> "Field":
        return cls(space, np.asarray(flat, dtype=np.float64).reshape(space.point_count, space.value_dim))

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def magnitude(self) -> np.ndarray:
        return row_norms(self.values)

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, Field):
            _check_same(self.space, other.space)
            return other.values
        return np.asarray(other, dtype=np.float64)

    def __add__(self, other):
        return Field(self.space, self.values + self._coerce(other))

    def __sub__(self, other):
        return Field(self.space, self.values - self._coerce(other))

    def __neg__(self):
        return Field(self.space, -self.values)

    def __mul__(self, c):
        if isinstance(c, ScalarField):
            _check_same(self.space, c.space)
            return Field(self.space, self.values * c.values[:, None])
        return Field(self.space, self.values * float(c))

    __rmul__ = __mul__

    def masked(self, mask) -> "Field":
        return Field(self.space, np.where(np.asarray(mask)[:, None], self.values, 0.0))

    def __repr__(self):
        return f"Field(N={self.space.point_count}, d={self.space.value_dim})"


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A real function on the atoms, stored as an (N,) array."""

    space: MeasureSpace
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if v.shape != (self.space.point_count,):
            raise SpaceMismatch("scalar field length does not match space")
        if not np.all(np.isfinite(v)):
            raise DomainError("field entries must be finite")
        object.__setattr__(self, "values", _frozen(v))

    def integral(self) -> float:
        return float(self.space.weights @ self.values)


@dataclass(frozen=True)
class ExponentPair:
    p: float
    q: float

    def __post_init__(self):
        if not (self.p > 1 and self.q > 1):
            raise DomainError("exponents must exceed 1")
        if abs(1.0 / self.p + 1.0 / self.q - 1.0) > HOLDER_TOL:
            raise DomainError(f"({self.p}, {self.q}) is not a Hoelder conjugate pair")

    @classmethod
    def from_p(cls, p: float) -> "ExponentPair":
        return cls(float(p), conjugate_exponent(p))


@dataclass(frozen=True, eq=False)
class DataPair:
    """A pair (a, b) with a measured in L^p and b in L^q.

    Used for the data f, the solution phi = (alpha, beta) and the coupled
    pair H = f + phi alike.
    """

    a: Field
    b: Field
    exps: ExponentPair

    def __post_init__(self):
        _check_same(self.a.space, self.b.space)

    @classmethod
    def from_arrays(cls, space: MeasureSpace, a, b, p: float) -> "DataPair":
        return cls(Field(space, a), Field(space, b), ExponentPair.from_p(p))

    @property
    def space(self) -> MeasureSpace:
        return self.a.space

    @property
    def p(self) -> float:
        return self.exps.p

    @property
    def q(self) -> float:
        return self.exps.q

    def __add__(self, other: "DataPair") -> "DataPair":
        return DataPair(self.a + other.a, self.b + other.b, self.exps)

    def __sub__(self, other: "DataPair") -> "DataPair":
        return DataPair(self.a - other.a, self.b - other.b, self.exps)

    def masked(self, mask) -> "DataPair":
        return DataPair(self.a.masked(mask), self.b.masked(mask), self.exps)

    def is_zero(self) -> bool:
        return not (np.any(self.a.values) or np.any(self.b.values))

    def bracket(self) -> ScalarField:
        return bracket(self)

    def l2_norm(self) -> float:
        """Joint weighted L^2 norm of (a, b), used for additivity defects."""
        return float(np.sqrt(norm_s(self.a, 2) ** 2 + norm_s(self.b, 2) ** 2))


def conjugate_exponent(p: float) -> float:
    if not p > 1:
        raise DomainError(f"conjugate exponent needs p > 1, got {p}")
    if p == 2:
        return 2.0
    return p / (p - 1.0)


def s_power(v, s: float) -> np.ndarray:
    """|v|^(s-1) v for a single vector or, row-wise, for an (N, d) array."""
    if not s > 0:
        raise DomainError("s-power needs s > 0")
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 1:
        return s_power(v[None, :], s)[0]
    mag = row_norms(v)[..., None]
    if s == 1:
        return v.copy()
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(mag > 0, mag ** (s - 1.0), 0.0)
    return factor * v


def field_power(u: Field, s: float) -> Field:
    return Field(u.space, s_power(u.values, s))


def inner(u: Field, v: Field) -> float:
    _check_same(u.space, v.space)
    return float(u.space.weights @ np.einsum("ij,ij->i", u.values, v.values))


def _norm_array(w: np.ndarray, mag: np.ndarray, s: float) -> float:
    if s == np.inf:
        return float(mag.max(initial=0.0))
    if s < 1:
        raise DomainError(f"norm exponent must be >= 1, got {s}")
    top = mag.max(initial=0.0)
    if top == 0:
        return 0.0
    # rescale to avoid overflow for large s
    return float(top * (w @ (mag / top) ** s) ** (1.0 / s))


def norm_s(u: Field, s: float) -> float:
    return _norm_array(u.space.weights, u.magnitude(), s)


def _check_nonnegative(g: ScalarField):
    if np.any(g.values < 0):
        raise DomainError("distribution function needs a nonnegative field")


def distribution(g: ScalarField, t: float) -> float:
    """meas{g > t}."""
    _check_nonnegative(g)
    return float(g.space.weights[g.values > t].sum())


def bracket(f: DataPair) -> ScalarField:
    """Pointwise |a|^p + |b|^q."""
    return ScalarField(f.space, bracket_values(f.a.values, f.b.values, f.p, f.q))


def bracket_values(a: np.ndarray, b: np.ndarray, p: float, q: float) -> np.ndarray:
    return row_norms(a) ** p + row_norms(b) ** q


def _breakpoints(g: np.ndarray, w: np.ndarray):
    """Distinct positive values of g ascending with meas{g >= v} for each."""
    order = np.argsort(g, kind="stable")
    gs, ws = g[order], w[order]
    vals, first = np.unique(gs, return_index=True)
    tail = np.cumsum(ws[::-1])[::-1]
    mass_ge = tail[first]
    keep = vals > 0
    return vals[keep], mass_ge[keep]


def weak_quasinorm(g: ScalarField, lam: float) -> float:
    """sup_{t>0} t^lam meas{g > t}, evaluated exactly at the jumps."""
    if not lam > 0:
        raise DomainError("weak quasinorm needs lambda > 0")
    _check_nonnegative(g)
    vals, mass = _breakpoints(g.values, g.space.weights)
    if vals.size == 0:
        return 0.0
    return float(np.max(vals**lam * mass))


def layer_cake(g: ScalarField, tau: float) -> float:
    """tau * int_0^inf t^(tau-1) meas{g > t} dt over the exact step function."""
    _check_nonnegative(g)
    vals, mass = _breakpoints(g.values, g.space.weights)
    if vals.size == 0:
        return 0.0
    lower = np.concatenate(([0.0], vals[:-1]))
    return float(np.sum(mass * (vals**tau - lower**tau)))


def power_integral(g: ScalarField, tau: float) -> float:
    """int g^tau with the tau = 1 case taken without a pow call."""
    if tau == 1:
        return float(g.space.weights @ g.values)
    return float(g.space.weights @ g.values**tau)
