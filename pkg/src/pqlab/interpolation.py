"""Level-set decompositions of the data, truncated solves, energy
integrands, and empirical weak/strong-type constants of R.

Notation: for a threshold t the data split as f = f^t + f_t with f^t alive
where [f] > t and f_t alive where [f] <= t.  H = f + R f, and H^t, H_t are
formed from independent solves of the truncated data.  ``side="upper"``
refers to the superscript objects, ``side="lower"`` to the subscript ones.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .measure import DataPair, DomainError, ScalarField, bracket, power_integral, row_norms, weak_quasinorm
from .monotone import MonotoneMap
from .solver import DEFAULT_TOL, bracket_ratio, riesz_apply
from .subspace import SubspacePair

SIDES = ("lower", "upper")


def _check_side(side: str):
    if side not in SIDES:
        raise ValueError(f"side must be one of {SIDES}, got {side!r}")


@dataclass(frozen=True, eq=False)
class SplitPair:
    f_upper: DataPair
    f_lower: DataPair
    threshold: float

    def part(self, side: str) -> DataPair:
        _check_side(side)
        return self.f_lower if side == "lower" else self.f_upper

    def complement(self, side: str) -> DataPair:
        return self.part("upper" if side == "lower" else "lower")


def marcinkiewicz_split(f: DataPair, t: float) -> SplitPair:
    """Exact indicator split on {[f] > t}; ties go to the lower part."""
    if not t >= 0:
        raise DomainError("threshold must be >= 0")
    upper = bracket(f).values > t
    return SplitPair(f.masked(upper), f.masked(~upper), float(t))


class TruncatedSolutions(NamedTuple):
    H: DataPair
    H_lower: DataPair
    H_upper: DataPair


def truncated_solutions(S: SubspacePair, M: MonotoneMap, f: DataPair, t: float,
                        tol: float = DEFAULT_TOL) -> TruncatedSolutions:
    """H = f + Rf, H_t = f_t + R f_t, H^t = f^t + R f^t, each its own solve."""
    split = marcinkiewicz_split(f, t)
    H = f + riesz_apply(S, M, f, tol)
    Hl = split.f_lower + riesz_apply(S, M, split.f_lower, tol)
    Hu = split.f_upper + riesz_apply(S, M, split.f_upper, tol)
    return TruncatedSolutions(H, Hl, Hu)


def additivity_defect(ts: TruncatedSolutions) -> float:
    """||phi - phi^t - phi_t||_2 (the split parts of f cancel exactly)."""
    return (ts.H - ts.H_lower - ts.H_upper).l2_norm()


@dataclass(frozen=True, eq=False)
class EnergyReport:
    E_field: ScalarField
    total: float
    side: str
    threshold: float = float("nan")

    @property
    def minimum(self) -> float:
        return float(self.E_field.values.min())


def energy(H: DataPair, H_trunc: DataPair, side: str, threshold: float = float("nan")) -> EnergyReport:
    """E(x) = <A - A' | B - B'> and its integral."""
    _check_side(side)
    dA = H.a.values - H_trunc.a.values
    dB = H.b.values - H_trunc.b.values
    E = ScalarField(H.space, np.einsum("ij,ij->i", dA, dB))
    return EnergyReport(E, E.integral(), side, threshold)


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        r = num / den
    return np.where(num == 0, 0.0, np.where(den > 0, r, np.inf))


@dataclass(frozen=True, eq=False)
class PointwiseAudit:
    side: str
    vs_full: np.ndarray  # [H - H'] / (E + [H])
    vs_trunc: np.ndarray  # [H - H'] / (E + [H'])
    energy_min: float
    scale: float

    @property
    def max_vs_full(self) -> float:
        return float(self.vs_full.max(initial=0.0))

    @property
    def max_vs_trunc(self) -> float:
        return float(self.vs_trunc.max(initial=0.0))

    @property
    def energy_nonnegative(self) -> bool:
        return self.energy_min >= -1e-10 * self.scale


def pointwise_audit(H: DataPair, H_trunc: DataPair, f: DataPair, f_trunc: DataPair, side: str) -> PointwiseAudit:
    """Empirical constants of [H - H'] << E + [H] and [H - H'] << E + [H']."""
    E = energy(H, H_trunc, side).E_field.values
    num = bracket(H - H_trunc).values
    Epos = np.maximum(E, 0.0)
    r_full = _safe_ratio(num, Epos + bracket(H).values)
    r_trunc = _safe_ratio(num, Epos + bracket(H_trunc).values)
    scale = max(1.0, float(bracket(f).values.max(initial=0.0)), float(bracket(H).values.max(initial=0.0)))
    return PointwiseAudit(side, r_full, r_trunc, float(E.min()), scale)


@dataclass(frozen=True)
class EnergyEstimate:
    side: str
    threshold: float
    left: float
    right: float
    ratio: float


def energy_estimate_audit(S: SubspacePair, M: MonotoneMap, f: DataPair, t: float, side: str,
                          tol: float = DEFAULT_TOL, solutions: TruncatedSolutions | None = None) -> EnergyEstimate:
    """Integrated energy against int [g] + [g]^{1/p}[H]^{1/q} + [g]^{1/q}[H]^{1/p}.

    ``side="upper"`` measures the energy of H^t with g = f_t; ``side="lower"``
    that of H_t with g = f^t.
    """
    _check_side(side)
    ts = solutions if solutions is not None else truncated_solutions(S, M, f, t, tol)
    split = marcinkiewicz_split(f, t)
    H_trunc = ts.H_lower if side == "lower" else ts.H_upper
    left = energy(ts.H, H_trunc, side, t).total
    g = bracket(split.complement(side)).values
    h = bracket(ts.H).values
    p, q = f.p, f.q
    w = f.space.weights
    right = float(w @ (g + g ** (1 / p) * h ** (1 / q) + g ** (1 / q) * h ** (1 / p)))
    scale = max(1.0, power_integral(bracket(f), 1.0))
    if right == 0:
        ratio = 0.0 if abs(left) <= 1e-10 * scale else np.inf
    else:
        ratio = left / right
    return EnergyEstimate(side, float(t), left, right, float(ratio))


def comparability(H: DataPair) -> float:
    """K with |A|^p / <A|B> and |B|^q / <A|B> in [1/K, K] wherever <A|B> > 0."""
    A, B = H.a.values, H.b.values
    pair = np.einsum("ij,ij->i", A, B)
    live = pair > 0
    if not live.any():
        return 1.0
    ra = row_norms(A[live]) ** H.p / pair[live]
    rb = row_norms(B[live]) ** H.q / pair[live]
    r = np.concatenate([ra, rb])
    r = r[r > 0]
    return float(max(r.max(), 1.0 / r.min())) if r.size else 1.0


def threshold_grid(f: DataPair, count: int = 5) -> list[float]:
    """Breakpoints of [f] and their geometric midpoints, thinned to ``count``."""
    vals = np.unique(bracket(f).values)
    vals = vals[vals > 0]
    if vals.size == 0:
        return [0.0]
    mids = np.sqrt(vals[:-1] * vals[1:])
    cand = np.sort(np.concatenate([[0.0], vals, mids]))
    if cand.size <= count:
        return [float(x) for x in cand]
    pick = np.unique(np.round(np.linspace(0, cand.size - 1, count)).astype(int))
    return [float(cand[i]) for i in pick]


# weak / strong type constants


def weak_ratio(phi: DataPair, f: DataPair, lam: float) -> float:
    """sup_t t^lam meas{[phi] > t} / int [f]^lam."""
    den = power_integral(bracket(f), lam)
    num = weak_quasinorm(bracket(phi), lam)
    if den == 0:
        return 0.0 if num == 0 else np.inf
    return num / den


def weak_type_constant(S: SubspacePair, M: MonotoneMap, battery: Sequence[DataPair], lam: float,
                       tol: float = DEFAULT_TOL) -> float:
    pairs = [(riesz_apply(S, M, f, tol), f) for f in battery]
    return max((weak_ratio(phi, f, lam) for phi, f in pairs), default=0.0)


@dataclass
class TypeConstants:
    lambda_minus: float
    lambda_plus: float
    weak_constants: dict = field(default_factory=dict)  # lambda -> C
    strong_constants: dict = field(default_factory=dict)  # tau -> C_tau
    strong_argmax: dict = field(default_factory=dict)  # tau -> battery index
    weak_argmax: dict = field(default_factory=dict)
    shape_factors: dict = field(default_factory=dict)  # tau in (l-, l+) -> C_tau / max weak
    refinement_ok: bool = True

    def all_finite(self) -> bool:
        vals = list(self.weak_constants.values()) + list(self.strong_constants.values())
        return bool(np.all(np.isfinite(vals)))


def _max_with_index(values: Sequence[float]) -> tuple[float, int]:
    if not values:
        return 0.0, -1
    i = int(np.argmax(values))
    return float(values[i]), i


def type_constants(pairs: Sequence[tuple[DataPair, DataPair]], tau_grid: Sequence[float],
                   lambdas: Sequence[float] = (0.75, 1.5)) -> TypeConstants:
    """Constants over solved (phi, f) pairs.

    C_tau uses ``bracket_ratio``, the same code path as the basic-estimate
    ratio, so C_1 coincides with the largest basic ratio bit for bit.
    """
    if not pairs:
        raise ValueError("battery is empty")
    tau_grid = sorted(float(t) for t in tau_grid)
    if not tau_grid or min(tau_grid) <= 0:
        raise DomainError("tau grid must be nonempty and positive")
    lam_lo, lam_hi = min(lambdas), max(lambdas)
    tc = TypeConstants(lam_lo, lam_hi)
    for lam in sorted(set(float(x) for x in lambdas) | {1.0}):
        tc.weak_constants[lam], tc.weak_argmax[lam] = _max_with_index([weak_ratio(phi, f, lam) for phi, f in pairs])

    def strong(tau):
        return _max_with_index([bracket_ratio(phi, f, tau) for phi, f in pairs])

    for tau in tau_grid:
        tc.strong_constants[tau], tc.strong_argmax[tau] = strong(tau)
    weak_end = max(tc.weak_constants[lam_lo], tc.weak_constants[lam_hi])
    for tau in tau_grid:
        if lam_lo < tau < lam_hi:
            tc.shape_factors[tau] = tc.strong_constants[tau] / weak_end if weak_end > 0 else 0.0
    # refinement: midpoints must sit within a factor 2 of their neighbours
    for lo, hi in zip(tau_grid[:-1], tau_grid[1:]):
        mid, _ = strong(0.5 * (lo + hi))
        c_lo, c_hi = tc.strong_constants[lo], tc.strong_constants[hi]
        if not np.isfinite(mid) or mid > 2 * max(c_lo, c_hi) or mid < 0.5 * min(c_lo, c_hi):
            tc.refinement_ok = False
    return tc


def strong_type_sweep(S: SubspacePair, M: MonotoneMap, battery: Sequence[DataPair], tau_grid: Sequence[float],
                      lambdas: Sequence[float] = (0.75, 1.5), tol: float = DEFAULT_TOL) -> TypeConstants:
    if not battery:
        raise ValueError("battery is empty")
    pairs = [(riesz_apply(S, M, f, tol), f) for f in battery]
    return type_constants(pairs, tau_grid, lambdas)


@dataclass(frozen=True)
class LevelsetAudit:
    left: float
    right: float
    ratio: float
    segments: int


def levelset_integral_audit(S: SubspacePair, M: MonotoneMap, f: DataPair, lam: float, tau: float,
                            tol: float = DEFAULT_TOL) -> LevelsetAudit:
    """int_0^inf t^{tau-1} meas{[H_t] > t} dt against int [f]^tau (H^t when lam < 1).

    The split pattern only changes at the distinct values of [f], so one
    truncated solve per value gives the integrand on each segment exactly,
    and the segment integrals are closed-form.
    """
    if lam == 1 or not 0 < (tau - 1) / (lam - 1) < 1:
        raise DomainError("tau must lie strictly between 1 and lambda")
    side = "lower" if lam > 1 else "upper"
    g = bracket(f).values
    right = power_integral(bracket(f), tau)
    vals = np.unique(g)
    vals = vals[vals > 0]
    if vals.size == 0:
        return LevelsetAudit(0.0, right, 0.0, 0)
    w = f.space.weights
    edges = np.concatenate([[0.0], vals, [np.inf]])
    left = 0.0
    for j in range(edges.size - 1):
        lo, hi = edges[j], edges[j + 1]
        part = marcinkiewicz_split(f, lo).part(side)
        if part.is_zero():
            continue
        h = bracket(part + riesz_apply(S, M, part, tol)).values
        live = h > lo
        top = np.minimum(h[live], hi)
        left += float(w[live] @ (top**tau - lo**tau)) / tau
    ratio = left / right if right > 0 else 0.0
    return LevelsetAudit(left, right, ratio, int(vals.size))
