"""Galerkin solver for the (p, q)-system A(x, a + alpha) = b + beta with
alpha in L+ and beta in L-, the L^p projection built on it, and the
nonlinear operator R f = (alpha, beta).

Writing alpha = E^T c for the orthonormal basis E of L+, the system is the
root of the monotone vector field

    F(c) = E W (A(a + E^T c) - b)

whose Euclidean norm equals the weighted L^2 norm of Pi_+ beta.  The dual
route solves the mirrored field over L- with the inverse map B.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .measure import (
    DataPair,
    DomainError,
    ExponentPair,
    Field,
    bracket,
    inner,
    norm_s,
    power_integral,
    s_power,
)
from .monotone import ConvergenceError, MonotoneMap, PPowerMap, audit_axioms
from .rng import SplitMix64
from .subspace import SubspacePair

DEFAULT_TOL = 1e-9
MAX_NEWTON = 500
POLISH_STEPS = 3


@dataclass(frozen=True, eq=False)
class SolveReport:
    phi: DataPair
    data: DataPair
    residual_norm: float
    iterations: int
    converged: bool
    tolerance: float  # absolute residual threshold actually used
    trace: tuple = ()
    method: str = "newton"
    axioms_ok: bool = True
    fallback_steps: int = 0
    complement_residual: float = 0.0  # ||Pi_- alpha||
    equation_residual: float = 0.0  # ||A(a + alpha) - b - beta||
    basic_estimate_ratio: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "basic_estimate_ratio", bracket_ratio(self.phi, self.data, 1.0))

    @property
    def alpha(self) -> Field:
        return self.phi.a

    @property
    def beta(self) -> Field:
        return self.phi.b

    @property
    def coupled(self) -> DataPair:
        """H = f + R f."""
        return self.data + self.phi


def bracket_ratio(phi: DataPair, f: DataPair, tau: float) -> float:
    """int [phi]^tau / int [f]^tau, with 0 when f = 0."""
    den = power_integral(bracket(f), tau)
    num = power_integral(bracket(phi), tau)
    if den == 0:
        if num != 0:
            raise DomainError("data vanish but the solution does not")
        return 0.0
    return num / den


def data_scale(f: DataPair) -> float:
    return norm_s(f.a, f.p) ** (f.p - 1.0) + norm_s(f.b, f.q) ** (f.q - 1.0) + 1.0


@dataclass
class _Galerkin:
    """F(c) = E W (A(a + E^T c) - b) on one block of the decomposition."""

    E: np.ndarray
    w: np.ndarray  # point weights
    shape: tuple
    M: MonotoneMap
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        N, d = self.shape
        self.E3 = self.E.reshape(self.E.shape[0], N, d)
        self.wflat = np.repeat(self.w, d)

    def state(self, c):
        return self.a + (self.E.T @ c).reshape(self.shape)

    def residual(self, c):
        v = self.state(c)
        return self.E @ (self.wflat * (self.M.evaluate(v) - self.b).ravel())

    def jacobian(self, c, delta):
        v = self.state(c)
        D = self.M.jacobian(v, None, delta) * self.w[:, None, None]
        ED = np.einsum("mik,ikl->mil", self.E3, D).reshape(self.E.shape[0], -1)
        return ED @ self.E.T

    def rms(self, c) -> float:
        v = self.state(c)
        return float(np.sqrt(self.w @ np.einsum("ij,ij->i", v, v) / self.w.sum()))


def _newton(G: _Galerkin, c: np.ndarray, tol_abs: float, max_iter: int):
    """Damped Newton with Armijo backtracking on ||F||^2 and a monotone fallback.

    Jacobians of non-quadratic maps are regularized by |v|^2 -> |v|^2 + delta^2
    with delta halved every iteration; residuals are never regularized.
    """
    p = G.M.p
    regularize = p != 2
    F = G.residual(c)
    rn = float(np.linalg.norm(F))
    trace = [rn]
    fallbacks = 0
    stalls = 0
    delta0 = 1e-2 * max(G.rms(c), 1e-300)
    k = 0

    def delta_at(k):
        if not regularize:
            return 0.0
        scale = max(G.rms(c), 1e-300)
        return max(delta0 * 2.0**-k, 1e-12 * scale)

    while rn > tol_abs and k < max_iter:
        J = G.jacobian(c, delta_at(k))
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -F, rcond=None)[0]
        accepted = False
        t = 1.0
        if np.all(np.isfinite(step)):
            while t >= 1e-10:
                cn = c + t * step
                Fn = G.residual(cn)
                rnn = float(np.linalg.norm(Fn))
                if rnn * rnn <= (1.0 - 1e-4 * t) * rn * rn:
                    accepted = True
                    break
                t *= 0.5
        if not accepted:
            # -F is a descent direction of ||F||^2 for monotone F
            JF = J @ F
            curv = float(F @ JF)
            omega = rn * rn / curv if curv > 0 else 1.0 / max(np.abs(J).max(), 1.0)
            while omega >= 1e-16 * max(1.0, abs(omega)):
                cn = c - omega * F
                Fn = G.residual(cn)
                rnn = float(np.linalg.norm(Fn))
                if rnn < rn:
                    accepted = True
                    fallbacks += 1
                    break
                omega *= 0.5
        k += 1
        if not accepted:
            stalls += 1
            trace.append(rn)
            if stalls >= 8:
                break
            continue
        stalls = 0
        c, F, rn = cn, Fn, rnn
        trace.append(rn)

    converged = rn <= tol_abs
    if converged:
        for _ in range(POLISH_STEPS):
            if rn == 0:
                break
            J = G.jacobian(c, delta_at(k + 60))
            try:
                step = np.linalg.solve(J, -F)
            except np.linalg.LinAlgError:
                break
            cn = c + step
            Fn = G.residual(cn)
            rnn = float(np.linalg.norm(Fn))
            if not rnn < rn:
                break
            c, F, rn = cn, Fn, rnn
            trace.append(rn)
    return c, rn, k, converged, tuple(trace), fallbacks


def _check_map(S: SubspacePair, M: MonotoneMap, f: DataPair):
    if not S.space.same_as(f.space):
        raise DomainError("data and subspace live on different spaces")
    if abs(M.p - f.p) > 1e-12 * max(1.0, f.p):
        raise DomainError(f"map degree p={M.p} does not match data exponent p={f.p}")


def _axioms_ok(M: MonotoneMap, S: SubspacePair) -> bool:
    if M.canonical or getattr(M, "_forward", None) is not None and M._forward.canonical:
        return True
    return audit_axioms(M, S.space, 128, 0).ok


def _solve_block(E, w, shape, M, a, b, tol_abs, c0, max_iter):
    """Solve for the coefficients of the unknown in span(E); handles degenerate blocks."""
    m, n = E.shape
    if m == 0:
        return np.zeros(0), 0, True, (), "trivial-subspace", 0
    if m == n:
        # the unknown spans everything: pointwise inversion
        u = M.invert_values(b) - a
        c = E @ (np.repeat(w, shape[1]) * u.ravel())
        return c, 0, True, (), "pointwise", 0
    G = _Galerkin(E, w, shape, M, a, b)
    c, rn, k, conv, trace, fb = _newton(G, c0, tol_abs, max_iter)
    return c, k, conv, trace, "newton", fb


def _perturb(c0: np.ndarray, seed: Optional[int]) -> np.ndarray:
    if seed is None or c0.size == 0:
        return c0
    g = SplitMix64(seed).normal(c0.size)
    sigma = 0.5 * (1.0 + float(np.sqrt(np.mean(c0 * c0))))
    return c0 + sigma * g


def _run_route(S, M, f, route, tol_abs, c0, max_iter):
    """One Galerkin route. ``primal``: alpha = E^T c in L+, beta from the map.
    ``dual``: beta = E_-^T c in L-, alpha from the inverse map."""
    space = S.space
    shape = (space.point_count, space.value_dim)
    a, b = f.a.values, f.b.values
    if route == "primal":
        E, Mr, x, y = S.matrix, M, a, b
    else:
        E, Mr, x, y = S.minus_matrix, M.inverse(), b, a
    c, k, conv, trace, method, fb = _solve_block(E, space.weights, shape, Mr, x, y, tol_abs, c0, max_iter)
    own = (E.T @ c).reshape(shape)
    other = Mr.evaluate(x + own) - y
    if method == "pointwise":
        other = np.zeros(shape)
    alpha, beta = (own, other) if route == "primal" else (other, own)
    return alpha, beta, k, trace, method, fb


def _initial(S, M, f, route, seed):
    a, b = f.a.values, f.b.values
    if route == "primal":
        n_unknown = S.dim_plus
        guess, sign = M.invert_values(b) - a, "+"
    else:
        n_unknown = S.dim_minus
        guess, sign = M.evaluate(a) - b, "-"
    if 0 < n_unknown < S.space.dim:
        return _perturb(S.coefficients(guess.ravel(), sign), seed)
    return np.zeros(n_unknown)


def _residuals(S, M, f, alpha, beta):
    """(||Pi_+ beta||, ||Pi_- alpha||, ||A(a + alpha) - b - beta||), weighted L^2."""
    w = S.space.weights
    r_plus = float(np.linalg.norm(S.coefficients(beta.ravel(), "+")))
    r_minus = float(np.linalg.norm(S.coefficients(alpha.ravel(), "-")))
    eq = M.evaluate(f.a.values + alpha) - f.b.values - beta
    r_eq = float(np.sqrt(w @ np.einsum("ij,ij->i", eq, eq)))
    return r_plus, r_minus, r_eq


def _solve(S, M, f, tol, seed_for_init, max_iter, order):
    _check_map(S, M, f)
    if not tol > 0:
        raise DomainError("tol must be positive")
    space = S.space
    tol_abs = tol * data_scale(f)
    ok = _axioms_ok(M, S)
    if f.is_zero():
        zero = space.zeros()
        return SolveReport(DataPair(zero, zero, f.exps), f, 0.0, 0, True, tol_abs, (), "zero-data", ok)
    first, second = order
    c0 = _initial(S, M, f, first, seed_for_init)
    alpha, beta, k, trace, method, fb = _run_route(S, M, f, first, tol_abs, c0, max_iter)
    method = f"{first}-{method}"
    res = _residuals(S, M, f, alpha, beta)
    if max(res) > tol_abs:
        # the first route stalled at its rounding floor; continue on the other block
        if second == "primal":
            c1 = S.coefficients((M.inverse().evaluate(f.b.values + beta) - f.a.values).ravel(), "+")
        else:
            c1 = S.coefficients((M.evaluate(f.a.values + alpha) - f.b.values).ravel(), "-")
        alpha2, beta2, k2, trace2, m2, fb2 = _run_route(S, M, f, second, tol_abs, c1, max_iter)
        res2 = _residuals(S, M, f, alpha2, beta2)
        if max(res2) < max(res):
            alpha, beta, res = alpha2, beta2, res2
            k, trace, fb = k + k2, trace + trace2, fb + fb2
            method = f"{method}+{second}-{m2}"
    phi = DataPair(Field(space, alpha), Field(space, beta), f.exps)
    rep = SolveReport(phi, f, res[0], k, max(res) <= tol_abs, tol_abs, trace, method, ok, fb,
                      complement_residual=res[1], equation_residual=res[2])
    return rep


def solve_system(S: SubspacePair, M: MonotoneMap, f: DataPair, tol: float = DEFAULT_TOL,
                 seed_for_init: Optional[int] = None, max_iter: int = MAX_NEWTON) -> SolveReport:
    """Solve A(x, a + alpha) = b + beta for alpha in L+, beta in L-.

    Newton runs on the L+ coefficients; when its residual stalls at the
    rounding floor (p < 2 with a + alpha nearly vanishing somewhere), the
    solve continues on the L- block with the inverse map.
    """
    return _solve(S, M, f, tol, seed_for_init, max_iter, ("primal", "dual"))


def solve_dual(S: SubspacePair, M: MonotoneMap, f: DataPair, tol: float = DEFAULT_TOL,
               seed_for_init: Optional[int] = None, max_iter: int = MAX_NEWTON) -> SolveReport:
    """Solve B(x, b + beta) = a + alpha for beta in L-, then recover alpha."""
    return _solve(S, M, f, tol, seed_for_init, max_iter, ("dual", "primal"))


def riesz_apply(S: SubspacePair, M: MonotoneMap, f: DataPair, tol: float = DEFAULT_TOL) -> DataPair:
    """R f = phi; raises if the solve does not converge."""
    rep = solve_system(S, M, f, tol)
    if not rep.converged:
        raise ConvergenceError(f"solve did not converge (residual {rep.residual_norm:.3e})")
    return rep.phi


def coupled_pair(f: DataPair, phi: DataPair) -> DataPair:
    return f + phi


def basic_estimate_ratio(report: SolveReport) -> float:
    return bracket_ratio(report.phi, report.data, 1.0)


def lp_projection(S: SubspacePair, f: Field, p: float, tol: float = DEFAULT_TOL) -> Field:
    """Nearest point of L+ to f in the L^p distance.

    Equivalent to the system with A = |.|^{p-2}(.), a = -f, b = 0; the
    certificate is Pi_+ (f - alpha)^{p-1} = 0.
    """
    alpha, cert, bound, converged = lp_projection_certified(S, f, p, tol)
    if not (converged and cert <= bound):
        raise ConvergenceError(f"L^p projection certificate {cert:.3e} exceeds {bound:.3e}")
    return alpha


def lp_projection_certified(S: SubspacePair, f: Field, p: float, tol: float = DEFAULT_TOL):
    exps = ExponentPair.from_p(p)
    data = DataPair(-f, f.space.zeros(), exps)
    rep = solve_system(S, PPowerMap(p), data, tol)
    alpha = rep.phi.a
    cert_field = s_power((f - alpha).values, p - 1.0)
    cert = float(np.linalg.norm(S.coefficients(cert_field.ravel(), "+")))
    bound = tol * (norm_s(f, p) ** (p - 1.0) + 1.0)
    return alpha, cert, bound, rep.converged


def orthogonality_defect(phi: DataPair) -> float:
    """|int <alpha|beta>| / (||alpha||_p ||beta||_q), 0 when either vanishes."""
    den = norm_s(phi.a, phi.p) * norm_s(phi.b, phi.q)
    return 0.0 if den == 0 else abs(inner(phi.a, phi.b)) / den


@dataclass(frozen=True)
class ContinuityProfile:
    distances: tuple  # ||w1 - w2||_p^p
    gaps: tuple  # ||E w1 - E w2||_p^p
    theta: float  # least-squares slope of log gap against log distance
    log_ratios: tuple


def continuity_profile(S: SubspacePair, f: Field, direction: Field, p: float,
                       steps: Sequence[float] = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3),
                       tol: float = DEFAULT_TOL) -> ContinuityProfile:
    """Fit the Hoelder exponent of the L^p projection along f + h * direction."""
    base = lp_projection(S, f, p, tol)
    dist, gaps = [], []
    for h in steps:
        g = f + direction * h
        dist.append(norm_s(direction * h, p) ** p)
        gaps.append(norm_s(lp_projection(S, g, p, tol) - base, p) ** p)
    ld, lg = np.log(dist), np.log(np.maximum(gaps, 1e-300))
    theta = float(np.polyfit(ld, lg, 1)[0])
    return ContinuityProfile(tuple(dist), tuple(gaps), theta, tuple(lg / ld))


def coercivity_profile(S: SubspacePair, M: MonotoneMap, a: Field, direction: Field,
                       ts: Sequence[float] = (1.0, 10.0, 100.0)) -> list[float]:
    """<T alpha | alpha> / ||alpha||_p along alpha = t * direction with T alpha = Pi_+ A(a + alpha)."""
    out = []
    for t in ts:
        alpha = direction * t
        Ta = Field(S.space, M.evaluate((a + alpha).values))
        out.append(inner(Ta, alpha) / norm_s(alpha, M.p))
    return out
