import math
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pqlab.measure import DataPair, DomainError, ExponentPair, Field, MeasureSpace, inner, norm_s
from pqlab.monotone import PPowerMap, negated_map, skew_power_map
from pqlab.rng import SplitMix64
from pqlab.solver import (
    basic_estimate_ratio,
    bracket_ratio,
    coercivity_profile,
    continuity_profile,
    lp_projection,
    lp_projection_certified,
    riesz_apply,
    solve_dual,
    solve_system,
)
from pqlab.subspace import build_subspace, grid_hodge, project_minus, project_plus, random_subspace

sys.path.insert(0, str(Path(__file__).parent))
from conftest import random_pair  # noqa: E402
from oracles import bisect, golden_min, scalar_system_coefficient  # noqa: E402


def line_space(w, u):
    sp = MeasureSpace(np.asarray(w, dtype=float), 1)
    return sp, build_subspace(sp, [np.asarray(u, dtype=float)])


def pair(sp, a, b, p):
    return DataPair.from_arrays(sp, a, b, p)


# worked examples

def test_linear_example():
    sp, S = line_space([1, 1], [1, 1])
    rep = solve_system(S, PPowerMap(2), pair(sp, [1, 0], [0, 1], 2))
    assert rep.converged
    assert np.allclose(rep.alpha.values.ravel(), [0, 0], atol=1e-12)
    assert np.allclose(rep.beta.values.ravel(), [1, -1], atol=1e-12)
    H = rep.coupled
    assert np.allclose(H.a.values, H.b.values)
    assert rep.basic_estimate_ratio == pytest.approx(1.0)
    dual = solve_dual(S, PPowerMap(2), pair(sp, [1, 0], [0, 1], 2))
    assert np.allclose(dual.alpha.values, rep.alpha.values, atol=1e-12)
    assert np.allclose(dual.beta.values, rep.beta.values, atol=1e-12)


def test_zero_data():
    sp, S = line_space([1, 1], [1, 1])
    for solver in (solve_system, solve_dual):
        rep = solver(S, PPowerMap(4), pair(sp, [0, 0], [0, 0], 4))
        assert rep.converged and rep.phi.is_zero() and rep.basic_estimate_ratio == 0


def test_p4_example():
    sp, S = line_space([1, 1], [1, 1])
    f = pair(sp, [1, 0], [0, 0], 4)
    c = bisect(lambda c: (1 + c) ** 3 + c**3, -2, 2)
    assert c == pytest.approx(-0.5, abs=1e-12)
    rep = solve_system(S, PPowerMap(4), f)
    dual = solve_dual(S, PPowerMap(4), f)
    assert np.allclose(rep.alpha.values.ravel(), [c, c], atol=1e-6)
    assert np.allclose(dual.alpha.values, rep.alpha.values, atol=1e-6)
    # scaling covariance on the same instance
    lam = 2.0
    g = DataPair(f.a * lam, f.b * lam**3, f.exps)
    r2 = riesz_apply(S, PPowerMap(4), g)
    assert np.allclose(r2.a.values, lam * rep.alpha.values, rtol=1e-8, atol=1e-12)
    assert np.allclose(r2.b.values, lam**3 * rep.beta.values, rtol=1e-8, atol=1e-12)


def test_lp_projection_examples():
    sp, S = line_space([1, 1], [1, 1])
    a = lp_projection(S, Field(sp, [1, 0]), 4)
    assert np.allclose(a.values.ravel(), [0.5, 0.5], atol=1e-8)
    assert golden_min(lambda c: (1 - c) ** 4 + c**4, -2, 2) == pytest.approx(0.5, abs=1e-6)
    sp, S = line_space([1, 2], [1, 1])
    c_or = bisect(lambda c: (2 - c) ** 2 - 2 * c**2, 0, 2)
    assert c_or == pytest.approx(2 / (1 + math.sqrt(2)), rel=1e-12)
    a = lp_projection(S, Field(sp, [2, 0]), 3)
    assert np.allclose(a.values.ravel(), [c_or, c_or], atol=1e-8)
    full = random_subspace(MeasureSpace(np.ones(3), 2), 6, 1)
    f = Field(full.space, SplitMix64(2).normal(6).reshape(3, 2))
    assert np.allclose(lp_projection(full, f, 3.0).values, f.values, atol=1e-12)


@pytest.mark.parametrize("trial", range(12))
def test_scalar_oracle(trial):
    r = SplitMix64(1000 + trial)
    N = 2 + trial % 2
    p = (1.5, 3.0, 4.0)[trial % 3]
    w = r.uniform(N, 0.5, 2.0)
    u = r.normal(N)
    a, b = r.normal(N), r.normal(N)
    sp, S = line_space(w, u)
    rep = solve_system(S, PPowerMap(p), pair(sp, a, b, p))
    e = S.matrix[0]
    c_pkg = float(e @ (w * rep.alpha.values.ravel()))
    c_or = scalar_system_coefficient(w.tolist(), e.tolist(), a.tolist(), b.tolist(), p)
    assert c_pkg == pytest.approx(c_or, abs=1e-6)


# degenerate blocks

def test_trivial_and_full_subspaces():
    sp = MeasureSpace(np.array([1.0, 2.0, 0.5]), 2)
    f = random_pair(sp, 3.0, 4)
    M = PPowerMap(3.0)
    r0 = solve_system(S := random_subspace(sp, 0, 1), M, f)
    assert r0.converged and np.array_equal(r0.alpha.values, np.zeros((3, 2)))
    assert np.allclose(r0.beta.values, M.evaluate(f.a.values) - f.b.values)
    rf = solve_system(random_subspace(sp, 6, 1), M, f)
    assert rf.converged and np.abs(rf.beta.values).max() <= 1e-12
    assert np.allclose(M.evaluate((f.a + rf.alpha).values), f.b.values, atol=1e-10)
    for S in (random_subspace(sp, 0, 1), random_subspace(sp, 6, 1)):
        d = solve_dual(S, M, f)
        assert d.converged


def test_degree_mismatch_rejected():
    sp, S = line_space([1, 1], [1, 1])
    with pytest.raises(DomainError):
        solve_system(S, PPowerMap(3), pair(sp, [1, 0], [0, 1], 2))
    with pytest.raises(DomainError):
        solve_system(S, PPowerMap(2), pair(sp, [1, 0], [0, 1], 2), tol=0)


def test_ratio_contract():
    sp, _ = line_space([1, 1], [1, 1])
    zero = pair(sp, [0, 0], [0, 0], 2)
    assert bracket_ratio(zero, zero, 1.0) == 0
    with pytest.raises(ValueError):
        bracket_ratio(pair(sp, [1, 0], [0, 0], 2), zero, 1.0)


# properties over random instances

@st.composite
def instances(draw, ps=(1.5, 2.0, 3.0, 4.0)):
    N = draw(st.integers(2, 8))
    d = draw(st.integers(1, 2))
    seed = draw(st.integers(0, 2**31))
    r = SplitMix64(seed)
    sp = MeasureSpace(r.uniform(N, 0.2, 3.0), d)
    m = draw(st.integers(1, N * d - 1))
    p = draw(st.sampled_from(ps))
    return random_subspace(sp, m, seed + 1), random_pair(sp, p, seed + 2)


@given(instances())
def test_solution_structure(inst):
    S, f = inst
    M = PPowerMap(f.p)
    rep = solve_system(S, M, f)
    assert rep.converged and rep.residual_norm <= rep.tolerance
    na, nb = math.sqrt(inner(rep.alpha, rep.alpha)), math.sqrt(inner(rep.beta, rep.beta))
    assert np.linalg.norm(S.coefficients(rep.alpha.flat, "-")) <= 1e-10 * na
    assert np.linalg.norm(S.coefficients(rep.beta.flat, "+")) <= 1e-10 * nb
    assert abs(inner(rep.alpha, rep.beta)) <= 1e-8 * norm_s(rep.alpha, f.p) * norm_s(rep.beta, f.q) + 1e-300
    H = rep.coupled
    # the equation holds pointwise up to the weighted residual tolerance (weights >= 0.2)
    assert np.abs(M.evaluate(H.a.values) - H.b.values).max() <= 3 * rep.tolerance
    assert basic_estimate_ratio(rep) == rep.basic_estimate_ratio


@given(instances(), st.integers(0, 2**31))
def test_uniqueness_and_duality(inst, seed):
    S, f = inst
    M = PPowerMap(f.p)
    base = solve_system(S, M, f)
    pert = solve_system(S, M, f, seed_for_init=seed)
    dual = solve_dual(S, M, f)
    assert (pert.phi - base.phi).l2_norm() <= 100 * base.tolerance
    assert (dual.phi - base.phi).l2_norm() <= 10 * base.tolerance


@given(instances(ps=(2.0,)))
def test_linear_case_closed_form(inst):
    S, f = inst
    rep = solve_system(S, PPowerMap(2), f)
    alpha = project_plus(S, f.b - f.a)
    beta = project_minus(S, f.a - f.b)
    scale = max(np.abs(f.a.values).max(), np.abs(f.b.values).max())
    assert np.abs(rep.alpha.values - alpha.values).max() <= 1e-10 * scale
    assert np.abs(rep.beta.values - beta.values).max() <= 1e-10 * scale


@given(instances(ps=(1.5, 3.0, 4.0)), st.sampled_from([0.5, 2.0, 10.0]))
def test_scaling_covariance(inst, lam):
    S, f = inst
    M = PPowerMap(f.p)
    phi = riesz_apply(S, M, f)
    mu = lam ** (f.p - 1)
    psi = riesz_apply(S, M, DataPair(f.a * lam, f.b * mu, f.exps))
    assert np.abs(psi.a.values - lam * phi.a.values).max() <= 1e-8 * lam * np.abs(phi.a.values).max()
    assert np.abs(psi.b.values - mu * phi.b.values).max() <= 1e-8 * mu * np.abs(phi.b.values).max()


def test_generic_map_routes_agree():
    sp = MeasureSpace(SplitMix64(3).uniform(6, 0.5, 2), 2)
    S = random_subspace(sp, 5, 4)
    for p in (1.5, 3.0):
        f = random_pair(sp, p, 9)
        M = skew_power_map(p)
        a, b = solve_system(S, M, f), solve_dual(S, M, f)
        assert a.converged and b.converged and a.axioms_ok
        assert (a.phi - b.phi).l2_norm() <= 10 * a.tolerance


def test_axiom_violation_is_flagged():
    sp = MeasureSpace(np.ones(4), 1)
    S = random_subspace(sp, 2, 1)
    rep = solve_system(S, negated_map(), random_pair(sp, 2.0, 3))
    assert not rep.axioms_ok


# L^p projection

@given(instances(ps=(1.5, 2.0, 3.0, 4.0)))
def test_lp_projection_certificate(inst):
    S, f = inst
    alpha, cert, bound, conv = lp_projection_certified(S, f.a, f.p)
    assert conv and cert <= bound
    # first-order optimality means no direction in L+ lowers the distance
    base = norm_s(f.a - alpha, f.p)
    for e in S.basis_plus:
        for h in (1e-3, -1e-3):
            assert norm_s(f.a - alpha - e * h, f.p) >= base * (1 - 1e-9)


@given(instances(ps=(1.5, 2.0, 3.0, 4.0)))
def test_lp_projection_provable_bounds(inst):
    S, f = inst
    alpha = lp_projection(S, f.a, f.p)
    n = norm_s(f.a, f.p)
    # 0 is a competitor, and the triangle inequality
    assert norm_s(f.a - alpha, f.p) <= n * (1 + 1e-10)
    assert norm_s(alpha, f.p) <= 2 * n * (1 + 1e-10)
    if f.p == 2:
        assert norm_s(alpha, 2) <= n * (1 + 1e-10)


def test_lp_projection_can_exceed_norm_of_data():
    """For p != 2 the nearest point of a subspace can be longer than the data itself."""
    sp, S = line_space([1, 1, 1], [3, -3, 1])
    f = Field(sp, [2, -2, 2])
    u = np.array([3.0, -3.0, 1.0])
    c_closed = (2 + 2 * 6 ** (1 / 3)) / (1 + 3 * 6 ** (1 / 3))
    c_golden = golden_min(lambda c: sum((fi - c * ui) ** 4 for fi, ui in zip([2, -2, 2], u)), -5, 5)
    assert c_golden == pytest.approx(c_closed, abs=1e-6)
    alpha = lp_projection(S, f, 4.0)
    assert np.allclose(alpha.values.ravel(), c_closed * u, atol=1e-8)
    ratio = norm_s(alpha, 4) / norm_s(f, 4)
    assert ratio == pytest.approx(1.18555, abs=1e-5)


@pytest.mark.parametrize("p", [1.5, 3.0, 4.0])
def test_continuity_profile(p):
    sp = MeasureSpace(np.ones(6), 1)
    S = random_subspace(sp, 3, 5)
    f = Field(sp, SplitMix64(6).normal(6))
    direction = Field(sp, SplitMix64(7).normal(6))
    prof = continuity_profile(S, f, direction, p)
    assert prof.theta > 0
    assert all(g2 < g1 for g1, g2 in zip(prof.gaps, prof.gaps[1:]))


@pytest.mark.parametrize("p", [1.5, 2.0, 4.0])
def test_coercivity(p):
    sp = MeasureSpace(np.ones(6), 1)
    S = random_subspace(sp, 3, 5)
    e = S.basis_plus[0]
    a = Field(sp, SplitMix64(1).normal(6))
    vals = coercivity_profile(S, PPowerMap(p), a, e * (1 / norm_s(e, p)))
    assert vals[0] < vals[1] < vals[2]


@settings(max_examples=15)
@given(instances())
def test_report_trace_and_tolerance(inst):
    S, f = inst
    rep = solve_system(S, PPowerMap(f.p), f, tol=1e-11)
    assert rep.converged and rep.tolerance < solve_system(S, PPowerMap(f.p), f).tolerance
    assert rep.iterations <= 500
