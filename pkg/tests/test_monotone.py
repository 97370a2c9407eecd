import numpy as np
import pytest
from hypothesis import given, strategies as st

from pqlab.measure import MeasureSpace, s_power
from pqlab.monotone import (
    ConvergenceError,
    MonotoneMap,
    PPowerMap,
    apply,
    audit_axioms,
    invert,
    negated_map,
    skew_power_map,
)

SPACE2 = MeasureSpace(np.ones(5), 2)


def test_apply_examples():
    assert np.allclose(apply(PPowerMap(2), 0, [1.5, -2]), [1.5, -2])
    assert np.allclose(apply(PPowerMap(3), 0, [2.0]), [4.0])
    assert np.allclose(apply(PPowerMap(4, [2.0, 1.0]), 0, [1.0, 0.0]), [2.0, 0.0])


def test_invert_examples():
    assert np.allclose(invert(PPowerMap(3), 0, [4.0]), [2.0])
    assert np.allclose(invert(PPowerMap(4), 0, [8.0]), [2.0])
    for M in (PPowerMap(3), skew_power_map(3)):
        assert np.array_equal(invert(M, 0, np.zeros(2)), np.zeros(2))
    with pytest.raises(ValueError):
        invert(PPowerMap(3), 0, [1.0], tol=0)


def test_coefficient_validation():
    with pytest.raises(ValueError):
        PPowerMap(3, [1.0, 0.0])
    with pytest.raises(ValueError):
        PPowerMap(1.0)


vec2 = st.lists(st.floats(-50, 50), min_size=2, max_size=2).map(np.array)


@given(vec2, st.sampled_from([1.5, 2.0, 3.0, 4.0]), st.sampled_from(["canonical", "generic"]))
def test_inverse_roundtrip(v, p, kind):
    M = PPowerMap(p) if kind == "canonical" else skew_power_map(p)
    w = M.apply(0, v)
    tol = 1e-12
    back = M.invert(0, w, tol)
    assert np.linalg.norm(M.apply(0, back) - w) <= tol * (1 + np.linalg.norm(w)) * 10
    assert np.linalg.norm(back - v) <= 1e-8 * (1 + np.linalg.norm(v))


def test_generic_inverse_map_is_consistent():
    M = skew_power_map(3.0)
    B = M.inverse()
    V = np.random.default_rng(0).normal(size=(10, 2))
    assert np.allclose(B.evaluate(M.evaluate(V)), V, atol=1e-10)
    assert B.inverse() is M


def test_jacobian_matches_finite_difference():
    V = np.array([[0.3, -1.2], [2.0, 0.5]])
    for p in (1.5, 3.0):
        exact = PPowerMap(p).jacobian(V)
        fd = MonotoneMap(p, lambda idx, v: s_power(v, p - 1)).jacobian(V)
        assert np.allclose(exact, fd, rtol=1e-6, atol=1e-8)


def test_audit_identity():
    rep = audit_axioms(PPowerMap(2), SPACE2, 200, 1)
    assert rep.monotonicity == pytest.approx(1, abs=1e-8)
    assert rep.lipschitz == pytest.approx(1, abs=1e-8)
    assert rep.ok


@pytest.mark.parametrize("p", [1.5, 3.0, 4.0])
def test_audit_power_maps(p):
    for M in (PPowerMap(p), skew_power_map(p)):
        rep = audit_axioms(M, SPACE2, 256, 2)
        assert rep.homogeneity_residual <= 1e-8
        assert rep.monotonicity > 0 and np.isfinite(rep.lipschitz)


@pytest.mark.parametrize("p", [1.5, 3.0, 4.0])
def test_inverse_satisfies_axioms_with_q(p):
    for M in (PPowerMap(p), skew_power_map(p)):
        B = M.inverse()
        assert B.p == pytest.approx(M.q)
        rep = audit_axioms(B, SPACE2, 128, 3)
        assert rep.monotonicity > 0 and rep.homogeneity_residual <= 1e-8


def test_audit_broken_map():
    rep = audit_axioms(negated_map(), SPACE2, 64, 0)
    assert rep.monotonicity <= 0 and not rep.ok


def test_audit_is_deterministic():
    a = audit_axioms(skew_power_map(3), SPACE2, 64, 5)
    b = audit_axioms(skew_power_map(3), SPACE2, 64, 5)
    assert a == b


def test_comparability_spread():
    assert audit_axioms(PPowerMap(3), SPACE2, 64, 0).comparability == pytest.approx(1, abs=1e-10)
    K = audit_axioms(skew_power_map(3), SPACE2, 64, 0).comparability
    assert 1 < K < 10


def test_nonmonotone_inversion_signals_failure():
    # componentwise squares never reach a negative target
    M = MonotoneMap(3.0, lambda idx, v: v * v, name="folded")
    with pytest.raises(ConvergenceError):
        M.invert(0, np.array([-1.0, -1.0]))


def test_audit_rejects_empty_sample():
    with pytest.raises(ValueError):
        audit_axioms(PPowerMap(2), SPACE2, 0)
