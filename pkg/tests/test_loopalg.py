import json

import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

from dpwloops import (
    DomainError,
    LaurentMatrix,
    NotUnimodular,
    ShapeError,
    SymmetricSpaceSpec,
    Unsupported,
    adjoint_degree,
    determinant,
    element_flags,
    evaluate,
    inverse,
    multiply,
    random_twisted_loop,
    reality_involution,
    reality_residual,
    twist_residual,
)
from dpwloops.verify import adjoint_expansion_degree

from conftest import E12, cp1_frame, unipotent

WEYL = LaurentMatrix.from_dict({-1: [[0, 1], [0, 0]], 1: [[0, 0], [-1, 0]]})


def horner(gamma, lam):
    out = np.zeros((gamma.n, gamma.n), dtype=complex)
    for j in range(gamma.hi, gamma.lo - 1, -1):
        out = out * lam + gamma.coeff(j)
    return out * lam ** gamma.lo


def test_evaluate_examples():
    np.testing.assert_array_equal(evaluate(LaurentMatrix.identity(2), 1j), np.eye(2))
    np.testing.assert_array_equal(evaluate(WEYL, 1.0), [[0, 1], [-1, 0]])
    g = unipotent(2.0)
    np.testing.assert_allclose(evaluate(g, 2.0), [[1, 1], [0, 1]])
    np.testing.assert_allclose(evaluate(g, 2.0), horner(g, 2.0))


def test_evaluate_zero_with_negative_powers():
    with pytest.raises(DomainError):
        evaluate(unipotent(1.0), 0)


def test_trim_and_invariants():
    g = LaurentMatrix(np.stack([np.zeros((2, 2)), np.eye(2), 1e-14 * np.ones((2, 2))]), lo=-1)
    assert g.spread == (0, 0)


def test_multiply_examples(rng):
    g = random_twisted_loop(rng, SymmetricSpaceSpec(2, (1, -1)), -1, 1, eps=0.3)
    assert multiply(g, LaurentMatrix.identity(2)).distance(g) == 0
    p = multiply(unipotent(1.0), unipotent(-1.0))
    assert p.spread == (0, 0) and p.distance(LaurentMatrix.identity(2)) == 0


def test_multiply_size_mismatch():
    with pytest.raises(ShapeError):
        multiply(LaurentMatrix.identity(2), LaurentMatrix.identity(3))


def random_loop(rng, n, lo, hi):
    c = rng.standard_normal((hi - lo + 1, n, n)) + 1j * rng.standard_normal((hi - lo + 1, n, n))
    return LaurentMatrix(c, lo)


def test_multiply_matches_pointwise(rng):
    a, b = random_loop(rng, 3, -1, 1), random_loop(rng, 3, -1, 1)
    lams = np.exp(2j * np.pi * rng.random(8))
    prod = multiply(a, b)
    for lam in lams:
        np.testing.assert_allclose(prod(lam), horner(a, lam) @ horner(b, lam), atol=1e-12)


def test_evaluate_multiply_roots_of_unity(rng):
    spec = SymmetricSpaceSpec(3, (1, -1, 1))
    a, b = random_twisted_loop(rng, spec, eps=0.5), random_twisted_loop(rng, spec, eps=0.5)
    lams = np.exp(2j * np.pi * np.arange(16) / 16)
    np.testing.assert_allclose(evaluate(multiply(a, b), lams), evaluate(a, lams) @ evaluate(b, lams), atol=1e-12)


def test_inverse_examples():
    assert inverse(LaurentMatrix.identity(2)).distance(LaurentMatrix.identity(2)) == 0
    expect = LaurentMatrix.from_dict({-1: [[0, -1], [0, 0]], 1: [[0, 0], [1, 0]]})
    assert inverse(WEYL).distance(expect) < 1e-14
    assert inverse(unipotent(0.7)).distance(unipotent(-0.7)) < 1e-14


def test_inverse_rejects_non_unimodular():
    with pytest.raises(NotUnimodular):
        inverse(LaurentMatrix.constant(2 * np.eye(2)))


def test_inverse_exact_mode():
    z = sympy.Symbol("z")
    g = LaurentMatrix.from_dict({-1: np.array([[0, z], [0, 0]], dtype=object), 0: np.array(sympy.eye(2).tolist(), dtype=object)})
    gi = inverse(g)
    assert gi.exact
    assert sympy.simplify(gi.coeff(-1)[0, 1] + z) == 0


def test_inverse_identity_property(rng):
    spec = SymmetricSpaceSpec(3, (1, 1, -1))
    for _ in range(20):
        g = random_twisted_loop(rng, spec, -3, 3, eps=0.5)
        assert multiply(g, inverse(g)).distance(LaurentMatrix.identity(3)) < 1e-10


def test_determinant_scalar_laurent(rng):
    g = random_twisted_loop(rng, SymmetricSpaceSpec(2, (1, -1)), eps=0.5)
    d, lo = determinant(g)
    lam = np.exp(0.3j)
    val = sum(c * lam ** (lo + k) for k, c in enumerate(d))
    assert abs(val - np.linalg.det(g(lam))) < 1e-12
    assert abs(val - 1) < 1e-12


def test_twist_residual_examples(spec2):
    assert twist_residual(WEYL, spec2) == 0
    D = LaurentMatrix.from_dict({1: [[1, 0], [0, 0]], -1: [[0, 0], [0, 1]]})
    assert twist_residual(D, spec2) == pytest.approx(2.0)
    assert twist_residual(LaurentMatrix.identity(2), spec2) == 0


def test_twist_closed_under_products(rng):
    spec = SymmetricSpaceSpec(4, (1, -1, 1, -1))
    a, b = random_twisted_loop(rng, spec, eps=0.4), random_twisted_loop(rng, spec, eps=0.4)
    assert twist_residual(a, spec) == 0 and twist_residual(b, spec) == 0
    assert twist_residual(multiply(a, b), spec) < 1e-10


def test_reality_examples(spec2):
    th = 0.4
    U = np.array([[np.cos(th), 1j * np.sin(th)], [1j * np.sin(th), np.cos(th)]])
    assert reality_involution(LaurentMatrix.constant(U), spec2).distance(LaurentMatrix.constant(U)) < 1e-15
    r = reality_involution(LaurentMatrix.constant(np.diag([2, 0.5])), spec2)
    assert r.distance(LaurentMatrix.constant(np.diag([0.5, 2]))) < 1e-15


def test_reality_of_cp1_closed_form(spec2):
    """Build F(z, .) from samples of the closed form and check it is rho-fixed."""
    z = 0.6 - 0.3j
    s = 1 / np.sqrt(1 + abs(z) ** 2)
    F = LaurentMatrix.from_dict({-1: s * z * E12, 0: s * np.eye(2), 1: [[0, 0], [-s * np.conj(z), 0]]})
    np.testing.assert_allclose(F(np.exp(0.9j)), cp1_frame(z, np.exp(0.9j)), atol=1e-15)
    assert reality_residual(F, spec2) < 1e-12


def test_reality_is_involution(rng):
    spec = SymmetricSpaceSpec(3, (1, -1, 1))
    for _ in range(100):
        g = random_twisted_loop(rng, spec, -3, 3, eps=0.3)
        rr = reality_involution(reality_involution(g, spec), spec)
        assert rr.distance(g) < 1e-10


def test_indefinite_reality():
    spec = SymmetricSpaceSpec(2, (1, -1), "indefinite", 1, 1)
    t = 0.8
    boost = LaurentMatrix.constant([[np.cosh(t), np.sinh(t)], [np.sinh(t), np.cosh(t)]])
    assert reality_residual(boost, spec) < 1e-14
    assert reality_residual(boost, spec.with_real_form("compact")) > 0.1


def test_adjoint_degree_examples():
    assert adjoint_degree(LaurentMatrix.identity(2)) == 0
    g = unipotent(1.0)
    assert adjoint_degree(g) == adjoint_expansion_degree(g)
    U = LaurentMatrix.constant(np.array([[0, 1j], [1j, 0]]))
    assert adjoint_degree(U) == 0


def test_adjoint_degree_subadditive(rng):
    spec = SymmetricSpaceSpec(2, (1, -1))
    for _ in range(10):
        a = random_twisted_loop(rng, spec, eps=0.5)
        b = random_twisted_loop(rng, spec, eps=0.5)
        assert adjoint_degree(multiply(a, b)) <= adjoint_degree(a) + adjoint_degree(b)
        assert adjoint_degree(a) == adjoint_expansion_degree(a)


def test_element_flags(spec2):
    f = element_flags(WEYL, spec2)
    assert f.is_twisted and f.is_real and f.det_is_one


def test_spec_validation():
    with pytest.raises(Unsupported, match="compact"):
        SymmetricSpaceSpec(2, (1, -1), "orthogonal")
    with pytest.raises(ShapeError):
        SymmetricSpaceSpec(3, (1, -1))
    with pytest.raises(DomainError):
        SymmetricSpaceSpec(2, (1, 2))
    with pytest.raises(DomainError):
        SymmetricSpaceSpec(3, (1, -1, 1), "indefinite", 1, 1)
    s = SymmetricSpaceSpec.from_dict({"n": 2, "h": [[1, 0], [0, -1]], "realForm": {"indefinite": [1, 1]}})
    assert s.real_form == "indefinite" and (s.p, s.q) == (1, 1)
    assert SymmetricSpaceSpec.from_dict(s.to_dict()) == s


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(st.integers(-3, 3), st.integers(0, 3), st.integers(1, 3), st.data())
def test_json_round_trip_bit_exact(lo, width, n, data):
    vals = data.draw(st.lists(finite, min_size=2 * n * n * (width + 1), max_size=2 * n * n * (width + 1)))
    arr = np.array(vals).reshape(width + 1, n, n, 2)
    g = LaurentMatrix(arr[..., 0] + 1j * arr[..., 1], lo, trim=False)
    back = LaurentMatrix.from_json(json.loads(g.dumps()))
    assert back.lo == g.lo and back.hi == g.hi
    assert np.array_equal(back.coeffs, g.coeffs)
