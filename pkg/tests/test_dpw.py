import json
import warnings

import numpy as np
import pytest
import sympy

from dpwloops import (
    ConfigError,
    FrameField,
    InvariantViolation,
    LaurentMatrix,
    ModeError,
    PoleOnPath,
    SymmetricSpaceSpec,
    build_extended_frame,
    convergence_order,
    inverse,
    make_potential,
    maurer_cartan_residual,
    multiply,
    nilpotent_order,
    normalized_potential_from_frame,
    numeric_picard,
    parse_potential,
    picard_integrate,
    picard_series,
    square_grid,
)
from dpwloops.dpw import Z
from dpwloops.uniton import cartan_embed, dress

from conftest import E12, cp1_frame, su11_frame


def test_parse_cp1_file():
    eta = parse_potential('{"n": 2, "h": [1, -1], "term": {"power": -1, "matrix": [[0, "1"], ["0", "0"]]}}')
    assert eta.kind == "normalized" and eta.powers == [-1]
    np.testing.assert_array_equal(eta.at(0.3, 1.0), E12)


def test_parse_rejects_power_minus_two():
    with pytest.raises(InvariantViolation, match="powers >= -1"):
        parse_potential('{"n": 2, "h": [1, -1], "terms": [{"power": -2, "matrix": [[0, 1], [0, 0]]}]}')


def test_parse_rejects_parity_violation():
    with pytest.raises(InvariantViolation, match=r"term 0 .*not p\^C-valued at sample"):
        parse_potential('{"n": 2, "h": [1, -1], "term": {"power": -1, "matrix": [[1, 1], [0, -1]]}}')


def test_parse_error_has_line_and_column():
    with pytest.raises(ConfigError, match="line 2, column 10"):
        parse_potential('{"n": 2,\n "h": [1 -1]}')


def test_parse_structural_errors_name_location():
    with pytest.raises(ConfigError, match=r"\$\.terms\[0\]\.matrix"):
        parse_potential('{"n": 2, "h": [1, -1], "terms": [{"power": -1, "matrix": [[0, 1]]}]}')
    with pytest.raises(ConfigError, match="unknown keys"):
        parse_potential('{"n": 2, "h": [1, -1], "color": 3, "term": {"power": -1, "matrix": [[0, 1], [0, 0]]}}')


def test_parse_rational_and_polynomial_entries():
    text = json.dumps({
        "n": 2, "h": [1, -1], "basepoint": [1, 0],
        "term": {"power": -1, "matrix": [[0, {"num": [[1, 0]], "den": [[0, 0], [1, 0]]}], [0, 0]]},
    })
    eta = parse_potential(text)
    assert not eta.is_polynomial()
    np.testing.assert_allclose(eta.poles(), [0])
    assert eta.at(2.0, 1.0)[0, 1] == pytest.approx(0.5)
    eta2 = parse_potential('{"n": 2, "h": [1, -1], "term": {"power": -1, "matrix": [[0, [[1, 0], [0, 2]]], [0, 0]]}}')
    assert eta2.at(1.0, 1.0)[0, 1] == pytest.approx(1 + 2j)


def test_potential_json_round_trip(cp1):
    back = parse_potential(json.dumps(cp1.to_json()))
    for z in (0.3, 1 + 1j):
        np.testing.assert_array_equal(back.at(z, 1j), cp1.at(z, 1j))


def test_picard_cp1_one_step(cp1):
    s = picard_series(cp1, exact=True)
    assert s.steps == 1
    C = s(2)
    assert C.exact
    assert C.coeff(-1)[0, 1] == 2 and C.coeff(0)[0, 0] == 1


def test_picard_polynomial_coefficient(spec2):
    f = 3 * Z**2 - Z + sympy.Rational(1, 2)
    eta = make_potential(spec2, {-1: [[0, f], [0, 0]]})
    C = picard_integrate(eta, sympy.Rational(3, 2), mode="exactNilpotent", exact=True)
    F = sympy.integrate(f, (Z, 0, sympy.Rational(3, 2)))
    assert C.coeff(-1)[0, 1] == F
    Cn = picard_integrate(eta, 1.5, mode="numeric")
    assert abs(Cn.coeff(-1)[0, 1] - complex(F)) < 1e-10


def test_picard_zero_potential(spec2):
    eta = make_potential(spec2, {-1: [[0, 0], [0, 0]]})
    C = picard_integrate(eta, 0.7 + 0.1j, mode="exactNilpotent")
    assert C.distance(LaurentMatrix.identity(2)) == 0


def test_nilpotent_pattern_violation(spec2):
    eta = make_potential(spec2, {-1: [[0, 1], [1, 0]]})
    with pytest.raises(ModeError):
        nilpotent_order(eta)
    with pytest.raises(ModeError):
        picard_series(eta)
    rat = make_potential(spec2, {-1: [[0, "1/(z-3)"], [0, 0]]})
    with pytest.raises(ModeError):
        picard_series(rat)


def test_numeric_picard_non_nilpotent_series(spec2):
    """eta = lam^-1 X dz with X^2 = I: C = sum_k (z/lam)^k X^k / k!, an infinite series."""
    X = np.array([[0, 1], [1, 0]])
    eta = make_potential(spec2, {-1: X})
    z = 0.8 - 0.3j
    res = numeric_picard(eta, z)
    from math import factorial

    for k in range(0, 12):
        expect = z**k / factorial(k) * np.linalg.matrix_power(X, k)
        np.testing.assert_allclose(res.loop.coeff(-k), expect, atol=1e-10)
    assert res.tail < 1e-10


def test_pole_on_path(spec2):
    eta = make_potential(spec2, {-1: [[0, "1/z"], [0, 0]]}, basepoint=1)
    with pytest.raises(PoleOnPath, match="re-route"):
        numeric_picard(eta, -1.0)


def test_cp1_frames_match_closed_form(cp1):
    g = square_grid(0, 1.4, 9)
    fr = build_extended_frame(cp1, g)
    assert fr.in_cell.all()
    for idx, F in fr.points():
        for lam in (1, 1j, np.exp(0.4j)):
            np.testing.assert_allclose(F(lam), cp1_frame(g[idx], lam), atol=1e-8)


def test_su11_exclusion_mask(cp1, su11):
    from dpwloops import Potential

    eta = Potential(su11, cp1.terms, 0j, "normalized")
    g = square_grid(0, 1.5, 13)
    fr = build_extended_frame(eta, g)
    r = np.abs(g)
    sure = np.abs(r - 1) > 0.05
    assert np.array_equal(fr.in_cell[sure], (r < 1)[sure])
    for idx, F in fr.points():
        np.testing.assert_allclose(F(1j), su11_frame(g[idx], 1j), atol=1e-8 / (1 - r[idx]))
    assert all(fr.reasons[idx] for idx in zip(*np.nonzero(~fr.in_cell)))


def test_zero_potential_identity_frames(spec2):
    eta = make_potential(spec2, {-1: [[0, 0], [0, 0]]})
    fr = build_extended_frame(eta, square_grid(0, 0.5, 5))
    assert all(F.distance(LaurentMatrix.identity(2)) == 0 for _, F in fr.points())
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert np.all(maurer_cartan_residual(fr).residuals == 0)
    sp = normalized_potential_from_frame(fr)
    assert np.nanmax(np.abs(sp.values)) == 0


def test_potential_round_trip(cp1, cp1_frames):
    sp = normalized_potential_from_frame(cp1_frames)
    assert sp.is_normalized()
    assert sp.distance_to(cp1) < 1e-6


def test_round_trip_nonconstant_coefficient(spec2):
    eta = make_potential(spec2, {-1: [[0, "1 + z**2/2"], [0, 0]]})
    fr = build_extended_frame(eta, square_grid(0.2, 0.05, 7))
    sp = normalized_potential_from_frame(fr)
    assert sp.is_normalized() and sp.distance_to(eta) < 1e-6


def test_dressed_field_gives_normalized_potential(cp1_frames):
    hp = LaurentMatrix.from_dict({0: np.eye(2), 1: [[0, 0], [0.3, 0]]})
    d = dress(hp, cp1_frames)
    sp = normalized_potential_from_frame(d)
    assert sp.max_structure_residual() < 1e-6


def test_mc_residual_order_two(cp1):
    res = []
    for steps in (11, 21):
        fr = build_extended_frame(cp1, square_grid(0.3 + 0.2j, 0.1, steps))
        res.append(maurer_cartan_residual(fr).residuals)
    assert np.all(res[1] < 1e-3)
    orders = [convergence_order(a, b) for a, b in zip(*res)]
    assert min(orders) > 1.9


def test_mc_negative_control(cp1):
    """A non-harmonic perturbation keeps a residual that does not shrink with the step.

    At lam = 1 and lam = -1 the form is F^-1 dF (or its h-conjugate), flat for
    any F, so only lam = i can detect the perturbation.
    """
    res = []
    for steps in (11, 21):
        fr = build_extended_frame(cp1, square_grid(0.3 + 0.2j, 0.1, steps))
        bad = np.empty(fr.shape, dtype=object)
        for idx, F in fr.points():
            bad[idx] = F @ (np.eye(2) + 0.01 * fr.z[idx] * E12)
        res.append(maurer_cartan_residual(fr.replace(bad, fr.in_cell, "perturbed"), lams=(1, 1j, -1)).residuals)
    assert res[1][1] > 1e-2
    assert res[1][1] > 0.9 * res[0][1]
    assert max(res[1]) > 1e-2


def test_coarse_grid_warns(cp1):
    fr = build_extended_frame(cp1, square_grid(0, 1.0, 5))
    with pytest.warns(UserWarning, match="exceeds"):
        r = maurer_cartan_residual(fr)
    assert r.warning


def test_degree_spread_bounded_by_picard_steps():
    spec = SymmetricSpaceSpec(3, (1, -1, 1))
    eta = make_potential(spec, {-1: [[0, 1, 0], [0, 0, "z"], [0, 0, 0]]})
    s = picard_series(eta)
    fr = build_extended_frame(eta, square_grid(0.1, 0.3, 5))
    lo, hi = fr.degree_spread()
    assert s.steps == 2
    assert -lo <= s.steps and hi <= s.steps
    assert fr.is_laurent()


def test_holomorphic_gauge_freedom(cp1, spec2):
    """C W solves the gauged system; its frames agree with the original up to right K-gauge."""
    D = LaurentMatrix.constant(np.diag([1.3 * np.exp(0.4j), np.exp(-0.4j) / 1.3]))
    W = multiply(D, LaurentMatrix.from_dict({0: np.eye(2), 1: [[0, 0], [0.4 - 0.2j, 0]]}))
    W = multiply(W, LaurentMatrix.from_dict({0: np.eye(2), 1: [[0, 0.3j], [0, 0]]}))
    Wi = inverse(W)
    terms = {}
    for j in range(-1, 2 * W.hi + 1):
        M = sum((Wi.coeff(a) @ E12 @ W.coeff(b) for a in range(0, Wi.hi + 1) for b in range(0, W.hi + 1)
                 if a - 1 + b == j), np.zeros((2, 2), dtype=complex))
        if np.abs(M).max() > 1e-14:
            terms[j] = M
    eta_g = make_potential(spec2, terms)
    assert eta_g.kind == "holomorphic"
    g = square_grid(0.2 + 0.1j, 0.2, 5)
    fr = build_extended_frame(cp1, g)
    frg = build_extended_frame(eta_g, g, initial=W, normalize=False)
    assert frg.in_cell.all() and frg.is_laurent()
    H = spec2.H
    for idx, F in fr.points():
        k = multiply(inverse(F), frg.frames[idx])
        assert k.spread == (0, 0)
        assert np.abs(k.coeff(0) @ H - H @ k.coeff(0)).max() < 1e-8
    a, b = cartan_embed(fr), cartan_embed(frg)
    assert max(a.samples[i].distance(b.samples[i]) for i, _ in a.points()) < 1e-8


def test_frame_field_json_round_trip(cp1_frames, spec2):
    back = FrameField.from_json(json.loads(json.dumps(cp1_frames.to_json())), spec2)
    assert back.shape == cp1_frames.shape
    np.testing.assert_array_equal(back.z, cp1_frames.z)
    for idx, F in cp1_frames.points():
        assert np.array_equal(back.frames[idx].coeffs, F.coeffs)
