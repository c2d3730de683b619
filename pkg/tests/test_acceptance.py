"""Acceptance criteria 1-10.

Each criterion is a function returning ``(ok, detail)``.  Under pytest every
outcome is collected and printed as one line in the terminal summary; run the
file directly to print the same lines without pytest.
"""
import sys
import time
from pathlib import Path

import numpy as np
import sympy

sys.path.insert(0, str(Path(__file__).parent))

from dpwloops import (
    LaurentMatrix,
    Potential,
    SymmetricSpaceSpec,
    a_at_minus_one,
    build_extended_frame,
    cartan_embed,
    circle_path,
    dress,
    dualize,
    extended_solution,
    is_finite_uniton_type,
    make_potential,
    maurer_cartan_residual,
    monodromy,
    multiply,
    normalized_potential_from_frame,
    numeric_picard,
    picard_series,
    random_twisted_loop,
    reality_residual,
    square_grid,
    twist_residual,
)
from dpwloops.dpw import convergence_order
from dpwloops.factor import birkhoff, iwasawa
from dpwloops.verify import (
    algebraicity_certificate,
    extended_solution_residual,
    lambda_minus_one_residual,
    pointwise_factorization_oracle,
    with_convergence,
)

from conftest import E12, cp1_frame

RESULTS: dict = {}
SPEC2 = SymmetricSpaceSpec(2, (1, -1))
SU11 = SymmetricSpaceSpec(2, (1, -1), "indefinite", 1, 1)
CP1 = make_potential(SPEC2, {-1: E12})
PATCH = 0.3 + 0.2j


def record(n, title, ok, detail, t0):
    RESULTS[n] = (title, bool(ok), detail, time.perf_counter() - t0)
    return bool(ok)


def loop_population(seed=11, count=100):
    """Random twisted unimodular loops, degrees in [-2, 2], within 0.1 of the identity."""
    rng = np.random.default_rng(seed)
    I = LaurentMatrix.identity(2)
    out = []
    while len(out) < count:
        g = random_twisted_loop(rng, SPEC2, lo=-2, hi=2, eps=0.03)
        if g.distance(I) <= 0.1:
            out.append(g)
    return out


def random_poly(rng, deg=3):
    c = np.round(rng.uniform(-1, 1, deg + 1), 3)
    return "+".join(f"({v})*z**{k}" for k, v in enumerate(c))


def random_nilpotent(rng, spec, rational=False):
    """lam^-1 A(z) dz with A strictly upper triangular and p-valued."""
    n, h = spec.n, spec.h
    M = [["0"] * n for _ in range(n)]
    for a in range(n):
        for b in range(a + 1, n):
            if h[a] != h[b]:
                M[a][b] = random_poly(rng)
    if rational:
        M[0][1] = f"({M[0][1]})/(z - {rng.uniform(2, 3):.3f})"
    return make_potential(spec, {-1: M})


def mc_orders(make_field, radius, lams=(1, 1j, -1)):
    res = []
    for steps in (11, 21):
        fr = make_field(square_grid(PATCH, radius, steps))
        res.append(maurer_cartan_residual(fr, lams).residuals)
    return np.array([convergence_order(a, b) for a, b in zip(*res)]), res[1]


# ---------------------------------------------------------------------------


def criterion_1():
    t0 = time.perf_counter()
    rec = unique = 0.0
    for g in loop_population():
        b = birkhoff(g)
        rec = max(rec, multiply(b.minus, b.plus).distance(g))
        for extra in (1, 3):
            unique = max(unique, birkhoff(g, depth=b.depth + extra).minus.distance(b.minus))
    ok = rec < 1e-8 and unique < 1e-8
    return record(1, "Birkhoff round trip", ok, f"recomposition {rec:.2e}, depth uniqueness {unique:.2e}", t0)


def criterion_2():
    t0 = time.perf_counter()
    real = recon = oracle = 0.0
    for g in loop_population():
        r = iwasawa(g, SPEC2)
        real = max(real, reality_residual(r.unitary, SPEC2))
        recon = max(recon, multiply(r.unitary, r.plus).distance(g))
        o = pointwise_factorization_oracle(g, SPEC2, unitary=r.unitary)
        assert len(o.per_point) == 16
        oracle = max(oracle, o.max_residual)
    ok = real < 1e-8 and recon < 1e-8 and oracle < 1e-8
    return record(2, "Iwasawa correctness", ok,
                  f"reality {real:.2e}, reconstruction {recon:.2e}, pointwise oracle {oracle:.2e}", t0)


def criterion_3():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    specs = {2: (1, -1), 3: (1, -1, 1), 4: (1, -1, 1, -1)}
    detail, ok = [], True
    for n, h in specs.items():
        spec = SymmetricSpaceSpec(n, h)
        eta = random_nilpotent(rng, spec)
        s = picard_series(eta, exact=True)
        z = sympy.Rational(1, 3) + sympy.I / 5
        C = s(z)
        exact = C.exact and all(isinstance(x, sympy.Expr) for x in C.coeffs.ravel())
        num = numeric_picard(eta, complex(z)).loop
        agree = C.to_complex().distance(num)
        ok &= s.steps <= n - 1 and exact and agree < 1e-9
        detail.append(f"n={n}: {s.steps} steps")
    return record(3, "Nilpotent Picard termination", ok, ", ".join(detail) + " (rational arithmetic)", t0)


def criterion_4():
    t0 = time.perf_counter()
    g = square_grid(0, 1, 21)
    fr = build_extended_frame(CP1, g)
    err = 0.0
    for idx, F in fr.points():
        for lam in np.exp(1j * np.array([0.0, 0.7, np.pi / 2, 2.1, np.pi])):
            err = max(err, float(np.abs(F(lam) - cp1_frame(g[idx], lam)).max()))
    orders, _ = mc_orders(lambda grid: build_extended_frame(CP1, grid), 0.1)
    ok = fr.in_cell.all() and err < 1e-8 and orders.min() >= 1.9
    return record(4, "CP1 closed form", ok, f"frame error {err:.2e}, MC orders {np.round(orders, 3).tolist()}", t0)


def criterion_5():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    specs = [SymmetricSpaceSpec(2, (1, -1)), SymmetricSpaceSpec(3, (1, -1, 1)), SymmetricSpaceSpec(4, (1, -1, 1, -1))]
    worst = 0.0
    for i in range(20):
        eta = random_nilpotent(rng, specs[i % 3], rational=(i % 4 == 3))
        fr = build_extended_frame(eta, square_grid(0.2, 0.05, 7))
        sp = normalized_potential_from_frame(fr)
        assert sp.valid.sum() == 25
        worst = max(worst, sp.distance_to(eta), sp.max_structure_residual())
    return record(5, "Potential round trip", worst < 1e-6, f"20 examples, max deviation {worst:.2e}", t0)


def criterion_6():
    t0 = time.perf_counter()
    pairs = []
    for steps in (11, 21):
        fr = build_extended_frame(CP1, square_grid(PATCH, 0.1, steps))
        pairs.append((fr, extended_solution(fr), cartan_embed(fr)))
    fr, phi, mm = pairs[1]
    at_one = phi.at_one_is_identity()
    at_minus = lambda_minus_one_residual(phi, mm).max_residual
    es = with_convergence(*(extended_solution_residual(p, m) for _, p, m in pairs))
    A = a_at_minus_one(fr)
    ok = at_one < 1e-10 and at_minus < 1e-10 and es.convergence_order >= 1.9 and A < 1e-6
    return record(6, "Extended-solution relations", ok,
                  f"Phi(1) {at_one:.2e}, Phi(-1) {at_minus:.2e}, es order {es.convergence_order:.3f}, "
                  f"A(lam,-1) {A:.2e}", t0)


def criterion_7():
    t0 = time.perf_counter()
    eta = make_potential(SPEC2, {-1: [[0, "1/z"], [0, 0]]}, basepoint=1)
    rec = monodromy(eta, circle_path(0, 1))
    err = max(float(np.abs(chi - (np.eye(2) + 2j * np.pi / lam * E12)).max()) for lam, chi in zip(rec.lams, rec.chi))
    ok = len(rec.lams) == 32 and err < 1e-6
    return record(7, "Monodromy closed form", ok, f"{len(rec.lams)} lambda samples, max error {err:.2e}", t0)


def criterion_8():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    # dressings with a large constant part rescale z, so the patch must be small
    # for step halving to see the asymptotic order
    frames = [build_extended_frame(CP1, square_grid(PATCH, 0.015, s)) for s in (11, 21)]
    worst_order, worst_rt, laurent = np.inf, 0.0, True
    for _ in range(20):
        hp = random_twisted_loop(rng, SPEC2, lo=0, hi=2, eps=0.3)
        d = [dress(hp, f) for f in frames]
        laurent &= all(x.is_laurent() and x.in_cell.all() for x in d)
        for _, F in d[1].points():
            worst_rt = max(worst_rt, twist_residual(F, SPEC2), reality_residual(F, SPEC2))
        res = [maurer_cartan_residual(x).residuals for x in d]
        worst_order = min(worst_order, min(convergence_order(a, b) for a, b in zip(*res)))
    ok = laurent and worst_rt < 1e-8 and worst_order >= 1.9
    return record(8, "Dressing stability", ok,
                  f"20 dressings, twist/reality {worst_rt:.2e}, min MC order {worst_order:.3f}", t0)


def disk_points(radius=0.8, rings=8, spokes=24):
    r = np.linspace(0, radius, rings + 1)[1:, None]
    return np.concatenate([[0j], (r * np.exp(2j * np.pi * np.arange(spokes) / spokes)).ravel()])[None]


def criterion_9():
    t0 = time.perf_counter()
    eta = Potential(SU11, CP1.terms, 0j, "normalized")
    fr = build_extended_frame(eta, disk_points())
    comp = dualize(fr)
    back = dualize(comp, SU11)
    rt = max(back.frames[i].distance(F) for i, F in fr.points())
    cells = fr.in_cell.all() and comp.in_cell.all() and back.in_cell.all()
    compact = max(reality_residual(F, comp.spec) for _, F in comp.points())
    rng = np.random.default_rng(9)
    specs = [SU11, SymmetricSpaceSpec(3, (1, -1, 1), "indefinite", 2, 1)]
    flags_equal = 0
    for i in range(20):
        e = random_nilpotent(rng, specs[i % 2])
        f = build_extended_frame(e, square_grid(0.1, 0.1, 5))
        c = dualize(f)
        flags_equal += (algebraicity_certificate(f) == algebraicity_certificate(c)
                        and c.in_cell.sum() == f.in_cell.sum())
    ok = cells and rt < 1e-6 and compact < 1e-8 and flags_equal == 20
    return record(9, "Duality round trip", ok,
                  f"round trip {rt:.2e} on |z| <= 0.8, flags equal {flags_equal}/20", t0)


def criterion_10():
    t0 = time.perf_counter()
    fr = build_extended_frame(CP1, square_grid(PATCH, 0.1, 11))
    v_cp1 = is_finite_uniton_type(fr, [])
    eta = make_potential(SPEC2, {-1: [[0, "1/z"], [0, 0]]}, basepoint=1)
    rec = monodromy(eta, circle_path(0, 1), label="unit circle")
    flog = build_extended_frame(eta, square_grid(1.5, 0.1, 5))
    v_log = is_finite_uniton_type(flog, [rec])
    ok = (v_cp1 == {"algebraic": True, "totallySymmetric": True, "finiteUnitonType": True}
          and rec.max_deviation > 1e-2 and v_log["totallySymmetric"] is False)
    return record(10, "Classification verdict", ok,
                  f"CP1 {v_cp1}; log pole deviation {rec.max_deviation:.3f}, totallySymmetric "
                  f"{v_log['totallySymmetric']}", t0)


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


def _line(n):
    title, ok, detail, dt = RESULTS[n]
    return f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail} [{dt:.1f} s]"


def test_criterion_1():
    assert criterion_1(), _line(1)


def test_criterion_2():
    assert criterion_2(), _line(2)


def test_criterion_3():
    assert criterion_3(), _line(3)


def test_criterion_4():
    assert criterion_4(), _line(4)


def test_criterion_5():
    assert criterion_5(), _line(5)


def test_criterion_6():
    assert criterion_6(), _line(6)


def test_criterion_7():
    assert criterion_7(), _line(7)


def test_criterion_8():
    assert criterion_8(), _line(8)


def test_criterion_9():
    assert criterion_9(), _line(9)


def test_criterion_10():
    assert criterion_10(), _line(10)


def test_each_criterion_under_a_minute():
    slow = [n for n, r in RESULTS.items() if r[3] >= 60]
    assert not slow, f"criteria over 60 s: {slow}"


if __name__ == "__main__":
    failed = 0
    for fn in CRITERIA:
        try:
            fn()
        except Exception as e:  # report and keep going
            n = int(fn.__name__.split("_")[1])
            RESULTS[n] = (fn.__name__, False, f"{type(e).__name__}: {e}", 0.0)
        n = int(fn.__name__.split("_")[1])
        failed += not RESULTS[n][1]
        print(_line(n))
    sys.exit(1 if failed else 0)
