"""Potentials, the loop ODE dC = C eta, and extended frame fields on planar grids."""
from __future__ import annotations

import graphlib
import json
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping, Sequence

import numpy as np
import sympy
from scipy.integrate import solve_ivp

from .errors import (
    ConfigError,
    DomainError,
    InvariantViolation,
    ModeError,
    NotInBigCell,
    NotUnimodular,
    PoleOnPath,
    ShapeError,
)
from .factor import birkhoff, try_iwasawa
from .loopalg import LaurentMatrix, SymmetricSpaceSpec, inverse, multiply, twist_residual

Z = sympy.Symbol("z")
PARITY_TOL = 1e-10
TAIL_TOL = 1e-10
POTENTIAL_TOL = 1e-6
COARSE_STEP = 0.1


# ---------------------------------------------------------------------------
# rational coefficient functions
# ---------------------------------------------------------------------------


def _exact_number(x) -> sympy.Expr:
    """Exact sympy value of a JSON scalar, ``[re, im]`` pair or expression string."""
    if isinstance(x, bool):
        raise TypeError("booleans are not numbers")
    if isinstance(x, int):
        return sympy.Integer(x)
    if isinstance(x, float):
        return sympy.Rational(Fraction(x))
    if isinstance(x, (list, tuple)) and len(x) == 2 and all(isinstance(v, (int, float)) for v in x):
        return _exact_number(x[0]) + sympy.I * _exact_number(x[1])
    if isinstance(x, str):
        return sympy.sympify(x, locals={"z": Z, "i": sympy.I, "j": sympy.I})
    if isinstance(x, complex):
        return _exact_number(x.real) + sympy.I * _exact_number(x.imag)
    if isinstance(x, sympy.Expr):
        return x
    raise TypeError(f"cannot read {x!r} as a number")


@dataclass(frozen=True)
class RationalFunction:
    """``num(z) / den(z)`` with ascending exact coefficient tuples."""

    num: tuple
    den: tuple = (sympy.Integer(1),)

    def __post_init__(self):
        num = tuple(sympy.nsimplify(c) if isinstance(c, float) else sympy.sympify(c) for c in self.num) or (sympy.Integer(0),)
        den = tuple(sympy.nsimplify(c) if isinstance(c, float) else sympy.sympify(c) for c in self.den)
        if all(c == 0 for c in den):
            raise DomainError("denominator is identically zero")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)
        object.__setattr__(self, "_num_c", np.array([complex(c) for c in num])[::-1])
        object.__setattr__(self, "_den_c", np.array([complex(c) for c in den])[::-1])

    @classmethod
    def from_expr(cls, expr) -> "RationalFunction":
        expr = sympy.cancel(sympy.together(sympy.sympify(expr)))
        if expr.free_symbols - {Z}:
            raise DomainError(f"coefficient {expr} depends on symbols other than z")
        n, d = sympy.fraction(expr)
        try:
            pn, pd = sympy.Poly(n, Z), sympy.Poly(d, Z)
        except sympy.PolynomialError:
            raise DomainError(f"coefficient {expr} is not a rational function of z") from None
        lc = pd.LC()
        return cls(tuple(c / lc for c in pn.all_coeffs()[::-1]), tuple(c / lc for c in pd.all_coeffs()[::-1]))

    @classmethod
    def constant(cls, c) -> "RationalFunction":
        return cls((_exact_number(c),))

    @property
    def expr(self) -> sympy.Expr:
        return sum(c * Z**k for k, c in enumerate(self.num)) / sum(c * Z**k for k, c in enumerate(self.den))

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.num)

    def is_polynomial(self) -> bool:
        return all(c == 0 for c in self.den[1:])

    def poly_coeffs(self, exact: bool = False) -> list:
        """Ascending polynomial coefficients; requires a constant denominator."""
        if not self.is_polynomial():
            raise ModeError("coefficient is not a polynomial in z")
        d0 = self.den[0]
        if exact:
            return [sympy.nsimplify(c / d0) for c in self.num]
        return [complex(c / d0) for c in self.num]

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return np.polyval(self._num_c, z) / np.polyval(self._den_c, z)

    def poles(self) -> np.ndarray:
        if self.is_polynomial():
            return np.zeros(0, dtype=complex)
        den = np.trim_zeros(self._den_c, "f")
        return np.roots(den) if den.size > 1 else np.zeros(0, dtype=complex)

    def to_json(self):
        def pair(c):
            c = complex(c)
            return [c.real, c.imag]

        num = [pair(c) for c in self.num]
        if self.is_polynomial() and self.den == (sympy.Integer(1),):
            return num
        return {"num": num, "den": [pair(c) for c in self.den]}


def _parse_entry(x, path: str) -> RationalFunction:
    try:
        if isinstance(x, (int, float)) and not isinstance(x, bool):
            return RationalFunction.constant(x)
        if isinstance(x, str):
            return RationalFunction.from_expr(_exact_number(x))
        if isinstance(x, list):
            return RationalFunction(tuple(_exact_number(c) for c in x))
        if isinstance(x, Mapping):
            if set(x) != {"num", "den"}:
                raise ConfigError("rational entries need exactly the keys 'num' and 'den'", path=path)
            num = tuple(_exact_number(c) for c in x["num"])
            den = tuple(_exact_number(c) for c in x["den"])
            return RationalFunction.from_expr(
                sum(c * Z**k for k, c in enumerate(num)) / sum(c * Z**k for k, c in enumerate(den))
            )
    except ConfigError:
        raise
    except (TypeError, ValueError, DomainError, sympy.SympifyError) as e:
        raise ConfigError(f"cannot read matrix entry: {e}", path=path) from None
    raise ConfigError(f"unsupported matrix entry {x!r}", path=path)


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PotentialTerm:
    power: int
    matrix: tuple  # n x n tuple of RationalFunction

    def values(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        n = len(self.matrix)
        out = np.zeros(z.shape + (n, n), dtype=complex)
        for a in range(n):
            for b in range(n):
                if not self.matrix[a][b].is_zero():
                    out[..., a, b] = self.matrix[a][b](z)
        return out


@dataclass(frozen=True)
class Potential:
    """A lambda-graded matrix one-form ``eta = sum_j lam**j A_j(z) dz``.

    ``kind`` is ``"normalized"`` (a single p-valued lam^-1 term) or
    ``"holomorphic"`` (powers >= -1 with the twisting parity).
    """

    spec: SymmetricSpaceSpec
    terms: tuple
    basepoint: complex = 0j
    kind: str = "normalized"

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def powers(self) -> list[int]:
        return sorted({t.power for t in self.terms})

    def coefficients(self, z) -> dict[int, np.ndarray]:
        """``{power: A_j(z)}`` evaluated (vectorized over z)."""
        out: dict[int, np.ndarray] = {}
        for t in self.terms:
            v = t.values(z)
            out[t.power] = out[t.power] + v if t.power in out else v
        return out

    def at(self, z, lam) -> np.ndarray:
        """eta(z, lam) as a matrix (broadcast over lam)."""
        lam = np.asarray(lam, dtype=complex)
        A = self.coefficients(z)
        out = np.zeros(lam.shape + (self.n, self.n), dtype=complex)
        for j, M in A.items():
            out = out + (lam**j)[..., None, None] * M
        return out

    def is_polynomial(self) -> bool:
        return all(e.is_polynomial() for t in self.terms for row in t.matrix for e in row)

    def is_zero(self) -> bool:
        return all(e.is_zero() for t in self.terms for row in t.matrix for e in row)

    def poles(self) -> np.ndarray:
        ps = [e.poles() for t in self.terms for row in t.matrix for e in row]
        ps = [p for p in ps if p.size]
        return np.unique(np.round(np.concatenate(ps), 12)) if ps else np.zeros(0, dtype=complex)

    def support_pattern(self) -> np.ndarray:
        """Boolean n x n union of entries that are not identically zero."""
        S = np.zeros((self.n, self.n), dtype=bool)
        for t in self.terms:
            for a in range(self.n):
                for b in range(self.n):
                    S[a, b] |= not t.matrix[a][b].is_zero()
        return S

    def to_json(self) -> dict:
        d = self.spec.to_dict()
        b = complex(self.basepoint)
        d.update(
            kind=self.kind,
            basepoint=[b.real, b.imag],
            terms=[{"power": t.power, "matrix": [[e.to_json() for e in row] for row in t.matrix]} for t in self.terms],
        )
        return d


def make_potential(
    spec: SymmetricSpaceSpec,
    terms: Mapping[int, Sequence[Sequence[Any]]],
    basepoint: complex = 0j,
    kind: str | None = None,
    validate: bool = True,
) -> Potential:
    """Build a potential from ``{power: n x n entries}``.

    Entries may be numbers, sympy expressions in ``z``, expression strings or
    :class:`RationalFunction` objects.
    """
    ts = []
    for j, M in sorted(terms.items()):
        rows = []
        for a, row in enumerate(M):
            rr = []
            for b, e in enumerate(row):
                if isinstance(e, np.generic):
                    e = e.item()
                if isinstance(e, RationalFunction):
                    rr.append(e)
                elif isinstance(e, (sympy.Expr, str)) or (isinstance(e, complex)):
                    rr.append(RationalFunction.from_expr(_exact_number(e)))
                else:
                    rr.append(_parse_entry(e, f"terms[{j}][{a}][{b}]"))
            rows.append(tuple(rr))
        ts.append(PotentialTerm(int(j), tuple(rows)))
    if kind is None:
        kind = "normalized" if [t.power for t in ts] == [-1] else "holomorphic"
    eta = Potential(spec, tuple(ts), complex(basepoint), kind)
    if validate:
        validate_potential(eta)
    return eta


def validate_potential(eta: Potential, samples: int = 16, seed: int = 0, tol: float = PARITY_TOL) -> None:
    """Check the structural invariants of a potential at random z samples.

    Raises
    ------
    InvariantViolation
        Naming the failing term and sample.
    """
    n = eta.n
    for i, t in enumerate(eta.terms):
        if len(t.matrix) != n or any(len(r) != n for r in t.matrix):
            raise InvariantViolation(f"term {i}: matrix is not {n} x {n}")
        if t.power < -1:
            raise InvariantViolation(f"term {i}: power {t.power} not allowed; powers >= -1")
    if eta.kind not in ("normalized", "holomorphic"):
        raise InvariantViolation(f"unknown potential kind {eta.kind!r}")
    if eta.kind == "normalized" and [t.power for t in eta.terms] != [-1]:
        raise InvariantViolation("a normalized potential has exactly one term, of power -1")
    rng = np.random.default_rng(seed)
    poles = eta.poles()
    zs = []
    while len(zs) < samples:
        z = eta.basepoint + complex(rng.standard_normal(), rng.standard_normal())
        if poles.size == 0 or np.min(np.abs(poles - z)) > 1e-3:
            zs.append(z)
    H = eta.spec.H
    for i, t in enumerate(eta.terms):
        odd = t.power % 2 == 1
        for z in zs:
            A = t.values(z)
            scale = max(1.0, float(np.abs(A).max()))
            bad = A + H @ A @ H if odd else A - H @ A @ H  # component of the wrong parity (times 2)
            if np.abs(bad).max() > tol * scale:
                part = "p" if odd else "k"
                raise InvariantViolation(
                    f"term {i} (power {t.power}): coefficient is not {part}^C-valued at sample z = {z:.6g}"
                )


def _load_json(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg}", line=e.lineno, column=e.colno) from None


def potential_from_dict(d: Mapping, validate: bool = True) -> Potential:
    if not isinstance(d, Mapping):
        raise ConfigError("potential file must hold a JSON object", path="$")
    allowed = {"n", "h", "realForm", "p", "q", "kind", "basepoint", "terms", "term"}
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"unknown keys {sorted(extra)}", path="$")
    try:
        spec = SymmetricSpaceSpec.from_dict(d)
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e), path="$") from None
    raw_terms = d.get("terms")
    if raw_terms is None and "term" in d:
        raw_terms = [d["term"]]
    if not isinstance(raw_terms, list) or not raw_terms:
        raise ConfigError("potential needs a nonempty 'terms' list", path="$.terms")
    ts = []
    for i, t in enumerate(raw_terms):
        p = f"$.terms[{i}]"
        if not isinstance(t, Mapping) or "power" not in t or "matrix" not in t:
            raise ConfigError("each term needs 'power' and 'matrix'", path=p)
        M = t["matrix"]
        if not isinstance(M, list) or len(M) != spec.n or any(not isinstance(r, list) or len(r) != spec.n for r in M):
            raise ConfigError(f"matrix must be {spec.n} x {spec.n}", path=p + ".matrix")
        rows = tuple(
            tuple(_parse_entry(e, f"{p}.matrix[{a}][{b}]") for b, e in enumerate(row)) for a, row in enumerate(M)
        )
        try:
            power = int(t["power"])
        except (TypeError, ValueError):
            raise ConfigError("power must be an integer", path=p + ".power") from None
        ts.append(PotentialTerm(power, rows))
    bp = d.get("basepoint", [0, 0])
    try:
        z0 = complex(_exact_number(bp)) if not isinstance(bp, (int, float)) else complex(bp)
    except TypeError:
        raise ConfigError("basepoint must be a number or [re, im]", path="$.basepoint") from None
    kind = d.get("kind") or ("normalized" if [t.power for t in ts] == [-1] else "holomorphic")
    eta = Potential(spec, tuple(ts), z0, kind)
    if validate:
        validate_potential(eta)
    return eta


def parse_potential(text: str, validate: bool = True) -> Potential:
    """Read a potential from its JSON text and validate it."""
    return potential_from_dict(_load_json(text), validate=validate)


# ---------------------------------------------------------------------------
# nilpotent Picard iteration
# ---------------------------------------------------------------------------


def _zpoly_mul(P: np.ndarray, A: np.ndarray) -> np.ndarray:
    out = np.zeros((P.shape[0] + A.shape[0] - 1,) + P.shape[1:], dtype=P.dtype)
    if P.dtype == object:
        out[...] = sympy.Integer(0)
    for a in range(P.shape[0]):
        out[a: a + A.shape[0]] = out[a: a + A.shape[0]] + np.matmul(P[a], A)
    return out


def _zpoly_integrate(P: np.ndarray, z0) -> np.ndarray:
    """Antiderivative vanishing at z0."""
    out = np.zeros((P.shape[0] + 1,) + P.shape[1:], dtype=P.dtype)
    if P.dtype == object:
        out[...] = sympy.Integer(0)
    for k in range(P.shape[0]):
        out[k + 1] = P[k] / (k + 1) if P.dtype != object else P[k] * sympy.Rational(1, k + 1)
    val = out[0].copy()
    for k in range(1, out.shape[0]):
        val = val + out[k] * z0**k
    out[0] = -val
    if P.dtype == object:
        out = np.vectorize(sympy.expand, otypes=[object])(out)
    return out


def _zpoly_is_zero(P: np.ndarray) -> bool:
    if P.dtype == object:
        return all(x == 0 for x in P.ravel())
    return not np.any(P != 0)


def _zpoly_eval(P: np.ndarray, z):
    """Evaluate a matrix polynomial in z; z may be an array (complex mode)."""
    if P.dtype == object:
        out = P[-1]
        for k in range(P.shape[0] - 2, -1, -1):
            out = out * z + P[k]
        return np.vectorize(sympy.expand, otypes=[object])(out)
    z = np.asarray(z, dtype=complex)
    out = np.zeros(z.shape + P.shape[1:], dtype=complex)
    for k in range(P.shape[0] - 1, -1, -1):
        out = out * z[..., None, None] + P[k]
    return out


def nilpotent_order(eta: Potential) -> tuple[list[int], int]:
    """A flag order making every coefficient strictly upper triangular, and the path bound.

    Returns the index order and the longest chain length in the support graph
    (an upper bound for the number of nonzero Picard terms).

    Raises
    ------
    ModeError
        If the support graph has a cycle, i.e. no common nilpotent flag exists.
    """
    S = eta.support_pattern()
    n = eta.n
    if np.any(np.diag(S)):
        raise ModeError("nilpotency pattern violated: a diagonal entry is nonzero")
    ts = graphlib.TopologicalSorter({b: [a for a in range(n) if S[a, b]] for b in range(n)})
    try:
        order = list(ts.static_order())
    except graphlib.CycleError:
        raise ModeError("nilpotency pattern violated: coefficients share no strictly triangular flag") from None
    longest = {v: 0 for v in range(n)}
    for v in order:
        for a in range(n):
            if S[a, v]:
                longest[v] = max(longest[v], longest[a] + 1)
    return order, max(longest.values())


@dataclass(frozen=True)
class PicardSeries:
    """The terminating Picard expansion ``C = I + T_1 + ... + T_nu`` as polynomials in z.

    ``total`` maps each lambda power to a matrix polynomial in z, stored as an
    ascending coefficient stack.
    """

    n: int
    basepoint: Any
    total: dict
    steps: int
    exact: bool

    def __call__(self, z) -> LaurentMatrix:
        if self.exact:
            zz = _exact_number(z) if not isinstance(z, sympy.Expr) else z
            terms = {j: _zpoly_eval(P, zz) for j, P in self.total.items()}
            return LaurentMatrix.from_dict(terms)
        terms = {j: _zpoly_eval(P, complex(z)) for j, P in self.total.items()}
        return LaurentMatrix.from_dict(terms)

    def coefficients_at(self, z) -> tuple[np.ndarray, int]:
        """Coefficient stacks at an array of z: returns ``(stack, lo)`` with shape z.shape + (m, n, n)."""
        z = np.asarray(z, dtype=complex)
        lo, hi = min(self.total), max(self.total)
        out = np.zeros(z.shape + (hi - lo + 1, self.n, self.n), dtype=complex)
        for j, P in self.total.items():
            Pc = P.astype(complex) if P.dtype != object else np.vectorize(complex, otypes=[complex])(P)
            out[..., j - lo, :, :] = _zpoly_eval(Pc, z)
        return out, lo


def picard_series(eta: Potential, exact: bool = False) -> PicardSeries:
    """Run the Picard iteration symbolically in z for a nilpotent polynomial potential.

    Raises
    ------
    ModeError
        If a coefficient is not polynomial or the nilpotency pattern fails.
    """
    if not eta.is_polynomial():
        raise ModeError("exactNilpotent mode needs polynomial coefficients")
    _, bound = nilpotent_order(eta)
    n = eta.n
    dtype = object if exact else complex
    z0 = sympy.nsimplify(eta.basepoint) if exact else complex(eta.basepoint)
    polys: dict[int, np.ndarray] = {}
    for t in eta.terms:
        cols = [[t.matrix[a][b].poly_coeffs(exact) for b in range(n)] for a in range(n)]
        deg = max(len(c) for row in cols for c in row)
        P = np.zeros((deg, n, n), dtype=dtype)
        if exact:
            P[...] = sympy.Integer(0)
        for a in range(n):
            for b in range(n):
                for k, c in enumerate(cols[a][b]):
                    P[k, a, b] = c
        if t.power in polys:
            A = polys[t.power]
            m = max(A.shape[0], P.shape[0])
            A2 = np.zeros((m, n, n), dtype=dtype)
            if exact:
                A2[...] = sympy.Integer(0)
            A2[: A.shape[0]] += A
            A2[: P.shape[0]] += P
            polys[t.power] = A2
        else:
            polys[t.power] = P
    one = np.array(sympy.eye(n).tolist(), dtype=object) if exact else np.eye(n, dtype=complex)
    T = {0: one[None]}
    total = {0: one[None]}
    steps = 0
    while True:
        new: dict[int, np.ndarray] = {}
        for p, P in T.items():
            for j, A in polys.items():
                prod = _zpoly_mul(P, A)
                if p + j in new:
                    a, b = new[p + j], prod
                    m = max(a.shape[0], b.shape[0])
                    c = np.zeros((m, n, n), dtype=dtype)
                    if exact:
                        c[...] = sympy.Integer(0)
                    c[: a.shape[0]] += a
                    c[: b.shape[0]] += b
                    new[p + j] = c
                else:
                    new[p + j] = prod
        new = {k: _zpoly_integrate(v, z0) for k, v in new.items()}
        new = {k: v for k, v in new.items() if not _zpoly_is_zero(v)}
        if not new:
            break
        steps += 1
        if steps > bound:
            raise ModeError("Picard iteration did not terminate within the nilpotency bound")
        T = new
        for k, v in new.items():
            if k in total:
                a = total[k]
                m = max(a.shape[0], v.shape[0])
                c = np.zeros((m, n, n), dtype=dtype)
                if exact:
                    c[...] = sympy.Integer(0)
                c[: a.shape[0]] += a
                c[: v.shape[0]] += v
                total[k] = c
            else:
                total[k] = v
    return PicardSeries(n, z0, total, steps, exact)


# ---------------------------------------------------------------------------
# numeric Picard
# ---------------------------------------------------------------------------


def check_segment(eta: Potential, a: complex, b: complex, tol: float = 1e-9) -> None:
    """Raise PoleOnPath if the straight segment a -> b meets a pole of eta."""
    poles = eta.poles()
    if poles.size == 0:
        return
    d = b - a
    for p in poles:
        if d == 0:
            dist = abs(p - a)
        else:
            t = np.clip(((p - a) * np.conj(d)).real / abs(d) ** 2, 0.0, 1.0)
            dist = abs(a + t * d - p)
        if dist < tol * (1 + abs(p)):
            raise PoleOnPath(
                f"segment {a:.6g} -> {b:.6g} passes within {dist:.2e} of the pole at {p:.6g}; re-route the path"
            )


@dataclass(frozen=True)
class NumericPicard:
    loop: LaurentMatrix
    tail: float
    window: tuple[int, int]


def numeric_picard(
    eta: Potential,
    target: complex,
    start: complex | None = None,
    initial: LaurentMatrix | None = None,
    tail_tol: float = TAIL_TOL,
    max_scale: int = 64,
    rtol: float = 1e-11,
    atol: float = 1e-13,
) -> NumericPicard:
    """Integrate the coefficient-truncated system along the straight segment.

    The lambda window is ``[lo * s, hi * s]`` with ``s`` doubled until the
    outermost coefficients have norm below ``tail_tol`` or ``s`` reaches
    ``max_scale``; the returned ``tail`` says which happened.
    """
    z0 = eta.basepoint if start is None else complex(start)
    target = complex(target)
    check_segment(eta, z0, target)
    n = eta.n
    init = LaurentMatrix.identity(n) if initial is None else initial.to_complex()
    pw = eta.powers
    lo_e, hi_e = min(min(pw), 0), max(max(pw), 0)
    dz = target - z0
    s = 2
    while True:
        L = min(lo_e * s, init.lo)
        U = max(hi_e * s, init.hi)
        m = U - L + 1
        y0 = init.padded(L, U)
        if dz == 0:
            C = y0
        else:
            def rhs(t, y):
                Cs = y.reshape(m, n, n)
                out = np.zeros_like(Cs)
                for j, A in eta.coefficients(z0 + t * dz).items():
                    # (C A)_k gains C_{k-j} A_j
                    if j >= 0:
                        out[j:] += Cs[: m - j] @ A
                    else:
                        out[: m + j] += Cs[-j:] @ A
                return (out * dz).ravel()

            sol = solve_ivp(rhs, (0.0, 1.0), y0.ravel(), method="DOP853", rtol=rtol, atol=atol)
            if not sol.success:
                raise PoleOnPath(f"integration failed on {z0:.6g} -> {target:.6g}: {sol.message}")
            C = sol.y[:, -1].reshape(m, n, n)
        norms = np.sqrt(np.sum(np.abs(C) ** 2, axis=(1, 2)))
        edge = []
        if lo_e < 0 and L < init.lo:
            edge.extend(norms[: -lo_e])
        if hi_e > 0 and U > init.hi:
            edge.extend(norms[m - hi_e:])
        tail = float(max(edge)) if edge else 0.0
        if tail < tail_tol or s >= max_scale:
            return NumericPicard(LaurentMatrix(C, L), tail, (L, U))
        s *= 2


def picard_integrate(
    eta: Potential,
    target,
    mode: str = "numeric",
    exact: bool = False,
    **kw,
) -> LaurentMatrix:
    """Solve dC = C eta with C(z0) = I and return C(target).

    Parameters
    ----------
    mode : {"exactNilpotent", "numeric"}
        ``exactNilpotent`` runs the terminating Picard iteration on polynomial
        coefficients; with ``exact=True`` all arithmetic is rational.
    """
    if mode == "exactNilpotent":
        return picard_series(eta, exact=exact)(target)
    if mode == "numeric":
        return numeric_picard(eta, complex(target), **kw).loop
    raise ModeError(f"unknown Picard mode {mode!r}")


def transport(
    eta: Potential,
    vertices: Sequence[complex],
    lams: np.ndarray,
    initial: np.ndarray | None = None,
    rtol: float = 1e-11,
    atol: float = 1e-13,
) -> np.ndarray:
    """Pointwise-in-lambda solution of dC = C eta along a polygon.

    Returns the end values, shape ``lams.shape + (n, n)``.
    """
    lams = np.asarray(lams, dtype=complex)
    n = eta.n
    m = lams.size
    C = np.broadcast_to(np.eye(n, dtype=complex), (m, n, n)).copy() if initial is None else np.array(initial).reshape(m, n, n).astype(complex)
    flat = lams.ravel()
    for a, b in zip(vertices[:-1], vertices[1:]):
        a, b = complex(a), complex(b)
        if a == b:
            continue
        check_segment(eta, a, b)
        d = b - a

        def rhs(t, y):
            Cs = y.reshape(m, n, n)
            return (Cs @ eta.at(a + t * d, flat) * d).ravel()

        sol = solve_ivp(rhs, (0.0, 1.0), C.ravel(), method="DOP853", rtol=rtol, atol=atol)
        if not sol.success:
            raise PoleOnPath(f"integration failed on {a:.6g} -> {b:.6g}: {sol.message}")
        C = sol.y[:, -1].reshape(m, n, n)
    return C.reshape(lams.shape + (n, n))


# ---------------------------------------------------------------------------
# grids and frame fields
# ---------------------------------------------------------------------------


def square_grid(center: complex = 0j, radius: float = 1.0, steps: int = 21) -> np.ndarray:
    """``steps x steps`` grid on the square of half-width ``radius``; rows run along y."""
    x = np.linspace(-radius, radius, steps)
    X, Y = np.meshgrid(x, x)
    return complex(center) + X + 1j * Y


def grid_steps(z: np.ndarray) -> tuple[float, float]:
    """(dx, dy) of a regular rectangular grid.

    Raises
    ------
    ShapeError
        If the grid is not a regular lattice with rows along y.
    """
    z = np.asarray(z)
    if z.ndim != 2 or z.shape[0] < 3 or z.shape[1] < 3:
        raise ShapeError("finite differences need a rectangular grid with at least 3 x 3 points")
    dx = z[0, 1] - z[0, 0]
    dy = z[1, 0] - z[0, 0]
    ok_x = np.allclose(np.diff(z, axis=1), dx, atol=1e-12) and abs(dx.imag) < 1e-12
    ok_y = np.allclose(np.diff(z, axis=0), dy, atol=1e-12) and abs(dy.real) < 1e-12
    if not (ok_x and ok_y):
        raise ShapeError("grid mismatch: points do not form a regular lattice")
    return float(dx.real), float(dy.imag)


@dataclass
class FrameField:
    """Extended frames on a planar grid.

    Attributes
    ----------
    z : ndarray, shape (ny, nx)
        Grid points.
    frames : ndarray of object, shape (ny, nx)
        LaurentMatrix per point, ``None`` where excluded.
    in_cell : ndarray of bool
        Exclusion mask (False where the Iwasawa splitting failed).
    tails : ndarray of float
        Truncation tail of the Picard solve per point (0 for exact series).
    """

    z: np.ndarray
    frames: np.ndarray
    in_cell: np.ndarray
    spec: SymmetricSpaceSpec
    basepoint: complex = 0j
    provenance: str = "fromPotential"
    basepoint_normalized: bool = True
    tails: np.ndarray | None = None
    reasons: dict = field(default_factory=dict)

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=complex)
        if self.z.ndim == 1:
            self.z = self.z[None]
        self.frames = np.asarray(self.frames, dtype=object).reshape(self.z.shape)
        self.in_cell = np.asarray(self.in_cell, dtype=bool).reshape(self.z.shape)
        if self.tails is None:
            self.tails = np.zeros(self.z.shape)

    @property
    def shape(self):
        return self.z.shape

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def basepoint_index(self):
        d = np.abs(self.z - self.basepoint)
        idx = np.unravel_index(np.argmin(d), d.shape)
        return idx if d[idx] < 1e-12 else None

    def points(self):
        for idx in np.ndindex(self.shape):
            if self.in_cell[idx]:
                yield idx, self.frames[idx]

    def values(self, lam) -> np.ndarray:
        """Frames evaluated at one lambda; NaN where excluded."""
        out = np.full(self.shape + (self.n, self.n), np.nan, dtype=complex)
        for idx, F in self.points():
            out[idx] = F(lam)
        return out

    def is_laurent(self, tol: float = TAIL_TOL) -> bool:
        return bool(np.all(self.tails < tol))

    def degree_spread(self) -> tuple[int, int]:
        los = [F.lo for _, F in self.points()]
        his = [F.hi for _, F in self.points()]
        return (min(los), max(his)) if los else (0, 0)

    def replace(self, frames, in_cell, provenance, reasons=None) -> "FrameField":
        return FrameField(self.z, frames, in_cell, self.spec, self.basepoint, provenance,
                          self.basepoint_normalized, self.tails.copy(), reasons or {})

    def to_json(self) -> list:
        out = []
        for idx in np.ndindex(self.shape):
            z = self.z[idx]
            F = self.frames[idx]
            out.append({
                "z": [float(z.real), float(z.imag)],
                "frame": F.to_json() if self.in_cell[idx] and F is not None else None,
                "inCell": bool(self.in_cell[idx]),
            })
        return out

    @classmethod
    def from_json(cls, data: list, spec: SymmetricSpaceSpec, basepoint: complex = 0j,
                  provenance: str = "fromPotential") -> "FrameField":
        """Rebuild a field; the rectangular lattice is recovered from the point set."""
        if not isinstance(data, list) or not data:
            raise ConfigError("frame file must hold a nonempty JSON array", path="$")
        zs = np.array([complex(*p["z"]) for p in data])
        xs = np.unique(np.round(zs.real, 12))
        ys = np.unique(np.round(zs.imag, 12))
        if xs.size * ys.size == len(data):
            shape = (ys.size, xs.size)
            order = np.lexsort((np.round(zs.real, 12), np.round(zs.imag, 12)))
        else:
            shape = (1, len(data))
            order = np.arange(len(data))
        frames = np.empty(len(data), dtype=object)
        inc = np.zeros(len(data), dtype=bool)
        for k, i in enumerate(order):
            p = data[i]
            inc[k] = bool(p.get("inCell", p.get("frame") is not None))
            frames[k] = LaurentMatrix.from_json(p["frame"]) if p.get("frame") is not None else None
        return cls(zs[order].reshape(shape), frames.reshape(shape), inc.reshape(shape), spec, basepoint, provenance)


def _frame_from_C(C: LaurentMatrix, spec: SymmetricSpaceSpec, U0inv: np.ndarray | None):
    r = try_iwasawa(C, spec)
    if not r.ok:
        return None, r.reason
    F = r.unitary
    return (F if U0inv is None else U0inv @ F), ""


def build_extended_frame(
    eta: Potential,
    grid: np.ndarray,
    mode: str = "auto",
    initial: LaurentMatrix | None = None,
    tail_tol: float = TAIL_TOL,
    max_scale: int = 64,
    normalize: bool = True,
) -> FrameField:
    """Integrate eta to every grid point and split off the extended frame.

    Parameters
    ----------
    mode : {"auto", "exactNilpotent", "numeric"}
        ``auto`` uses the terminating series when the potential is nilpotent
        with polynomial coefficients.
    initial : LaurentMatrix, optional
        Value of C at the basepoint (default identity).
    normalize : bool
        Left-multiply by the inverse unitary part of ``initial`` so that the
        frame is the identity at the basepoint.  Switch off to keep the frame
        of ``initial @ C`` as is (used for continuation along a closed path).
    """
    grid = np.asarray(grid, dtype=complex)
    if grid.ndim == 1:
        grid = grid[None]
    spec = eta.spec
    n = spec.n
    if mode == "auto":
        try:
            nilpotent_order(eta)
            mode = "exactNilpotent" if eta.is_polynomial() else "numeric"
        except ModeError:
            mode = "numeric"
    W = None if initial is None else initial.to_complex()
    U0inv = None
    if W is not None and normalize:
        r0 = try_iwasawa(W, spec)
        if not r0.ok:
            raise InvariantViolation(f"initial value is outside the Iwasawa cell: {r0.reason}")
        U0inv = inverse(r0.unitary)
    frames = np.empty(grid.shape, dtype=object)
    inc = np.zeros(grid.shape, dtype=bool)
    tails = np.zeros(grid.shape)
    reasons = {}
    if mode == "exactNilpotent":
        series = picard_series(eta, exact=False)
        stack, lo = series.coefficients_at(grid)
        for idx in np.ndindex(grid.shape):
            C = LaurentMatrix(stack[idx], lo)
            if W is not None:
                C = multiply(W, C)
            frames[idx], why = _frame_from_C(C, spec, U0inv)
            inc[idx] = frames[idx] is not None
            if why:
                reasons[idx] = why
    elif mode == "numeric":
        for idx in np.ndindex(grid.shape):
            try:
                res = numeric_picard(eta, grid[idx], initial=W, tail_tol=tail_tol, max_scale=max_scale)
            except PoleOnPath as e:
                reasons[idx] = str(e)
                continue
            tails[idx] = res.tail
            try:
                frames[idx], why = _frame_from_C(res.loop, spec, U0inv)
            except NotUnimodular as e:
                frames[idx], why = None, f"truncated solution is not unimodular: {e}"
            inc[idx] = frames[idx] is not None
            if why:
                reasons[idx] = why
    else:
        raise ModeError(f"unknown mode {mode!r}")
    return FrameField(grid, frames, inc, spec, eta.basepoint, "fromPotential", normalize, tails, reasons)


# ---------------------------------------------------------------------------
# back to the normalized potential
# ---------------------------------------------------------------------------


@dataclass
class SampledPotential:
    """Pointwise lam^-1 coefficient of ``F_-^-1 dF_-`` on the interior of a grid."""

    z: np.ndarray
    values: np.ndarray  # (ny, nx, n, n), NaN where unavailable
    valid: np.ndarray
    flagged: np.ndarray  # Birkhoff failed here
    structure_residual: np.ndarray  # norm of all non lam^-1 coefficients
    parity_residual: np.ndarray  # norm of the k-part of the lam^-1 coefficient

    def max_structure_residual(self) -> float:
        r = np.where(self.valid, np.maximum(self.structure_residual, self.parity_residual), np.nan)
        return float(np.nanmax(r)) if self.valid.any() else float("nan")

    def is_normalized(self, tol: float = POTENTIAL_TOL) -> bool:
        return self.max_structure_residual() < tol

    def distance_to(self, eta: Potential) -> float:
        """Max entrywise distance from the lam^-1 coefficient of eta over valid points."""
        ref = eta.coefficients(self.z).get(-1, np.zeros(self.z.shape + (eta.n, eta.n)))
        for j, A in eta.coefficients(self.z).items():
            if j != -1 and np.abs(A).max() > 0:
                raise DomainError("reference potential is not normalized")
        d = np.abs(self.values - ref).max(axis=(-2, -1))
        return float(np.max(d[self.valid])) if self.valid.any() else float("nan")


def normalized_potential_from_frame(frames: FrameField) -> SampledPotential:
    """Recover the normalized potential from a basepoint-normalized frame field.

    Each frame is Birkhoff split, ``F = F_- F_+``; the holomorphic derivative of
    F_- along the grid uses the Wirtinger centered difference
    ``(D_x - i D_y) / 2``.
    """
    if not frames.basepoint_normalized:
        raise DomainError("frames must be basepoint-normalized")
    dx, dy = grid_steps(frames.z)
    shape = frames.shape
    n = frames.n
    minus = np.empty(shape, dtype=object)
    flagged = np.zeros(shape, dtype=bool)
    for idx, F in frames.points():
        try:
            minus[idx] = birkhoff(F).minus
        except (NotInBigCell, NotUnimodular):
            flagged[idx] = True
    values = np.full(shape + (n, n), np.nan, dtype=complex)
    valid = np.zeros(shape, dtype=bool)
    sres = np.full(shape, np.nan)
    pres = np.full(shape, np.nan)
    spec = frames.spec
    ny, nx = shape
    for i in range(1, ny - 1):
        for j in range(1, nx - 1):
            nb = [minus[i, j], minus[i, j + 1], minus[i, j - 1], minus[i + 1, j], minus[i - 1, j]]
            if any(m is None for m in nb):
                continue
            Dx = (nb[1] - nb[2]) * (1.0 / (2 * dx))
            Dy = (nb[3] - nb[4]) * (1.0 / (2 * dy))
            dZ = (Dx - Dy * 1j) * 0.5
            eta_hat = multiply(inverse(nb[0], tol=1e-8), dZ)
            A = eta_hat.coeff(-1)
            other = [np.linalg.norm(eta_hat.coeff(k)) for k in range(eta_hat.lo, eta_hat.hi + 1) if k != -1]
            values[i, j] = A
            sres[i, j] = max(other) if other else 0.0
            pres[i, j] = np.linalg.norm(spec.k_part(A))
            valid[i, j] = True
    return SampledPotential(frames.z, values, valid, flagged, sres, pres)


# ---------------------------------------------------------------------------
# Maurer-Cartan residual
# ---------------------------------------------------------------------------


def _centered(V: np.ndarray, dx: float, dy: float):
    """Centered x and y differences on the interior (shape shrinks by 2 in each axis)."""
    Dx = (V[1:-1, 2:] - V[1:-1, :-2]) / (2 * dx)
    Dy = (V[2:, 1:-1] - V[:-2, 1:-1]) / (2 * dy)
    return Dx, Dy


def twisted_forms(F: np.ndarray, spec: SymmetricSpaceSpec, dx: float, dy: float, lam: complex):
    """x and y components of alpha_lam built from the lam = 1 frame values F (interior points)."""
    Dx, Dy = _centered(F, dx, dy)
    Fi = np.linalg.inv(F[1:-1, 1:-1])
    P = Fi @ Dx
    Q = Fi @ Dy
    Az = 0.5 * (P - 1j * Q)
    Azb = 0.5 * (P + 1j * Q)
    pz, pzb = spec.p_part(Az), spec.p_part(Azb)
    Pl = spec.k_part(P) + pz / lam + lam * pzb
    Ql = spec.k_part(Q) + 1j * pz / lam - 1j * lam * pzb
    return Pl, Ql


@dataclass(frozen=True)
class MCResidual:
    lams: tuple
    residuals: np.ndarray
    step: float
    warning: str | None = None


def maurer_cartan_residual(frames: FrameField, lams: Sequence[complex] = (1, 1j, -1)) -> MCResidual:
    """Discretized ``|| d alpha_lam + [alpha_lam ^ alpha_lam] / 2 ||`` per lambda sample.

    alpha_lam is assembled from ``F(z, 1)^-1 dF(z, 1)`` by splitting into the
    k-part and the (1,0) and (0,1) p-parts.  The maximum over grid points
    where all needed neighbours are in the cell is returned.
    """
    dx, dy = grid_steps(frames.z)
    F = frames.values(1.0)
    out = []
    for lam in lams:
        Pl, Ql = twisted_forms(F, frames.spec, dx, dy, complex(lam))
        DQx, _ = _centered(Ql, dx, dy)
        _, DPy = _centered(Pl, dx, dy)
        Pc, Qc = Pl[1:-1, 1:-1], Ql[1:-1, 1:-1]
        curv = DQx - DPy + Pc @ Qc - Qc @ Pc
        nrm = np.linalg.norm(curv, axis=(-2, -1))
        out.append(float(np.nanmax(nrm)) if np.any(np.isfinite(nrm)) else float("nan"))
    warn = None
    if max(abs(dx), abs(dy)) > COARSE_STEP:
        warn = f"grid step {max(abs(dx), abs(dy)):.3g} exceeds {COARSE_STEP}; residual may be dominated by discretization"
        warnings.warn(warn, stacklevel=2)
    return MCResidual(tuple(complex(l) for l in lams), np.array(out), max(abs(dx), abs(dy)), warn)


def convergence_order(coarse: float, fine: float, ratio: float = 2.0) -> float:
    """Observed order from residuals at steps h and h / ratio."""
    if not (coarse > 0 and fine > 0):
        return float("nan")
    return float(np.log(coarse / fine) / np.log(ratio))


__all__ = [
    "RationalFunction",
    "PotentialTerm",
    "Potential",
    "make_potential",
    "validate_potential",
    "parse_potential",
    "potential_from_dict",
    "nilpotent_order",
    "PicardSeries",
    "picard_series",
    "numeric_picard",
    "picard_integrate",
    "transport",
    "square_grid",
    "grid_steps",
    "FrameField",
    "build_extended_frame",
    "SampledPotential",
    "normalized_potential_from_frame",
    "maurer_cartan_residual",
    "twisted_forms",
    "MCResidual",
    "convergence_order",
]
