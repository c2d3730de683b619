"""Matrix Laurent polynomials in the loop parameter and the involutions acting on them.

A loop is stored as a stack of coefficient matrices ``coeffs[j - lo]`` so that
``gamma(lam) = sum_j lam**j coeffs[j - lo]``.  Two scalar flavours exist:
double-precision complex (the default) and exact, where the stack is an object
array of sympy numbers.  The exact flavour supports evaluation, products and
inversion and is used by the nilpotent Picard integrator.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
import sympy

from .errors import DomainError, NotUnimodular, ShapeError, Unsupported

TRIM_TOL = 1e-12
DET_TOL = 1e-10
ADJ_TOL = 1e-10

REAL_FORMS = ("compact", "indefinite", "complexified")


# ---------------------------------------------------------------------------
# symmetric space data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SymmetricSpaceSpec:
    """Data fixing G/K: size, the inner involution h and the real form.

    Parameters
    ----------
    n : int
        Matrix size.
    h : tuple of int
        Diagonal of the involution, entries +1 or -1.
    real_form : str
        ``"compact"`` (SU(n)), ``"indefinite"`` (SU(p, q)) or ``"complexified"``.
    p, q : int
        Signature for the indefinite form; ignored otherwise.
    """

    n: int
    h: tuple
    real_form: str = "compact"
    p: int = 0
    q: int = 0

    def __post_init__(self):
        h = tuple(int(x) for x in self.h)
        object.__setattr__(self, "h", h)
        if self.n < 1 or len(h) != self.n:
            raise ShapeError(f"h must have length n={self.n}, got {len(h)}")
        if any(x not in (1, -1) for x in h):
            raise DomainError("h must be diagonal with entries +1 or -1")
        if self.real_form not in REAL_FORMS:
            raise Unsupported(
                f"unsupported real form {self.real_form!r}; supported: {', '.join(REAL_FORMS)}"
            )
        if self.real_form == "indefinite":
            if self.p < 0 or self.q < 0 or self.p + self.q != self.n:
                raise DomainError(f"indefinite form needs p + q = n, got p={self.p}, q={self.q}")
        else:
            object.__setattr__(self, "p", self.n)
            object.__setattr__(self, "q", 0)

    @property
    def H(self) -> np.ndarray:
        return np.diag(np.array(self.h, dtype=complex))

    @property
    def jdiag(self) -> np.ndarray:
        if self.real_form == "indefinite":
            return np.array([1.0] * self.p + [-1.0] * self.q)
        return np.ones(self.n)

    @property
    def J(self) -> np.ndarray:
        return np.diag(self.jdiag.astype(complex))

    @property
    def has_reality(self) -> bool:
        return self.real_form != "complexified"

    def blocks(self) -> list[np.ndarray]:
        """Index sets of the h-eigenspaces (K^C is block diagonal on them)."""
        h = np.array(self.h)
        return [np.flatnonzero(h == s) for s in (1, -1) if np.any(h == s)]

    def k_part(self, X: np.ndarray) -> np.ndarray:
        H = np.diag(np.array(self.h, dtype=float))
        return 0.5 * (X + H @ X @ H)

    def p_part(self, X: np.ndarray) -> np.ndarray:
        H = np.diag(np.array(self.h, dtype=float))
        return 0.5 * (X - H @ X @ H)

    def with_real_form(self, real_form: str, p: int = 0, q: int = 0) -> "SymmetricSpaceSpec":
        return SymmetricSpaceSpec(self.n, self.h, real_form, p, q)

    def to_dict(self) -> dict:
        d = {"n": self.n, "h": list(self.h), "realForm": self.real_form}
        if self.real_form == "indefinite":
            d["p"], d["q"] = self.p, self.q
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "SymmetricSpaceSpec":
        if "n" not in d or "h" not in d:
            raise DomainError("spec needs keys 'n' and 'h'")
        n = int(d["n"])
        h = d["h"]
        # accept either the diagonal or a full diagonal matrix
        if len(h) and isinstance(h[0], (list, tuple)):
            h = [h[i][i] for i in range(len(h))]
        rf = d.get("realForm", "compact")
        p, q = int(d.get("p", 0)), int(d.get("q", 0))
        if isinstance(rf, Mapping):
            (rf, sig), = rf.items()
            p, q = int(sig[0]), int(sig[1])
        return cls(n, tuple(int(round(float(x))) for x in h), str(rf), p, q)


# ---------------------------------------------------------------------------
# Laurent matrices
# ---------------------------------------------------------------------------


def _is_exact(arr: np.ndarray) -> bool:
    return arr.dtype == object


def _block_norms(c: np.ndarray) -> np.ndarray:
    if _is_exact(c):
        return np.array([0.0 if all(x == 0 for x in blk.ravel()) else 1.0 for blk in c])
    return np.sqrt(np.sum(np.abs(c) ** 2, axis=(1, 2)))


class LaurentMatrix:
    """An n x n matrix Laurent polynomial ``sum_{j=lo}^{hi} lam**j C_j``.

    Instances are immutable; every arithmetic operation returns a new, trimmed
    loop.  The zero loop is stored with ``lo = hi = 0``.
    """

    __slots__ = ("_c", "_lo")
    __array_ufunc__ = None  # let ndarray @ loop dispatch to __rmatmul__

    def __init__(self, coeffs, lo: int = 0, trim: bool = True, tol: float = TRIM_TOL):
        c = np.asarray(coeffs)
        if c.ndim == 2:
            c = c[None]
        if c.ndim != 3 or c.shape[1] != c.shape[2] or c.shape[0] == 0:
            raise ShapeError(f"coefficient stack must have shape (m, n, n), got {c.shape}")
        if c.dtype != object:
            c = c.astype(complex)
        lo = int(lo)
        if trim:
            norms = _block_norms(c)
            keep = np.flatnonzero(norms > (0.0 if _is_exact(c) else tol))
            if keep.size == 0:
                c, lo = np.zeros_like(c[:1]), 0
            else:
                lo += int(keep[0])
                c = c[keep[0]: keep[-1] + 1]
        c = c.copy()
        c.setflags(write=False)
        self._c = c
        self._lo = lo

    # -- construction -----------------------------------------------------
    @classmethod
    def identity(cls, n: int, exact: bool = False) -> "LaurentMatrix":
        if exact:
            return cls(np.array(sympy.eye(n).tolist(), dtype=object), 0)
        return cls(np.eye(n, dtype=complex), 0)

    @classmethod
    def constant(cls, M) -> "LaurentMatrix":
        return cls(np.asarray(M)[None], 0)

    @classmethod
    def from_dict(cls, terms: Mapping[int, np.ndarray], n: int | None = None) -> "LaurentMatrix":
        """Build from ``{power: matrix}``; missing powers are zero."""
        if not terms:
            if n is None:
                raise ShapeError("empty term dict needs n")
            return cls(np.zeros((1, n, n), dtype=complex))
        items = {int(k): np.asarray(v) for k, v in terms.items()}
        lo, hi = min(items), max(items)
        first = next(iter(items.values()))
        dtype = object if any(v.dtype == object for v in items.values()) else complex
        c = np.zeros((hi - lo + 1,) + first.shape, dtype=dtype)
        if dtype == object:
            c[...] = sympy.Integer(0)
        for k, v in items.items():
            c[k - lo] = v
        return cls(c, lo)

    # -- basic properties -------------------------------------------------
    @property
    def coeffs(self) -> np.ndarray:
        return self._c

    @property
    def lo(self) -> int:
        return self._lo

    @property
    def hi(self) -> int:
        return self._lo + self._c.shape[0] - 1

    @property
    def n(self) -> int:
        return self._c.shape[1]

    @property
    def exact(self) -> bool:
        return _is_exact(self._c)

    @property
    def spread(self) -> tuple[int, int]:
        return (self.lo, self.hi)

    def is_zero(self) -> bool:
        return self._c.shape[0] == 1 and _block_norms(self._c)[0] == 0

    def coeff(self, j: int) -> np.ndarray:
        if self.lo <= j <= self.hi:
            return self._c[j - self.lo]
        if self.exact:
            return np.array(sympy.zeros(self.n).tolist(), dtype=object)
        return np.zeros((self.n, self.n), dtype=complex)

    def to_dict(self) -> dict[int, np.ndarray]:
        return {j: self._c[j - self.lo] for j in range(self.lo, self.hi + 1)}

    def to_complex(self) -> "LaurentMatrix":
        if not self.exact:
            return self
        c = np.vectorize(complex, otypes=[complex])(self._c)
        return LaurentMatrix(c, self.lo)

    def padded(self, lo: int, hi: int) -> np.ndarray:
        """Coefficient stack on the window [lo, hi] (must contain the support)."""
        if lo > self.lo or hi < self.hi:
            raise ShapeError("padding window must contain the support")
        out = np.zeros((hi - lo + 1, self.n, self.n), dtype=self._c.dtype)
        if self.exact:
            out[...] = sympy.Integer(0)
        out[self.lo - lo: self.hi - lo + 1] = self._c
        return out

    # -- arithmetic -------------------------------------------------------
    def __call__(self, lam):
        return evaluate(self, lam)

    def __matmul__(self, other):
        if isinstance(other, LaurentMatrix):
            return multiply(self, other)
        return LaurentMatrix(self._c @ np.asarray(other), self.lo)

    def __rmatmul__(self, other):
        return LaurentMatrix(np.asarray(other) @ self._c, self.lo)

    def __mul__(self, s):
        return LaurentMatrix(self._c * s, self.lo)

    __rmul__ = __mul__

    def __neg__(self):
        return LaurentMatrix(-self._c, self.lo)

    def __add__(self, other: "LaurentMatrix"):
        if self.n != other.n:
            raise ShapeError("size mismatch")
        lo, hi = min(self.lo, other.lo), max(self.hi, other.hi)
        return LaurentMatrix(self.padded(lo, hi) + other.padded(lo, hi), lo)

    def __sub__(self, other: "LaurentMatrix"):
        return self + (-other)

    def __repr__(self):
        return f"LaurentMatrix(n={self.n}, lo={self.lo}, hi={self.hi})"

    # -- structural maps --------------------------------------------------
    def truncate(self, lo: int | None = None, hi: int | None = None) -> "LaurentMatrix":
        """Drop all powers outside [lo, hi]."""
        lo = self.lo if lo is None else max(lo, self.lo)
        hi = self.hi if hi is None else min(hi, self.hi)
        if lo > hi:
            return LaurentMatrix(np.zeros((1, self.n, self.n), dtype=self._c.dtype))
        return LaurentMatrix(self._c[lo - self.lo: hi - self.lo + 1], lo)

    def negate_lambda(self) -> "LaurentMatrix":
        """gamma(-lam)."""
        signs = np.array([(-1) ** (j % 2) for j in range(self.lo, self.hi + 1)])
        return LaurentMatrix(self._c * signs[:, None, None], self.lo)

    def star(self) -> "LaurentMatrix":
        """gamma(1/conj(lam))^H: conjugate-transpose each coefficient and negate its degree."""
        c = np.conj(np.transpose(self._c, (0, 2, 1)))[::-1]
        return LaurentMatrix(c, -self.hi)

    def distance(self, other: "LaurentMatrix") -> float:
        """Largest coefficient-wise Frobenius norm of the difference."""
        a, b = self.to_complex(), other.to_complex()
        lo, hi = min(a.lo, b.lo), max(a.hi, b.hi)
        d = a.padded(lo, hi) - b.padded(lo, hi)  # untrimmed, so tiny residuals stay visible
        return float(np.max(np.sqrt(np.sum(np.abs(d) ** 2, axis=(1, 2)))))

    def norm(self) -> float:
        return float(np.max(_block_norms(self.to_complex()._c)))

    def allclose(self, other: "LaurentMatrix", tol: float = 1e-10) -> bool:
        return self.distance(other) < tol

    # -- serialization ----------------------------------------------------
    def to_json(self) -> dict:
        c = self.to_complex()
        coeff = {}
        for j in range(c.lo, c.hi + 1):
            m = c.coeff(j)
            coeff[str(j)] = [[[float(x.real), float(x.imag)] for x in row] for row in m]
        return {"n": self.n, "lo": c.lo, "hi": c.hi, "coeff": coeff}

    @classmethod
    def from_json(cls, d: Mapping) -> "LaurentMatrix":
        try:
            n, lo, hi = int(d["n"]), int(d["lo"]), int(d["hi"])
            if hi < lo:
                raise ShapeError(f"hi={hi} < lo={lo}")
            c = np.zeros((hi - lo + 1, n, n), dtype=complex)
            for key, rows in d["coeff"].items():
                j = int(key)
                if not lo <= j <= hi:
                    raise ShapeError(f"coefficient power {j} outside [{lo}, {hi}]")
                arr = np.asarray(rows, dtype=float)
                if arr.shape != (n, n, 2):
                    raise ShapeError(f"coefficient {j} must have shape ({n}, {n}, 2), got {arr.shape}")
                c[j - lo] = arr[..., 0] + 1j * arr[..., 1]
        except KeyError as e:
            raise ShapeError(f"loop JSON is missing key {e}") from None
        return cls(c, lo, trim=False)

    def dumps(self) -> str:
        import json

        return json.dumps(self.to_json())


def as_loop(x, n: int | None = None) -> LaurentMatrix:
    if isinstance(x, LaurentMatrix):
        return x
    return LaurentMatrix.constant(np.asarray(x, dtype=complex))


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def evaluate(gamma: LaurentMatrix, lam):
    """Evaluate ``sum_j lam**j C_j``.

    ``lam`` may be a scalar or an array; array input returns shape
    ``lam.shape + (n, n)``.
    """
    if gamma.exact and not isinstance(lam, np.ndarray):
        lam_s = sympy.nsimplify(lam) if isinstance(lam, (int, float, complex)) and not isinstance(lam, bool) else lam
        if lam_s == 0 and gamma.lo < 0:
            raise DomainError("evaluation at lam = 0 of a loop with negative powers")
        out = np.zeros((gamma.n, gamma.n), dtype=object)
        out[...] = sympy.Integer(0)
        for j in range(gamma.lo, gamma.hi + 1):
            out = out + gamma.coeff(j) * lam_s ** j
        return out
    g = gamma.to_complex()
    lam_a = np.asarray(lam, dtype=complex)
    if gamma.lo < 0 and np.any(lam_a == 0):
        raise DomainError("evaluation at lam = 0 of a loop with negative powers")
    powers = np.arange(g.lo, g.hi + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        V = lam_a[..., None] ** powers
    V = np.where(powers == 0, 1.0 + 0j, V)
    return np.einsum("...m,mab->...ab", V, g.coeffs)


def multiply(g1: LaurentMatrix, g2: LaurentMatrix) -> LaurentMatrix:
    """Product of two loops by coefficient convolution."""
    if g1.n != g2.n:
        raise ShapeError(f"size mismatch: {g1.n} vs {g2.n}")
    if g1.exact != g2.exact:
        g1, g2 = g1.to_complex(), g2.to_complex()
    a, b = g1.coeffs, g2.coeffs
    m = a.shape[0] + b.shape[0] - 1
    out = np.zeros((m, g1.n, g1.n), dtype=a.dtype)
    if g1.exact:
        out[...] = sympy.Integer(0)
    for j in range(a.shape[0]):
        out[j: j + b.shape[0]] = out[j: j + b.shape[0]] + np.matmul(a[j], b)
    if g1.exact:
        out = np.vectorize(sympy.expand, otypes=[object])(out)
    return LaurentMatrix(out, g1.lo + g2.lo)


def _roots(N: int) -> np.ndarray:
    return np.exp(2j * np.pi * np.arange(N) / N)


def _sample(gamma: LaurentMatrix, N: int) -> np.ndarray:
    return evaluate(gamma, _roots(N))


def _interpolate(values: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Fourier coefficients on [lo, hi] from samples at the N-th roots of unity."""
    N = values.shape[0]
    if hi - lo + 1 > N:
        raise ShapeError("not enough samples for the requested degree window")
    m = np.arange(lo, hi + 1)
    W = _roots(N)[:, None] ** (-m[None, :]) / N
    c = np.einsum("km,k...->m...", W, values)
    # round-off from the transform lives at the level eps * max|value|
    floor = 8 * np.finfo(float).eps * max(float(np.max(np.abs(values))), 1.0)
    c.real[np.abs(c.real) < floor] = 0.0
    c.imag[np.abs(c.imag) < floor] = 0.0
    return c


def determinant(gamma: LaurentMatrix) -> tuple[np.ndarray, int]:
    """det(gamma) as scalar Laurent coefficients ``(c, lo)``."""
    if gamma.exact:
        lam = sympy.Symbol("lam")
        M = sympy.Matrix(evaluate(gamma, lam).tolist())
        d = sympy.expand(M.det() * lam ** (-gamma.n * gamma.lo))
        poly = sympy.Poly(d, lam)
        deg = poly.degree() if d != 0 else 0
        c = np.array([poly.coeff_monomial(lam ** k) for k in range(deg + 1)], dtype=object)
        return c, gamma.n * gamma.lo
    n = gamma.n
    lo, hi = n * gamma.lo, n * gamma.hi
    vals = np.linalg.det(_sample(gamma, hi - lo + 1))
    return _interpolate(vals, lo, hi), lo


def det_residual(gamma: LaurentMatrix) -> float:
    """Largest coefficient deviation of det(gamma) from the constant 1."""
    c, lo = determinant(gamma)
    c = np.array([complex(x) for x in c])
    target = np.zeros_like(c)
    if lo <= 0 < lo + len(c):
        target[-lo] = 1.0
    else:
        return float(max(np.max(np.abs(c)), 1.0))
    return float(np.max(np.abs(c - target)))


def is_unimodular(gamma: LaurentMatrix, tol: float = DET_TOL) -> bool:
    return det_residual(gamma) < tol


def inverse(gamma: LaurentMatrix, tol: float = DET_TOL, check: bool = True) -> LaurentMatrix:
    """Inverse of a unimodular loop, computed as its adjugate.

    Raises
    ------
    NotUnimodular
        If det(gamma) differs from 1 by more than ``tol`` in some coefficient.
    """
    if check:
        r = det_residual(gamma)
        if not r < tol:
            raise NotUnimodular(f"det is not identically 1 (max coefficient deviation {r:.3e})")
    n = gamma.n
    if gamma.exact:
        lam = sympy.Symbol("lam")
        M = sympy.Matrix(evaluate(gamma, lam).tolist()).adjugate()
        terms: dict[int, np.ndarray] = {}
        for a in range(n):
            for b in range(n):
                e = sympy.expand(M[a, b])
                for term in sympy.Add.make_args(e):
                    if term == 0:
                        continue
                    coeff, p = term.as_coeff_exponent(lam)
                    k = int(p)
                    if k not in terms:
                        terms[k] = np.array(sympy.zeros(n).tolist(), dtype=object)
                    terms[k][a, b] += coeff
        if not terms:
            return LaurentMatrix.from_dict({0: np.array(sympy.zeros(n).tolist(), dtype=object)})
        return LaurentMatrix.from_dict(terms)
    if n == 1:
        lo, hi = 0, 0
    else:
        lo, hi = (n - 1) * gamma.lo, (n - 1) * gamma.hi
    N = hi - lo + 1
    vals = _sample(gamma, max(N, 1))
    adj = np.linalg.det(vals)[:, None, None] * np.linalg.inv(vals)
    return LaurentMatrix(_interpolate(adj, lo, hi), lo)


def twist_residual(gamma: LaurentMatrix, spec: SymmetricSpaceSpec) -> float:
    """Max coefficient-wise norm of ``h gamma(-lam) h^-1 - gamma(lam)``."""
    H = spec.H
    g = gamma.to_complex()
    tw = LaurentMatrix(H @ g.negate_lambda().coeffs @ H, g.lo, trim=False)
    return g.distance(tw)


def reality_involution(gamma: LaurentMatrix, spec: SymmetricSpaceSpec, tol: float = DET_TOL) -> LaurentMatrix:
    """rho(gamma)(lam) = J (gamma(1/conj lam)^H)^-1 J^-1."""
    if not spec.has_reality:
        raise Unsupported("the complexified form has no reality involution")
    J = spec.J
    inv = inverse(gamma.to_complex().star(), tol=tol)
    return LaurentMatrix(J @ inv.coeffs @ J, inv.lo)


def reality_residual(gamma: LaurentMatrix, spec: SymmetricSpaceSpec) -> float:
    """Distance of gamma from the real form, measured as ``||J gamma* J gamma - I||``.

    This equals zero exactly when rho(gamma) = gamma and avoids an inversion.
    """
    J = spec.J
    g = gamma.to_complex()
    s = J @ g.star() @ J
    return multiply(s, g).distance(LaurentMatrix.identity(g.n))


def adjoint_degree(gamma: LaurentMatrix, tol: float = ADJ_TOL) -> int:
    """Smallest k with Ad(gamma) supported on powers in [-k, k]."""
    g = gamma.to_complex()
    ginv = inverse(g)
    n = g.n
    lo, hi = g.lo + ginv.lo, g.hi + ginv.hi
    k = 0
    for m in range(lo, hi + 1):
        # row-major vec: vec(A X B) = (A kron B^T) vec(X)
        Ad = np.zeros((n * n, n * n), dtype=complex)
        for i in range(g.lo, g.hi + 1):
            j = m - i
            if ginv.lo <= j <= ginv.hi:
                Ad += np.kron(g.coeff(i), ginv.coeff(j).T)
        if np.linalg.norm(Ad) >= tol:
            k = max(k, abs(m))
    return k


@dataclass(frozen=True)
class GroupElementFlags:
    is_twisted: bool
    is_real: bool
    det_is_one: bool


def element_flags(gamma: LaurentMatrix, spec: SymmetricSpaceSpec, tol: float = 1e-10) -> GroupElementFlags:
    det_ok = is_unimodular(gamma, tol)
    real = bool(spec.has_reality and det_ok and reality_residual(gamma, spec) < tol)
    return GroupElementFlags(twist_residual(gamma, spec) < tol, real, det_ok)


def random_twisted_loop(
    rng: np.random.Generator,
    spec: SymmetricSpaceSpec,
    lo: int = -2,
    hi: int = 2,
    eps: float = 0.02,
    factors: int = 3,
) -> LaurentMatrix:
    """A random unimodular twisted loop with support in [lo, hi].

    Built as a product of unipotent factors ``I + c lam**p E_ab`` whose power
    parity matches the h-parity of ``E_ab``, times a constant in K^C.  Products
    leaving the window are redrawn.
    """
    n = spec.n
    h = np.array(spec.h)
    pairs = [(a, b) for a in range(n) for b in range(n) if a != b]
    while True:
        d = np.exp(eps * rng.standard_normal(n))
        d[-1] = 1.0 / np.prod(d[:-1])
        g = LaurentMatrix.constant(np.diag(d).astype(complex))
        for _ in range(factors):
            a, b = pairs[rng.integers(len(pairs))]
            parity = 0 if h[a] == h[b] else 1
            powers = [p for p in range(lo, hi + 1) if p % 2 == parity]
            if not powers:
                continue
            p = int(rng.choice(powers))
            E = np.zeros((n, n), dtype=complex)
            E[a, b] = eps * (rng.standard_normal() + 1j * rng.standard_normal())
            terms = {0: np.eye(n, dtype=complex) + E} if p == 0 else {0: np.eye(n, dtype=complex), p: E}
            g = g @ LaurentMatrix.from_dict(terms)
        if g.lo >= lo and g.hi <= hi:
            return g


def loops_from_samples(values: np.ndarray, lo: int, hi: int) -> LaurentMatrix:
    """Interpolate a loop with support in [lo, hi] from samples at roots of unity."""
    return LaurentMatrix(_interpolate(values, lo, hi), lo)


__all__ = [
    "SymmetricSpaceSpec",
    "LaurentMatrix",
    "GroupElementFlags",
    "evaluate",
    "multiply",
    "inverse",
    "determinant",
    "det_residual",
    "is_unimodular",
    "twist_residual",
    "reality_involution",
    "reality_residual",
    "adjoint_degree",
    "element_flags",
    "random_twisted_loop",
    "as_loop",
]
