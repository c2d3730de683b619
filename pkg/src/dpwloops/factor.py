"""Birkhoff and Iwasawa splittings of algebraic loops."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import DomainError, NotInBigCell, OutsideCell
from .loopalg import (
    DET_TOL,
    LaurentMatrix,
    SymmetricSpaceSpec,
    det_residual,
    evaluate,
    inverse,
    multiply,
    reality_involution,
    reality_residual,
    twist_residual,
)
from .errors import NotUnimodular

FACTOR_TOL = 1e-8
SINGULAR_TOL = 1e-11
PIVOT_TOL = 1e-11


@dataclass(frozen=True)
class BirkhoffResult:
    """``gamma = minus @ plus`` with ``minus = I + O(1/lam)`` and ``plus`` in Lambda^+."""

    minus: LaurentMatrix
    plus: LaurentMatrix
    residual: float
    depth: int


@dataclass(frozen=True)
class IwasawaResult:
    """``gamma = unitary @ plus`` with ``unitary`` real and twisted.

    ``cell_flag`` is ``"identityCell"`` on success and ``"outsideCell"``
    otherwise, in which case both parts are ``None`` and ``reason`` says why.
    """

    unitary: LaurentMatrix | None
    plus: LaurentMatrix | None
    cell_flag: str
    residual: float = float("nan")
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.cell_flag == "identityCell"


def _scale(gamma: LaurentMatrix) -> float:
    return max(1.0, gamma.norm())


def birkhoff(gamma: LaurentMatrix, depth: int | None = None, tol: float = FACTOR_TOL) -> BirkhoffResult:
    """Normalized Birkhoff splitting ``gamma = minus @ plus``.

    Solves for ``X = I + sum_{j=1}^{D} lam^-j X_j`` such that ``X @ gamma`` has
    no negative powers; then ``plus = X gamma`` and ``minus = X^-1``.  The
    linear system is block Toeplitz in the coefficients of ``gamma``.

    Parameters
    ----------
    gamma : LaurentMatrix
        Unimodular loop.
    depth : int, optional
        Number of ansatz terms D; defaults to ``n * |lo(gamma)|``.
    tol : float
        Least-squares residual above which the loop is declared outside the big cell.

    Raises
    ------
    NotInBigCell
        If the Toeplitz system is singular or inconsistent.
    """
    gamma = gamma.to_complex()
    r = det_residual(gamma)
    if not r < DET_TOL:
        raise NotUnimodular(f"det is not identically 1 (max coefficient deviation {r:.3e})")
    n, lo = gamma.n, gamma.lo
    if lo >= 0:
        return BirkhoffResult(LaurentMatrix.identity(n), gamma, 0.0, 0)
    D = n * (-lo) if depth is None else int(depth)
    if D < 1:
        raise DomainError("ansatz depth must be positive for loops with negative powers")
    ms = np.arange(lo - D, 0)  # powers that must vanish in X @ gamma
    M = len(ms)
    T = np.zeros((n * D, n * M), dtype=complex)
    G = np.zeros((n, n * M), dtype=complex)
    for c, m in enumerate(ms):
        G[:, c * n:(c + 1) * n] = gamma.coeff(int(m))
        for j in range(1, D + 1):
            T[(j - 1) * n: j * n, c * n:(c + 1) * n] = gamma.coeff(int(m + j))
    sv = np.linalg.svd(T, compute_uv=False)
    if sv[-1] < SINGULAR_TOL * max(sv[0], 1.0):
        raise NotInBigCell(f"Birkhoff system is singular (smallest singular value {sv[-1]:.3e})")
    Xt, *_ = np.linalg.lstsq(T.T, -G.T, rcond=None)
    X = Xt.T
    scale = _scale(gamma)
    res = float(np.max(np.abs(X @ T + G))) / scale
    if not res < tol:
        raise NotInBigCell(f"Birkhoff system is inconsistent (residual {res:.3e})")
    terms = {0: np.eye(n, dtype=complex)}
    for j in range(1, D + 1):
        terms[-j] = X[:, (j - 1) * n: j * n]
    Xloop = LaurentMatrix.from_dict(terms)
    plus = multiply(Xloop, gamma).truncate(lo=0)
    minus = inverse(Xloop, tol=1e-8).truncate(hi=0)
    c = minus.padded(minus.lo, 0)
    c[-1] = np.eye(n)
    minus = LaurentMatrix(c, minus.lo)
    residual = multiply(minus, plus).distance(gamma) / scale
    if not residual < tol:
        raise NotInBigCell(f"Birkhoff recomposition residual {residual:.3e}")
    return BirkhoffResult(minus, plus, residual, D)


def _signed_cholesky(P: np.ndarray, jdiag: np.ndarray) -> np.ndarray:
    """Upper triangular V with positive diagonal and ``V^H diag(jdiag) V = P``.

    Unpivoted LDL^H; each pivot must carry the sign prescribed by ``jdiag``.
    """
    m = P.shape[0]
    A = P.astype(complex).copy()
    L = np.eye(m, dtype=complex)
    d = np.zeros(m)
    scale = max(float(np.max(np.abs(P))), 1.0)
    for k in range(m):
        piv = A[k, k].real
        if not piv * jdiag[k] > PIVOT_TOL * scale:
            raise OutsideCell(f"Hermitian factor has a pivot {piv:.3e} of the wrong sign at index {k}")
        d[k] = piv
        L[k + 1:, k] = A[k + 1:, k] / piv
        A[k + 1:, k + 1:] -= piv * np.outer(L[k + 1:, k], L[k + 1:, k].conj())
    return np.sqrt(np.abs(d))[:, None] * L.conj().T


def _j_qr(A: np.ndarray, jdiag: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``A = Q R`` with Q J-unitary and R upper triangular with positive diagonal.

    Modified Gram-Schmidt in the indefinite inner product ``<x, y> = x^H J y``.
    """
    m = A.shape[0]
    Q = np.zeros((m, m), dtype=complex)
    R = np.zeros((m, m), dtype=complex)
    scale = max(float(np.max(np.abs(A))), 1.0)
    for c in range(m):
        v = A[:, c].astype(complex).copy()
        for i in range(c):
            R[i, c] = jdiag[i] * (Q[:, i].conj() @ (jdiag * v))
            v = v - R[i, c] * Q[:, i]
        nrm = float((v.conj() @ (jdiag * v)).real)
        if not nrm * jdiag[c] > PIVOT_TOL * scale**2:
            raise OutsideCell(f"constant term is not J-triangularizable at column {c}")
        R[c, c] = np.sqrt(abs(nrm))
        Q[:, c] = v / R[c, c]
    return Q, R


def _blockwise(spec: SymmetricSpaceSpec, A: np.ndarray, fn) -> tuple:
    """Apply a factorization separately on each h-eigenspace block of A."""
    n = spec.n
    outs = None
    jd = spec.jdiag
    for idx in spec.blocks():
        res = fn(A[np.ix_(idx, idx)], jd[idx])
        res = res if isinstance(res, tuple) else (res,)
        if outs is None:
            outs = [np.zeros((n, n), dtype=complex) for _ in res]
        for o, r in zip(outs, res):
            o[np.ix_(idx, idx)] = r
    return tuple(outs)


def iwasawa(
    gamma: LaurentMatrix,
    spec: SymmetricSpaceSpec,
    depth: int | None = None,
    tol: float = FACTOR_TOL,
) -> IwasawaResult:
    """Iwasawa splitting ``gamma = unitary @ plus`` in the identity cell.

    Reduces to a Birkhoff splitting of the symmetrized loop
    ``S = rho(gamma)^-1 gamma = S_- S_+``.  The product ``H = rho(S_+) S_-`` is
    constant; writing ``J H = V^H J V`` with V upper triangular gives
    ``plus = V S_+`` up to a constant in K, fixed by requiring ``plus(0)`` to
    be upper triangular with positive diagonal.

    Raises
    ------
    OutsideCell
        If any step fails; the message names the failing step.
    """
    res = try_iwasawa(gamma, spec, depth=depth, tol=tol)
    if not res.ok:
        raise OutsideCell(res.reason)
    return res


def try_iwasawa(
    gamma: LaurentMatrix,
    spec: SymmetricSpaceSpec,
    depth: int | None = None,
    tol: float = FACTOR_TOL,
) -> IwasawaResult:
    """Like :func:`iwasawa` but reports ``outsideCell`` instead of raising."""
    if not spec.has_reality:
        raise DomainError("Iwasawa splitting needs a compact or indefinite real form")
    gamma = gamma.to_complex()
    tw = twist_residual(gamma, spec)
    if not tw < tol:
        raise DomainError(f"loop is not twisted (residual {tw:.3e})")
    J = spec.J
    n = spec.n
    scale = _scale(gamma)
    try:
        S = multiply(J @ gamma.star() @ J, gamma)
        B = birkhoff(S, depth=depth, tol=tol)
        H = multiply(reality_involution(B.plus, spec, tol=1e-8), B.minus)
        H0 = H.coeff(0)
        off = (H - LaurentMatrix.constant(H0)).norm() if H.spread != (0, 0) else 0.0
        if not off < tol * max(1.0, np.abs(H0).max()):
            return IwasawaResult(None, None, "outsideCell", reason=f"H is not constant ({off:.3e})")
        P = J @ H0
        P = 0.5 * (P + P.conj().T)
        (V,) = _blockwise(spec, P, _signed_cholesky)
        plus = V @ B.plus
        Q, _ = _blockwise(spec, plus.coeff(0), _j_qr)
        plus = (J @ Q.conj().T @ J) @ plus
        unitary = multiply(gamma, inverse(plus, tol=1e-8))
    except (NotInBigCell, OutsideCell, NotUnimodular) as e:
        return IwasawaResult(None, None, "outsideCell", reason=f"{type(e).__name__}: {e}")
    recon = multiply(unitary, plus).distance(gamma) / scale
    real = reality_residual(unitary, spec) / scale
    residual = max(recon, real)
    if not residual < tol:
        return IwasawaResult(None, None, "outsideCell", residual,
                             reason=f"residual {residual:.3e} above tolerance (near the cell boundary)")
    return IwasawaResult(unitary, plus, "identityCell", residual)


def birkhoff_round_trip_residual(gamma: LaurentMatrix, **kw) -> float:
    b = birkhoff(gamma, **kw)
    return multiply(b.minus, b.plus).distance(gamma.to_complex())


def iwasawa_round_trip_residual(gamma: LaurentMatrix, spec: SymmetricSpaceSpec, **kw) -> float:
    r = iwasawa(gamma, spec, **kw)
    return multiply(r.unitary, r.plus).distance(gamma.to_complex())


def birkhoff_many(loops: Iterable[LaurentMatrix], **kw) -> list[BirkhoffResult | Exception]:
    """Factorize many loops; failures are returned in place rather than raised."""
    out = []
    for g in loops:
        try:
            out.append(birkhoff(g, **kw))
        except (NotInBigCell, NotUnimodular) as e:
            out.append(e)
    return out


def iwasawa_many(loops: Iterable[LaurentMatrix], spec: SymmetricSpaceSpec, **kw) -> list[IwasawaResult]:
    return [try_iwasawa(g, spec, **kw) for g in loops]


def birkhoff_to_json(b: BirkhoffResult) -> dict:
    return {"minus": b.minus.to_json(), "plus": b.plus.to_json(), "residual": b.residual, "depth": b.depth}


def iwasawa_to_json(r: IwasawaResult) -> dict:
    return {
        "cellFlag": r.cell_flag,
        "unitaryPart": r.unitary.to_json() if r.unitary is not None else None,
        "plusPart": r.plus.to_json() if r.plus is not None else None,
        "residual": None if np.isnan(r.residual) else r.residual,
        "reason": r.reason,
    }


__all__ = [
    "BirkhoffResult",
    "IwasawaResult",
    "birkhoff",
    "iwasawa",
    "try_iwasawa",
    "birkhoff_round_trip_residual",
    "iwasawa_round_trip_residual",
    "birkhoff_many",
    "iwasawa_many",
]
