"""Independent oracles and residual calculators.

Every check here recomputes a quantity by a route that does not share code
with the thing being checked: Toeplitz Cholesky instead of the Birkhoff
ansatz, finite differences instead of coefficient algebra, and so on.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .dpw import FrameField, _centered, convergence_order, grid_steps, maurer_cartan_residual
from .errors import DomainError, ShapeError
from .factor import iwasawa
from .loopalg import LaurentMatrix, SymmetricSpaceSpec, evaluate, multiply, reality_residual, twist_residual
from .uniton import ExtendedSolutionField, ModifiedHarmonicMap, roots_of_unity

VERDICTS = ("pass", "fail", "inconclusive")


@dataclass(frozen=True)
class ResidualReport:
    """Outcome of one check.

    ``verdict`` is ``pass`` iff ``max_residual < tolerance``; ``inconclusive``
    when nothing could be evaluated (e.g. an empty grid interior).
    ``convergence_order`` is only set when two resolutions were compared.
    """

    check_name: str
    max_residual: float
    tolerance: float
    per_point: np.ndarray | None = None
    convergence_order: float | None = None
    verdict: str = "inconclusive"
    note: str = ""

    @classmethod
    def make(cls, name: str, residual: float, tol: float, per_point=None, note: str = "") -> "ResidualReport":
        if residual is None or not np.isfinite(residual):
            verdict = "inconclusive"
        else:
            verdict = "pass" if residual < tol else "fail"
        return cls(name, float(residual) if residual is not None else float("nan"), tol, per_point, None, verdict, note)

    def to_json(self) -> dict:
        out = {
            "checkName": self.check_name,
            "maxResidual": None if not np.isfinite(self.max_residual) else self.max_residual,
            "tolerance": self.tolerance,
            "verdict": self.verdict,
        }
        if self.convergence_order is not None:
            out["convergenceOrder"] = self.convergence_order
        if self.note:
            out["note"] = self.note
        return out


def with_convergence(coarse: ResidualReport, fine: ResidualReport, ratio: float = 2.0,
                     min_order: float | None = None) -> ResidualReport:
    """Combine two resolutions of the same check into one report.

    The residual of the finer grid is kept.  With ``min_order`` the verdict
    also requires the observed order to reach it.
    """
    order = convergence_order(coarse.max_residual, fine.max_residual, ratio)
    verdict = fine.verdict
    if min_order is not None and verdict == "pass" and not order >= min_order:
        verdict = "fail"
    return replace(fine, convergence_order=float(order), verdict=verdict)


# ---------------------------------------------------------------------------
# factorization oracle
# ---------------------------------------------------------------------------


def toeplitz_plus_factor(gamma: LaurentMatrix, blocks: int | None = None) -> LaurentMatrix:
    """Positive factor P of ``gamma^* gamma = P^* P`` by block Toeplitz Cholesky.

    The Toeplitz matrix ``T_ij = S_{j-i}`` of ``S = gamma^* gamma`` is factored
    as ``L L^H``; the last block row of L read backwards gives the
    coefficients of P (with ``P_0`` upper triangular, positive diagonal).
    Exact for Laurent polynomial inputs once ``blocks`` covers the degree
    of P.
    """
    gamma = gamma.to_complex()
    n = gamma.n
    S = multiply(gamma.star(), gamma)
    N = blocks or max(8, 2 * n * (gamma.hi - gamma.lo + 1))
    T = np.zeros((N * n, N * n), dtype=complex)
    for i in range(N):
        for j in range(N):
            T[i * n:(i + 1) * n, j * n:(j + 1) * n] = S.coeff(j - i)
    L = np.linalg.cholesky(0.5 * (T + T.conj().T))
    r = (N - 1) * n
    c = np.stack([L[r:r + n, (N - 1 - k) * n:(N - k) * n].conj().T for k in range(N)])
    return LaurentMatrix(c, 0)


def _phase_aligned_distance(A: np.ndarray, B: np.ndarray) -> float:
    """min over diagonal phases D of max |A - B D|, column by column."""
    worst = 0.0
    for j in range(A.shape[1]):
        ip = np.vdot(B[:, j], A[:, j])
        ph = ip / abs(ip) if abs(ip) > 0 else 1.0
        worst = max(worst, float(np.abs(A[:, j] - B[:, j] * ph).max()))
    return worst


def pointwise_factorization_oracle(
    gamma: LaurentMatrix,
    spec: SymmetricSpaceSpec,
    lams: Sequence[complex] | None = None,
    unitary: LaurentMatrix | None = None,
    tol: float = 1e-8,
) -> ResidualReport:
    """Compare the loop unitary factor with ``gamma(lam) P(lam)^-1`` per sample.

    P comes from :func:`toeplitz_plus_factor`; the two unitary values are
    compared after per-column phase alignment.
    """
    if spec.real_form != "compact":
        raise DomainError("the pointwise oracle needs the compact real form")
    lams = roots_of_unity(16) if lams is None else np.asarray(lams, dtype=complex)
    if unitary is None:
        unitary = iwasawa(gamma, spec).unitary
    P = toeplitz_plus_factor(gamma)
    G = evaluate(gamma.to_complex(), lams)
    Pv = evaluate(P, lams)
    Uo = G @ np.linalg.inv(Pv)
    Ul = evaluate(unitary, lams)
    per = np.array([_phase_aligned_distance(Ul[k], Uo[k]) for k in range(len(lams))])
    return ResidualReport.make("pointwiseFactorization", float(per.max()), tol, per)


# ---------------------------------------------------------------------------
# field-level checks
# ---------------------------------------------------------------------------


def reality_twist_suite(frames, tol: float = 1e-8) -> ResidualReport:
    """Max of twist and reality residuals over all in-cell samples."""
    spec = frames.spec
    per = np.full(frames.shape, np.nan)
    for idx, F in frames.points():
        r = twist_residual(F, spec)
        if spec.has_reality:
            r = max(r, reality_residual(F, spec))
        per[idx] = r
    if not np.isfinite(per).any():
        return ResidualReport.make("realityTwist", float("nan"), tol, per, "no in-cell samples")
    return ResidualReport.make("realityTwist", float(np.nanmax(per)), tol, per)


def algebraicity_certificate(frames, tail_tol: float = 1e-10) -> dict:
    """``{isLaurent, degreeSpread}`` of a frame field."""
    if isinstance(frames, FrameField):
        laurent = frames.is_laurent(tail_tol)
        spread = frames.degree_spread()
    else:
        laurent = frames.laurent
        los = [X.lo for _, X in frames.points()]
        his = [X.hi for _, X in frames.points()]
        spread = (min(los), max(his)) if los else (0, 0)
    return {"isLaurent": bool(laurent), "degreeSpread": [int(spread[0]), int(spread[1])]}


def mc_check(frames: FrameField, lams=(1, 1j, -1), tol: float = 1e-3) -> ResidualReport:
    r = maurer_cartan_residual(frames, lams)
    return ResidualReport.make("mc", float(np.max(r.residuals)), tol, note=r.warning or "")


def _field_values(field_, lam) -> np.ndarray:
    return field_.values(lam)


def extended_solution_residual(
    phi: ExtendedSolutionField,
    mm: ModifiedHarmonicMap,
    lams: Sequence[complex] | None = None,
    tol: float = 1e-3,
) -> ResidualReport:
    """Discretized residual of the extended-solution system.

    ``d_z Phi = (1 - 1/lam) Phi A_z`` and ``d_zbar Phi = (1 - lam) Phi A_zbar``
    with ``A = 1/2 FF^-1 dFF``, ``FF`` taken at lam = 1; centered differences
    on the grid interior.  At lam = 1 both prefactors vanish.
    """
    if phi.shape != mm.shape or not np.allclose(phi.z, mm.z):
        raise ShapeError("grid mismatch between the extended solution and the embedded map")
    lams = roots_of_unity(8) if lams is None else np.asarray(lams, dtype=complex)
    dx, dy = grid_steps(phi.z)
    FF = _field_values(mm, 1.0)
    FFx, FFy = _centered(FF, dx, dy)
    FFinv = np.linalg.inv(FF[1:-1, 1:-1])
    Az = 0.25 * FFinv @ (FFx - 1j * FFy)
    Azb = 0.25 * FFinv @ (FFx + 1j * FFy)
    per = np.zeros(len(lams))
    for k, lam in enumerate(lams):
        P = _field_values(phi, lam)
        Px, Py = _centered(P, dx, dy)
        Pc = P[1:-1, 1:-1]
        r1 = 0.5 * (Px - 1j * Py) - (1 - 1 / lam) * Pc @ Az
        r2 = 0.5 * (Px + 1j * Py) - (1 - lam) * Pc @ Azb
        r = np.maximum(np.abs(r1).max(axis=(-2, -1)), np.abs(r2).max(axis=(-2, -1)))
        per[k] = np.nanmax(r) if np.isfinite(r).any() else np.nan
    if not np.isfinite(per).any():
        return ResidualReport.make("es", float("nan"), tol, per, "grid interior has no valid stencil")
    worst = float(np.nanmax(per))
    return ResidualReport.make("es", worst, tol, per)


def lambda_one_residual(phi: ExtendedSolutionField, tol: float = 1e-10) -> ResidualReport:
    return ResidualReport.make("phiAtOne", phi.at_one_is_identity(), tol)


def lambda_minus_one_residual(phi: ExtendedSolutionField, mm: ModifiedHarmonicMap, tol: float = 1e-10) -> ResidualReport:
    """``Phi(z, -1) = h^-1 FF(z, 1)`` at every sample."""
    Hinv = np.linalg.inv(phi.spec.H)
    worst = 0.0
    for idx, P in phi.points():
        if not mm.valid[idx]:
            continue
        worst = max(worst, float(np.abs(P(-1.0) - Hinv @ mm.samples[idx](1.0)).max()))
    return ResidualReport.make("phiAtMinusOne", worst, tol)


def adjoint_expansion_degree(gamma: LaurentMatrix, samples: int = 64, tol: float = 1e-9) -> int:
    """Largest |j| with a nonzero lam^j term of ``Ad(gamma)`` on traceless matrices.

    Brute force: for each basis element E of sl(n), sample ``gamma E gamma^-1``
    on roots of unity, FFT and read off the occupied Fourier modes.
    """
    n = gamma.n
    lams = roots_of_unity(samples)
    G = evaluate(gamma.to_complex(), lams)
    Gi = np.linalg.inv(G)
    basis = []
    for a in range(n):
        for b in range(n):
            if a != b:
                E = np.zeros((n, n))
                E[a, b] = 1
                basis.append(E)
    for a in range(n - 1):
        E = np.zeros((n, n))
        E[a, a], E[a + 1, a + 1] = 1, -1
        basis.append(E)
    deg = 0
    freqs = np.fft.fftfreq(samples, 1.0 / samples).astype(int)
    for E in basis:
        vals = G @ E @ Gi
        c = np.fft.fft(vals, axis=0) / samples  # c[k] multiplies lam^-k
        mags = np.abs(c).max(axis=(-2, -1))
        big = np.abs(freqs[mags > tol])
        if big.size:
            deg = max(deg, int(big.max()))
    return deg


CHECKS = ("mc", "reality", "twist", "es")


DEFAULT_CHECK_TOL = {"mc": 1e-3, "es": 1e-3, "reality": 1e-8, "twist": 1e-8}


def run_checks(frames: FrameField, checks: Sequence[str] = CHECKS,
               tolerances: Mapping[str, float] | None = None) -> list[ResidualReport]:
    """The checks behind the ``verify`` command; ``tolerances`` overrides per check name."""
    from .uniton import cartan_embed, extended_solution

    tols = dict(DEFAULT_CHECK_TOL)
    tols.update({k: v for k, v in (tolerances or {}).items() if k in tols})
    out = []
    for name in checks:
        if name == "mc":
            out.append(mc_check(frames, tol=tols["mc"]))
        elif name in ("reality", "twist"):
            spec = frames.spec
            per = np.full(frames.shape, np.nan)
            for idx, F in frames.points():
                if name == "twist":
                    per[idx] = twist_residual(F, spec)
                elif spec.has_reality:
                    per[idx] = reality_residual(F, spec)
                else:
                    per[idx] = 0.0
            r = float(np.nanmax(per)) if np.isfinite(per).any() else float("nan")
            out.append(ResidualReport.make(name, r, tols[name], per))
        elif name == "es":
            out.append(extended_solution_residual(extended_solution(frames), cartan_embed(frames), tol=tols["es"]))
        else:
            raise DomainError(f"unknown check {name!r}; known: {', '.join(CHECKS)}")
    return out


__all__ = [
    "ResidualReport",
    "with_convergence",
    "toeplitz_plus_factor",
    "pointwise_factorization_oracle",
    "reality_twist_suite",
    "algebraicity_certificate",
    "mc_check",
    "extended_solution_residual",
    "lambda_one_residual",
    "lambda_minus_one_residual",
    "adjoint_expansion_degree",
    "run_checks",
    "CHECKS",
]
