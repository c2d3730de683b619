"""Downstream of a frame field: Cartan embedding, extended solutions, uniton numbers,
dressing, duality and monodromy."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dpw import FrameField, Potential, build_extended_frame, transport
from .errors import DomainError, InvariantViolation, NotAlgebraic, NotUnimodular, ShapeError
from .factor import try_iwasawa
from .loopalg import (
    LaurentMatrix,
    SymmetricSpaceSpec,
    adjoint_degree,
    evaluate,
    inverse,
    is_unimodular,
    loops_from_samples,
    multiply,
    twist_residual,
)

EMBED_TOL = 1e-8
MONODROMY_TOL = 1e-6
N_LAMBDA = 32


def roots_of_unity(m: int = N_LAMBDA) -> np.ndarray:
    return np.exp(2j * np.pi * np.arange(m) / m)


# ---------------------------------------------------------------------------
# Cartan embedding and extended solutions
# ---------------------------------------------------------------------------


@dataclass
class LoopField:
    """A LaurentMatrix per grid point with an availability mask."""

    z: np.ndarray
    samples: np.ndarray
    valid: np.ndarray
    spec: SymmetricSpaceSpec
    basepoint: complex = 0j
    laurent: bool = True

    @property
    def shape(self):
        return self.z.shape

    @property
    def n(self) -> int:
        return self.spec.n

    def points(self):
        for idx in np.ndindex(self.shape):
            if self.valid[idx]:
                yield idx, self.samples[idx]

    def values(self, lam) -> np.ndarray:
        out = np.full(self.shape + (self.n, self.n), np.nan, dtype=complex)
        for idx, X in self.points():
            out[idx] = X(lam)
        return out

    def to_json(self) -> list:
        out = []
        for idx in np.ndindex(self.shape):
            z = self.z[idx]
            X = self.samples[idx]
            out.append({"z": [float(z.real), float(z.imag)],
                        "value": X.to_json() if self.valid[idx] else None,
                        "inCell": bool(self.valid[idx])})
        return out


class ModifiedHarmonicMap(LoopField):
    """Per point ``FF(z, lam) = F h F^-1``."""


class ExtendedSolutionField(LoopField):
    """Per point the based loop ``Phi(z, lam) = F(z, lam) F(z, 1)^-1``."""

    def at_one_is_identity(self, tol: float = 1e-10) -> float:
        I = np.eye(self.n)
        return max((float(np.abs(P(1.0) - I).max()) for _, P in self.points()), default=0.0)


def cartan_embed(frames: FrameField, tol: float = EMBED_TOL) -> ModifiedHarmonicMap:
    """``FF = F h F^-1`` at every in-cell point.

    Raises
    ------
    InvariantViolation
        If ``FF^2 != I``, ``tr FF != tr h`` or ``FF(z0) != h``; the message names the point.
    """
    spec = frames.spec
    H = spec.H
    I = LaurentMatrix.identity(spec.n)
    out = np.empty(frames.shape, dtype=object)
    for idx, F in frames.points():
        M = multiply(F @ H, inverse(F, tol=1e-8))
        r = multiply(M, M).distance(I)
        if not r < tol:
            raise InvariantViolation(f"FF^2 != I at z = {frames.z[idx]:.6g} (residual {r:.3e})")
        tr = np.trace(M.coeffs, axis1=1, axis2=2)
        target = np.zeros_like(tr)
        if M.lo <= 0 <= M.hi:
            target[-M.lo] = np.trace(H)
        if np.abs(tr - target).max() > tol:
            raise InvariantViolation(f"trace FF != trace h at z = {frames.z[idx]:.6g}")
        out[idx] = M
    b = frames.basepoint_index
    if b is not None and frames.in_cell[b]:
        r = out[b].distance(LaurentMatrix.constant(H))
        if not r < tol:
            raise InvariantViolation(f"FF(z0) != h at the basepoint z = {frames.z[b]:.6g} (residual {r:.3e})")
    return ModifiedHarmonicMap(frames.z, out, frames.in_cell.copy(), spec, frames.basepoint, frames.is_laurent())


def extended_solution(frames: FrameField) -> ExtendedSolutionField:
    """Based extended solution ``Phi = F(z, lam) F(z, 1)^-1``.

    The lam^0 coefficient absorbs the rounding so that ``Phi(1) = I`` holds to
    the last bit of the coefficient sum.
    """
    n = frames.n
    out = np.empty(frames.shape, dtype=object)
    for idx, F in frames.points():
        F1 = F(1.0)
        P = F @ np.linalg.inv(F1)
        c = P.padded(min(P.lo, 0), max(P.hi, 0))
        k0 = -min(P.lo, 0)
        c[k0] += np.eye(n) - c.sum(axis=0)
        out[idx] = LaurentMatrix(c, min(P.lo, 0))
    return ExtendedSolutionField(frames.z, out, frames.in_cell.copy(), frames.spec, frames.basepoint,
                                 frames.is_laurent())


def left_translate(phi: ExtendedSolutionField, gamma: LaurentMatrix) -> ExtendedSolutionField:
    """``gamma Phi`` for a based loop gamma (gamma(1) = I)."""
    if np.abs(gamma(1.0) - np.eye(phi.n)).max() > 1e-10:
        raise DomainError("left translation needs a based loop, gamma(1) = I")
    out = np.empty(phi.shape, dtype=object)
    for idx, P in phi.points():
        out[idx] = multiply(gamma, P)
    return ExtendedSolutionField(phi.z, out, phi.valid.copy(), phi.spec, phi.basepoint, phi.laurent)


@dataclass(frozen=True)
class UnitonCertificate:
    """``k = r(Phi)``, an upper bound for the minimal uniton number of the map."""

    k: int
    attained_at: complex
    degrees: np.ndarray
    note: str = "r(Phi) is an upper bound for the minimal uniton number; no minimization over based loops is done"

    def to_json(self) -> dict:
        return {"unitonNumber": self.k, "attainedAt": [self.attained_at.real, self.attained_at.imag],
                "bound": "upper", "note": self.note}


def uniton_number(phi: ExtendedSolutionField) -> UnitonCertificate:
    """Max over the grid of the adjoint degree of Phi."""
    if not phi.laurent:
        raise NotAlgebraic("extended solution samples are not Laurent polynomials")
    deg = np.full(phi.shape, -1, dtype=int)
    for idx, P in phi.points():
        deg[idx] = adjoint_degree(P)
    if not phi.valid.any():
        raise NotAlgebraic("no valid samples")
    idx = np.unravel_index(np.argmax(deg), deg.shape)
    return UnitonCertificate(int(deg[idx]), complex(phi.z[idx]), deg)


def a_at_minus_one(frames: FrameField, lams: Sequence[complex] = tuple(roots_of_unity(8))) -> float:
    """Max deviation of ``A(lam, -1) = F(z, -lam) (FF(z, lam) F(z, lam))^-1`` from h^-1.

    Uses ``Phi(z, lam, -1) = FF(z, lam)`` from the two-parameter family; the
    result must be independent of z and equal to h^-1.
    """
    H = frames.spec.H
    Hinv = np.linalg.inv(H)
    worst = 0.0
    for _, F in frames.points():
        for lam in lams:
            Fl = F(lam)
            FF = Fl @ H @ np.linalg.inv(Fl)
            A = F(-lam) @ np.linalg.inv(FF @ Fl)
            worst = max(worst, float(np.abs(A - Hinv).max()))
    return worst


# ---------------------------------------------------------------------------
# dressing and duality
# ---------------------------------------------------------------------------


def dress(h_plus: LaurentMatrix, frames: FrameField, tol: float = 1e-8) -> FrameField:
    """Dressing action: the unitary part of ``h_+ F`` renormalized at the basepoint."""
    spec = frames.spec
    h_plus = h_plus.to_complex()
    if h_plus.lo < 0:
        raise DomainError("dressing element must have no negative powers")
    if not twist_residual(h_plus, spec) < tol:
        raise DomainError("dressing element is not twisted")
    if not is_unimodular(h_plus):
        raise NotUnimodular("dressing element is not unimodular")
    r0 = try_iwasawa(h_plus, spec)
    if not r0.ok:
        raise InvariantViolation(f"h_+ itself is outside the Iwasawa cell: {r0.reason}")
    U0inv = inverse(r0.unitary)
    out = np.empty(frames.shape, dtype=object)
    inc = np.zeros(frames.shape, dtype=bool)
    reasons = {}
    for idx, F in frames.points():
        r = try_iwasawa(multiply(h_plus, F), spec)
        if r.ok:
            out[idx] = multiply(U0inv, r.unitary)
            inc[idx] = True
        else:
            reasons[idx] = r.reason
    return frames.replace(out, inc, "dressed", reasons)


def dualize(frames: FrameField, target: SymmetricSpaceSpec | None = None) -> FrameField:
    """Unitary parts of the frames for another real form (default: the compact dual)."""
    spec = frames.spec
    target = target or spec.with_real_form("compact")
    if target.n != spec.n or target.h != spec.h:
        raise ShapeError("duality keeps n and h fixed")
    out = np.empty(frames.shape, dtype=object)
    inc = np.zeros(frames.shape, dtype=bool)
    reasons = {}
    for idx, F in frames.points():
        r = try_iwasawa(F, target)
        if r.ok:
            out[idx] = r.unitary
            inc[idx] = True
        else:
            reasons[idx] = r.reason
    res = frames.replace(out, inc, "dualized", reasons)
    res.spec = target
    return res


# ---------------------------------------------------------------------------
# monodromy
# ---------------------------------------------------------------------------


def circle_path(center: complex = 0j, radius: float = 1.0, vertices: int = 256, start_angle: float = 0.0) -> list:
    t = start_angle + 2 * np.pi * np.arange(vertices + 1) / vertices
    pts = list(complex(center) + radius * np.exp(1j * t))
    pts[-1] = pts[0]
    return pts


def _based_route(eta: Potential, path: Sequence[complex]) -> list:
    path = [complex(p) for p in path]
    if abs(path[0] - path[-1]) > 1e-12:
        raise DomainError("generator path must be closed (first vertex equals last)")
    z0 = complex(eta.basepoint)
    route = [z0] + path + [z0] if abs(path[0] - z0) > 1e-14 else path
    return route


@dataclass(frozen=True)
class MonodromyRecord:
    """chi(lam) sampled on S^1 for one generator path."""

    path_label: str
    lams: np.ndarray
    chi: np.ndarray
    deviations: np.ndarray
    reality_residuals: np.ndarray
    mode: str = "potential"

    @property
    def max_deviation(self) -> float:
        return float(np.max(self.deviations))

    def is_trivial(self, tol: float = MONODROMY_TOL) -> bool:
        return self.max_deviation < tol

    def value_at(self, lam: complex) -> np.ndarray:
        k = int(np.argmin(np.abs(self.lams - lam)))
        if abs(self.lams[k] - lam) > 1e-12:
            raise DomainError(f"lambda {lam} is not among the record's samples")
        return self.chi[k]

    def to_json(self) -> dict:
        return {
            "pathLabel": self.path_label,
            "mode": self.mode,
            "lambdas": [[float(l.real), float(l.imag)] for l in self.lams],
            "chi": [[[[float(x.real), float(x.imag)] for x in row] for row in M] for M in self.chi],
            "deviations": [float(d) for d in self.deviations],
            "maxDeviation": self.max_deviation,
            "realityResiduals": [float(d) for d in self.reality_residuals],
        }


def monodromy(
    eta: Potential,
    path: Sequence[complex],
    lams: Sequence[complex] | None = None,
    label: str = "generator",
) -> MonodromyRecord:
    """End value of dC = C eta transported around a closed polygon at each lambda.

    The loop is based at the potential's basepoint: if the polygon does not
    start there it is joined by a straight segment in and out.  The record
    also reports how far each chi(lam) is from the real form; potential-level
    monodromy need not be real.
    """
    lams = roots_of_unity() if lams is None else np.asarray(lams, dtype=complex)
    route = _based_route(eta, path)
    chi = transport(eta, route, lams)
    I = np.eye(eta.n)
    dev = np.linalg.norm(chi - I, axis=(-2, -1))
    J = eta.spec.J
    real = np.linalg.norm(np.conj(np.swapaxes(chi, -1, -2)) @ J @ chi - J, axis=(-2, -1))
    return MonodromyRecord(label, lams, chi, dev, real, "potential")


def transported_loop(eta: Potential, path: Sequence[complex], samples: int = 64, tail_tol: float = 1e-9) -> LaurentMatrix:
    """The potential-level monodromy as a Laurent loop, interpolated from roots of unity.

    Raises
    ------
    NotAlgebraic
        If the interpolated coefficients near the window edge are not negligible.
    """
    route = _based_route(eta, path)
    vals = transport(eta, route, roots_of_unity(samples))
    half = samples // 2
    M = loops_from_samples(vals, -half + 1, half)
    edge = max(np.linalg.norm(M.coeff(-half + 1)), np.linalg.norm(M.coeff(half)))
    if edge > tail_tol:
        raise NotAlgebraic(f"monodromy is not resolved by {samples} samples (edge {edge:.2e})")
    return M


def frame_monodromy(
    eta: Potential,
    path: Sequence[complex],
    lams: Sequence[complex] | None = None,
    label: str = "generator",
    samples: int = 64,
) -> MonodromyRecord:
    """Frame-level variant: compare the Cartan-embedded frame after transport with h.

    The transported holomorphic frame ``M`` (frame at the basepoint after one
    circuit) is Iwasawa split and ``FF = F h F^-1`` is compared with its value
    h at the start; this removes the K ambiguity of the frame.  The stored
    chi values are ``FF(lam) h^-1``.
    """
    lams = roots_of_unity() if lams is None else np.asarray(lams, dtype=complex)
    spec = eta.spec
    M = transported_loop(eta, path, samples)
    r = try_iwasawa(M, spec)
    if not r.ok:
        raise InvariantViolation(f"transported frame left the Iwasawa cell: {r.reason}")
    F = r.unitary
    H = spec.H
    FF = multiply(F @ H, inverse(F, tol=1e-8))
    chi = evaluate(FF, lams) @ np.linalg.inv(H)
    I = np.eye(spec.n)
    dev = np.linalg.norm(chi - I, axis=(-2, -1))
    J = spec.J
    real = np.linalg.norm(np.conj(np.swapaxes(chi, -1, -2)) @ J @ chi - J, axis=(-2, -1))
    return MonodromyRecord(label, lams, chi, dev, real, "frame")


def transported_frames(frames: FrameField, eta: Potential, path: Sequence[complex], samples: int = 64) -> FrameField:
    """Frames at the points g.z reached by continuing around ``path`` first.

    Uses ``C(g.z) = M C(z)`` with M the transported loop, then re-splits
    without renormalizing at the basepoint.  Requires the original field to
    come from ``eta`` with identity initial value.
    """
    M = transported_loop(eta, path, samples)
    out = build_extended_frame(eta, frames.z, initial=M, normalize=False)
    out.provenance = "transported"
    return out


def extended_solution_monodromy_relation(
    phi: ExtendedSolutionField,
    phi_transported: ExtendedSolutionField,
    record: MonodromyRecord,
) -> float:
    """Residual of ``g*Phi = (A^-1 chi(lam) A) Phi chi(1)^-1`` with ``A = Phi(z0)^-1``."""
    if phi.shape != phi_transported.shape or not np.allclose(phi.z, phi_transported.z):
        raise ShapeError("grid mismatch between the two extended-solution fields")
    chi1inv = np.linalg.inv(record.value_at(1.0))
    b = None
    d = np.abs(phi.z - phi.basepoint)
    bi = np.unravel_index(np.argmin(d), d.shape)
    if d[bi] < 1e-12 and phi.valid[bi]:
        b = phi.samples[bi]
    worst = 0.0
    for lam, chi in zip(record.lams, record.chi):
        A = np.eye(phi.n) if b is None else np.linalg.inv(b(lam))
        L = np.linalg.inv(A) @ chi @ A
        for idx, P in phi.points():
            if not phi_transported.valid[idx]:
                continue
            lhs = phi_transported.samples[idx](lam)
            rhs = L @ P(lam) @ chi1inv
            worst = max(worst, float(np.abs(lhs - rhs).max()))
    return worst


def is_finite_uniton_type(
    frames: FrameField,
    records: Sequence[MonodromyRecord] = (),
    tol: float = MONODROMY_TOL,
) -> dict:
    """Finite uniton type verdict.

    ``algebraic`` needs every frame to be a Laurent polynomial in lam;
    ``totallySymmetric`` needs every monodromy deviation below ``tol``.
    With no records the monodromy condition holds vacuously.
    """
    algebraic = bool(frames.is_laurent() and frames.in_cell.any())
    symmetric = all(r.max_deviation < tol for r in records)
    return {"algebraic": algebraic, "totallySymmetric": bool(symmetric),
            "finiteUnitonType": bool(algebraic and symmetric)}


__all__ = [
    "ModifiedHarmonicMap",
    "ExtendedSolutionField",
    "UnitonCertificate",
    "MonodromyRecord",
    "cartan_embed",
    "extended_solution",
    "left_translate",
    "uniton_number",
    "a_at_minus_one",
    "dress",
    "dualize",
    "circle_path",
    "monodromy",
    "frame_monodromy",
    "transported_loop",
    "transported_frames",
    "extended_solution_monodromy_relation",
    "is_finite_uniton_type",
    "roots_of_unity",
]
