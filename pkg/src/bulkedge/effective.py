"""Effective two-level symbols and their index.

For a projector field ``P1`` and levels ``lam1 < lam0 < lam2`` the effective
symbol is ``E(xi; lam) = (lam - lam1) P1 + (lam - lam2) (Id - P1)``.  Its index

    J = - int_{dOmega} int_{T*} Tr(d1E E^-1 d2(dlamE E^-1)) dxi/(2 pi)^2 dlam/(2 i pi)

is evaluated either by trapezoid quadrature on a circle around ``lam1``
(``index_J_contour``) or in the residue-resolved form
``(1/(2 pi)^2) int Tr(P1 [d1 P1, d2 P1])`` (``index_J_residue``).
``2 i pi J`` is the Chern number of ``P1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bands import BZGrid
from .topology import (ProjectorField, UnderResolvedError, ProjectorRankError,
                       spectral_derivative)

TWO_PI = 2.0 * np.pi


def _dag(A):
    return np.conj(np.swapaxes(A, -1, -2))


def two_level_rearrangement(p: ProjectorField, lam1: float, lam2: float) -> np.ndarray:
    """Flattened symbol ``lam1 P + lam2 (Id - P)`` per node."""
    if not lam1 < lam2:
        raise ValueError("need lam1 < lam2")
    eye = np.eye(p.dim)
    return lam1 * p.projectors + lam2 * (eye - p.projectors)


def reduced_projector(p: ProjectorField, frame: np.ndarray, tol: float = 1e-8) -> ProjectorField:
    """Compress ``P`` onto a per-node orthonormal frame: ``P1 = R21 P R12``
    with ``R12 = frame`` (D x d) and ``R21 = frame^dagger``.

    The range of ``P`` must lie inside the span of the frame.
    """
    frame = np.asarray(frame, dtype=complex)
    if frame.shape[:2] != p.grid.shape or frame.shape[2] != p.dim:
        raise ValueError(f"frame shape {frame.shape} does not match the field")
    d = frame.shape[-1]
    gram = _dag(frame) @ frame
    ortho = np.max(np.abs(gram - np.eye(d)))
    if ortho > tol:
        raise ValueError(f"frame is not orthonormal (R21 R12 - Id = {ortho:.2e})")
    # leakage of Range(P) out of span(frame)
    inside = frame @ (_dag(frame) @ p.frames)
    leak = float(np.max(np.linalg.norm(p.frames - inside, axis=-2)))
    if leak > tol:
        raise ProjectorRankError(f"Range(P) not contained in the frame span (leakage {leak:.2e})")
    P1 = _dag(frame) @ p.projectors @ frame
    sub = _dag(frame) @ p.frames
    # complement inside C^d
    w, v = np.linalg.eigh(P1)
    comp = v[..., : d - p.rank]
    return ProjectorField(grid=p.grid, projectors=P1, rank=p.rank, frames=sub, complement=comp)


@dataclass(frozen=True)
class TwoLevelSymbol:
    pi1: ProjectorField
    lam1: float
    lam2: float

    def __post_init__(self):
        if not self.lam1 < self.lam2:
            raise ValueError("need lam1 < lam2")

    @property
    def dim(self) -> int:
        return self.pi1.dim

    def evaluate(self, lam):
        """``E(xi; lam)`` over the grid."""
        P1 = self.pi1.projectors
        P2 = np.eye(self.dim) - P1
        return (lam - self.lam1) * P1 + (lam - self.lam2) * P2

    def inverse(self, lam):
        P1 = self.pi1.projectors
        P2 = np.eye(self.dim) - P1
        return P1 / (lam - self.lam1) + P2 / (lam - self.lam2)

    def swapped(self) -> "TwoLevelSymbol":
        """Same levels with the roles of ``P1`` and ``Id - P1`` exchanged."""
        return TwoLevelSymbol(self.pi1.complement_field(), self.lam1, self.lam2)

    def as_family(self) -> Callable:
        def fam(lam):
            E = self.evaluate(lam)
            return E, np.broadcast_to(np.eye(self.dim, dtype=complex), E.shape)
        return fam


@dataclass(frozen=True)
class ContourSpec:
    center: complex
    radius: float
    nodes: int = 64

    def validate(self, lam1: float, lam2: float) -> None:
        if not abs(self.center - lam1) < self.radius < abs(self.center - lam2):
            raise ValueError("contour must enclose lam1 and exclude lam2")

    def points(self):
        th = TWO_PI * np.arange(self.nodes) / self.nodes
        lam = self.center + self.radius * np.exp(1j * th)
        # dlam / (2 i pi) per node for the trapezoid rule, counterclockwise
        weight = self.radius * np.exp(1j * th) / self.nodes
        return lam, weight

    @classmethod
    def default(cls, lam1: float, lam2: float, nodes: int = 64) -> "ContourSpec":
        return cls(center=lam1, radius=0.5 * (lam2 - lam1), nodes=nodes)


@dataclass(frozen=True)
class EffectiveIndexResult:
    J: complex
    two_i_pi_J: complex
    chern: int | None
    residual: float
    method: str

    def to_json(self) -> dict:
        return {"J_re": float(self.J.real), "J_im": float(self.J.imag),
                "two_i_pi_J_re": float(self.two_i_pi_J.real), "two_i_pi_J_im": float(self.two_i_pi_J.imag),
                "chern": self.chern, "residual": float(self.residual), "method": self.method}


def _package(J: complex, method: str) -> EffectiveIndexResult:
    z = 2j * np.pi * J
    chern = int(np.rint(z.real))
    residual = float(abs(z - chern))
    if residual >= 0.5:
        raise UnderResolvedError(f"{method}: 2 i pi J = {z:.4f} is not near an integer")
    return EffectiveIndexResult(complex(J), complex(z), chern, residual, method)


def index_J_general(family: Callable, grid: BZGrid, contour: ContourSpec,
                    min_singular: float = 1e-10, method: str = "contour") -> EffectiveIndexResult:
    """Contour evaluation of J for any family ``lam -> (E, dE/dlam)`` sampled on ``grid``.

    Invertibility of ``E`` is checked at every (xi, lam) node.
    """
    lams, weights = contour.points()
    total = 0j
    for lam, wgt in zip(lams, weights):
        E, dE = family(lam)
        s = np.linalg.svd(E, compute_uv=False)
        if s[..., -1].min() < min_singular * max(1.0, s[..., 0].max()):
            raise ValueError(f"E is singular on the contour near lam = {lam:.4g}")
        Einv = np.linalg.inv(E)
        d1E = spectral_derivative(E, 0)
        d2X = spectral_derivative(dE @ Einv, 1)
        integrand = np.trace(d1E @ Einv @ d2X, axis1=-2, axis2=-1)
        total += wgt * integrand.sum()
    J = -total * grid.cell_area / TWO_PI**2
    return _package(complex(J), method)


def index_J_contour(t: TwoLevelSymbol, contour: ContourSpec | None = None) -> EffectiveIndexResult:
    if t.pi1.equivariant:
        raise ValueError("reduce to a periodic C^d field first (reduced_projector)")
    contour = ContourSpec.default(t.lam1, t.lam2) if contour is None else contour
    contour.validate(t.lam1, t.lam2)
    if t.pi1.rank in (0, t.dim):
        return EffectiveIndexResult(0j, 0j, 0, 0.0, "contour")
    return index_J_general(t.as_family(), t.pi1.grid, contour)


def index_J_residue(t: TwoLevelSymbol) -> EffectiveIndexResult:
    """Residue-resolved form ``(1/(2 pi)^2) int Tr(P1 [d1 P1, d2 P1]) dxi``."""
    p = t.pi1
    if p.rank in (0, p.dim):
        return EffectiveIndexResult(0j, 0j, 0, 0.0, "residue")
    P = p.projectors
    d1 = spectral_derivative(P, 0)
    d2 = spectral_derivative(P, 1)
    curv = np.trace(P @ (d1 @ d2 - d2 @ d1), axis1=-2, axis2=-1)
    J = curv.sum() * p.grid.cell_area / TWO_PI**2
    return _package(complex(J), "residue")
