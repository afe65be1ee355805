"""Fermi projectors, Berry curvature and Chern numbers.

Two independent routes to ``c1``:

* ``berry_chern`` integrates ``(i / 2 pi) Tr(P [d1 P, d2 P])`` with the trapezoid
  rule, differentiating the projector field spectrally (FFT) or, for
  plane-wave fields that are only equivariant, by first-order perturbation
  theory with the exact symbol gradient.
* ``lattice_chern`` multiplies link overlaps around plaquettes.  Its
  orientation is fixed so that the two-band model with winding ``nu``
  returns ``-nu``, matching the curvature integral.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .bands import BandStructure, BZGrid, compute_bands
from .models import TWO_PI, AnyModel, ContinuousModel, as_symbol


class ProjectorRankError(ValueError):
    pass


class UnderResolvedError(RuntimeError):
    pass


class RefineGridError(RuntimeError):
    pass


# plaquette orientation relative to the usual (U1 U2' / U1' U2) product;
# calibrated once on the two-band model (c1 = -nu) and frozen
PLAQUETTE_ORIENTATION = -1


@dataclass
class ProjectorField:
    grid: BZGrid
    projectors: np.ndarray      # (N1, N2, D, D)
    rank: int
    frames: np.ndarray          # (N1, N2, D, rank)
    complement: np.ndarray      # (N1, N2, D, D - rank)
    eigenvalues: np.ndarray | None = None   # (N1, N2, D), occupied first
    symbol: object = None
    lam0: float | None = None

    @property
    def dim(self) -> int:
        return self.projectors.shape[-1]

    @property
    def equivariant(self) -> bool:
        return bool(getattr(self.symbol, "equivariant", False))

    def complement_field(self) -> "ProjectorField":
        eye = np.eye(self.dim)
        ev = None
        if self.eigenvalues is not None:
            ev = np.concatenate([self.eigenvalues[..., self.rank:], self.eigenvalues[..., :self.rank]], -1)
        return ProjectorField(self.grid, eye - self.projectors, self.dim - self.rank,
                              self.complement, self.frames, ev, self.symbol, self.lam0)

    @classmethod
    def from_projectors(cls, grid: BZGrid, projectors: np.ndarray, tol: float = 1e-8) -> "ProjectorField":
        """Wrap an externally computed projector field (frames via eigh)."""
        w, v = np.linalg.eigh(projectors)
        ranks = np.rint(np.trace(projectors, axis1=-2, axis2=-1).real).astype(int)
        if not np.all(ranks == ranks.flat[0]):
            raise ProjectorRankError("projector rank varies over the grid")
        n = int(ranks.flat[0])
        if np.max(np.abs(w - np.round(w))) > tol:
            raise ValueError("input is not a projector field")
        D = projectors.shape[-1]
        return cls(grid, projectors, n, v[..., D - n:], v[..., :D - n])


def fermi_projector(b: BandStructure, lam0: float) -> ProjectorField:
    """Spectral projector onto bands strictly below ``lam0`` at every node."""
    if b.eigenvectors is None:
        raise ValueError("band structure was computed without eigenvectors")
    counts = np.sum(b.eigenvalues < lam0, axis=-1)
    if not np.all(counts == counts.flat[0]):
        raise ProjectorRankError(
            f"rank varies across nodes ({counts.min()}..{counts.max()}): lam0 is not in a gap")
    n = int(counts.flat[0])
    V = b.eigenvectors
    frames = V[..., :n]
    P = frames @ np.conj(np.swapaxes(frames, -1, -2))
    return ProjectorField(grid=b.grid, projectors=P, rank=n, frames=frames,
                          complement=V[..., n:], eigenvalues=b.eigenvalues,
                          symbol=b.symbol, lam0=lam0)


def projector_field(model: AnyModel, grid: BZGrid, lam0: float, K: int | None = None) -> ProjectorField:
    return fermi_projector(compute_bands(model, grid, K, want_vectors=True), lam0)


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------


def spectral_derivative(field: np.ndarray, axis: int) -> np.ndarray:
    """d/dxi along a periodic grid axis of length 2 pi (Nyquist mode dropped)."""
    n = field.shape[axis]
    m = np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        m[n // 2] = 0.0
    shape = [1] * field.ndim
    shape[axis] = n
    F = np.fft.fft(field, axis=axis)
    return np.fft.ifft(F * (1j * m).reshape(shape), axis=axis)


def _perturbative_derivatives(p: ProjectorField):
    """dP/dxi_j from ``sum (v_u <v_u|dH|v_o> <v_o|) / (lam_o - lam_u) + h.c.``."""
    if p.symbol is None or p.eigenvalues is None:
        raise ValueError("analytic derivatives need the generating symbol and eigenvalues")
    nodes = p.grid.nodes()
    N1, N2 = p.grid.shape
    D, n = p.dim, p.rank
    out = [np.zeros((N1, N2, D, D), complex) for _ in range(2)]
    for a in range(N1):
        for b in range(N2):
            g = p.symbol.gradient(nodes[a, b])
            Vo, Vu = p.frames[a, b], p.complement[a, b]
            lo, lu = p.eigenvalues[a, b, :n], p.eigenvalues[a, b, n:]
            denom = lo[None, :] - lu[:, None]
            for j in range(2):
                G = np.conj(Vu.T) @ g[j] @ Vo / denom
                X = Vu @ G @ np.conj(Vo.T)
                out[j][a, b] = X + np.conj(X.T)
    return out


def projector_derivatives(p: ProjectorField, method: str = "auto"):
    if method == "auto":
        method = "analytic" if p.equivariant else "fft"
    if method == "fft":
        if p.equivariant:
            raise ValueError("FFT differentiation needs a periodic field; plane-wave fields are only equivariant")
        return spectral_derivative(p.projectors, 0), spectral_derivative(p.projectors, 1)
    if method == "analytic":
        return _perturbative_derivatives(p)
    raise ValueError(f"unknown derivative method {method!r}")


def _curvature(P, d1, d2) -> np.ndarray:
    return np.trace(P @ (d1 @ d2 - d2 @ d1), axis1=-2, axis2=-1)


@dataclass
class CurvatureField:
    grid: BZGrid
    values: np.ndarray   # Tr(P [d1 P, d2 P]) per node, purely imaginary

    def to_csv(self, path) -> None:
        nodes = self.grid.nodes()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["xi1", "xi2", "im_curvature"])
            for a in range(self.grid.n1):
                for b in range(self.grid.n2):
                    w.writerow([repr(float(nodes[a, b, 0])), repr(float(nodes[a, b, 1])),
                                repr(float(self.values[a, b].imag))])


def curvature_field(p: ProjectorField, method: str = "auto") -> CurvatureField:
    d1, d2 = projector_derivatives(p, method)
    return CurvatureField(p.grid, _curvature(p.projectors, d1, d2))


def berry_curvature(model: AnyModel, xi, lam0: float, K: int | None = None) -> np.ndarray:
    """Pointwise ``Tr(P [d1 P, d2 P])`` from the exact symbol gradient."""
    sym = as_symbol(model, K)
    pts = np.atleast_2d(np.asarray(xi, dtype=float))
    out = np.empty(len(pts), dtype=complex)
    for i, x in enumerate(pts):
        w, v = np.linalg.eigh(sym(x))
        n = int(np.sum(w < lam0))
        Vo, Vu = v[:, :n], v[:, n:]
        denom = w[:n][None, :] - w[n:][:, None]
        g = sym.gradient(x)
        dP = []
        for j in range(2):
            X = Vu @ (np.conj(Vu.T) @ g[j] @ Vo / denom) @ np.conj(Vo.T)
            dP.append(X + np.conj(X.T))
        P = Vo @ np.conj(Vo.T)
        out[i] = np.trace(P @ (dP[0] @ dP[1] - dP[1] @ dP[0]))
    return out if np.ndim(xi) > 1 else out[0]


def appendix_curvature_exact(epsilon: float, nu: int, xi1):
    """``i eps^2 nu / (2 (xi1^2 + eps^2)^{3/2})``, valid for ``|xi1| <= 1``."""
    x = np.asarray(xi1, dtype=float)
    if np.any(np.abs(x) > 1.0):
        raise ValueError("closed form only holds on the window xi1 in [-1, 1]")
    return 1j * epsilon**2 * nu / (2.0 * (x**2 + epsilon**2) ** 1.5)


# ---------------------------------------------------------------------------
# Chern numbers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChernResult:
    value: int | None
    raw: complex
    residual: float
    method: str

    def to_json(self) -> dict:
        return {"value": self.value, "raw_re": float(self.raw.real), "raw_im": float(self.raw.imag),
                "residual": float(self.residual), "method": self.method}


def _package(raw: complex, method: str) -> ChernResult:
    value = int(np.rint(raw.real))
    residual = float(abs(raw - value))
    if residual >= 0.5:
        raise UnderResolvedError(f"{method}: raw value {raw:.4f} is not near an integer; refine the grid")
    return ChernResult(value, complex(raw), residual, method)


def berry_chern(p: ProjectorField, method: str = "auto") -> ChernResult:
    """``c1 = (i / 2 pi) sum Tr(P [d1 P, d2 P]) dA`` on the periodic grid."""
    if p.rank == 0 or p.rank == p.dim:
        return ChernResult(0, 0j, 0.0, "berry-quadrature")
    curv = curvature_field(p, method).values
    raw = 1j / TWO_PI * curv.sum() * p.grid.cell_area
    return _package(complex(raw), "berry-quadrature")


def _shifted_frames(p: ProjectorField, frames: np.ndarray, k) -> np.ndarray:
    idx = p.symbol.shift_index(k)
    out = np.zeros_like(frames)
    ok = idx >= 0
    out[..., ok, :] = frames[..., idx[ok], :]
    return out


def lattice_chern(p: ProjectorField, max_flux: float = np.pi / 2, min_overlap: float = 1e-6) -> ChernResult:
    """Gauge-invariant plaquette sum over link determinants."""
    n = p.rank
    if n == 0 or n == p.dim:
        return ChernResult(0, 0j, 0.0, "lattice-gauge")
    F = p.frames
    Fh = np.conj(np.swapaxes(F, -1, -2))

    def link(axis):
        nxt = np.roll(F, -1, axis=axis)
        if p.equivariant:
            # the wrap-around neighbour of the last node is xi_0 + 2 pi e_axis
            e = (1, 0) if axis == 0 else (0, 1)
            edge = [slice(None)] * 2
            edge[axis] = 0
            last = [slice(None)] * 2
            last[axis] = -1
            nxt[tuple(last)] = _shifted_frames(p, F[tuple(edge)], e)
        return np.linalg.det(Fh @ nxt)

    U1, U2 = link(0), link(1)
    if min(np.abs(U1).min(), np.abs(U2).min()) < min_overlap:
        raise RefineGridError("near-singular link overlap; refine the grid")
    U1 = U1 / np.abs(U1)
    U2 = U2 / np.abs(U2)
    plaq = U1 * np.roll(U2, -1, axis=0) * np.conj(np.roll(U1, -1, axis=1)) * np.conj(U2)
    flux = np.angle(plaq)
    if np.abs(flux).max() >= max_flux:
        raise RefineGridError(f"plaquette flux {np.abs(flux).max():.3f} too large; refine the grid")
    raw = PLAQUETTE_ORIENTATION * flux.sum() / TWO_PI
    value = int(np.rint(raw))
    return ChernResult(value, complex(raw), float(abs(raw - value)), "lattice-gauge")


def chern_number(model: AnyModel, lam0: float, grid: BZGrid | None = None, K: int | None = None,
                 method: str = "lattice") -> ChernResult:
    if grid is None:
        grid = BZGrid(12, 12) if isinstance(model, ContinuousModel) else BZGrid(24, 24)
    p = projector_field(model, grid, lam0, K)
    return lattice_chern(p) if method == "lattice" else berry_chern(p)


# ---------------------------------------------------------------------------
# equivariance
# ---------------------------------------------------------------------------


def _projector_at(sym, xi, lam0):
    w, v = np.linalg.eigh(sym(np.asarray(xi, dtype=float)))
    if lam0 is None:
        n = len(w) // 2
    else:
        n = int(np.sum(w < lam0))
    return v[:, :n] @ np.conj(v[:, :n].T)


def equivariance_check(model: AnyModel, xi, k, K: int | None = None, K_interior: int | None = None,
                       lam0: float | None = None) -> float:
    """Max deviation between ``P(xi + 2 pi k)`` and the index-shifted ``P(xi)``.

    For plane-wave models only the block ``|k_j| <= K_interior`` is compared
    (``K_interior + |k| <= K``); lattice symbols are compared entrywise.
    """
    sym = as_symbol(model, K)
    xi = np.asarray(xi, dtype=float)
    shifted = xi + TWO_PI * np.asarray(k, dtype=float)
    P0 = _projector_at(sym, xi, lam0)
    P1 = _projector_at(sym, shifted, lam0)
    if not getattr(sym, "equivariant", False):
        return float(np.max(np.abs(P1 - P0)))
    Ki = sym.K - max(abs(int(k[0])), abs(int(k[1]))) if K_interior is None else K_interior
    if Ki + max(abs(int(k[0])), abs(int(k[1]))) > sym.K:
        raise ValueError("interior block leaves the truncation window")
    inner = (np.abs(sym.k1) <= Ki) & (np.abs(sym.k2) <= Ki)
    rows = np.nonzero(inner)[0]
    src = sym.shift_index(k)[rows]
    return float(np.max(np.abs(P1[np.ix_(rows, rows)] - P0[np.ix_(src, src)])))
