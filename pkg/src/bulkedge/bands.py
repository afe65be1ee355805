"""Brillouin-zone grids, band structures and spectral-gap certification."""

from __future__ import annotations

import csv
from dataclasses import dataclass, asdict
from typing import Callable, Sequence

import numpy as np

from .models import TWO_PI, AnyModel, as_symbol, glue_family, JunctionFamily


class GapInconsistency(RuntimeError):
    pass


class EigensolverError(RuntimeError):
    def __init__(self, node, cause):
        super().__init__(f"eigensolver failed at node {node}: {cause}")
        self.node = node


@dataclass(frozen=True)
class BZGrid:
    """Uniform periodic grid ``xi_ab = (2 pi a / N1, 2 pi b / N2)``."""

    n1: int
    n2: int

    def __post_init__(self):
        if self.n1 < 4 or self.n2 < 4:
            raise ValueError("BZ grid needs N1, N2 >= 4")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    @property
    def steps(self) -> tuple[float, float]:
        return TWO_PI / self.n1, TWO_PI / self.n2

    @property
    def cell_area(self) -> float:
        h1, h2 = self.steps
        return h1 * h2

    def axes(self):
        return TWO_PI * np.arange(self.n1) / self.n1, TWO_PI * np.arange(self.n2) / self.n2

    def nodes(self) -> np.ndarray:
        """Array of shape (N1, N2, 2)."""
        a, b = self.axes()
        return np.stack(np.meshgrid(a, b, indexing="ij"), axis=-1)


@dataclass
class BandStructure:
    grid: BZGrid
    eigenvalues: np.ndarray            # (N1, N2, D), ascending per node
    eigenvectors: np.ndarray | None    # (N1, N2, D, D), columns
    truncation: int | None
    symbol: object = None

    @property
    def nbands(self) -> int:
        return self.eigenvalues.shape[-1]

    def to_csv(self, path) -> None:
        nodes = self.grid.nodes()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["xi1", "xi2", "band_index", "eigenvalue"])
            for a in range(self.grid.n1):
                for b in range(self.grid.n2):
                    for n, lam in enumerate(self.eigenvalues[a, b]):
                        w.writerow([repr(float(nodes[a, b, 0])), repr(float(nodes[a, b, 1])),
                                    n + 1, repr(float(lam))])


def _eigh_batch(H: np.ndarray, want_vectors: bool):
    try:
        if want_vectors:
            return np.linalg.eigh(H)
        return np.linalg.eigvalsh(H), None
    except np.linalg.LinAlgError:
        # locate the failing node for the error message
        flat = H.reshape((-1,) + H.shape[-2:])
        for i, h in enumerate(flat):
            try:
                np.linalg.eigvalsh(h)
            except np.linalg.LinAlgError as exc:
                raise EigensolverError(np.unravel_index(i, H.shape[:-2]), exc) from exc
        raise


def compute_bands(model: AnyModel, grid: BZGrid, K: int | None = None,
                  want_vectors: bool = False) -> BandStructure:
    """Full Hermitian eigendecomposition of the Bloch symbol at every grid node."""
    sym = as_symbol(model, K)
    H = sym(grid.nodes())
    vals, vecs = _eigh_batch(H, want_vectors)
    return BandStructure(grid=grid, eigenvalues=vals, eigenvectors=vecs,
                         truncation=K if K is not None else sym.dim, symbol=sym)


@dataclass(frozen=True)
class GapReport:
    lam0: float
    half_width: float
    gapped: bool
    n_below: int            # -1 when the count varies over the grid
    min_above: float
    max_below: float
    lipschitz: float        # max finite-difference slope of the bracketing bands
    lipschitz_ok: bool      # slope * step < half_width / 2

    @property
    def available_half_width(self) -> float:
        """Largest eps with [lam0 - 2 eps, lam0 + 2 eps] free of grid eigenvalues."""
        return 0.5 * min(self.lam0 - self.max_below, self.min_above - self.lam0)

    def to_json(self) -> dict:
        return {k: (float(v) if isinstance(v, (np.floating, float)) else v) for k, v in asdict(self).items()}


def band_slope(b: BandStructure, n: int) -> float:
    """Max finite-difference slope of band ``n`` (0-based) over the grid."""
    h1, h2 = b.grid.steps
    lam = b.eigenvalues[..., n]
    s1 = np.abs(np.roll(lam, -1, axis=0) - lam) / h1
    s2 = np.abs(np.roll(lam, -1, axis=1) - lam) / h2
    return float(max(s1.max(), s2.max()))


def check_gap(b: BandStructure, lam0: float, eps: float) -> GapReport:
    """Grid certificate that ``[lam0 - 2 eps, lam0 + 2 eps]`` avoids the spectrum."""
    ev = b.eigenvalues
    counts = np.sum(ev < lam0, axis=-1)
    below = np.where(ev < lam0, ev, -np.inf).max(axis=-1)
    above = np.where(ev >= lam0, ev, np.inf).min(axis=-1)
    max_below = float(below.max())
    min_above = float(above.min())
    constant = bool(np.all(counts == counts.flat[0]))
    n_below = int(counts.flat[0]) if constant else -1
    gapped = constant and max_below < lam0 - 2 * eps and min_above > lam0 + 2 * eps
    if gapped and n_below < 0:
        raise GapInconsistency("band count below lam0 varies over a gapped grid")
    slopes = []
    if constant:
        if n_below > 0:
            slopes.append(band_slope(b, n_below - 1))
        if n_below < b.nbands:
            slopes.append(band_slope(b, n_below))
    L = max(slopes) if slopes else 0.0
    step = max(b.grid.steps)
    return GapReport(lam0=float(lam0), half_width=float(eps), gapped=bool(gapped),
                     n_below=n_below, min_above=min_above, max_below=max_below,
                     lipschitz=L, lipschitz_ok=bool(L * step < eps / 2) if constant else False)


def continuity_report(b: BandStructure) -> dict:
    """Per-band Lipschitz estimates; large values flag under-resolution."""
    return {"slopes": [band_slope(b, n) for n in range(b.nbands)],
            "step": max(b.grid.steps)}


@dataclass
class CrossingDiagnostic:
    n: int                      # 1-based lower band index
    delta: float
    x2: np.ndarray
    gapfn: np.ndarray           # (n_x2, N1, N2)
    midpoint: np.ndarray
    mask: np.ndarray            # Z_delta

    @property
    def empty(self) -> bool:
        return not bool(self.mask.any())

    def to_json(self) -> dict:
        hit = np.nonzero(self.mask.any(axis=(1, 2)))[0]
        return {"n": self.n, "delta": self.delta, "empty": self.empty,
                "min_gap": float(self.gapfn.min()),
                "min_gap_per_x2": [float(v) for v in self.gapfn.min(axis=(1, 2))],
                "x2": [float(v) for v in self.x2],
                "x2_with_crossings": [float(self.x2[i]) for i in hit]}


def crossing_diagnostic(family: JunctionFamily | Callable, n: int, delta: float,
                        x2_values: Sequence[float], grid: BZGrid,
                        K: int | None = None) -> CrossingDiagnostic:
    """Gap function ``lam_{n+1} - lam_n`` over (x2, xi) and the set where it is <= 2 delta."""
    snap = (lambda x: glue_family(family, x)) if isinstance(family, JunctionFamily) else family
    x2 = np.asarray(list(x2_values), dtype=float)
    gaps, mids = [], []
    for x in x2:
        ev = compute_bands(snap(float(x)), grid, K).eigenvalues
        if n + 1 > ev.shape[-1]:
            raise ValueError(f"band index {n + 1} exceeds band count {ev.shape[-1]}")
        lo, hi = ev[..., n - 1], ev[..., n]
        gaps.append(hi - lo)
        mids.append(0.5 * (hi + lo))
    gapfn = np.maximum(np.array(gaps), 0.0)
    thr = 2 * delta if delta > 0 else 1e-8
    return CrossingDiagnostic(n=n, delta=float(delta), x2=x2, gapfn=gapfn,
                              midpoint=np.array(mids), mask=gapfn <= thr)
