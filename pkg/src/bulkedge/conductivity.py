"""Interface conductivity ``Tr(i [H, f(x1)] g'(H))`` on finite boxes.

On a finite matrix this trace vanishes identically, so the infinite-volume
value is estimated by a windowed partial trace that leaves out a margin of
sites along the box boundary.  Because ``g'`` is supported inside the bulk
gap, ``g'(H)`` only involves the eigenpairs in ``[lam0 - eps, lam0 + eps]``;
these are found by shift-invert Lanczos on the sparse box matrix (or by a
dense solve for small boxes).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import quad
from scipy.special import betainc

from .bands import BZGrid, check_gap, compute_bands
from .models import (AppendixModel, JunctionFamily, MatrixModel, ModelError, default_junction,
                     smoothstep, TWO_PI)


class GapNotCertified(ValueError):
    pass


# ---------------------------------------------------------------------------
# switch functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SwitchFunctions:
    """Spatial switch ``f`` across ``[c - ell, c + ell]`` and energy switch ``g``.

    ``g`` falls from 1 to 0 across ``[lam0 - eps, lam0 + eps]``; ``g'`` is
    ``-(1 - t^2)^power`` (``shape="poly"``) or ``-exp(-1/(1 - t^2))``
    (``shape="exp"``) in ``t = (lam - lam0) / eps``, normalized to integral -1.
    """

    lam0: float
    eps: float
    ell: float
    f_order: int = 7
    shape: str = "poly"
    power: int = 3
    _norm: float = field(init=False, default=1.0, repr=False)

    def __post_init__(self):
        if self.f_order < 5:
            raise ValueError("f needs a smoothstep of order >= 5")
        if self.eps <= 0 or self.ell <= 0:
            raise ValueError("eps and ell must be positive")
        if self.shape == "poly":
            from math import comb
            # int_{-1}^{1} (1 - t^2)^k dt = 2^(2k+1) (k!)^2 / (2k+1)!
            k = self.power
            norm = 2.0 ** (2 * k + 1) / ((2 * k + 1) * comb(2 * k, k))
        elif self.shape == "exp":
            norm = quad(self._exp_profile, -1.0, 1.0, epsabs=1e-14, epsrel=1e-14)[0]
        else:
            raise ValueError(f"unknown g' shape {self.shape!r}")
        object.__setattr__(self, "_norm", norm)

    @staticmethod
    def _exp_profile(t):
        t = np.asarray(t, dtype=float)
        inside = np.abs(t) < 1.0
        ts = np.where(inside, t, 0.0)
        return np.where(inside, np.exp(-1.0 / (1.0 - ts**2)), 0.0)

    def _profile(self, t):
        t = np.asarray(t, dtype=float)
        if self.shape == "poly":
            return np.where(np.abs(t) < 1.0, np.clip(1.0 - t**2, 0.0, None) ** self.power, 0.0)
        return self._exp_profile(t)

    def f(self, x1, center: float = 0.0):
        return smoothstep((np.asarray(x1, dtype=float) - center + self.ell) / (2 * self.ell), self.f_order)

    def g_prime(self, lam):
        t = (np.asarray(lam, dtype=float) - self.lam0) / self.eps
        return -self._profile(t) / (self.eps * self._norm)

    def g(self, lam):
        t = (np.asarray(lam, dtype=float) - self.lam0) / self.eps
        if self.shape == "poly":
            s = np.clip((t + 1.0) / 2.0, 0.0, 1.0)
            return 1.0 - betainc(self.power + 1, self.power + 1, s)
        tt = np.clip(t, -1.0, 1.0)
        vals = [quad(self._exp_profile, -1.0, float(x), epsabs=1e-14)[0] for x in np.ravel(tt)]
        return 1.0 - np.reshape(vals, np.shape(tt)) / self._norm

    def g_prime_integral(self) -> float:
        lo, hi = self.lam0 - self.eps, self.lam0 + self.eps
        return quad(self.g_prime, lo, hi, epsabs=1e-14, epsrel=1e-13, points=[self.lam0])[0]


# ---------------------------------------------------------------------------
# boxes
# ---------------------------------------------------------------------------


def as_matrix_model(model, r1_max: int = 12) -> MatrixModel:
    """Finite-range form of a lattice model for real-space assembly."""
    if isinstance(model, MatrixModel):
        return model
    if isinstance(model, AppendixModel):
        return model.to_matrix_model(r1_max=r1_max)
    raise ModelError(f"cannot place {type(model).__name__} in a real-space box")


@dataclass
class BoxOperator:
    """Junction on ``{0..L1-1} x {-L2..L2}`` with open boundaries.

    Sites are ordered with ``x2`` as the slow index, which keeps the sparse
    bandwidth at ``d * L1 * max|r2|``.  Bonds use the junction snapshot at the
    bond midpoint in ``x2``.
    """

    family: JunctionFamily
    L1: int
    L2: int
    r1_max: int = 12
    H: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        f = self.family
        models = [as_matrix_model(m, self.r1_max) for m in (f.minus, f.plus, f.barrier)]
        if len({m.dim for m in models}) != 1:
            raise ModelError("junction models have different dimensions")
        self._models = models
        self.H = self._assemble()
        res = abs(self.H - self.H.conj().T).max() if self.H.nnz else 0.0
        if res > 1e-10:
            raise ModelError(f"box matrix not Hermitian (residual {res:.2e})")
        self.H = ((self.H + self.H.conj().T) * 0.5).tocsr()

    @property
    def d(self) -> int:
        return self._models[0].dim

    @property
    def n2(self) -> int:
        return 2 * self.L2 + 1

    @property
    def dim(self) -> int:
        return self.L1 * self.n2 * self.d

    def site_x1(self) -> np.ndarray:
        return np.tile(np.repeat(np.arange(self.L1), self.d), self.n2)

    def site_x2(self) -> np.ndarray:
        return np.repeat(np.arange(-self.L2, self.L2 + 1), self.L1 * self.d)

    def _index(self, x1, j2, orb):
        return (j2 * self.L1 + x1) * self.d + orb

    def _assemble(self) -> sp.csr_matrix:
        d, L1, n2 = self.d, self.L1, self.n2
        shifts = sorted({r for m in self._models for r in m.hoppings})
        rows, cols, data = [], [], []
        x2 = np.arange(-self.L2, self.L2 + 1)
        for r1, r2 in shifts:
            a1 = np.arange(max(0, -r1), min(L1, L1 - r1))
            a2 = np.arange(max(0, -r2), min(n2, n2 - r2))
            if a1.size == 0 or a2.size == 0:
                continue
            cm, cp, c0 = self.family.weights(x2[a2] + 0.5 * r2)
            B = np.zeros((a2.size, d, d), dtype=complex)
            for wts, m in zip((cm, cp, c0), self._models):
                T = m.hoppings.get((r1, r2))
                if T is not None:
                    B += np.asarray(wts)[:, None, None] * T
            keep = np.any(B != 0, axis=(1, 2))
            if not keep.any():
                continue
            a2, B = a2[keep], B[keep]
            J, X, O, P = np.meshgrid(np.arange(a2.size), a1, np.arange(d), np.arange(d), indexing="ij")
            rows.append(self._index(X, a2[J], O).ravel())
            cols.append(self._index(X + r1, a2[J] + r2, P).ravel())
            data.append(B[J, O, P].ravel())
        if not rows:
            return sp.csr_matrix((self.dim, self.dim), dtype=complex)
        return sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(self.dim, self.dim))

    def perturbed(self, V: sp.spmatrix) -> "BoxOperator":
        out = object.__new__(BoxOperator)
        out.__dict__.update(self.__dict__)
        out.H = (self.H + V).tocsr()
        return out

    @property
    def bulk_models(self) -> list[MatrixModel]:
        return [self._models[0], self._models[1]]


def box_operator(minus, plus, lam0: float, L1: int, L2: int, r1_max: int = 12) -> BoxOperator:
    return BoxOperator(default_junction(minus, plus, lam0), L1, L2, r1_max)


@dataclass(frozen=True)
class WindowSpec:
    margin: int

    def validate(self, box: BoxOperator) -> None:
        if not 0 <= self.margin < min(box.L1, box.n2) / 3:
            raise ValueError(f"margin {self.margin} must satisfy 0 <= m < min(L1, 2 L2 + 1) / 3")

    def mask(self, box: BoxOperator) -> np.ndarray:
        m = self.margin
        x1 = box.site_x1()
        j2 = box.site_x2() + box.L2
        return (x1 >= m) & (x1 <= box.L1 - 1 - m) & (j2 >= m) & (j2 <= box.n2 - 1 - m)


def interface_perturbation(box: BoxOperator, rng: np.random.Generator, bound: float,
                           half_height: int = 2) -> sp.csr_matrix:
    """Random local Hermitian perturbation (on-site and nearest-neighbour terms)
    supported on ``|x2| <= half_height`` with operator norm at most ``bound``."""
    d = box.d
    x1, x2 = box.site_x1(), box.site_x2()
    inside = np.abs(x2) <= half_height
    n = box.dim
    rows, cols, vals = [], [], []
    sites = np.nonzero(inside & (np.arange(n) % d == 0))[0]
    for s in sites:
        blk = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        blk = 0.5 * (blk + blk.conj().T)
        for a in range(d):
            for b in range(d):
                rows.append(s + a); cols.append(s + b); vals.append(blk[a, b])
        for step in (d, box.L1 * d):        # +x1 and +x2 neighbours
            t = s + step
            if t < n and inside[t] and (step != d or x1[t] == x1[s] + 1):
                hop = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
                for a in range(d):
                    for b in range(d):
                        rows += [s + a, t + b]; cols += [t + b, s + a]
                        vals += [hop[a, b], np.conj(hop[a, b])]
    V = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    norm = spla.eigsh(V, k=1, which="LM", return_eigenvectors=False)[0]
    return (V * (bound / abs(norm))).tocsr()


# ---------------------------------------------------------------------------
# windowed trace
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConductivityResult:
    value: float
    two_pi_value: float
    nearest_int: int
    deviation: float
    full_trace: float
    n_states: int
    L1: int
    L2: int
    margin: int
    method: str

    def to_json(self) -> dict:
        return {"value": self.value, "two_pi_value": self.two_pi_value,
                "nearest_int": self.nearest_int, "deviation": self.deviation,
                "full_trace": self.full_trace, "n_states": self.n_states,
                "box": [self.L1, self.L2], "margin": self.margin, "method": self.method}


def certified_half_gap(models: Sequence[MatrixModel], lam0: float, n: int = 64) -> float:
    """Smallest distance from ``lam0`` to the bulk spectra sampled on an n x n grid."""
    out = np.inf
    for m in models:
        rep = check_gap(compute_bands(m, BZGrid(n, n)), lam0, 0.0)
        if rep.n_below < 0:
            raise GapNotCertified("band count below lam0 varies over the grid")
        out = min(out, lam0 - rep.max_below, rep.min_above - lam0)
    return float(out)


def window_eigenpairs(H, lo: float, hi: float, method: str = "auto", dense_limit: int = 2500,
                      k0: int = 24):
    """All eigenpairs of the Hermitian ``H`` with eigenvalue in ``[lo, hi]``."""
    n = H.shape[0]
    if method == "auto":
        method = "dense" if n <= dense_limit else "sparse"
    if method == "dense":
        A = H.toarray() if sp.issparse(H) else np.asarray(H)
        w, v = sla.eigh(A, subset_by_value=(lo, hi), driver="evr")
        return w, v, "dense"
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    # slightly off-centre shift keeps the factorization away from an exact eigenvalue
    sigma = center + 1e-3 * half
    k = min(k0, n - 2)
    Hc = sp.csc_matrix(H)
    opinv = spla.splu(Hc - sigma * sp.identity(n, dtype=complex, format="csc"))
    OPinv = spla.LinearOperator((n, n), matvec=opinv.solve, dtype=complex)
    rng = np.random.default_rng(0)
    v0 = rng.normal(size=n) + 1j * rng.normal(size=n)       # fixed start: reproducible runs
    while True:
        w, v = spla.eigsh(Hc, k=k, sigma=sigma, which="LM", OPinv=OPinv, tol=1e-12, v0=v0)
        if np.max(np.abs(w - sigma)) > half + abs(sigma - center) or k >= n - 2:
            break
        k = min(2 * k, n - 2)
    # Lanczos vectors inside degenerate clusters need not be orthonormal: Rayleigh-Ritz
    Q, _ = np.linalg.qr(v)
    w, U = np.linalg.eigh(Q.conj().T @ (Hc @ Q))
    v = Q @ U
    sel = (w >= lo) & (w <= hi)
    w, v = w[sel], v[:, sel]
    resid = np.linalg.norm(Hc @ v - v * w, axis=0).max() if w.size else 0.0
    if resid > 1e-8:
        raise RuntimeError(f"window eigenpairs not converged (residual {resid:.2e})")
    return w, v, "sparse"


def windowed_conductivity(box: BoxOperator, s: SwitchFunctions, w: WindowSpec,
                          method: str = "auto", check_bulk_gap: bool = True) -> ConductivityResult:
    """Windowed ``Tr(i [H, F] g'(H))`` with ``F = diag f(x1)`` centred at ``L1 / 2``."""
    w.validate(box)
    if s.ell > box.L1 / 4:
        raise ValueError(f"ell = {s.ell:g} exceeds L1 / 4 = {box.L1 / 4:g}")
    if check_bulk_gap:
        gap = certified_half_gap(box.bulk_models, s.lam0)
        if not gap > s.eps:
            raise GapNotCertified(f"g' support [lam0 - {s.eps:g}, lam0 + {s.eps:g}] "
                                  f"not inside the bulk gap (half-width {gap:.4g})")
    lam, V, used = window_eigenpairs(box.H, s.lam0 - s.eps, s.lam0 + s.eps, method)
    F = s.f(box.site_x1(), center=box.L1 / 2)
    H = box.H
    A = 1j * (H.multiply(F[None, :]) - H.multiply(F[:, None]))   # i [H, F]
    gp = s.g_prime(lam)
    AV = A @ V
    diag = np.einsum("ik,k,ik->i", AV, gp, np.conj(V))
    mask = w.mask(box)
    value = float(np.real(diag[mask].sum()))
    full = float(np.abs(diag.sum()))
    two_pi = TWO_PI * value
    nearest = int(np.rint(two_pi))
    return ConductivityResult(value=value, two_pi_value=two_pi, nearest_int=nearest,
                              deviation=float(abs(two_pi - nearest)), full_trace=full,
                              n_states=int(lam.size), L1=box.L1, L2=box.L2, margin=w.margin,
                              method=used)


def default_switch(models: Sequence, lam0: float, L1: int, ell: float | None = None,
                   **kw) -> SwitchFunctions:
    """``eps`` = half the certified bulk half-gap, ``ell = L1 / 8`` unless given."""
    mats = [as_matrix_model(m) for m in models]
    eps = 0.5 * certified_half_gap(mats, lam0)
    return SwitchFunctions(lam0=lam0, eps=eps, ell=L1 / 8 if ell is None else ell, **kw)


# ---------------------------------------------------------------------------
# convergence studies
# ---------------------------------------------------------------------------


@dataclass
class ConvergenceTable:
    rows: list
    error_bar: float
    target: int | None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["L1", "L2", "margin", "value", "two_pi_value", "deviation", "step_change"])
            for r in self.rows:
                w.writerow([r["L1"], r["L2"], r["margin"], repr(r["value"]), repr(r["two_pi_value"]),
                            repr(r["deviation"]), "" if r["step_change"] is None else repr(r["step_change"])])

    def to_json(self) -> dict:
        return {"rows": self.rows, "error_bar": self.error_bar, "target": self.target}


def conductivity_convergence(family: JunctionFamily, sizes: Sequence[tuple[int, int]],
                             switch: SwitchFunctions, margin: int, target: int | None = None,
                             method: str = "auto", ell_fraction: float | None = None) -> ConvergenceTable:
    """Windowed conductivity over growing boxes.

    The error bar (in units of ``2 pi * value``) is the larger of the largest
    successive change and the largest distance to ``target`` (or to the
    nearest integer when no target is given).
    """
    rows, prev = [], None
    for L1, L2 in sizes:
        box = BoxOperator(family, L1, L2)
        sw = switch
        if ell_fraction is not None:
            sw = SwitchFunctions(switch.lam0, switch.eps, ell_fraction * L1, switch.f_order,
                                 switch.shape, switch.power)
        r = windowed_conductivity(box, sw, WindowSpec(margin), method)
        ref = r.nearest_int if target is None else target
        rows.append({"L1": L1, "L2": L2, "margin": margin, "value": r.value,
                     "two_pi_value": r.two_pi_value, "deviation": float(abs(r.two_pi_value - ref)),
                     "step_change": None if prev is None else float(abs(r.two_pi_value - prev))})
        prev = r.two_pi_value
    changes = [r["step_change"] for r in rows if r["step_change"] is not None]
    bar = max(changes + [r["deviation"] for r in rows])
    return ConvergenceTable(rows=rows, error_bar=float(bar), target=target)
