"""Interface strips periodic along the edge, their gap states and spectral flow.

A junction is cut along ``x2`` to ``{-W..W}`` with open ends and Bloch-reduced
along ``x1`` with ``u(x + e1) = e^{i zeta} u(x)``.  Eigenvalue curves of
``zeta -> H(zeta)`` inside the bulk gap are tracked over ``[0, 2 pi]`` and
their signed crossings of ``lam0`` counted.  Curves living at the outer cut
ends are discarded by a localization filter.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .bands import BZGrid, compute_bands, check_gap
from .models import (TWO_PI, AnyModel, ContinuousModel, JunctionFamily, ModelError,
                     default_junction, is_lattice, profile_minus, profile_plus)
from .topology import chern_number

# Raw flow counts upward crossings for the Bloch convention u(x + e1) = e^{i zeta} u
# with the "plus" bulk at x2 > 0.  The edge index c1(plus) - c1(minus) is its negative;
# calibrated once against the windowed trace conductivity.
EDGE_ORIENTATION = -1

DEFAULT_THETA = 0.5


class StageError(RuntimeError):
    """Failure inside one stage of a composite computation."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


class AmbiguousMatchingError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# lattice strips
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StripOperator:
    """Junction of lattice models on heights ``x2 = -W..W``.

    Bonds between ``x2`` and ``x2 + r`` use the model snapshot at the bond
    midpoint, so deep rows reproduce pure bulk blocks exactly.
    """

    family: JunctionFamily
    W: int
    direction: int = 1

    def __post_init__(self):
        if not self.family.lattice:
            raise ModelError("StripOperator needs lattice models; see continuous_strip")
        rng = self.hopping_range
        if rng > self.W / 4:
            raise ModelError(f"hopping range {rng} exceeds W/4 = {self.W / 4:g}")

    @property
    def hopping_range(self) -> int:
        f = self.family
        return max(m.strip_range for m in (f.minus, f.plus, f.barrier))

    @property
    def d(self) -> int:
        return self.family.plus.dim

    @property
    def dim(self) -> int:
        return self.d * (2 * self.W + 1)

    @property
    def heights(self) -> np.ndarray:
        """``x2`` of every matrix row."""
        return np.repeat(np.arange(-self.W, self.W + 1), self.d).astype(float)

    @property
    def half_width(self) -> float:
        return float(self.W)

    def __call__(self, zeta: float) -> np.ndarray:
        f, W, d = self.family, self.W, self.d
        tables = [m.strip_table(zeta, self.direction) for m in (f.minus, f.plus, f.barrier)]
        n = 2 * W + 1
        H = np.zeros((n * d, n * d), dtype=complex)
        offsets = sorted({r for t in tables for r in t if r >= 0})
        x2 = np.arange(-W, W + 1)
        for r in offsets:
            blocks = [t.get(r) for t in tables]
            src = x2[: n - r]
            cm, cp, c0 = f.weights(src + 0.5 * r)
            for i, (a, b, c) in enumerate(zip(cm, cp, c0)):
                B = 0
                for wt, T in zip((a, b, c), blocks):
                    if T is not None and wt != 0.0:
                        B = B + wt * T
                if isinstance(B, int):
                    continue
                j = i + r
                H[i * d:(i + 1) * d, j * d:(j + 1) * d] += B
                if r > 0:
                    H[j * d:(j + 1) * d, i * d:(i + 1) * d] += B.conj().T
        res = np.max(np.abs(H - H.conj().T)) if H.size else 0.0
        if res > 1e-10:
            raise ModelError(f"strip matrix not Hermitian (residual {res:.2e})")
        return 0.5 * (H + H.conj().T)


def assemble_strip(jf: JunctionFamily, W: int, zeta: float, direction: int = 1) -> np.ndarray:
    return StripOperator(jf, W, direction)(zeta)


# ---------------------------------------------------------------------------
# continuous strips
# ---------------------------------------------------------------------------


def _y1_series(cmap, y2) -> dict[int, np.ndarray]:
    """Fourier series in y1 with y2-dependent coefficients: ``m -> f_m(y2)``."""
    out: dict[int, np.ndarray] = {}
    for (k1, k2), v in cmap.items():
        out[k1] = out.get(k1, 0) + v * np.exp(TWO_PI * 1j * k2 * y2)
    return out


def _mult_blocks(cmap, y2, K: int) -> np.ndarray:
    """Multiplication by f(y1, y2_j) in the basis e^{i(zeta + 2 pi k) y1}: (n, M, M)."""
    y2 = np.asarray(y2, dtype=float)
    M = 2 * K + 1
    out = np.zeros((y2.size, M, M), dtype=complex)
    k = np.arange(-K, K + 1)
    diff = k[:, None] - k[None, :]
    for m, vals in _y1_series(cmap, y2).items():
        mask = diff == m
        out[:, mask] += np.asarray(vals)[:, None]
    return out


@dataclass(frozen=True)
class ContinuousStrip:
    """Junction of magnetic Schroedinger operators on ``y2 in [-L, L]``.

    Fourier modes ``|k| <= K`` along ``y1`` and ``n`` interior finite-difference
    nodes along ``y2`` with Dirichlet ends.  The operator is assembled as the
    quadratic form ``sum_i G_i^* chi_i G_i + chi_i V_i`` with ``G = D + A``,
    which keeps it Hermitian for any profile.
    """

    family: JunctionFamily
    L: float
    n: int
    K: int

    def __post_init__(self):
        for m in (self.family.minus, self.family.plus, self.family.barrier):
            if not isinstance(m, ContinuousModel) or m.kind != "magnetic-schrodinger":
                raise ModelError("continuous strips support magnetic-schrodinger models only")
        if self.L <= 2.0:
            raise ModelError("strip half-width must exceed the transition region |y2| <= 2")

    @property
    def h(self) -> float:
        return 2.0 * self.L / (self.n + 1)

    @property
    def nodes(self) -> np.ndarray:
        return -self.L + self.h * np.arange(1, self.n + 1)

    @property
    def modes(self) -> int:
        return 2 * self.K + 1

    @property
    def dim(self) -> int:
        return self.n * self.modes

    @property
    def heights(self) -> np.ndarray:
        return np.repeat(self.nodes, self.modes)

    @property
    def half_width(self) -> float:
        return float(self.L)

    def __call__(self, zeta: float) -> np.ndarray:
        n, M, h = self.n, self.modes, self.h
        y = self.nodes
        ye = -self.L + h * (np.arange(n + 1) + 0.5)       # edge midpoints
        f = self.family
        k = np.arange(-self.K, self.K + 1)
        H = np.zeros((n * M, n * M), dtype=complex)
        eye = np.eye(M)
        for model, prof in ((f.minus, profile_minus), (f.plus, profile_plus), (f.barrier, None)):
            if prof is None:
                wn = 1.0 - profile_plus(y, f.order) - profile_minus(y, f.order)
                we = 1.0 - profile_plus(ye, f.order) - profile_minus(ye, f.order)
            else:
                wn, we = prof(y, f.order), prof(ye, f.order)
            if not (np.any(wn) or np.any(we)):
                continue
            A1 = _mult_blocks(model.coeff("A1"), y, self.K)
            A2 = _mult_blocks(model.coeff("A2"), ye, self.K)
            V = _mult_blocks(model.coeff("V"), y, self.K)
            G1 = np.diag(zeta + TWO_PI * k)[None] + A1            # (n, M, M)
            for j in range(n):
                blk = G1[j].conj().T @ G1[j] + V[j]
                H[j * M:(j + 1) * M, j * M:(j + 1) * M] += wn[j] * blk
            # G2 maps nodes to edges: (-i/h)(u_{j+1} - u_j) + A2 (u_j + u_{j+1}) / 2
            G2 = np.zeros(((n + 1) * M, n * M), dtype=complex)
            for e in range(n + 1):
                rows = slice(e * M, (e + 1) * M)
                if e < n:       # right node of the edge
                    G2[rows, e * M:(e + 1) * M] += (-1j / h) * eye + 0.5 * A2[e]
                if e > 0:       # left node
                    G2[rows, (e - 1) * M:e * M] += (1j / h) * eye + 0.5 * A2[e]
            H += G2.conj().T @ (np.repeat(we, M)[:, None] * G2)
        return 0.5 * (H + H.conj().T)


def continuous_strip(jf: JunctionFamily, L: float, n: int, K: int) -> ContinuousStrip:
    return ContinuousStrip(jf, L, n, K)


# ---------------------------------------------------------------------------
# Floquet spectra and curve matching
# ---------------------------------------------------------------------------

DEGENERACY_TOL = 1e-9
MATCH_CONFIDENCE = 0.5


@dataclass
class FloquetSpectrum:
    """Eigenvalue curves over one period on an adaptively refined grid.

    Each node keeps the states with ``|lam - lam0| <= 1.5 w`` (ascending), their
    interface weights and, for computed spectra, their eigenvectors.  Curves are
    followed across nodes by eigenvector overlap; synthetic spectra built with
    :meth:`from_curves` carry the curve identity in their column order instead.
    """

    zeta: np.ndarray
    values: list
    weights: list
    lam0: float
    half_width: float
    vectors: list | None = None
    converged: bool = True
    periodicity_error: float = 0.0
    unresolved: list = field(default_factory=list)

    def window_states(self, j: int):
        v = self.values[j]
        sel = np.abs(v - self.lam0) <= self.half_width
        return v[sel], self.weights[j][sel]

    def match(self, j: int) -> "IntervalMatch":
        """Curve correspondence between nodes ``j`` and ``j + 1``."""
        vec = self.vectors
        return match_states(self.values[j], self.values[j + 1],
                            None if vec is None else vec[j], None if vec is None else vec[j + 1],
                            self.weights[j], self.weights[j + 1], self.lam0, self.half_width)

    def max_displacement(self) -> float:
        return max((self.match(j).displacement for j in range(len(self.zeta) - 1)), default=0.0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["zeta", "eigenvalue", "localization_weight"])
            for j, z in enumerate(self.zeta):
                vals, wts = self.window_states(j)
                for lam, wt in zip(vals, wts):
                    w.writerow([repr(float(z)), repr(float(lam)), repr(float(wt))])

    @classmethod
    def from_curves(cls, zeta, curves, lam0: float, half_width: float, weights=None) -> "FloquetSpectrum":
        """Wrap sampled curves ``curves[j, c]``, one column per curve."""
        zeta = np.asarray(zeta, dtype=float)
        curves = np.asarray(curves, dtype=float)
        if curves.ndim == 1:
            curves = curves[:, None]
        weights = np.ones_like(curves) if weights is None else np.asarray(weights, dtype=float).reshape(curves.shape)
        fs = cls(zeta=zeta, values=list(curves), weights=list(weights),
                 lam0=float(lam0), half_width=float(half_width))
        fs.converged = fs.max_displacement() < half_width / 4
        fs.periodicity_error = float(np.max(np.abs(curves[0] - curves[-1])))
        return fs


@dataclass(frozen=True)
class IntervalMatch:
    pairs: tuple                # (i, j) state indices at the left / right node
    displacement: float         # max |lam_i - lam_j| over pairs touching the window
    confidence: float           # min captured overlap per degenerate cluster
    crossings: tuple            # (i, j, sign, weight, weight_ok)


def _clusters(v: np.ndarray) -> np.ndarray:
    """Label runs of (numerically) degenerate values."""
    if v.size == 0:
        return np.zeros(0, dtype=int)
    tol = DEGENERACY_TOL * max(1.0, float(np.max(np.abs(v))))
    return np.concatenate([[0], np.cumsum(np.diff(v) > tol)])


def _below(v, lam0: float):
    return v < lam0 - 1e-12 * max(1.0, abs(lam0))


def match_states(va, vb, Va, Vb, wa, wb, lam0: float, w: float, theta: float = DEFAULT_THETA) -> IntervalMatch:
    if Va is None or Vb is None:
        if va.size != vb.size:
            raise ValueError("synthetic curves need the same count at every node")
        pairs = [(i, i) for i in range(va.size)]
        conf = 1.0
    else:
        O = np.abs(np.conj(Va).T @ Vb) ** 2
        rows, cols = linear_sum_assignment(-O) if O.size else (np.array([], int), np.array([], int))
        pairs = list(zip(rows.tolist(), cols.tolist()))
        la, lb = _clusters(va), _clusters(vb)
        conf = 1.0
        partner = dict(pairs)
        for c in np.unique(la):
            members = np.nonzero(la == c)[0]
            if not np.any(np.abs(va[members] - lam0) <= w):
                continue
            tgt = {lb[partner[i]] for i in members if i in partner}
            cols_c = np.nonzero(np.isin(lb, list(tgt)))[0]
            captured = O[np.ix_(members, cols_c)].sum() / members.size if cols_c.size else 0.0
            conf = min(conf, float(captured))
    disp = 0.0
    crossings = []
    ba, bb = _below(va, lam0), _below(vb, lam0)
    for i, j in pairs:
        if abs(va[i] - lam0) <= w or abs(vb[j] - lam0) <= w:
            disp = max(disp, abs(float(va[i] - vb[j])))
        if ba[i] != bb[j]:
            sign = 1 if ba[i] else -1
            ok = (wa[i] >= theta) == (wb[j] >= theta)
            crossings.append((i, j, sign, 0.5 * float(wa[i] + wb[j]), ok))
    # a window state without a partner left the stored band: it moved by more than w / 2
    ia = {i for i, _ in pairs}
    ib = {j for _, j in pairs}
    lost = [k for k in range(va.size) if k not in ia and abs(va[k] - lam0) <= w]
    lost += [k for k in range(vb.size) if k not in ib and abs(vb[k] - lam0) <= w]
    if lost:
        disp = max(disp, 0.5 * w)
    return IntervalMatch(tuple(pairs), disp, conf, tuple(crossings))


def localization_mask(strip, fraction: float = 1.0 / 3.0) -> np.ndarray:
    return np.abs(strip.heights) <= fraction * strip.half_width


def default_offset(n_zeta: int) -> float:
    """Generic fraction of a grid step; keeps nodes off symmetry points such as zeta = 0."""
    return 0.5 * (np.sqrt(5.0) - 1.0) * 0.5 * TWO_PI / (n_zeta - 1)


def zeta_lipschitz(strip, samples: int = 32, delta: float = 1e-5) -> float:
    """Sampled bound on ``||dH/dzeta||``, which bounds the slope of every eigenvalue branch."""
    best = 0.0
    for z in TWO_PI * (np.arange(samples) + 0.5) / samples:
        D = (strip(z + delta) - strip(z - delta)) / (2 * delta)
        best = max(best, float(np.max(np.abs(np.linalg.eigvalsh(D)))))
    return best


def floquet_spectrum(strip, n_zeta: int, lam0: float, half_width: float,
                     max_nodes: int = 4000, min_step: float = 1e-7,
                     theta: float = DEFAULT_THETA, offset: float | None = None,
                     bulk_check: Sequence[AnyModel] | None = None) -> FloquetSpectrum:
    """Window spectra of ``zeta -> strip(zeta)`` over ``[offset, offset + 2 pi]``.

    An interval is bisected while (a) a matched curve moves by ``>= w/4``
    across it, (b) the eigenvector overlap leaves the matching ambiguous, or
    (c) a curve crosses ``lam0`` with endpoint weights on both sides of ``theta``,
    or (d) the full count of eigenvalues below ``lam0`` changes by something
    other than the net signed crossings of the matched window curves.
    Intervals still failing below ``min_step`` are reported as unresolved; a
    node budget overrun is flagged by ``converged = False``.

    The initial grid is raised, if needed, so that no eigenvalue branch moves
    by more than ``w`` per step: a curve crossing ``lam0`` then sits inside the
    window at both ends of its interval and cannot slip between nodes.
    """
    if n_zeta < 2:
        raise ValueError("need at least two zeta nodes")
    if half_width <= 0:
        raise ValueError("window half-width must be positive")
    if bulk_check is not None:
        for m in bulk_check:
            rep = check_gap(compute_bands(m, BZGrid(64, 64)), lam0, half_width / 2)
            if not rep.gapped:
                raise ValueError(f"window [{lam0 - half_width:g}, {lam0 + half_width:g}] "
                                 "is not inside the certified bulk gap")
    slope = 1.25 * zeta_lipschitz(strip)
    n_zeta = max(n_zeta, int(np.ceil(TWO_PI * slope / half_width)) + 1)
    offset = default_offset(n_zeta) if offset is None else float(offset)
    mask = localization_mask(strip)
    reach = 1.5 * half_width
    cache: dict[float, tuple] = {}
    count: dict[float, int] = {}

    def solve(z):
        if z not in cache:
            w, v = np.linalg.eigh(strip(z))
            count[z] = int(np.count_nonzero(_below(w, lam0)))
            keep = np.abs(w - lam0) <= reach
            wk, vk = w[keep], v[:, keep]
            labels = _clusters(wk)
            for c in np.unique(labels):
                idx = np.nonzero(labels == c)[0]
                if idx.size > 1:
                    # canonical basis of a degenerate cluster: diagonalize the interface weight
                    sub = vk[:, idx]
                    B = np.conj(sub[mask]).T @ sub[mask]
                    _, U = np.linalg.eigh(0.5 * (B + np.conj(B).T))
                    vk[:, idx] = sub @ U
            wt = np.real(np.einsum("ij,ij->j", np.conj(vk[mask]), vk[mask]))
            cache[z] = (wk, wt, vk)
        return cache[z]

    def interval(za, zb):
        a, b = cache[za], cache[zb]
        return match_states(a[0], b[0], a[2], b[2], a[1], b[1], lam0, half_width, theta)

    def needs_split(za, zb):
        m = interval(za, zb)
        # every net change of the count below lam0 must be seen as a matched crossing
        net = sum(c[2] for c in m.crossings)
        return (m.displacement >= half_width / 4 or m.confidence < MATCH_CONFIDENCE
                or any(not c[4] for c in m.crossings) or net != count[za] - count[zb])

    nodes = list(offset + np.linspace(0.0, TWO_PI, n_zeta))
    for z in nodes:
        solve(z)
    converged = True
    unresolved: list[tuple[float, float]] = []
    pending = list(range(len(nodes) - 1))
    while pending:
        splits = []
        for i in pending:
            za, zb = nodes[i], nodes[i + 1]
            if needs_split(za, zb):
                if zb - za < min_step:
                    unresolved.append((za, zb))
                else:
                    splits.append(i)
        if not splits:
            break
        if len(nodes) + len(splits) > max_nodes:
            converged = False
            break
        fresh = []
        for i in splits:
            zm = 0.5 * (nodes[i] + nodes[i + 1])
            solve(zm)
            fresh.append(zm)
        nodes = sorted(nodes + fresh)
        fresh_set = set(fresh)
        pending = [i for i in range(len(nodes) - 1) if nodes[i] in fresh_set or nodes[i + 1] in fresh_set]

    e0 = np.linalg.eigvalsh(strip(0.0))
    e1 = np.linalg.eigvalsh(strip(TWO_PI))
    return FloquetSpectrum(zeta=np.array(nodes), values=[cache[z][0] for z in nodes],
                           weights=[cache[z][1] for z in nodes], lam0=float(lam0),
                           half_width=float(half_width), vectors=[cache[z][2] for z in nodes],
                           converged=converged, periodicity_error=float(np.max(np.abs(e0 - e1))),
                           unresolved=sorted(set(unresolved)))


def bulk_projection(model: AnyModel, zeta: float, lam0: float, n_xi2: int = 256) -> tuple[float, float]:
    """Closest bulk eigenvalues below/above ``lam0`` at fixed ``zeta``, over ``xi2``."""
    xi2 = TWO_PI * np.arange(n_xi2) / n_xi2
    xi = np.stack([np.full_like(xi2, zeta), xi2], axis=-1)
    ev = np.linalg.eigvalsh(model(xi))
    below = ev[ev < lam0]
    above = ev[ev >= lam0]
    return (float(below.max()) if below.size else -np.inf,
            float(above.min()) if above.size else np.inf)


# ---------------------------------------------------------------------------
# spectral flow
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Crossing:
    zeta: float
    sign: int
    weight: float


@dataclass(frozen=True)
class SpectralFlowResult:
    flow: int
    crossings: tuple
    filtered: bool
    theta: float
    discarded: int = 0

    def to_json(self) -> dict:
        return {"flow": self.flow, "filtered": self.filtered, "theta": self.theta,
                "discarded": self.discarded,
                "crossings": [{"zeta": float(c.zeta), "sign": c.sign, "weight": float(c.weight)}
                              for c in self.crossings]}


def spectral_flow(fs: FloquetSpectrum, lam0: float | None = None, theta: float = DEFAULT_THETA,
                  filtered: bool = True, allow_partial: bool = False) -> SpectralFlowResult:
    """Signed count of matched curves passing ``lam0``.

    A crossing is a change of ``lam < lam0`` along a matched curve between
    adjacent nodes, signed +1 when the curve leaves the region below ``lam0``.
    """
    if lam0 is not None and float(lam0) != fs.lam0:
        fs = FloquetSpectrum(fs.zeta, fs.values, fs.weights, float(lam0), fs.half_width,
                             fs.vectors, fs.converged, fs.periodicity_error, fs.unresolved)
    if not fs.converged and not allow_partial:
        raise AmbiguousMatchingError("Floquet spectrum did not meet the displacement bound "
                                     "within the node budget")
    if fs.unresolved and not allow_partial:
        za, zb = fs.unresolved[0]
        raise AmbiguousMatchingError(f"curve matching unresolved on zeta in [{za:.6g}, {zb:.6g}]")
    crossings, dropped = [], 0
    for j in range(len(fs.zeta) - 1):
        m = fs.match(j)
        for i, k, sign, wt, _ in m.crossings:
            a, b = fs.values[j][i], fs.values[j + 1][k]
            t = (fs.lam0 - a) / (b - a) if b != a else 0.5
            z = fs.zeta[j] + float(np.clip(t, 0.0, 1.0)) * (fs.zeta[j + 1] - fs.zeta[j])
            if filtered and wt < theta:
                dropped += 1
                continue
            crossings.append(Crossing(float(z), sign, wt))
    return SpectralFlowResult(flow=int(sum(c.sign for c in crossings)), crossings=tuple(crossings),
                              filtered=filtered, theta=float(theta), discarded=dropped)


def edge_index(result: SpectralFlowResult) -> int:
    """Oriented flow, comparable with ``c1(plus) - c1(minus)``."""
    return EDGE_ORIENTATION * result.flow


# ---------------------------------------------------------------------------
# bulk-edge verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EdgeParams:
    W: int = 40
    n_zeta: int = 200
    half_width: float | None = None   # default: 0.8 of the smallest certified bulk half-gap
    theta: float = DEFAULT_THETA
    grid: int = 24
    max_nodes: int = 4000


def _stage(name: str, fn: Callable, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - tagged and re-raised
        raise StageError(name, exc) from exc


def _bulk_half_gap(model: AnyModel, lam0: float, n: int = 64) -> float:
    rep = check_gap(compute_bands(model, BZGrid(n, n)), lam0, 0.0)
    if rep.n_below < 0:
        raise ValueError("band count below lam0 varies: bulk not gapped")
    return min(lam0 - rep.max_below, rep.min_above - lam0)


def window_half_width(models: Sequence[AnyModel], lam0: float, fraction: float = 0.8) -> float:
    return fraction * min(_bulk_half_gap(m, lam0) for m in models)


def edge_flow(minus: AnyModel, plus: AnyModel, lam0: float, params: EdgeParams = EdgeParams(),
              barrier: AnyModel | None = None) -> tuple[SpectralFlowResult, FloquetSpectrum]:
    jf = default_junction(minus, plus, lam0)
    if barrier is not None:
        jf = JunctionFamily(minus=minus, plus=plus, barrier=barrier, order=jf.order)
    w = params.half_width
    if w is None:
        w = window_half_width([minus, plus], lam0)
    strip = StripOperator(jf, params.W)
    fs = floquet_spectrum(strip, params.n_zeta, lam0, w, max_nodes=params.max_nodes, theta=params.theta)
    return spectral_flow(fs, theta=params.theta), fs


def verify_bec(minus: AnyModel, plus: AnyModel, lam0: float, params: EdgeParams = EdgeParams()) -> dict:
    """Chern numbers of both bulks against the oriented interface flow."""
    if not (is_lattice(minus) and is_lattice(plus)):
        raise StageError("setup", ModelError("verify_bec needs lattice models"))
    grid = BZGrid(params.grid, params.grid)
    c_minus = _stage("chern_minus", chern_number, minus, lam0, grid, method="lattice")
    c_plus = _stage("chern_plus", chern_number, plus, lam0, grid, method="lattice")
    w = params.half_width
    if w is None:
        w = _stage("gap", window_half_width, [minus, plus], lam0)
    p = EdgeParams(W=params.W, n_zeta=params.n_zeta, half_width=w, theta=params.theta,
                   grid=params.grid, max_nodes=params.max_nodes)
    sf, fs = _stage("spectral_flow", edge_flow, minus, plus, lam0, p)
    oriented = edge_index(sf)
    diff = c_plus.value - c_minus.value
    return {"c1_plus": c_plus.value, "c1_minus": c_minus.value, "c1_difference": diff,
            "spectral_flow": oriented, "raw_flow": sf.flow, "match": bool(oriented == diff),
            "width": params.W, "window": [lam0 - w, lam0 + w], "zeta_nodes": int(fs.zeta.size),
            "crossings": len(sf.crossings), "discarded_crossings": sf.discarded}


def concatenation_check(minus: AnyModel, plus: AnyModel, barrier: AnyModel, lam0: float,
                        params: EdgeParams = EdgeParams()) -> dict:
    """Additivity ``flow(-, +) = flow(-, 0) + flow(0, +)`` with ``barrier`` as ``0``."""
    w = params.half_width
    if w is None:
        w = _stage("gap", window_half_width, [minus, plus, barrier], lam0)
    p = EdgeParams(W=params.W, n_zeta=params.n_zeta, half_width=w, theta=params.theta,
                   grid=params.grid, max_nodes=params.max_nodes)
    f_mp = edge_index(_stage("flow(-,+)", edge_flow, minus, plus, lam0, p)[0])
    f_m0 = edge_index(_stage("flow(-,0)", edge_flow, minus, barrier, lam0, p)[0])
    f_0p = edge_index(_stage("flow(0,+)", edge_flow, barrier, plus, lam0, p)[0])
    return {"flow_minus_plus": f_mp, "flow_minus_barrier": f_m0, "flow_barrier_plus": f_0p,
            "additive": bool(f_mp == f_m0 + f_0p)}
