"""Hamiltonian families: plane-wave Bloch symbols, lattice symbols, the
two-band Chern model with a tunable winding number, and glued interfaces.

Every model exposes a Bloch symbol ``xi -> H(xi)`` evaluated in a finite
basis.  Continuous operators need a plane-wave truncation ``K`` first, see
:func:`as_symbol`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

import numpy as np

TWO_PI = 2.0 * np.pi

CONTINUOUS_KINDS = ("magnetic-schrodinger", "divergence-form", "general-second-order")

# coefficient names per kind; general-second-order uses multi-indices "a<alpha1><alpha2>"
KIND_COEFFS = {
    "magnetic-schrodinger": ("V", "A1", "A2"),
    "divergence-form": ("s11", "s12", "s21", "s22", "V"),
    "general-second-order": ("a20", "a11", "a02", "a10", "a01", "a00"),
}

HERMITIAN_TOL = 1e-10


class ModelError(ValueError):
    """Invalid model definition or inconsistent assembly."""


# ---------------------------------------------------------------------------
# smooth profiles
# ---------------------------------------------------------------------------


def smoothstep(t, order: int = 7):
    """Polynomial smoothstep of odd degree ``order`` (C^((order-1)/2) joins).

    Equals 0 for t <= 0 and 1 for t >= 1.
    """
    if order < 3 or order % 2 == 0:
        raise ValueError("smoothstep order must be odd and >= 3")
    n = (order - 1) // 2
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    acc = np.zeros_like(t)
    for k in range(n + 1):
        acc += math.comb(n + k, k) * math.comb(2 * n + 1, n - k) * (-t) ** k
    return t ** (n + 1) * acc


def smoothstep_derivative(t, order: int = 7):
    n = (order - 1) // 2
    t = np.asarray(t, dtype=float)
    c = (2 * n + 1) * math.comb(2 * n, n)
    inside = (t > 0.0) & (t < 1.0)
    tc = np.clip(t, 0.0, 1.0)
    return np.where(inside, c * tc**n * (1.0 - tc) ** n, 0.0)


def wrap_angle(x):
    """Map to [-pi, pi)."""
    return np.mod(np.asarray(x, dtype=float) + np.pi, TWO_PI) - np.pi


# ---------------------------------------------------------------------------
# continuous (plane-wave) models
# ---------------------------------------------------------------------------

CoeffMap = Mapping[tuple, complex]


def _clean_map(m: Mapping) -> dict[tuple[int, int], complex]:
    out = {}
    for k, v in m.items():
        kk = (int(k[0]), int(k[1]))
        out[kk] = out.get(kk, 0.0) + complex(v)
    return {k: v for k, v in out.items() if v != 0}


def convolve_coeffs(a: CoeffMap, b: CoeffMap) -> dict[tuple[int, int], complex]:
    """Fourier coefficients of the product of two band-limited functions."""
    out: dict[tuple[int, int], complex] = {}
    for ka, va in a.items():
        for kb, vb in b.items():
            k = (ka[0] + kb[0], ka[1] + kb[1])
            out[k] = out.get(k, 0.0) + va * vb
    return {k: v for k, v in out.items() if v != 0}


def _support_radius(m: CoeffMap) -> int:
    return max((max(abs(k[0]), abs(k[1])) for k in m), default=0)


def _eval_coeffs(m: CoeffMap, y1, y2):
    y1 = np.asarray(y1, dtype=float)
    out = np.zeros(np.broadcast(y1, y2).shape, dtype=complex)
    for (k1, k2), v in m.items():
        out = out + v * np.exp(TWO_PI * 1j * (k1 * y1 + k2 * y2))
    return out


@dataclass(frozen=True)
class ContinuousModel:
    """Z^2-periodic second order operator with band-limited coefficients.

    ``coeffs`` maps a coefficient name (see ``KIND_COEFFS``) to a Fourier
    map ``{(k1, k2): value}`` on the unit cell, ``f(y) = sum f_k e^{2 pi i k.y}``.

    * magnetic-schrodinger: ``(D + A)^2 + V``
    * divergence-form: ``sum_jl D_j s_jl D_l + V`` (``V`` optional)
    * general-second-order: ``sum_alpha a_alpha(y) D^alpha``
    """

    kind: str
    coeffs: Mapping[str, Mapping[tuple, complex]]
    ellipticity: float = field(init=False, default=0.0)

    def __post_init__(self):
        if self.kind not in CONTINUOUS_KINDS:
            raise ModelError(f"unknown continuous model kind {self.kind!r}")
        allowed = KIND_COEFFS[self.kind]
        cleaned = {}
        for name, cmap in self.coeffs.items():
            if name not in allowed:
                raise ModelError(f"coefficient {name!r} not valid for kind {self.kind}")
            cleaned[name] = _clean_map(cmap)
        object.__setattr__(self, "coeffs", cleaned)
        self._check_reality()
        c = self._ellipticity_constant()
        if not c > 0:
            raise ModelError(f"principal symbol is not elliptic (lower bound {c:.3g})")
        object.__setattr__(self, "ellipticity", c)

    def coeff(self, name: str) -> dict[tuple[int, int], complex]:
        return self.coeffs.get(name, {})

    @property
    def support_radius(self) -> int:
        return max((_support_radius(m) for m in self.coeffs.values()), default=0)

    def _check_reality(self):
        def is_real(m, tol=1e-12):
            return all(abs(m.get((-k[0], -k[1]), 0.0) - np.conj(v)) <= tol * max(1, abs(v))
                       for k, v in m.items())

        if self.kind == "magnetic-schrodinger":
            for name in ("V", "A1", "A2"):
                if not is_real(self.coeff(name)):
                    raise ModelError(f"{name} must be real-valued: c(-k) = conj(c(k))")
        elif self.kind == "divergence-form":
            if not is_real(self.coeff("V")):
                raise ModelError("V must be real-valued")
            for a, b in (("s11", "s11"), ("s22", "s22"), ("s12", "s21")):
                ma, mb = self.coeff(a), self.coeff(b)
                keys = set(ma) | {(-k[0], -k[1]) for k in mb}
                for k in keys:
                    if abs(ma.get(k, 0.0) - np.conj(mb.get((-k[0], -k[1]), 0.0))) > 1e-12:
                        raise ModelError("sigma must be Hermitian-valued")

    def principal_part(self, y1, y2, e1, e2):
        """Principal symbol at points y and directions e (broadcasting)."""
        if self.kind == "magnetic-schrodinger":
            return np.asarray(e1) ** 2 + np.asarray(e2) ** 2 + 0.0 * np.asarray(y1)
        if self.kind == "divergence-form":
            s = {n: _eval_coeffs(self.coeff(n), y1, y2) for n in ("s11", "s12", "s21", "s22")}
            return (s["s11"] * e1 * e1 + s["s12"] * e1 * e2 + s["s21"] * e2 * e1
                    + s["s22"] * e2 * e2)
        a = {n: _eval_coeffs(self.coeff(n), y1, y2) for n in ("a20", "a11", "a02")}
        return a["a20"] * e1 * e1 + a["a11"] * e1 * e2 + a["a02"] * e2 * e2

    def _ellipticity_constant(self, ny: int = 16, nang: int = 32) -> float:
        y = np.arange(ny) / ny
        th = np.pi * np.arange(nang) / nang
        Y1, Y2, TH = np.meshgrid(y, y, th, indexing="ij")
        p = self.principal_part(Y1, Y2, np.cos(TH), np.sin(TH))
        return float(np.min(np.real(p)))

    def to_general(self) -> "ContinuousModel":
        """Rewrite as ``sum a_alpha(y) D^alpha`` (coefficients on the left)."""
        if self.kind == "general-second-order":
            return self
        one = {(0, 0): 1.0}
        terms: dict[str, dict] = {}

        def add(name, m, scale=1.0):
            cur = terms.setdefault(name, {})
            for k, v in m.items():
                cur[k] = cur.get(k, 0.0) + scale * v

        def deriv(m, j):  # Fourier map of D_j f = -i d_j f
            return {k: (TWO_PI * k[j]) * v for k, v in m.items()}

        if self.kind == "magnetic-schrodinger":
            A1, A2, V = self.coeff("A1"), self.coeff("A2"), self.coeff("V")
            add("a20", one)
            add("a02", one)
            add("a10", A1, 2.0)
            add("a01", A2, 2.0)
            # D.A + A^2 + V
            add("a00", deriv(A1, 0))
            add("a00", deriv(A2, 1))
            add("a00", convolve_coeffs(A1, A1))
            add("a00", convolve_coeffs(A2, A2))
            add("a00", V)
        else:
            s = {n: self.coeff(n) for n in ("s11", "s12", "s21", "s22")}
            # D_j s_jl D_l = s_jl D_j D_l + (D_j s_jl) D_l
            add("a20", s["s11"])
            add("a02", s["s22"])
            add("a11", s["s12"])
            add("a11", s["s21"])
            add("a10", deriv(s["s11"], 0))
            add("a10", deriv(s["s21"], 1))
            add("a01", deriv(s["s12"], 0))
            add("a01", deriv(s["s22"], 1))
            add("a00", self.coeff("V"))
        return ContinuousModel("general-second-order", terms)


def free_laplacian() -> ContinuousModel:
    return ContinuousModel("magnetic-schrodinger", {})


def _index_grid(K: int):
    r = np.arange(-K, K + 1)
    k1, k2 = np.meshgrid(r, r, indexing="ij")
    return k1.ravel(), k2.ravel()


def _conv_matrix(m: CoeffMap, K: int) -> np.ndarray:
    k1, k2 = _index_grid(K)
    n = k1.size
    C = np.zeros((n, n), dtype=complex)
    if not m:
        return C
    d1 = k1[:, None] - k1[None, :]
    d2 = k2[:, None] - k2[None, :]
    for (a, b), v in m.items():
        C[(d1 == a) & (d2 == b)] += v
    return C


class PlaneWaveSymbol:
    """Bloch symbol ``P(xi)`` of a continuous model in the basis
    ``e^{2 pi i k.y}``, ``|k_j| <= K`` (index ``(k1 + K)(2K + 1) + (k2 + K)``)."""

    equivariant = True

    def __init__(self, model: ContinuousModel, K: int):
        if K < model.support_radius:
            raise ModelError(f"truncation K={K} below coefficient support {model.support_radius}")
        self.model = model
        self.K = K
        self.k1, self.k2 = _index_grid(K)
        self.dim = self.k1.size
        self._conv = {name: _conv_matrix(m, K) for name, m in model.coeffs.items()}
        if model.kind == "magnetic-schrodinger":
            A1, A2 = model.coeff("A1"), model.coeff("A2")
            sq = convolve_coeffs(A1, A1)
            for k, v in convolve_coeffs(A2, A2).items():
                sq[k] = sq.get(k, 0.0) + v
            self._conv["A2sum"] = _conv_matrix(sq, K)

    def _c(self, name):
        return self._conv.get(name)

    def _momenta(self, xi):
        return (np.diag(TWO_PI * self.k1 + xi[0]).astype(complex),
                np.diag(TWO_PI * self.k2 + xi[1]).astype(complex))

    def raw(self, xi) -> np.ndarray:
        """Assembled matrix before symmetrization."""
        xi = np.asarray(xi, dtype=float)
        K1, K2 = self._momenta(xi)
        kind = self.model.kind
        n = self.dim
        H = np.zeros((n, n), dtype=complex)
        if kind == "magnetic-schrodinger":
            H += K1 @ K1 + K2 @ K2
            for Kj, name in ((K1, "A1"), (K2, "A2")):
                C = self._c(name)
                if C is not None:
                    H += Kj @ C + C @ Kj
            H += self._conv["A2sum"]
            if self._c("V") is not None:
                H += self._c("V")
        elif kind == "divergence-form":
            Ks = (K1, K2)
            for j, l, name in ((0, 0, "s11"), (0, 1, "s12"), (1, 0, "s21"), (1, 1, "s22")):
                C = self._c(name)
                if C is not None:
                    H += Ks[j] @ C @ Ks[l]
            if self._c("V") is not None:
                H += self._c("V")
        else:
            pw = {"a20": K1 @ K1, "a11": K1 @ K2, "a02": K2 @ K2, "a10": K1, "a01": K2,
                  "a00": np.eye(n)}
            for name, M in pw.items():
                C = self._c(name)
                if C is not None:
                    H += C @ M
        return H

    def __call__(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if xi.ndim > 1:
            flat = xi.reshape(-1, 2)
            out = np.stack([self(x) for x in flat])
            return out.reshape(xi.shape[:-1] + (self.dim, self.dim))
        H = self.raw(xi)
        resid = np.max(np.abs(H - H.conj().T)) if H.size else 0.0
        if resid > HERMITIAN_TOL * max(1.0, np.max(np.abs(H))):
            raise ModelError(f"non-Hermitian assembly (residual {resid:.3g}); model inconsistent")
        return 0.5 * (H + H.conj().T)

    def gradient(self, xi):
        """(dP/dxi1, dP/dxi2) at a single xi."""
        xi = np.asarray(xi, dtype=float)
        K1, K2 = self._momenta(xi)
        n = self.dim
        eye = np.eye(n, dtype=complex)
        kind = self.model.kind
        grads = []
        for j in range(2):
            Kj = (K1, K2)[j]
            G = np.zeros((n, n), dtype=complex)
            if kind == "magnetic-schrodinger":
                G += 2.0 * Kj
                C = self._c(("A1", "A2")[j])
                if C is not None:
                    G += 2.0 * C
            elif kind == "divergence-form":
                Ks = (K1, K2)
                for a, b, name in ((0, 0, "s11"), (0, 1, "s12"), (1, 0, "s21"), (1, 1, "s22")):
                    C = self._c(name)
                    if C is None:
                        continue
                    if a == j:
                        G += C @ Ks[b]
                    if b == j:
                        G += Ks[a] @ C
            else:
                dpw = {
                    "a20": 2.0 * K1 if j == 0 else None,
                    "a02": 2.0 * K2 if j == 1 else None,
                    "a11": K2 if j == 0 else K1,
                    "a10": eye if j == 0 else None,
                    "a01": eye if j == 1 else None,
                }
                for name, M in dpw.items():
                    C = self._c(name)
                    if C is not None and M is not None:
                        G += C @ M
            grads.append(0.5 * (G + G.conj().T))
        return grads[0], grads[1]

    def shift_index(self, k) -> np.ndarray:
        """Index map for xi -> xi + 2 pi k: entry ``i`` of the shifted basis is
        plane wave ``k_i + k``; -1 where that falls outside the truncation."""
        t1 = self.k1 + int(k[0])
        t2 = self.k2 + int(k[1])
        ok = (np.abs(t1) <= self.K) & (np.abs(t2) <= self.K)
        idx = (t1 + self.K) * (2 * self.K + 1) + (t2 + self.K)
        return np.where(ok, idx, -1)


def bloch_matrix(model: ContinuousModel, xi, K: int) -> np.ndarray:
    """Hermitian plane-wave matrix of ``P(xi)`` with truncation ``|k_j| <= K``."""
    return PlaneWaveSymbol(model, K)(xi)


# ---------------------------------------------------------------------------
# lattice models
# ---------------------------------------------------------------------------


def _phases(xi, rs):
    xi = np.asarray(xi, dtype=float)
    xr = np.mod(xi, TWO_PI)
    return np.exp(1j * np.tensordot(xr, np.asarray(rs, dtype=float).T, axes=([-1], [0])))


@dataclass(frozen=True)
class MatrixModel:
    """Lattice symbol ``H(xi) = sum_r T_r e^{i r.xi}`` with finite hopping support."""

    hoppings: Mapping[tuple, np.ndarray]
    name: str = ""

    equivariant = False

    def __post_init__(self):
        hops = {}
        for r, T in self.hoppings.items():
            T = np.atleast_2d(np.asarray(T, dtype=complex))
            rr = (int(r[0]), int(r[1]))
            hops[rr] = hops.get(rr, 0) + T
        if not hops:
            raise ModelError("matrix model needs at least one hopping")
        dims = {T.shape for T in hops.values()}
        if len(dims) != 1 or next(iter(dims))[0] != next(iter(dims))[1]:
            raise ModelError(f"inconsistent hopping shapes {dims}")
        d = next(iter(dims))[0]
        for r, T in hops.items():
            Tm = hops.get((-r[0], -r[1]), np.zeros((d, d)))
            if np.max(np.abs(Tm - T.conj().T)) > 1e-12:
                raise ModelError(f"hopping T_{r} violates T_(-r) = T_r^dagger")
        object.__setattr__(self, "hoppings", hops)

    @property
    def dim(self) -> int:
        return next(iter(self.hoppings.values())).shape[0]

    @property
    def hopping_range(self) -> tuple[int, int]:
        rs = np.array(list(self.hoppings))
        return int(np.max(np.abs(rs[:, 0]))), int(np.max(np.abs(rs[:, 1])))

    def __call__(self, xi) -> np.ndarray:
        rs = list(self.hoppings)
        Ts = np.stack([self.hoppings[r] for r in rs])
        ph = _phases(xi, rs)
        H = np.tensordot(ph, Ts, axes=([-1], [0]))
        return 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))

    def gradient(self, xi):
        rs = list(self.hoppings)
        Ts = np.stack([self.hoppings[r] for r in rs])
        ph = _phases(xi, rs)
        out = []
        for j in range(2):
            w = np.array([1j * r[j] for r in rs])
            out.append(np.tensordot(ph * w, Ts, axes=([-1], [0])))
        return tuple(out)

    def strip_table(self, zeta, direction: int = 1) -> dict[int, np.ndarray]:
        """Blocks ``T_{r_perp}(zeta)``; ``direction`` is the edge (periodic) axis."""
        a = direction - 1
        b = 1 - a
        out: dict[int, np.ndarray] = {}
        for r, T in self.hoppings.items():
            out[r[b]] = out.get(r[b], 0) + T * np.exp(1j * r[a] * zeta)
        return out

    @property
    def strip_range(self) -> int:
        return self.hopping_range[1]


def barrier_model(dim: int, lam0: float, c: float | None = None) -> MatrixModel:
    """Gapped reference ``c Id`` with default ``c = |lam0| + 2``."""
    c = abs(lam0) + 2.0 if c is None else c
    return MatrixModel({(0, 0): c * np.eye(dim)}, name=f"barrier(c={c:g})")


def continuous_barrier(lam0: float) -> ContinuousModel:
    """``-Delta + |lam0| + 2``."""
    return ContinuousModel("magnetic-schrodinger", {"V": {(0, 0): abs(lam0) + 2.0}})


# ---------------------------------------------------------------------------
# two-band model with Chern number -nu
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AppendixModel:
    """``M(xi) = [[a, b + eps e^{-i nu xi2}], [b + eps e^{i nu xi2}, -a]]``.

    ``a(xi1) = xi1`` and ``b(xi1) = 0`` on ``[-1, 1]``; outside, a smoothstep
    window of degree ``order`` blends ``a`` into ``sin(xi1)`` and raises ``b``
    to ``b0`` (reached for ``|xi1| >= outer``).  The negative-energy line
    bundle has Chern number ``-nu`` for ``0 < eps < b0``.
    """

    epsilon: float
    nu: int
    b0: float = 1.0
    inner: float = 1.0
    outer: float = 2.5
    order: int = 7
    min_gap: float = field(init=False, default=0.0)

    equivariant = False
    dim = 2

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ModelError("epsilon must be positive")
        if int(self.nu) != self.nu:
            raise ModelError("nu must be an integer")
        if self.order < 7:
            raise ModelError("window order must be >= 7")
        if not 1.0 <= self.inner < self.outer < np.pi:
            raise ModelError("window needs 1 <= inner < outer < pi")
        x1 = TWO_PI * np.arange(512) / 512
        x2 = TWO_PI * np.arange(512) / 512
        X1, X2 = np.meshgrid(x1, x2, indexing="ij")
        gap = np.sqrt(self.minus_det(X1, X2)).min()
        if not gap > 0:
            raise ModelError("model is not gapped at 0")
        object.__setattr__(self, "min_gap", float(gap))

    def window(self, x1):
        a = np.abs(wrap_angle(x1))
        return 1.0 - smoothstep((a - self.inner) / (self.outer - self.inner), self.order)

    def window_derivative(self, x1):
        xw = wrap_angle(x1)
        t = (np.abs(xw) - self.inner) / (self.outer - self.inner)
        return -smoothstep_derivative(t, self.order) * np.sign(xw) / (self.outer - self.inner)

    def alpha(self, x1):
        w = self.window(x1)
        return wrap_angle(x1) * w + np.sin(x1) * (1.0 - w)

    def alpha_derivative(self, x1):
        w = self.window(x1)
        dw = self.window_derivative(x1)
        return w + wrap_angle(x1) * dw + np.cos(x1) * (1.0 - w) - np.sin(x1) * dw

    def beta(self, x1):
        return self.b0 * (1.0 - self.window(x1))

    def beta_derivative(self, x1):
        return -self.b0 * self.window_derivative(x1)

    def minus_det(self, x1, x2):
        return self.alpha(x1) ** 2 + np.abs(self.beta(x1) + self.epsilon * np.exp(1j * self.nu * x2)) ** 2

    def __call__(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        x1, x2 = xi[..., 0], xi[..., 1]
        a = self.alpha(x1)
        off = self.beta(x1) + self.epsilon * np.exp(1j * self.nu * x2)
        M = np.empty(xi.shape[:-1] + (2, 2), dtype=complex)
        M[..., 0, 0] = a
        M[..., 1, 1] = -a
        M[..., 1, 0] = off
        M[..., 0, 1] = np.conj(off)
        return M

    def gradient(self, xi):
        xi = np.asarray(xi, dtype=float)
        x1, x2 = xi[..., 0], xi[..., 1]
        da = self.alpha_derivative(x1)
        db = self.beta_derivative(x1)
        d1 = np.zeros(xi.shape[:-1] + (2, 2), dtype=complex)
        d1[..., 0, 0] = da
        d1[..., 1, 1] = -da
        d1[..., 0, 1] = db
        d1[..., 1, 0] = db
        e = 1j * self.nu * self.epsilon * np.exp(1j * self.nu * x2)
        d2 = np.zeros_like(d1)
        d2[..., 1, 0] = e
        d2[..., 0, 1] = np.conj(e)
        return d1, d2

    def strip_table(self, zeta, direction: int = 1) -> dict[int, np.ndarray]:
        if direction != 1:
            raise ModelError("the two-band model is only Fourier-finite along xi2; use direction=1")
        a = float(self.alpha(zeta))
        b = float(self.beta(zeta))
        out = {0: np.array([[a, b], [b, -a]], dtype=complex)}
        lower = np.array([[0, 0], [self.epsilon, 0]], dtype=complex)
        if self.nu == 0:
            out[0] = out[0] + self.epsilon * np.array([[0, 1], [1, 0]])
        else:
            # e^{i nu xi2} sits in the lower-left entry
            out[self.nu] = out.get(self.nu, 0) + lower
            out[-self.nu] = out.get(-self.nu, 0) + lower.conj().T
        return out

    @property
    def strip_range(self) -> int:
        return abs(int(self.nu))

    def to_matrix_model(self, r1_max: int = 12, samples: int = 1024) -> MatrixModel:
        """Real-space hoppings from the Fourier series of ``a`` and ``b``,
        truncated at ``|r1| <= r1_max``."""
        x = TWO_PI * np.arange(samples) / samples
        ca = np.fft.fft(self.alpha(x)) / samples
        cb = np.fft.fft(self.beta(x)) / samples
        sz = np.diag([1.0, -1.0]).astype(complex)
        sx = np.array([[0, 1], [1, 0]], dtype=complex)
        hops: dict[tuple[int, int], np.ndarray] = {}
        for r in range(-r1_max, r1_max + 1):
            # symmetrize so T_(-r) = T_r^dagger holds to rounding
            a_r = 0.5 * (ca[r % samples] + np.conj(ca[-r % samples]))
            b_r = 0.5 * (cb[r % samples] + np.conj(cb[-r % samples]))
            hops[(r, 0)] = a_r * sz + b_r * sx
        lower = np.array([[0, 0], [self.epsilon, 0]], dtype=complex)
        if self.nu == 0:
            hops[(0, 0)] = hops[(0, 0)] + self.epsilon * sx
        else:
            hops[(0, self.nu)] = lower
            hops[(0, -self.nu)] = lower.conj().T
        return MatrixModel(hops, name=f"appendix(eps={self.epsilon:g}, nu={self.nu}, R={r1_max})")


def appendix_symbol(m: AppendixModel, xi) -> np.ndarray:
    return m(xi)


# ---------------------------------------------------------------------------
# mixtures and junctions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelMix:
    """Pointwise weighted sum of lattice-type symbols of equal dimension."""

    terms: tuple

    equivariant = False

    @property
    def dim(self) -> int:
        return self.terms[0][1].dim

    def __call__(self, xi):
        return sum(w * m(xi) for w, m in self.terms)

    def gradient(self, xi):
        parts = [(w, m.gradient(xi)) for w, m in self.terms]
        return (sum(w * g[0] for w, g in parts), sum(w * g[1] for w, g in parts))

    def strip_table(self, zeta, direction: int = 1):
        out: dict[int, np.ndarray] = {}
        for w, m in self.terms:
            for r, T in m.strip_table(zeta, direction).items():
                out[r] = out.get(r, 0) + w * T
        return out

    @property
    def strip_range(self) -> int:
        return max(m.strip_range for _, m in self.terms)


LatticeLike = Union[MatrixModel, AppendixModel, ModelMix]
AnyModel = Union[ContinuousModel, MatrixModel, AppendixModel, ModelMix]


def is_lattice(model) -> bool:
    return isinstance(model, (MatrixModel, AppendixModel, ModelMix))


def combine(terms: Sequence[tuple[float, AnyModel]]) -> AnyModel:
    """Coefficient-wise weighted sum; exact bulk models are returned as-is."""
    terms = [(float(w), m) for w, m in terms if w != 0.0]
    if not terms:
        raise ModelError("empty combination")
    if len(terms) == 1 and terms[0][0] == 1.0:
        return terms[0][1]
    models = [m for _, m in terms]
    if all(isinstance(m, ContinuousModel) for m in models):
        kinds = {m.kind for m in models}
        if len(kinds) > 1:
            models = [m.to_general() for m in models]
        kind = models[0].kind
        coeffs: dict[str, dict] = {}
        for (w, _), m in zip(terms, models):
            for name, cmap in m.coeffs.items():
                cur = coeffs.setdefault(name, {})
                for k, v in cmap.items():
                    cur[k] = cur.get(k, 0.0) + w * v
        if kind == "magnetic-schrodinger":
            # (D + A)^2 is quadratic in A: mix in the general form instead
            if any(m.coeff("A1") or m.coeff("A2") for m in models):
                return combine([(w, m.to_general()) for (w, _), m in zip(terms, models)])
        return ContinuousModel(kind, coeffs)
    if any(isinstance(m, ContinuousModel) for m in models):
        raise ModelError("cannot mix continuous and lattice models")
    dims = {m.dim for m in models}
    if len(dims) != 1:
        raise ModelError(f"cannot mix models of dimensions {sorted(dims)}")
    if all(isinstance(m, MatrixModel) for m in models):
        hops: dict = {}
        for w, m in terms:
            for r, T in m.hoppings.items():
                hops[r] = hops.get(r, 0) + w * T
        return MatrixModel(hops)
    return ModelMix(tuple(terms))


def profile_plus(x2, order: int = 7):
    """chi_+ : 0 for x2 <= 1, 1 for x2 >= 2."""
    return smoothstep(np.asarray(x2, dtype=float) - 1.0, order)


def profile_minus(x2, order: int = 7):
    return profile_plus(-np.asarray(x2, dtype=float), order)


@dataclass(frozen=True)
class JunctionFamily:
    """Interface ``chi_+ P_+ + chi_- P_- + chi_0 P_0`` glued along ``x2 = 0``."""

    minus: AnyModel
    plus: AnyModel
    barrier: AnyModel
    order: int = 7

    def __post_init__(self):
        types = {is_lattice(m) for m in (self.minus, self.plus, self.barrier)}
        if len(types) != 1:
            raise ModelError("junction mixes continuous and lattice models")
        if types == {True}:
            dims = {m.dim for m in (self.minus, self.plus, self.barrier)}
            if len(dims) != 1:
                raise ModelError(f"junction models have different dimensions {sorted(dims)}")

    @property
    def lattice(self) -> bool:
        return is_lattice(self.plus)

    def weights(self, x2):
        cp = profile_plus(x2, self.order)
        cm = profile_minus(x2, self.order)
        return cm, cp, 1.0 - cp - cm

    def terms(self, x2) -> list[tuple[float, AnyModel]]:
        cm, cp, c0 = (float(w) for w in self.weights(x2))
        return [(cm, self.minus), (cp, self.plus), (c0, self.barrier)]


def glue_family(j: JunctionFamily, x2: float) -> AnyModel:
    """Model snapshot of the junction at height ``x2``."""
    return combine(j.terms(x2))


def default_junction(minus: AnyModel, plus: AnyModel, lam0: float) -> JunctionFamily:
    if is_lattice(plus):
        barrier = barrier_model(plus.dim, lam0)
    else:
        barrier = continuous_barrier(lam0)
    return JunctionFamily(minus=minus, plus=plus, barrier=barrier)


# ---------------------------------------------------------------------------
# strip reduction
# ---------------------------------------------------------------------------


class HoppingTable:
    """``r2 -> T_{r2}(zeta)`` with ``sum_r2 T_{r2}(zeta) e^{i r2 xi2} = H(zeta, xi2)``."""

    def __init__(self, model: LatticeLike, direction: int = 1):
        self.model = model
        self.direction = direction

    def __call__(self, zeta) -> dict[int, np.ndarray]:
        return self.model.strip_table(zeta, self.direction)

    def reconstruct(self, zeta, xi2) -> np.ndarray:
        blocks = self(zeta)
        return sum(T * np.exp(1j * r * xi2) for r, T in blocks.items())


def hopping_table(model: LatticeLike, direction: int = 1) -> HoppingTable:
    if not is_lattice(model):
        raise ModelError("use edge.continuous_strip for plane-wave models")
    return HoppingTable(model, direction)


# ---------------------------------------------------------------------------
# uniform access
# ---------------------------------------------------------------------------


def as_symbol(model: AnyModel, K: int | None = None):
    """Bloch symbol callable ``xi -> H(xi)`` with ``dim`` and ``gradient``."""
    if isinstance(model, ContinuousModel):
        if K is None:
            raise ModelError("continuous models need a plane-wave truncation K")
        return PlaneWaveSymbol(model, K)
    return model


def random_two_band(rng: np.random.Generator, min_gap: float = 0.4, max_angle: float = 0.4,
                    max_tries: int = 500) -> MatrixModel:
    """Random nearest/next-nearest two-band model ``d(xi).sigma`` gapped at 0.

    Draws are kept when ``|d| >= min_gap`` everywhere and the direction of ``d``
    turns by at most ``max_angle`` between neighbouring nodes of a 48 x 48 grid,
    so that the bundle is resolved by a 24 x 24 grid.
    """
    sig = [np.array([[0, 1], [1, 0]], complex), np.array([[0, -1j], [1j, 0]]),
           np.diag([1.0, -1.0]).astype(complex)]
    shifts = [(1, 0), (0, 1), (1, 1), (1, -1)]
    grid = TWO_PI * np.arange(48) / 48
    X = np.stack(np.meshgrid(grid, grid, indexing="ij"), -1)
    for _ in range(max_tries):
        hops: dict[tuple[int, int], np.ndarray] = {(0, 0): rng.normal(scale=1.0) * sig[2]}
        for r in shifts:
            T = sum(complex(rng.normal(), rng.normal()) * s for s in sig) * (0.5 if r[0] and r[1] else 1.0)
            hops[r] = T
            hops[(-r[0], -r[1])] = T.conj().T
        m = MatrixModel(hops, name="random")
        H = m(X)
        d = np.stack([H[..., 0, 1].real, -H[..., 0, 1].imag, H[..., 0, 0].real], axis=-1)
        norm = np.linalg.norm(d, axis=-1)
        if norm.min() < min_gap:
            continue
        dh = d / norm[..., None]
        turn = max(np.max(np.arccos(np.clip(np.sum(dh * np.roll(dh, -1, axis=a), -1), -1.0, 1.0)))
                   for a in (0, 1))
        if turn <= max_angle:
            return m
    raise RuntimeError("could not draw a gapped random model")


__all__ = [
    "AppendixModel", "ContinuousModel", "MatrixModel", "ModelMix", "JunctionFamily",
    "HoppingTable", "PlaneWaveSymbol", "ModelError", "appendix_symbol", "as_symbol",
    "barrier_model", "bloch_matrix", "combine", "continuous_barrier", "default_junction",
    "free_laplacian", "glue_family", "hopping_table", "is_lattice", "profile_minus",
    "profile_plus", "random_two_band", "smoothstep", "smoothstep_derivative",
]
