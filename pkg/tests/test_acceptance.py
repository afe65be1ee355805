"""Acceptance criteria 1-9, each at its stated tolerance.

Every test records one PASS/FAIL line (shown in the pytest terminal summary,
or printed directly when the file is run as a script).
"""

from __future__ import annotations

import time

import numpy as np
import pytest
from scipy.integrate import quad

from bulkedge.bands import BZGrid, compute_bands
from bulkedge.conductivity import (BoxOperator, SwitchFunctions, WindowSpec, as_matrix_model,
                                   certified_half_gap, conductivity_convergence,
                                   interface_perturbation, windowed_conductivity)
from bulkedge.edge import EdgeParams, concatenation_check, verify_bec
from bulkedge.effective import TwoLevelSymbol, index_J_contour, index_J_residue
from bulkedge.models import (AppendixModel, ContinuousModel, MatrixModel, barrier_model,
                             default_junction, free_laplacian, random_two_band)
from bulkedge.topology import (appendix_curvature_exact, berry_chern, berry_curvature,
                               equivariance_check, lattice_chern, projector_field)

RESULTS: list[str] = []

LAM0 = 0.0
EPS = 0.3


def record(n: int, ok: bool, detail: str, t0: float) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}  ({time.perf_counter() - t0:.1f} s)"
    RESULTS.append(line)
    print(line)


def appendix(nu, eps=EPS):
    return AppendixModel(eps, nu)


def real_two_band():
    """Real hoppings, so H(-xi) = conj H(xi)."""
    sz = np.diag([1.0, -1.0])
    sx = np.array([[0.0, 1.0], [1.0, 0.0]])
    return MatrixModel({(0, 0): 2.0 * sz, (1, 0): 0.5 * sz + 0.25 * sx, (-1, 0): 0.5 * sz + 0.25 * sx,
                        (0, 1): 0.5 * sz, (0, -1): 0.5 * sz})


# ---------------------------------------------------------------------------


def test_criterion_1_appendix_chern_values():
    t0 = time.perf_counter()
    got = {nu: lattice_chern(projector_field(appendix(nu), BZGrid(24, 24), LAM0)).value
           for nu in (1, 2, 3)}
    elapsed = time.perf_counter() - t0
    ok = all(got[nu] == -nu for nu in got) and elapsed < 5.0
    record(1, ok, f"lattice_chern {got} (expected -nu)", t0)
    assert ok


def test_criterion_2_closed_form_curvature():
    t0 = time.perf_counter()
    x1 = np.linspace(-1.0, 1.0, 64)
    rng = np.random.default_rng(2)
    xi = np.stack([x1, rng.uniform(-np.pi, np.pi, 64)], axis=-1)
    num = berry_curvature(appendix(1, 0.1), xi, LAM0)
    exact = appendix_curvature_exact(0.1, 1, x1)
    rel = float(np.max(np.abs(num - exact) / np.abs(exact)))
    # (i / 2 pi) int over [-1, 1] x [-pi, pi] at eps = 0.05 from the computed curvature
    m = appendix(1, 0.05)
    xs, ws = np.polynomial.legendre.leggauss(400)
    nodes = np.concatenate([0.5 * (xs - 1.0), 0.5 * (xs + 1.0)])
    weights = np.concatenate([0.5 * ws, 0.5 * ws])
    x2 = np.linspace(-np.pi, np.pi, 8, endpoint=False)
    B = berry_curvature(m, np.stack(np.broadcast_arrays(nodes[:, None], x2[None, :]), -1).reshape(-1, 2), LAM0)
    B = B.reshape(nodes.size, x2.size).mean(axis=1)
    integral = (1j / (2 * np.pi)) * 2 * np.pi * np.sum(weights * B)
    closed = -quad(lambda s: appendix_curvature_exact(0.05, 1, s).imag, -1, 1, points=[0.0])[0]
    ok = rel < 1e-6 and abs(integral.real + 1) < 0.05 and abs(integral.imag) < 1e-12
    record(2, ok, f"max rel err {rel:.2e}; (i/2pi) int B = {integral.real:.5f} "
                  f"(closed form {closed:.5f})", t0)
    assert ok


def test_criterion_3_method_cross_validation():
    t0 = time.perf_counter()
    grid = BZGrid(24, 24)
    models = {f"appendix nu={nu}": appendix(nu) for nu in (1, 2, 3)}
    models["barrier"] = barrier_model(2, LAM0)
    models["real two-band"] = real_two_band()
    for seed in range(20):
        models[f"random seed={seed}"] = random_two_band(np.random.default_rng(seed))
    bad, worst = [], 0.0
    for name, m in models.items():
        p = projector_field(m, grid, LAM0)
        lat, ber = lattice_chern(p), berry_chern(p)
        worst = max(worst, ber.residual)
        if lat.value != ber.value or ber.residual >= 0.05:
            bad.append((name, lat.value, ber.value, ber.residual))
        if name == "real two-band" and lat.value != 0:
            bad.append((name, lat.value))
    ok = not bad
    record(3, ok, f"{len(models)} models agree, worst berry residual {worst:.2e}"
                  + (f"; mismatches {bad}" if bad else ""), t0)
    assert ok


PAIRS = {
    "a1|b": (lambda: barrier_model(2, LAM0), lambda: appendix(1)),
    "a2|b": (lambda: barrier_model(2, LAM0), lambda: appendix(2)),
    "a2|a1": (lambda: appendix(1), lambda: appendix(2)),
}


def test_criterion_4_bulk_edge_correspondence():
    t0 = time.perf_counter()
    lines, ok = [], True
    for name, (mk_minus, mk_plus) in PAIRS.items():
        tp = time.perf_counter()
        flows = []
        for W in (30, 40, 50):
            rep = verify_bec(mk_minus(), mk_plus(), LAM0, EdgeParams(W=W, n_zeta=200, theta=0.5))
            ok &= rep["match"]
            flows.append(rep["spectral_flow"])
        ok &= len(set(flows)) == 1 and time.perf_counter() - tp < 120.0
        lines.append(f"{name}: flow {flows} vs c1 diff {rep['c1_difference']}")
    record(4, ok, "; ".join(lines), t0)
    assert ok


def test_criterion_5_concatenation():
    t0 = time.perf_counter()
    lines, ok = [], True
    b = barrier_model(2, LAM0)
    for name, (mk_minus, mk_plus) in PAIRS.items():
        rep = concatenation_check(mk_minus(), mk_plus(), b, LAM0, EdgeParams(W=40))
        ok &= rep["additive"]
        lines.append(f"{name}: {rep['flow_minus_plus']} = {rep['flow_minus_barrier']} + {rep['flow_barrier_plus']}")
    record(5, ok, "; ".join(lines), t0)
    assert ok


def test_criterion_6_effective_index():
    t0 = time.perf_counter()
    lines, ok = [], True
    for nu in (1, 2, 3):
        p = projector_field(appendix(nu), BZGrid(48, 48), LAM0)
        t = TwoLevelSymbol(p, -1.0, 1.0)
        rc, rr = index_J_contour(t), index_J_residue(t)
        c = lattice_chern(p).value
        gap = abs(rc.J - rr.J)
        ok &= gap < 1e-6 and rc.chern == c and rc.residual < 1e-3
        lines.append(f"nu={nu}: 2i pi J = {rc.two_i_pi_J.real:.6f} vs {c}, |contour - residue| {gap:.1e}")
    record(6, ok, "; ".join(lines), t0)
    assert ok


def _a1_barrier_box(L1=48, L2=40, minus=None, plus=None):
    minus = barrier_model(2, LAM0) if minus is None else minus
    plus = appendix(1) if plus is None else plus
    jf = default_junction(minus, plus, LAM0)
    mats = [as_matrix_model(m) for m in (jf.minus, jf.plus)]
    eps = 0.5 * certified_half_gap(mats, LAM0)
    return jf, BoxOperator(jf, L1, L2), SwitchFunctions(LAM0, eps, L1 / 8)


def test_criterion_7_trace_formula_conductivity():
    t0 = time.perf_counter()
    jf, box, sw = _a1_barrier_box()
    r = windowed_conductivity(box, sw, WindowSpec(8))
    c1 = lattice_chern(projector_field(jf.plus, BZGrid(24, 24), LAM0)).value \
        - lattice_chern(projector_field(jf.minus, BZGrid(24, 24), LAM0)).value
    a1 = appendix(1)
    _, cbox, csw = _a1_barrier_box(minus=a1, plus=a1)
    ctrl = windowed_conductivity(cbox, csw, WindowSpec(8))
    elapsed = time.perf_counter() - t0
    ok = (r.full_trace < 1e-10 and abs(r.two_pi_value - c1) < 0.15
          and abs(ctrl.two_pi_value) < 0.02 and elapsed < 180.0)
    record(7, ok, f"box 48x{box.n2}: 2 pi value {r.two_pi_value:.6f} vs {c1}, "
                  f"full trace {r.full_trace:.1e}, control {ctrl.two_pi_value:.1e}", t0)
    assert ok


def test_criterion_8_continuous_sanity():
    t0 = time.perf_counter()
    g = BZGrid(6, 6)
    ev = compute_bands(free_laplacian(), g, 3).eigenvalues
    k = np.arange(-3, 4)
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    err = 0.0
    for xi, lam in zip(g.nodes().reshape(-1, 2), ev.reshape(-1, ev.shape[-1])):
        exact = np.sort(((2 * np.pi * K1 + xi[0]) ** 2 + (2 * np.pi * K2 + xi[1]) ** 2).ravel())
        err = max(err, float(np.max(np.abs(lam - exact))))
    A = 10.0
    V = ContinuousModel("magnetic-schrodinger",
                        {"V": {(1, 0): -A / 2, (-1, 0): -A / 2, (0, 1): -0.35 * A, (0, -1): -0.35 * A}})
    b = compute_bands(V, BZGrid(8, 8), 4).eigenvalues
    lam0 = 0.5 * (b[..., 0].max() + b[..., 1].min())
    p = projector_field(V, BZGrid(12, 12), lam0, 4)
    c_lat, c_ber = lattice_chern(p).value, berry_chern(p).value
    dev = max(equivariance_check(V, [0.3, -0.7], kk, K=5, lam0=lam0) for kk in ((1, 0), (0, 1), (1, -1)))
    ok = err < 1e-8 and c_lat == 0 and c_ber == 0 and dev < 1e-10
    record(8, ok, f"free Laplacian max err {err:.1e}; periodic potential c1 = {c_lat}/{c_ber}; "
                  f"equivariance deviation {dev:.1e}", t0)
    assert ok


def test_criterion_9_independence_surrogates():
    t0 = time.perf_counter()
    jf, box, sw = _a1_barrier_box()
    tab = conductivity_convergence(jf, [(32, 24), (48, 40), (64, 52)], sw, 8, target=-1,
                                   ell_fraction=1 / 8)
    bar = tab.error_bar
    base = windowed_conductivity(box, sw, WindowSpec(8)).two_pi_value

    def shift(s=sw, b=box):
        return abs(windowed_conductivity(b, s, WindowSpec(8)).two_pi_value - base)

    shifts = {
        "ell=10": shift(SwitchFunctions(LAM0, sw.eps, 10.0)),
        "g' exp bump": shift(SwitchFunctions(LAM0, sw.eps, sw.ell, shape="exp")),
        "g' power 2": shift(SwitchFunctions(LAM0, sw.eps, sw.ell, power=2)),
        "perturbation": shift(b=box.perturbed(interface_perturbation(box, np.random.default_rng(1), 0.15))),
    }
    ok = all(v < bar for v in shifts.values())
    record(9, ok, f"error bar {bar:.1e}; shifts "
                  + ", ".join(f"{k} {v:.1e}" for k, v in shifts.items()), t0)
    assert ok


if __name__ == "__main__":
    import sys
    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
