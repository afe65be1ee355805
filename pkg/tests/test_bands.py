from __future__ import annotations

import csv

import numpy as np
import pytest

from bulkedge.bands import (BZGrid, GapInconsistency, band_slope, check_gap, compute_bands,
                            continuity_report, crossing_diagnostic)
from bulkedge.models import AppendixModel, barrier_model, default_junction, free_laplacian


def test_grid_nodes_and_area():
    g = BZGrid(8, 4)
    nodes = g.nodes()
    assert nodes.shape == (8, 4, 2)
    assert np.allclose(nodes[1, 3], [2 * np.pi / 8, 3 * 2 * np.pi / 4])
    assert np.isclose(g.cell_area * 32, (2 * np.pi) ** 2)
    with pytest.raises(ValueError):
        BZGrid(2, 8)


def test_bands_are_ascending_and_symmetric():
    b = compute_bands(AppendixModel(0.3, 1), BZGrid(12, 12))
    assert b.nbands == 2
    assert np.all(np.diff(b.eigenvalues, axis=-1) >= 0)
    assert np.allclose(b.eigenvalues[..., 0], -b.eigenvalues[..., 1])


def test_free_laplacian_minimum_at_origin():
    b = compute_bands(free_laplacian(), BZGrid(8, 8), K=3)
    assert b.truncation == 3 and b.nbands == 49
    assert b.eigenvalues[0, 0, 0] == 0.0
    assert b.eigenvalues.min() == 0.0


def test_check_gap_reports_margins():
    b = compute_bands(AppendixModel(0.3, 1), BZGrid(24, 24))
    rep = check_gap(b, 0.0, 0.1)
    assert rep.gapped and rep.n_below == 1
    assert rep.min_above >= 0.3 - 1e-12 and rep.max_below <= -0.3 + 1e-12
    assert rep.available_half_width >= 0.15 - 1e-12
    # a window wider than the gap is refused
    assert not check_gap(b, 0.0, 0.2).gapped
    # an energy inside a band: count varies
    inside = check_gap(b, 0.5, 0.01)
    assert not inside.gapped and inside.n_below == -1


def test_check_gap_on_barrier():
    rep = check_gap(compute_bands(barrier_model(2, 0.0), BZGrid(8, 8)), 0.0, 0.5)
    assert rep.gapped and rep.n_below == 0 and rep.lipschitz == 0.0


def test_band_slope_and_continuity():
    b = compute_bands(AppendixModel(0.3, 1), BZGrid(32, 32))
    s = band_slope(b, 1)
    assert 0.5 < s < 2.0
    rep = continuity_report(b)
    assert len(rep["slopes"]) == 2 and np.isclose(rep["step"], 2 * np.pi / 32)


def test_band_csv(tmp_path):
    b = compute_bands(barrier_model(2, 0.0), BZGrid(4, 4))
    path = tmp_path / "b.csv"
    b.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["xi1", "xi2", "band_index", "eigenvalue"]
    assert len(rows) == 1 + 4 * 4 * 2
    assert float(rows[1][3]) == 2.0


def test_crossing_diagnostic_detects_closing_gap():
    jf = default_junction(barrier_model(2, 0.0), AppendixModel(0.3, 1), 0.0)
    diag = crossing_diagnostic(jf, 1, 0.0, [-3.0, 0.0, 3.0], BZGrid(16, 16))
    assert diag.gapfn.shape == (3, 16, 16)
    assert diag.gapfn[0].min() == pytest.approx(0.0, abs=1e-12)   # barrier: degenerate level
    assert diag.gapfn[2].min() == pytest.approx(0.6, abs=1e-9)
    assert not diag.empty
    out = diag.to_json()
    # at x2 = 0 the snapshot is the barrier alone
    assert out["x2_with_crossings"] == [-3.0, 0.0]
    with pytest.raises(ValueError):
        crossing_diagnostic(jf, 2, 0.0, [0.0], BZGrid(4, 4))


def test_crossing_diagnostic_empty_for_split_levels():
    jf = default_junction(AppendixModel(0.3, 2), AppendixModel(0.3, 1), 0.0)
    diag = crossing_diagnostic(jf, 1, 0.05, [-3.0, 3.0], BZGrid(16, 16))
    assert diag.empty


def test_gap_inconsistency_is_internal():
    assert issubclass(GapInconsistency, RuntimeError)
