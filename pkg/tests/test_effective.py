from __future__ import annotations

import numpy as np
import pytest
from scipy.linalg import expm

from bulkedge.bands import BZGrid, compute_bands
from bulkedge.effective import (ContourSpec, TwoLevelSymbol, index_J_contour, index_J_general,
                                index_J_residue, reduced_projector, two_level_rearrangement)
from bulkedge.models import AppendixModel, ContinuousModel, barrier_model
from bulkedge.topology import (ProjectorField, ProjectorRankError, lattice_chern,
                               projector_field)

GRID = BZGrid(32, 32)


@pytest.fixture(scope="module")
def field():
    return projector_field(AppendixModel(0.3, 2), GRID, 0.0)


def test_rearrangement_is_flat(field):
    S = two_level_rearrangement(field, -1.0, 1.0)
    ev = np.linalg.eigvalsh(S)
    assert np.allclose(ev[..., 0], -1.0) and np.allclose(ev[..., 1], 1.0)
    with pytest.raises(ValueError):
        two_level_rearrangement(field, 1.0, -1.0)


def test_symbol_inverse(field):
    t = TwoLevelSymbol(field, -1.0, 1.0)
    lam = 0.3 + 0.2j
    assert np.allclose(t.evaluate(lam) @ t.inverse(lam), np.eye(2))


def test_contour_points_and_validation():
    c = ContourSpec(-1.0, 1.0, nodes=16)
    lam, wgt = c.points()
    assert np.allclose(np.abs(lam + 1.0), 1.0)
    # the weights integrate 1 / (lam - center) to 1 (counterclockwise)
    assert np.isclose(np.sum(wgt / (lam + 1.0)), 1.0)
    with pytest.raises(ValueError):
        ContourSpec(-1.0, 2.5).validate(-1.0, 1.0)
    d = ContourSpec.default(-1.0, 1.0)
    assert d.center == -1.0 and d.radius == 1.0 and d.nodes == 64


@pytest.mark.parametrize("nu", [1, 2, 3])
def test_contour_and_residue_agree(nu):
    p = projector_field(AppendixModel(0.3, nu), GRID, 0.0)
    t = TwoLevelSymbol(p, -1.0, 1.0)
    rc, rr = index_J_contour(t), index_J_residue(t)
    assert abs(rc.J - rr.J) < 1e-6
    assert rc.chern == rr.chern == lattice_chern(p).value == -nu
    assert abs(rc.J.real) < 1e-12


def test_level_shift_invariance(field):
    J0 = index_J_contour(TwoLevelSymbol(field, -1.0, 1.0)).J
    for lam1, lam2 in ((-0.5, 1.5), (-3.0, 0.2)):
        assert abs(index_J_contour(TwoLevelSymbol(field, lam1, lam2)).J - J0) < 1e-10


def test_contour_radius_invariance(field):
    t = TwoLevelSymbol(field, -1.0, 1.0)
    J0 = index_J_contour(t).J
    for c in (ContourSpec(-1.0, 0.4), ContourSpec(-1.0, 1.6, 128), ContourSpec(-0.8, 0.5)):
        assert abs(index_J_contour(t, c).J - J0) < 1e-10


def test_swap_negates(field):
    t = TwoLevelSymbol(field, -1.0, 1.0)
    assert abs(index_J_contour(t.swapped()).J + index_J_contour(t).J) < 1e-10
    assert index_J_residue(t.swapped()).chern == 2


def test_trivial_projector():
    p = projector_field(barrier_model(2, 0.0), BZGrid(8, 8), 0.0)
    t = TwoLevelSymbol(p, -1.0, 1.0)
    assert index_J_contour(t).chern == 0 and index_J_residue(t).chern == 0


def test_general_family_detects_singular_contour(field):
    t = TwoLevelSymbol(field, -1.0, 1.0)
    with pytest.raises(ValueError):
        index_J_general(t.as_family(), GRID, ContourSpec(0.0, 1.0, 8))


def test_frame_gauge_invariance(field):
    """Compressing onto a smoothly rotated frame keeps the index."""
    sx = np.array([[0, 1], [1, 0]])
    sz = np.diag([1.0, -1.0])
    U = np.array([[expm(1j * (np.cos(x[0]) * sx + np.sin(x[1]) * sz)) for x in row]
                  for row in GRID.nodes()])
    r = reduced_projector(field, U)
    t = TwoLevelSymbol(r, -1.0, 1.0)
    ref = index_J_residue(TwoLevelSymbol(field, -1.0, 1.0))
    assert index_J_contour(t).chern == ref.chern
    assert abs(index_J_residue(t).J - ref.J) < 1e-4


def test_reduced_projector_checks(field):
    eye = np.broadcast_to(np.eye(2, dtype=complex), GRID.shape + (2, 2))
    r = reduced_projector(field, eye)
    assert np.allclose(r.projectors, field.projectors)
    with pytest.raises(ValueError):
        reduced_projector(field, 2 * eye)
    # a one-dimensional frame cannot contain the range of P everywhere
    e0 = np.zeros(GRID.shape + (2, 1), dtype=complex)
    e0[..., 0, 0] = 1.0
    with pytest.raises(ProjectorRankError):
        reduced_projector(field, e0)


def test_embedding_into_larger_space(field):
    P3 = np.zeros(GRID.shape + (3, 3), dtype=complex)
    P3[..., :2, :2] = field.projectors
    big = ProjectorField.from_projectors(GRID, P3)
    frame = np.zeros(GRID.shape + (3, 2), dtype=complex)
    frame[..., 0, 0] = frame[..., 1, 1] = 1.0
    r = reduced_projector(big, frame)
    assert index_J_residue(TwoLevelSymbol(r, -1.0, 1.0)).chern == lattice_chern(field).value


def test_equivariant_fields_need_reduction():
    V = ContinuousModel("magnetic-schrodinger", {"V": {(1, 0): -5.0, (-1, 0): -5.0, (0, 1): -3.5, (0, -1): -3.5}})
    ev = compute_bands(V, BZGrid(8, 8), 2).eigenvalues
    p = projector_field(V, BZGrid(8, 8), 0.5 * (ev[..., 0].max() + ev[..., 1].min()), 2)
    with pytest.raises(ValueError):
        index_J_contour(TwoLevelSymbol(p, -20.0, 20.0))


def test_result_json(field):
    out = index_J_contour(TwoLevelSymbol(field, -1.0, 1.0)).to_json()
    assert out["chern"] == -2 and out["method"] == "contour"
    assert abs(out["two_i_pi_J_re"] + 2) < 1e-3
