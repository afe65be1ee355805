from __future__ import annotations

import json
import logging

import pytest

from bulkedge.cli import config_hash, run

A1B = {"minus": {"type": "barrier"}, "plus": {"type": "appendix", "epsilon": 0.3, "nu": 1}}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def outputs(out):
    return {p.name: p.read_bytes() for p in out.iterdir() if p.is_file()}


def test_bands_free_laplacian(tmp_path, capsys):
    cfg = write(tmp_path, {"model": {"type": "free_laplacian"}, "grid": [8, 8], "K": 2})
    assert run(["bands", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "bands.json").read_text())
    assert rep["min_eigenvalue"] == 0.0 and rep["nbands"] == 25
    assert (tmp_path / "o" / "bands.csv").is_file()


def test_chern_writes_both_methods(tmp_path):
    cfg = write(tmp_path, {"model": {"type": "appendix", "nu": 2}})
    assert run(["chern", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "chern.json").read_text())
    assert rep["lattice"]["value"] == rep["berry"]["value"] == -2 and rep["agree"]


def test_verify_prints_match(tmp_path, capsys):
    cfg = write(tmp_path, A1B)
    assert run(["verify", "--config", cfg, "--out", str(tmp_path / "o"), "--width", "30"]) == 0
    assert "match: True" in capsys.readouterr().out
    rep = json.loads((tmp_path / "o" / "verify.json").read_text())
    assert rep["spectral_flow"] == rep["c1_plus"] - rep["c1_minus"] == -1


def test_effective_index(tmp_path):
    cfg = write(tmp_path, {"model": {"type": "appendix", "nu": 3}, "grid": [32, 32]})
    assert run(["effective-index", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "effective-index.json").read_text())
    assert rep["match"] and rep["lattice_chern"] == -3


def test_model_file_reference(tmp_path):
    (tmp_path / "models").mkdir()
    (tmp_path / "models" / "a.json").write_text(json.dumps({"type": "appendix", "nu": -1}))
    cfg = write(tmp_path, {"model": "models/a.json"})
    assert run(["chern", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "chern.json").read_text())["lattice"]["value"] == 1


@pytest.mark.parametrize("cfg", [
    {"model": {"type": "appendix", "epsilon": -1.0}},
    {"model": {"type": "nonsense"}},
    {"model": "missing.json"},
    {"model": {"type": "appendix"}, "unknown_key": 1},
    {"model": {"type": "matrix", "hoppings": [{"r": [1, 0], "re": [[1.0]]}]}},
    {"model": {"type": "appendix"}, "lam1": 0.5},
    {"model": {"type": "appendix"}, "box": [12, 4], "margin": 4},
])
def test_config_errors_exit_2(tmp_path, capsys, cfg):
    assert run(["chern", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2
    assert "config error" in capsys.readouterr().err


def test_missing_config_and_model(tmp_path, capsys):
    assert run(["chern", "--config", str(tmp_path / "nope.json")]) == 2
    assert run(["chern", "--config", write(tmp_path, {}), "--out", str(tmp_path / "o")]) == 2


def test_numerical_failure_exits_3(tmp_path, capsys):
    cfg = write(tmp_path, {"model": {"type": "appendix"}, "lam0": 0.5})
    assert run(["chern", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    assert "[projector]" in capsys.readouterr().err


def test_cache_hit_reproduces_outputs(tmp_path, capsys):
    cfg = write(tmp_path, {"model": {"type": "appendix", "nu": 1}, "grid": [12, 12]})
    out = tmp_path / "o"
    assert run(["chern", "--config", cfg, "--out", str(out)]) == 0
    first = outputs(out)
    records = list((out / ".cache").glob("*.json"))
    assert len(records) == 1
    rec = json.loads(records[0].read_text())
    assert {"config_hash", "started", "finished", "outputs", "tool_version"} <= set(rec)
    for name in first:
        (out / name).unlink()
    assert run(["chern", "--config", cfg, "--out", str(out)]) == 0
    assert outputs(out) == first


def test_forced_rerun_is_byte_identical(tmp_path):
    cfg = write(tmp_path, {"model": {"type": "random_two_band", "seed": 4}, "grid": [12, 12]})
    out = tmp_path / "o"
    assert run(["chern", "--config", cfg, "--out", str(out)]) == 0
    first = outputs(out)
    assert run(["chern", "--config", cfg, "--out", str(out), "--force"]) == 0
    assert outputs(out) == first


def test_corrupt_cache_is_a_miss(tmp_path, caplog):
    cfg = write(tmp_path, {"model": {"type": "appendix"}, "grid": [8, 8]})
    out = tmp_path / "o"
    assert run(["chern", "--config", cfg, "--out", str(out)]) == 0
    record = next((out / ".cache").glob("*.json"))
    record.write_text("{not json")
    with caplog.at_level(logging.WARNING, logger="bulkedge"):
        assert run(["chern", "--config", cfg, "--out", str(out)]) == 0
    assert any("corrupt cache" in r.message for r in caplog.records)
    assert json.loads(record.read_text())["config_hash"] == record.stem


def test_hash_depends_on_command_and_config():
    assert config_hash("chern", {"a": 1}) != config_hash("bands", {"a": 1})
    assert config_hash("chern", {"a": 1}) != config_hash("chern", {"a": 2})
    assert config_hash("chern", {"a": 1, "b": 2}) == config_hash("chern", {"b": 2, "a": 1})


def test_cli_overrides_change_the_key(tmp_path):
    cfg = write(tmp_path, A1B)
    out = tmp_path / "o"
    assert run(["edge-spectrum", "--config", cfg, "--out", str(out), "--width", "12",
                "--zeta-nodes", "40"]) == 0
    assert run(["edge-spectrum", "--config", cfg, "--out", str(out), "--width", "14",
                "--zeta-nodes", "40"]) == 0
    assert len(list((out / ".cache").glob("*.json"))) == 2
    assert (out / "floquet.csv").read_text().startswith("zeta,eigenvalue,localization_weight")
