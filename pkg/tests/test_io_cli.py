import json

import numpy as np
import pytest

from ancillatomo import cli, io
from ancillatomo.experiments import ExperimentResult, run_custom
from ancillatomo.hilbert import basis_state, qubit_basis, tensor_extend
from ancillatomo.recovery import moore_penrose
from ancillatomo.scrambling import QuenchConfig, build_scrambling_map


def small_config(t=1.5):
    ext = tensor_extend(qubit_basis(1), qubit_basis(2))
    rng = np.random.default_rng(0)
    g = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    return QuenchConfig(ext, basis_state(ext.ancilla, [0, 0]), (g + g.conj().T) / 2, t)


@pytest.fixture
def cache(tmp_path, monkeypatch):
    monkeypatch.setenv(io.CACHE_ENV, str(tmp_path / "cache"))
    return tmp_path / "cache"


def test_map_and_recovery_roundtrip(tmp_path):
    smap = build_scrambling_map(small_config())
    io.save_map(tmp_path / "m.atar", smap)
    back = io.load_map(tmp_path / "m.atar", smap.config_hash)
    assert np.array_equal(back.matrix(), smap.matrix())
    rec = moore_penrose(smap)
    io.save_recovery(tmp_path / "r.atar", rec)
    rback = io.load_recovery(tmp_path / "r.atar", back)
    assert np.allclose(rback.matrix(), rec.matrix())
    with pytest.raises(io.ArtifactError):
        io.load_map(tmp_path / "m.atar", "0" * 16)
    with pytest.raises(io.ArtifactError):
        io.read_container(tmp_path / "r.atar", "scrambling-map")


def test_container_detects_corruption(tmp_path):
    path = tmp_path / "c.atar"
    io.write_container(path, "x", {"note": 1}, {"a": np.arange(10.0)})
    head, arr = io.read_container(path, "x")
    assert head["note"] == 1 and np.array_equal(arr["a"], np.arange(10.0))
    data = bytearray(path.read_bytes())
    data[-3] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(io.ArtifactError, match="checksum"):
        io.read_container(path)
    path.write_bytes(b"nope")
    with pytest.raises(io.ArtifactError):
        io.read_container(path)


def test_csv_is_byte_deterministic(tmp_path):
    rows = [{"a": 0.1 + 0.2, "b": True, "c": 3}, {"a": 1e-300, "c": np.int64(4), "d": "x,y"}]
    io.write_csv(tmp_path / "1.csv", rows)
    io.write_csv(tmp_path / "2.csv", [dict(r) for r in rows])
    assert (tmp_path / "1.csv").read_bytes() == (tmp_path / "2.csv").read_bytes()
    raw = (tmp_path / "1.csv").read_bytes()
    assert raw.startswith(b"a,b,c,d\r\n0.30000000000000004,true,3,")
    back = io.read_csv(tmp_path / "1.csv")
    assert back[1]["d"] == "x,y" and float(back[1]["a"]) == 1e-300


def test_json_handles_numpy_and_nonfinite(tmp_path):
    io.write_json(tmp_path / "s.json", {"x": np.float64(np.inf), "y": np.arange(2), "z": 1 + 2j})
    assert io.read_json(tmp_path / "s.json") == {"x": "inf", "y": [0, 1], "z": [1.0, 2.0]}
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(io.ArtifactError):
        io.read_json(tmp_path / "bad.json")


def test_manifest_detects_tampering(tmp_path):
    for name in ("a.txt", "b.txt"):
        (tmp_path / name).write_text(name)
    man = io.build_manifest(tmp_path, ["a.txt", "b.txt"], {"seed": 1})
    assert io.verify_manifest(tmp_path, man) == []
    (tmp_path / "a.txt").write_text("changed")
    # the chain carries the damage forward
    assert io.verify_manifest(tmp_path, man) == ["a.txt", "b.txt"]


def test_cache_hit_returns_same_map(cache):
    cfg = small_config()
    first, hit1 = io.cached_map(cfg)
    second, hit2 = io.cached_map(cfg)
    assert (hit1, hit2) == (False, True)
    assert np.array_equal(first.matrix(), second.matrix())
    _, hit3 = io.cached_map(small_config(t=2.0))
    assert not hit3
    assert len(list(cache.glob("map-*.atar"))) == 2


def test_config_validation_messages():
    with pytest.raises(cli.ConfigError, match="kind"):
        cli.load_config({"m": 10})
    with pytest.raises(cli.ConfigError, match="m"):
        cli.load_config({"kind": "custom", "m": 0})
    with pytest.raises(cli.ConfigError, match="unknown keys"):
        cli.load_config({"kind": "custom", "params": {"n_atoms": 4}})
    with pytest.raises(cli.ConfigError, match="top level"):
        cli.load_config({"kind": "custom", "params": {"m": 4}})
    with pytest.raises(cli.ConfigError):
        cli.load_config("/nonexistent/config.yaml")
    assert cli.load_config("custom")["kind"] == "custom"


def test_every_experiment_preset_validates():
    for name in cli.EXPERIMENT_PRESETS:
        cli.load_config(name)


def test_yaml_config_runs(tmp_path, cache):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("kind: custom\nm: 300\nseed: 3\nparams:\n  n_sys: 3\n")
    res = cli.run_experiment(cfg, tmp_path / "out")
    assert res.rows[0]["m"] == 300
    assert json.loads((tmp_path / "out" / "config.json").read_text())["seed"] == 3


def test_failed_stage_is_recorded(tmp_path, cache):
    out = tmp_path / "bad"
    with pytest.raises(cli.StageError) as info:
        cli.run_experiment({"kind": "custom", "m": 10, "params": {"n_sys": 0}}, out)
    assert info.value.stage == "compute"
    failed = json.loads((out / "FAILED.json").read_text())
    assert failed["stage"] == "compute" and "Error" in failed["error"]


def test_custom_estimate_equals_direct_average():
    res = run_custom(n_sys=4, m=500, seed=2)
    r = res.rows[0]
    assert np.isclose(r["estimate"], r["direct"], atol=1e-12)
    assert abs(r["estimate"] - r["exact"]) < 5 * r["stderr"]


def test_bundle_report_roundtrip(tmp_path, cache):
    out = tmp_path / "run"
    res = cli.run_experiment({"kind": "custom", "m": 200, "seed": 0, "params": {"n_sys": 3}}, out)
    for name in ("results.csv", "summary.json", "manifest.json", "figure.png", "config.json"):
        assert (out / name).exists()
    rep = cli.report_bundle(out)
    assert rep["manifest_ok"] and rep["rows"] == 1
    back = cli.load_bundle(out)
    assert isinstance(back, ExperimentResult) and back.kind == "custom"
    assert np.isclose(back.rows[0]["estimate"], res.rows[0]["estimate"])
    # identical seeds reproduce the tables byte for byte
    cli.run_experiment({"kind": "custom", "m": 200, "seed": 0, "params": {"n_sys": 3}}, tmp_path / "again")
    assert (out / "results.csv").read_bytes() == (tmp_path / "again" / "results.csv").read_bytes()
    text = (out / "results.csv").read_bytes()
    (out / "results.csv").write_bytes(text.replace(b"\r\ndensity,", b"\r\ndensity,9"))
    rep = cli.report_bundle(out)
    assert not rep["manifest_ok"] and rep["mismatched"][0] == "results.csv"


def test_cli_basis_and_hamiltonian(capsys, tmp_path):
    assert cli.main(["basis", "--sites", "5", "--out", str(tmp_path / "b.csv")]) == 0
    assert json.loads(capsys.readouterr().out)["dim"] == 13
    assert len(io.read_csv(tmp_path / "b.csv")) == 13
    assert cli.main(["basis", "--model", "boson", "--sites", "3", "--particles", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["dim"] == 6
    assert cli.main(["hamiltonian", "--sites", "4", "--delta", "0"]) == 0
    assert json.loads(capsys.readouterr().out)["dim"] == 8


def test_cli_map_sample_estimate_pipeline(capsys, tmp_path, cache):
    m = str(tmp_path / "m.atar")
    assert cli.main(["map", "build", "--preset", "rydberg-4+5", "--out", m]) == 0
    built = json.loads(capsys.readouterr().out)
    assert cli.main(["map", "inspect", "--map", m]) == 0
    assert json.loads(capsys.readouterr().out)["complete"] is True
    assert cli.main(["map", "invert", "--map", m, "--preset", "rydberg-4+5",
                     "--out", str(tmp_path / "r.atar")]) == 0
    assert json.loads(capsys.readouterr().out)["identity_defect"] < 1e-8
    snaps = str(tmp_path / "s.atsn")
    assert cli.main(["sample", "--preset", "rydberg-4+5", "--m", "400", "--seed", "1", "--out", snaps]) == 0
    assert json.loads(capsys.readouterr().out)["config_hash"] == built["config_hash"]
    assert cli.main(["estimate", "--preset", "rydberg-4+5", "--snapshots", snaps]) == 0
    est = json.loads(capsys.readouterr().out)
    assert abs(est["re"] - est["exact"]) < 5 * est["stderr"]


def test_cli_errors_return_nonzero(capsys, tmp_path):
    assert cli.main(["map", "inspect"]) == 2
    assert cli.main(["map", "build", "--preset", "nowhere"]) == 1
    assert "unknown quench" in capsys.readouterr().err
    assert cli.main(["experiment", "report", "--bundle", str(tmp_path)]) == 1
    cfg = tmp_path / "c.yaml"
    cfg.write_text("kind: custom\nbogus: 1\n")
    assert cli.main(["experiment", "run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_cli_experiment_run_and_report(capsys, tmp_path, cache):
    out = str(tmp_path / "x")
    assert cli.main(["experiment", "run", "--preset", "custom", "--seed", "4", "--out", out, "--threads", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["m"] == 1000
    assert cli.main(["experiment", "report", "--bundle", out]) == 0
    assert json.loads(capsys.readouterr().out)["manifest_ok"] is True
