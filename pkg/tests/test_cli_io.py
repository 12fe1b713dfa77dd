from __future__ import annotations

import csv
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from catnet.cli import UsageError, main, parse_grid
from catnet.config import ConfigError, load_config, parse_config
from catnet.persist import config_hash, read_trajectories, write_table, write_trajectories
from catnet.simulator import TrajectoryBatch

HYPER = {"d": 2, "edges": [[2, 1], [1, 2]],
         "gamma": [1.0, 1.0],
         "b": [{"kind": "affine", "intercept": 1.0, "slope": [-1.0, 0.0]},
               {"kind": "affine", "intercept": 1.0, "slope": [0.0, -1.0]}],
         "x0": [1.0, 1.0], "sim": {"n": 8, "K": 2, "n_paths": 20}}


def test_parse_config_builds_objects():
    rc = parse_config(HYPER)
    assert rc.network.d == 2 and rc.sim.x0 == [1.0, 1.0]
    rc = parse_config({"mixed": {"b0": [0.3], "gamma0": [0.8], "cat": {"b": 1.2, "gamma": 0.9}}})
    assert rc.mixed.m == 1 and rc.network is None


@pytest.mark.parametrize("doc,needle", [
    ({"d": 2, "edges": [], "b": [1, 1]}, "missing required field 'gamma'"),
    ({**HYPER, "extra": 1}, "Additional properties"),
    ({**HYPER, "gamma": [1.0]}, "expected 2 entries"),
    ({**HYPER, "edges": [[1, 1]]}, "catalyses itself"),
    ({**HYPER, "edges": [[3, 1]]}, "outside 1..2"),
    ({"cir": {"b": -1, "gamma": 1}}, "$.cir.b"),
    ({**HYPER, "b": [{"kind": "expr", "expr": "os.system"}, 1]}, "unsupported"),
])
def test_config_errors(doc, needle):
    with pytest.raises(ConfigError) as exc:
        parse_config(doc)
    assert needle in str(exc.value)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="line 1"):
        load_config(bad)


@given(st.dictionaries(st.text(max_size=5), st.one_of(st.integers(), st.floats(allow_nan=False), st.text()),
                       max_size=6))
def test_config_hash_key_order_insensitive(doc):
    rev = dict(reversed(list(doc.items())))
    assert config_hash(doc) == config_hash(rev)


@given(st.integers(1, 4), st.integers(1, 5), st.integers(1, 3), st.randoms(use_true_random=False))
def test_trajectory_csv_roundtrip(n_paths, n_times, d, rnd):
    import tempfile
    from pathlib import Path

    rng = np.random.default_rng(rnd.randint(0, 2 ** 32))
    batch = TrajectoryBatch(times=np.sort(rng.random(n_times)), paths=rng.random((n_paths, n_times, d)) * 1e3,
                            scheme="frozen", seed=1)
    with tempfile.TemporaryDirectory() as tmp:
        p = write_trajectories(batch, Path(tmp) / "t.csv")
        times, paths = read_trajectories(p)
    np.testing.assert_array_equal(times, batch.times)
    np.testing.assert_array_equal(paths, batch.paths)


def test_write_table_formats(tmp_path):
    rows = [{"a": 1, "b": 0.1}, {"a": 2, "b": 1 / 3}]
    p = write_table(rows, ["a", "b"], tmp_path / "t.csv")
    assert p.read_text().splitlines() == ["a,b", "1,0.1", "2,0.3333333333333333"]
    q = write_table(rows, ["a", "b"], tmp_path / "t.json", fmt="json")
    assert json.loads(q.read_text())[1]["a"] == 2


def test_parse_grid():
    g = parse_grid("t=1,x=0..4:5,y=0.5;1.5")
    np.testing.assert_allclose(g["x"], [0, 1, 2, 3, 4])
    np.testing.assert_allclose(g["y"], [0.5, 1.5])
    for bad in ("", "t", "t=a", "t=1,t=2", "x=0..1:0"):
        with pytest.raises(UsageError):
            parse_grid(bad)


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_cli_simulate(tmp_path):
    cfg = _write(tmp_path, HYPER)
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg, "--out-dir", str(out), "--seed", "3"]) == 0
    first = (out / "trajectories.csv").read_bytes()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 3 and manifest["config_hash"] == config_hash(HYPER)
    assert main(["--seed", "3", "simulate", "--config", cfg, "--out-dir", str(out)]) == 0
    assert (out / "trajectories.csv").read_bytes() == first
    times, paths = read_trajectories(out / "trajectories.csv")
    assert paths.shape == (20, 9, 2)


def test_cli_density(tmp_path):
    cfg = _write(tmp_path, {"cir": {"b": 1, "gamma": 1}})
    out = tmp_path / "d"
    assert main(["density", "--config", cfg, "--grid", "t=1,x=0..2:3,y=0..2:3", "--out-dir", str(out)]) == 0
    with (out / "density.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 9
    first = [r for r in rows if float(r["x"]) == 0 and float(r["y"]) == 0][0]
    assert float(first["value"]) == pytest.approx(1.0)


def test_cli_exit_codes(tmp_path, capsys):
    bad = _write(tmp_path, {"d": 2}, "bad.json")
    assert main(["simulate", "--config", bad, "--out-dir", str(tmp_path / "x")]) == 2
    assert "missing required field" in capsys.readouterr().err
    assert main(["verify", "--checks", "nope", "--out-dir", str(tmp_path / "v")]) == 2
    assert main(["density", "--grid", "t=1", "--out-dir", str(tmp_path / "y")]) == 2
    assert main(["bogus"]) == 2
    assert main(["list-checks"]) == 0
    assert "tails" in capsys.readouterr().out


def test_cli_verify(tmp_path):
    out = tmp_path / "v"
    assert main(["verify", "--checks", "analytic_inequalities", "--out-dir", str(out), "--seed", "1"]) == 0
    rep = json.loads((out / "reports" / "analytic_inequalities.json").read_text())
    assert rep["passed"] is True
