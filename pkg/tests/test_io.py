import json

import numpy as np
import pytest

from fracshe.io import RunDirectory, output_root, read_array, verify_manifest


def test_output_root_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv("FRACSHE_OUTPUT_ROOT", str(tmp_path / "env"))
    assert output_root() == tmp_path / "env"
    assert output_root(tmp_path / "flag") == tmp_path / "flag"
    monkeypatch.delenv("FRACSHE_OUTPUT_ROOT")
    assert str(output_root()) == "runs"


def test_directory_name_and_collision(tmp_path):
    a = RunDirectory("ab" * 32, tmp_path, stamp="20260101T000000Z")
    b = RunDirectory("ab" * 32, tmp_path, stamp="20260101T000000Z")
    assert a.path.name == "abababababab-20260101T000000Z"
    assert b.path != a.path and b.path.exists()


def test_array_round_trip(tmp_path, rng):
    run = RunDirectory("0" * 64, tmp_path)
    x = rng.standard_normal((3, 4, 5))
    p = run.write_array("raw/field", x, times=[0.5])
    y = read_array(p)
    assert np.array_equal(x, y)
    side = json.loads(p.with_suffix(".json").read_text())
    assert side["dtype"] == "<f8" and side["shape"] == [3, 4, 5] and side["times"] == [0.5]
    big = x.astype(">f8")
    assert read_array(run.write_array("raw/big", big)).dtype.str == "<f8"


def test_csv_format(tmp_path):
    run = RunDirectory("0" * 64, tmp_path)
    p = run.write_csv("tables/t.csv", ["a", "b"], [[1, 0.1], [np.int64(2), "x,y"]])
    raw = p.read_bytes()
    assert raw == b'a,b\r\n1,0.1\r\n2,"x,y"\r\n'


def test_manifest_checksums(tmp_path):
    run = RunDirectory("0" * 64, tmp_path)
    run.write_json("verdict.json", {"passed": True})
    run.write_csv("summary.csv", ["x"], [[1]])
    m = json.loads(run.write_manifest(complete=True).read_text())
    assert m["complete"] is True
    assert [e["file"] for e in m["files"]] == ["summary.csv", "verdict.json"]
    assert verify_manifest(run.path) == []
    (run.path / "summary.csv").write_text("tampered")
    assert verify_manifest(run.path) == ["summary.csv"]


def test_json_rejects_nan(tmp_path):
    run = RunDirectory("0" * 64, tmp_path)
    with pytest.raises(ValueError):
        run.write_json("bad.json", {"x": float("nan")})
