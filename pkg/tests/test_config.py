import copy
import json
from pathlib import Path

import pytest

from fracshe.config import ConfigError, config_hash, load_and_validate, load_schema

BASE = {
    "kind": "clt",
    "grid": {"dim": 1, "half_length": 16, "points": 256},
    "model": {"variant": "white", "dim": 1},
    "solver": {"alpha": 1.5, "dt": 1 / 256, "T": 0.5, "sigma": {"kind": "linear", "params": [1, 0]}},
    "radii": [2, 4, 8],
    "times": [0.25, 0.5],
    "replicas": 100,
}


def _with(**changes):
    d = copy.deepcopy(BASE)
    for path, value in changes.items():
        node = d
        keys = path.split("__")
        for k in keys[:-1]:
            node = node[k]
        if value is None:
            node.pop(keys[-1])
        else:
            node[keys[-1]] = value
    return d


def _violations(d):
    with pytest.raises(ConfigError) as e:
        load_and_validate(d)
    return e.value.violations


def test_valid_config_normalizes():
    cfg = load_and_validate(BASE)
    assert cfg.kind == "clt"
    assert cfg["seed"] == 0 and cfg["workers"] == 1
    assert cfg["radii"] == [2.0, 4.0, 8.0]
    sc = cfg.solver_config()
    assert sc.output_times == (0.25, 0.5) and sc.replicas == 100


def test_schema_is_packaged():
    assert load_schema()["additionalProperties"] is False


def test_white_noise_in_two_dimensions_rejected():
    d = _with(grid__dim=2, model__dim=2, grid__points=64)
    assert any("case (ii) requires d = 1" in v for v in _violations(d))


def test_riesz_beta_equal_alpha_rejected():
    d = _with(model={"variant": "riesz", "dim": 1, "beta": 1.5})
    assert any("case (i) requires" in v for v in _violations(d))


def test_all_violations_are_listed():
    d = _with(model={"variant": "riesz", "dim": 1, "beta": 1.5}, solver__dt=0.3, radii=[15.0])
    v = _violations(d)
    assert any("case (i)" in m for m in v)
    assert any("multiple of dt" in m or "integer multiple" in m for m in v)
    assert any("truncation rule" in m for m in v)
    assert len(v) >= 3


def test_schema_errors_are_collected():
    d = _with(replicas=-1, extra_field=3)
    v = _violations(d)
    assert len(v) >= 2 and all(m.startswith("schema:") for m in v)


def test_dimension_mismatch():
    d = _with(model={"variant": "riesz", "dim": 2, "beta": 0.5})
    assert any("dimension rule" in v for v in _violations(d))


def test_zero_sigma_at_one_rejected_for_limit_runs():
    d = _with(solver__sigma={"kind": "linear", "params": [1, -1]})
    assert any("sigma(1) must be nonzero" in v for v in _violations(d))


def test_large_steps_rejected():
    d = _with(solver__dt=0.125, times=[0.5], solver__sigma={"kind": "linear", "params": [3, 0]})
    assert any("increment sd" in v for v in _violations(d))


def test_missing_blocks():
    v = _violations({"kind": "fclt"})
    assert any("'grid'" in m for m in v) and any("'radii'" in m for m in v)


def test_builtin_batteries_need_no_blocks():
    assert load_and_validate({"kind": "kernel"}).kind == "kernel"
    assert load_and_validate({"kind": "all", "scale": "quick"})["scale"] == "quick"


def test_hash_stable_and_whitespace_insensitive(tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    a.write_text(json.dumps(BASE))
    b.write_text(json.dumps(BASE, indent=4))
    ha = load_and_validate(a).hash
    assert ha == load_and_validate(b).hash == load_and_validate(json.dumps(BASE)).hash
    assert len(ha) == 64


def test_hash_ignores_workers_and_output_dir_only():
    h = load_and_validate(BASE).hash
    assert load_and_validate(_with(workers=4, output_dir="/tmp/x")).hash == h
    assert load_and_validate(_with(seed=9)).hash != h
    # integer and float spellings hash alike
    assert load_and_validate(_with(grid__half_length=16.0)).hash == h


def test_hash_of_raw_dict_is_order_free():
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})


def test_tolerance_override_is_logged(caplog):
    cfg = load_and_validate(_with(tolerances={"limit_relative": 0.2}))
    assert cfg.tolerance("limit_relative", 0.1) == 0.2
    assert cfg.tolerance("fclt_relative", 0.15) == 0.15
    assert "tolerance override" in caplog.text


def test_unparseable_text():
    with pytest.raises(ConfigError, match="parse"):
        load_and_validate("{not json")


@pytest.mark.parametrize("path", sorted((Path(__file__).parents[1] / "configs").glob("*.json")),
                         ids=lambda p: p.name)
def test_shipped_configs_validate(path):
    assert load_and_validate(path).kind == json.loads(path.read_text())["kind"]
