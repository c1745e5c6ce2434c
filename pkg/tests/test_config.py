import json

import pytest

from qumvqd.core import config
from qumvqd.core.common import ParseError


def write_json(path, data):
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def test_builtin_defaults():
    run = config.load_run_config(root_config=None)
    assert run.depth == 20
    assert run.betas == 3.0
    assert run.optimizer.restarts == 5
    assert run.optimizer.max_evals == 20_000
    assert run.optimizer.tol == 1e-9
    assert run.optimizer.patience == 50
    assert run.optimizer.simplex_fraction == 0.5
    assert run.noise.l_max == 8


def test_layers_merge_in_order(tmp_path):
    root = write_json(tmp_path / "config.json", {
        "defaults": {"depth": 10, "optimizer": {"restarts": 3}},
        "systems": {"h2": {"k": 6, "num_electrons": 2, "optimizer": {"max_evals": 500}}},
    })
    run_file = write_json(tmp_path / "run.json", {"depth": 12, "optimizer": {"tol": 1e-6}})
    run = config.load_run_config(run_file, "h2", {"seed": 9, "k": None}, root_config=root)
    assert run.depth == 12
    assert run.k == 6
    assert run.num_electrons == 2
    assert run.seed == 9
    assert run.optimizer.restarts == 3
    assert run.optimizer.max_evals == 500
    assert run.optimizer.tol == 1e-6
    assert run.optimizer.polish


def test_plain_run_file_is_accepted(tmp_path):
    run_file = write_json(tmp_path / "run.json", {
        "depth": 20, "betas": [3.0, 3.0, 3.0], "k": 4, "seed": 1,
        "optimizer": {"restarts": 5, "max_evals": 20000, "tol": 1e-9},
    })
    run = config.load_run_config(run_file, root_config=None)
    assert run.betas == (3.0, 3.0, 3.0)
    assert run.seed == 1


def test_unknown_keys_are_rejected(tmp_path):
    run_file = write_json(tmp_path / "run.json", {"dpeth": 3})
    with pytest.raises(ParseError) as info:
        config.load_run_config(run_file, root_config=None)
    assert info.value.field == "dpeth"
    run_file = write_json(tmp_path / "run.json", {"optimizer": {"restart": 3}})
    with pytest.raises(ParseError):
        config.load_run_config(run_file, root_config=None)


def test_unknown_system(tmp_path):
    root = write_json(tmp_path / "config.json", {"defaults": {}, "systems": {}})
    with pytest.raises(ValueError):
        config.load_run_config(system="co2", root_config=root)


def test_repository_config_loads(data_dir):
    root = data_dir.parent / "config.json"
    for system in ("h2", "synthetic", "co2", "h2s", "h2_noise", "co2_fidelity"):
        config.load_run_config(system=system, root_config=root)
    assert config.load_run_config(system="co2", root_config=root).cutoff == 256


def test_thread_count_resolution():
    assert config.resolve_thread_count(4, {"QUMVQD_THREADS": "2"}) == 4
    assert config.resolve_thread_count(None, {"QUMVQD_THREADS": "2"}) == 2
    assert config.resolve_thread_count(None, {}) == 1
    with pytest.raises(ValueError):
        config.resolve_thread_count(None, {"QUMVQD_THREADS": "many"})
    with pytest.raises(ValueError):
        config.resolve_thread_count(0, {})
