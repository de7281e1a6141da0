import json
import os

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ran_resilience.config import (
    DEFAULT_SOLVER_LIMITS,
    ConfigError,
    ExperimentConfig,
    config_from_dict,
    config_to_dict,
    instance_seed,
    load_config,
)
from ran_resilience.ran_model import InstanceParams, RadioConfig

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_defaults_cover_the_full_grid():
    cfg = ExperimentConfig()
    cfg.validate()
    assert cfg.ring_sizes == (5, 10, 15, 20, 25, 30, 35, 40, 45, 50)
    assert cfg.severities == (0.05, 0.10, 0.25, 0.50)
    assert cfg.seeds_per_severity == 30
    assert len(cfg.ring_sizes) * len(cfg.severities) * cfg.seeds_per_severity == 1200
    assert cfg.solver == DEFAULT_SOLVER_LIMITS


def test_shipped_configs_load():
    full = load_config(os.path.join(CONFIGS, "full_grid.toml"))
    assert full.ring_sizes == ExperimentConfig().ring_sizes and full.write_plans
    smoke = load_config(os.path.join(CONFIGS, "smoke.toml"))
    assert smoke.ring_sizes == (10,) and smoke.timing.solve_time_s == 0.01


def test_echo_round_trips():
    cfg = ExperimentConfig(
        ring_sizes=(5, 7),
        severities=(0.5,),
        seeds_per_severity=3,
        instance=InstanceParams(users_per_ru=4, radio=RadioConfig(mimo_layers=4), rate_band_bps=(1e6, 2e6)),
    )
    echo = json.loads(json.dumps(config_to_dict(cfg)))
    assert config_from_dict(echo) == cfg
    assert config_from_dict(json.loads(json.dumps(config_to_dict(ExperimentConfig())))) == ExperimentConfig()


def test_toml_and_json_agree(tmp_path):
    toml = write(tmp_path, "a.toml", """
[experiment]
ring_sizes = [5]
severities = [0.25]
seeds_per_severity = 2

[solver]
node_cap = 50

[baselines.coverage_expansion]
rate_penalty = 0.4
""")
    doc = {
        "experiment": {"ring_sizes": [5], "severities": [0.25], "seeds_per_severity": 2},
        "solver": {"node_cap": 50},
        "baselines": {"coverage_expansion": {"rate_penalty": 0.4}},
    }
    js = write(tmp_path, "a.json", json.dumps(doc))
    a, b = load_config(toml), load_config(js)
    assert a == b
    assert a.solver.node_cap == 50 and a.solver.time_s == DEFAULT_SOLVER_LIMITS.time_s
    assert a.coverage.rate_penalty == 0.4


def test_relative_topology_file_resolves_beside_config(tmp_path):
    (tmp_path / "ring.json").write_text("{}")
    path = write(tmp_path, "c.toml", '[experiment]\ntopology_file = "ring.json"\n')
    assert load_config(path).topology_file == str(tmp_path / "ring.json")


@pytest.mark.parametrize(
    "doc",
    [
        {"experiment": {"severities": [1.5]}},
        {"experiment": {"severities": []}},
        {"experiment": {"severities": [0.1, 0.1]}},
        {"experiment": {"seeds_per_severity": 0}},
        {"experiment": {"ring_sizes": [1]}},
        {"experiment": {"strategies": ["magic"]}},
        {"experiment": {"topology_file": "/no/such/file.json"}},
        {"experiment": {"colour": "blue"}},
        {"solver": {"time_s": 0}},
        {"solver": {"budget": 3}},
        {"instance": {"cu_placement": "orbit"}},
        {"baselines": {"coverage_expansion": {"rate_penalty": 2.0}}},
        {"baselines": {"kaleidoscope": {}}},
        {"oracle": {"bound": "loose"}},
        {"extras": {}},
        {"experiment": "not a table"},
    ],
)
def test_invalid_configs_rejected(doc):
    with pytest.raises(ConfigError):
        config_from_dict(doc)


def test_unreadable_and_unparseable(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.toml"))
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "bad.toml", "[experiment\n"))
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "bad.yaml", "a: 1\n"))


def test_seed_formula():
    assert instance_seed(0, 0, 0) == 0
    assert instance_seed(0, 2, 7) == 2007
    assert instance_seed(100, 3, 29) == 3129


@given(st.integers(0, 10**6), st.integers(0, 20), st.integers(0, 999), st.integers(0, 20), st.integers(0, 999))
def test_seeds_do_not_collide(base, si, rep, sj, rep2):
    if (si, rep) != (sj, rep2):
        assert instance_seed(base, si, rep) != instance_seed(base, sj, rep2)
