# python imports
import json

# third party imports
import numpy as np
import pytest

# local imports
from hebblab.config import (
    SEED_PURPOSES,
    ExperimentConfig,
    derive_seed,
    env_workers,
    make_rng,
    split_seed,
)
from hebblab.errors import ConfigurationError


def test_defaults_match_network_parameters():
    cfg = ExperimentConfig().network_config()
    assert (cfg.N, cfg.g, cfg.A, cfg.B, cfg.lam, cfg.t_s, cfg.T_train) == (81, 0.3, 30.0, 300.0, 1.4, 12.0, 6000.0)


def test_config_round_trips_through_json(tmp_path):
    config = ExperimentConfig.from_dict({"root_seed": 42, "network": {"N": 8, "lambda": 2.0}})
    path = tmp_path / "config.json"
    config.dump(str(path))
    assert json.loads(path.read_text())["network"]["lambda"] == 2.0
    assert ExperimentConfig.load(str(path)) == config


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"network": {"neurons": 8}})
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"basins": {"free_axes": [1, 1]}})


def test_missing_config_file_is_a_configuration_error(tmp_path):
    with pytest.raises(ConfigurationError):
        ExperimentConfig.load(str(tmp_path / "missing.json"))


def test_seed_split_is_deterministic_and_distinct():
    seeds = [split_seed(5, purpose) for purpose in SEED_PURPOSES]
    assert seeds == [split_seed(5, purpose) for purpose in SEED_PURPOSES]
    assert len(set(seeds)) == len(seeds)
    assert split_seed(5, "training") != split_seed(6, "training")
    assert derive_seed(1, 0) != derive_seed(1, 1)
    with pytest.raises(ConfigurationError):
        split_seed(5, "weather")


def test_explicit_section_seeds_override_root_split():
    config = ExperimentConfig.from_dict({"training": {"seed": 11}, "integrator": {"ic_seed": 12}})
    assert config.seed_for("training") == 11
    assert config.seed_for("initial_conditions") == 12
    assert config.seed_for("basins") == split_seed(0, "basins")


def test_philox_generator_is_reproducible():
    assert np.array_equal(make_rng(9).uniform(size=5), make_rng(9).uniform(size=5))


def test_worker_precedence(monkeypatch):
    monkeypatch.setenv("HBL_WORKERS", "3")
    assert env_workers() == 3
    assert ExperimentConfig().resolve_workers() == 3
    assert ExperimentConfig(workers=2).resolve_workers() == 2
    assert ExperimentConfig(workers=2).resolve_workers(5) == 5
    monkeypatch.setenv("HBL_WORKERS", "many")
    assert env_workers() == 1


def test_output_dir_precedence(monkeypatch):
    monkeypatch.setenv("HBL_OUTPUT_DIR", "from-env")
    assert ExperimentConfig().resolve_output_dir() == "from-env"
    assert ExperimentConfig(output_dir="from-file").resolve_output_dir() == "from-file"
    assert ExperimentConfig(output_dir="from-file").resolve_output_dir("from-flag") == "from-flag"
