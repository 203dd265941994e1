import json

import pytest

from gradsched.config import ConfigError, parse_config


def test_minimal_config_gets_defaults():
    cfg = parse_config({})
    assert cfg.policy == "gsgm"
    assert cfg.num_learners == 10
    assert cfg.seed == 1
    assert cfg.epochs == 40
    assert cfg.noniid_fraction == 1.0
    assert cfg.hyperparams.alpha == 0.9
    assert cfg.hyperparams.batch_size == 100
    assert cfg.speed_model.kind == "lognormal"
    assert cfg.dataset.kind == "synthetic"


def test_svrg_policy_defaults_to_loop_counts():
    cfg = parse_config({"policy": "gsgm_svrg"})
    assert cfg.outer_loops == 20 and cfg.inner_loops == 5
    assert cfg.epochs is None


def test_classic_hyperparameter_presets_parse():
    # the conventional settings used throughout the experiment configs
    for eta0, decays in ((5e-4, [75]), (1e-3, [50, 80]), (0.0025, [12])):
        cfg = parse_config({
            "hyperparams": {
                "eta0": eta0, "alpha": 0.9,
                "decay_epochs": decays, "decay_factor": 0.5, "batch_size": 100,
            }
        })
        assert cfg.hyperparams.eta0 == eta0
        assert cfg.hyperparams.decay_epochs == tuple(decays)
        assert cfg.hyperparams.decay_factor == 0.5


def test_round_trip_identity():
    src = {
        "policy": "ssp_lm:2",
        "num_learners": 6,
        "seed": 9,
        "epochs": 12,
        "noniid_fraction": 0.5,
        "model_kind": "mlp1",
        "hidden_dim": 16,
        "hyperparams": {"eta0": 0.003, "decay_epochs": [5, 8]},
        "speed_model": {"kind": "straggler", "stragglers": [2], "slowdown": 4.0},
        "dataset": {"kind": "synthetic", "num_classes": 3, "per_class": 40},
    }
    cfg = parse_config(src)
    again = parse_config(cfg.to_dict())
    assert again == cfg


def test_unknown_top_level_key_named():
    with pytest.raises(ConfigError, match="learners"):
        parse_config({"learners": 5})


def test_unknown_nested_key_named():
    with pytest.raises(ConfigError, match="hyperparams.momentum"):
        parse_config({"hyperparams": {"momentum": 0.9}})


def test_range_errors_name_field():
    with pytest.raises(ConfigError, match="noniid_fraction"):
        parse_config({"noniid_fraction": 1.5})
    with pytest.raises(ConfigError, match="num_learners"):
        parse_config({"num_learners": 0})
    with pytest.raises(ConfigError, match="eta0"):
        parse_config({"hyperparams": {"eta0": -0.1}})
    with pytest.raises(ConfigError, match="epochs"):
        parse_config({"epochs": 0})
    with pytest.raises(ConfigError, match="stragglers"):
        parse_config({"speed_model": {"kind": "straggler", "stragglers": [99]}})


def test_policy_errors():
    with pytest.raises(ConfigError, match="policy"):
        parse_config({"policy": "magic"})
    with pytest.raises(ConfigError, match="policy"):
        parse_config({"policy": "ssp"})  # missing threshold


def test_loop_fields_must_match_family():
    with pytest.raises(ConfigError, match="outer_loops"):
        parse_config({"policy": "gsgm", "outer_loops": 5})
    with pytest.raises(ConfigError, match="epochs"):
        parse_config({"policy": "asvrg", "epochs": 10})


def test_type_errors_name_field():
    with pytest.raises(ConfigError, match="seed"):
        parse_config({"seed": "one"})
    with pytest.raises(ConfigError, match="decay_epochs"):
        parse_config({"hyperparams": {"decay_epochs": [1.5]}})
    with pytest.raises(ConfigError, match="svrg_uniform_average"):
        parse_config({"svrg_uniform_average": "yes"})


def test_idx_dataset_requires_all_paths():
    with pytest.raises(ConfigError, match="dataset.images"):
        parse_config({"dataset": {"kind": "idx"}})


def test_overrides_beat_file_values(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"policy": "async", "seed": 5}))
    cfg = parse_config(str(path), {"seed": 7, "hyperparams.eta0": 0.5})
    assert cfg.policy == "async"
    assert cfg.seed == 7
    assert cfg.hyperparams.eta0 == 0.5


def test_missing_or_invalid_file():
    with pytest.raises(ConfigError, match="not found"):
        parse_config("/no/such/file.json")


def test_invalid_json_reported(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{nope")
    with pytest.raises(ConfigError, match="invalid JSON"):
        parse_config(str(p))


def test_output_root_env_applied(tmp_path, monkeypatch):
    monkeypatch.setenv("GRADSCHED_OUTPUT_ROOT", str(tmp_path))
    cfg = parse_config({"output_dir": "exp1"})
    assert cfg.output_dir == str(tmp_path / "exp1")
    cfg_abs = parse_config({"output_dir": "/tmp/elsewhere"})
    assert cfg_abs.output_dir == "/tmp/elsewhere"
