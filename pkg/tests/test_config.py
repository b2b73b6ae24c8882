import pytest

from gensemcom.config import (
    ConfigError, ExperimentConfig, desk_config, from_dict, load_config, full_config, parse_text,
)


def test_minimal_text_parses():
    cfg = parse_text("training.task = SEGMENT\n", env={})
    assert cfg.training.task == "SEGMENT"
    assert cfg.tasks == ("SEGMENT",)


def test_missing_required_key_is_named():
    with pytest.raises(ConfigError, match="training.task"):
        parse_text("training.epochs = 3\n", env={})


def test_bad_value_reports_line():
    text = "training.task = RECONSTRUCT\n# comment\ntraining.epochs = many\n"
    with pytest.raises(ConfigError) as err:
        parse_text(text, env={})
    assert err.value.line == 3
    assert "line 3" in str(err.value)


@pytest.mark.parametrize("line", ["nonsense", "bogus.key = 1", "training.nope = 1", "task = 1"])
def test_malformed_lines_rejected(line):
    with pytest.raises(ConfigError, match="line 2"):
        parse_text(f"training.task = RECONSTRUCT\n{line}\n", env={})


def test_duplicate_key():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_text("training.task = SEGMENT\ntraining.task = SEGMENT\n", env={})


def test_env_override_wins():
    cfg = parse_text("training.task = RECONSTRUCT\ntraining.epochs = 3\n",
                     env={"SEMCOM_TRAINING__EPOCHS": "7", "OTHER": "x"})
    assert cfg.training.epochs == 7


def test_env_can_supply_required_key():
    cfg = parse_text("", env={"SEMCOM_TRAINING__TASK": "SEGMENT"})
    assert cfg.training.task == "SEGMENT"


def test_bad_env_override_names_variable():
    with pytest.raises(ConfigError, match="SEMCOM_TRAINING__EPOCHS"):
        parse_text("training.task = SEGMENT\n", env={"SEMCOM_TRAINING__EPOCHS": "x"})


def test_unknown_task_rejected():
    with pytest.raises(ConfigError, match="training.task"):
        parse_text("training.task = DENOISE\n", env={})


def test_geometry_violations_surface_as_config_errors():
    with pytest.raises(ConfigError):
        desk_config().replace(**{"extractor.window_size": 5})


def test_text_round_trip(tmp_path):
    cfg = desk_config("SEGMENT").replace(**{"channel.snr_db": "noiseless", "training.snr_range": (2.0, 8.0)})
    path = tmp_path / "c.cfg"
    path.write_text(cfg.to_text())
    again = load_config(path, env={})
    assert again == cfg


def test_dict_round_trip():
    cfg = full_config("RECONSTRUCT")
    assert from_dict(cfg.to_dict()) == cfg


def test_model_hash_ignores_runtime_sections():
    a = desk_config()
    b = a.replace(**{"training.epochs": 99, "channel.snr_db": 3.0, "eval.seed": 5})
    c = a.replace(**{"encoder.out_channels": 16})
    assert a.model_hash() == b.model_hash()
    assert a.model_hash() != c.model_hash()
    assert a.model_hash() != a.replace(**{"training.joint": True}).model_hash()


def test_joint_builds_both_tasks():
    assert desk_config().replace(**{"training.joint": True}).tasks == ("RECONSTRUCT", "SEGMENT")


def test_defaults_constructible():
    assert isinstance(ExperimentConfig(), ExperimentConfig)


def test_shipped_configs_match_presets():
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "configs"
    for task in ("reconstruct", "segment"):
        assert load_config(root / f"desk_{task}.cfg", env={}) == desk_config(task.upper())
        assert load_config(root / f"full_{task}.cfg", env={}).image.height == 224
