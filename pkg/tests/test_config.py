import json

import pytest

from mirage.config import ConfigError, RunConfig, dumps_config, load_config, parse_config
from mirage.reports import format_json, format_table


def test_defaults_validate():
    config = parse_config("{}")
    assert config.loss.temperature == 0.07
    assert config.loss.dis_weight == 0.1
    assert config.loss.bank_capacity == 64
    assert config.optimizer.learning_rate == 0.002
    assert config.optimizer.momentum == 0.9
    assert config.optimizer.epochs == 10
    assert config.optimizer.batch_size == 32
    assert config.encoder.prompt_len == 2
    assert config.protocol.seeds == [1, 2, 3, 4, 5]


def test_unknown_keys_are_hard_errors():
    with pytest.raises(ConfigError, match="unknown top-level"):
        parse_config('{"optimizre": {}}')
    with pytest.raises(ConfigError, match="unknown keys"):
        parse_config('{"loss": {"temp": 0.1}}')
    with pytest.raises(ConfigError, match="unknown keys"):
        parse_config('{"encoder": {"prompt_size": 2}}')


def test_invalid_values_rejected():
    with pytest.raises(ConfigError):
        parse_config('{"loss": {"temperature": -1}}')
    with pytest.raises(ConfigError):
        parse_config('{"optimizer": {"batch_size": 0}}')
    with pytest.raises(ConfigError):
        parse_config('{"protocol": {"arms": ["bogus"]}}')
    with pytest.raises(ConfigError):
        parse_config('{"data": {"train_family": "NATURAL"}}')
    with pytest.raises(ConfigError):
        parse_config('{"encoder": {"image_side": 33}}')
    with pytest.raises(ConfigError):
        parse_config('{"protocol": {"degradations": [{"kind": "LOW_RES", "parameter": 0}]}}')
    with pytest.raises(ConfigError, match="JSON"):
        parse_config("not json")


def test_roundtrip_equality(tmp_path):
    text = json.dumps(
        {
            "loss": {"temperature": 0.2, "normalize": True},
            "optimizer": {"epochs": 3},
            "protocol": {"seeds": [7], "degradations": [{"kind": "GAUSS_BLUR", "parameter": 1.0}]},
            "output_dir": "out",
        }
    )
    config = parse_config(text)
    serialized = dumps_config(config)
    config2 = parse_config(serialized)
    assert config.to_dict() == config2.to_dict()
    path = tmp_path / "c.json"
    path.write_text(serialized)
    config3 = load_config(path)
    assert config3.to_dict() == config.to_dict()


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.json")


def test_template_section():
    config = parse_config(
        json.dumps(
            {
                "encoder": {
                    "template_prefix": ["an"],
                    "template_real_word": "original",
                    "template_fake_word": "generated",
                    "template_suffix": ["image"],
                }
            }
        )
    )
    template = config.encoder.template()
    assert template.render(0) == ["an", "original", "image"]
    assert template.render(1) == ["an", "generated", "image"]


def test_format_json_deterministic():
    payload = {"b": 1.23456789, "a": [1, 2.0, None, True], "nested": {"z": "s", "y": 0.1}}
    out1 = format_json(payload)
    out2 = format_json(dict(reversed(list(payload.items()))))
    assert out1 == out2
    assert '"b": 1.234568' in out1
    assert '"a": [' in out1
    with pytest.raises(TypeError):
        format_json({"x": object()})


def test_format_table_alignment():
    table = format_table(["name", "value"], [["a", "1.0"], ["long-name", "2.5"]])
    lines = table.splitlines()
    assert lines[0].startswith("name")
    assert all("|" in line for line in (lines[0], lines[2], lines[3]))
    assert len(set(len(l) for l in lines[2:])) == 1
