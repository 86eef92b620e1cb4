import pytest
import yaml

from airgrid.config import RunConfig, dump_default_config, load_config
from airgrid.errors import InvalidInputError


def test_default_roundtrip(tmp_path):
    p = tmp_path / "default.yaml"
    dump_default_config(p)
    cfg = load_config(p)
    assert cfg == RunConfig()


def test_partial_override(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump({
        "pollutant": "O3",
        "train": {"beta": 0.05},
        "missing_ratios": [0.1, 0.2],
    }))
    cfg = load_config(p)
    assert cfg.pollutant == "O3"
    assert cfg.train.beta == 0.05
    assert cfg.train.gamma == RunConfig().train.gamma
    assert cfg.missing_ratios == (0.1, 0.2)


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "empty.yaml"
    p.write_text("")
    assert load_config(p) == RunConfig()


def test_unknown_top_level_key(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump({"turbo": True}))
    with pytest.raises(InvalidInputError):
        load_config(p)


def test_non_mapping_rejected(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump([1, 2, 3]))
    with pytest.raises(InvalidInputError):
        load_config(p)


def test_invalid_pollutant():
    with pytest.raises(InvalidInputError):
        RunConfig(pollutant="CO")
