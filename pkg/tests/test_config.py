import pytest
from hypothesis import given
from hypothesis import strategies as st

from realmotion.config import config_hash, load_config, merge, save_config
from realmotion.errors import ConfigInvalid
from realmotion.model import ModelConfig
from realmotion.training import TrainConfig

keys = st.text("abcdefgh", min_size=1, max_size=4)
values = st.one_of(st.integers(-5, 5), st.booleans(), st.text("xyz", max_size=3))


@given(st.dictionaries(keys, values))
def test_hash_ignores_key_order(d):
    assert config_hash(d) == config_hash(dict(reversed(list(d.items()))))


def test_hash_distinguishes_values():
    assert config_hash({"a": 1}) != config_hash({"a": 2})
    assert len(config_hash({}, length=64)) == 64


def test_roundtrip(tmp_path):
    d = {"model": {"dim": 32}, "train": {"split_points": (30, 50)}}
    save_config(d, tmp_path / "c.yaml")
    assert load_config(tmp_path / "c.yaml") == {"model": {"dim": 32}, "train": {"split_points": [30, 50]}}


@pytest.mark.parametrize("text", ["[1, 2]", "a: [", "- x"])
def test_malformed(tmp_path, text):
    p = tmp_path / "c.yaml"
    p.write_text(text)
    with pytest.raises(ConfigInvalid):
        load_config(p)


def test_missing_and_empty(tmp_path):
    with pytest.raises(ConfigInvalid):
        load_config(tmp_path / "nope.yaml")
    (tmp_path / "e.yaml").write_text("")
    assert load_config(tmp_path / "e.yaml") == {}


def test_merge_skips_none():
    assert merge({"a": 1, "b": 2}, {"a": None, "b": 3, "c": 4}) == {"a": 1, "b": 3, "c": 4}


def test_model_config_validation():
    with pytest.raises(ConfigInvalid):
        ModelConfig(dim=30, heads=4).validate()
    with pytest.raises(ConfigInvalid):
        ModelConfig.from_dict({"dimension": 64})
    with pytest.raises(ConfigInvalid):
        ModelConfig(memory_capacity=0).validate()


@pytest.mark.parametrize("steps", [0, 4, -1])
def test_gradient_steps_range(steps):
    with pytest.raises(ConfigInvalid):
        TrainConfig(gradient_steps=steps).resolved_steps()
