from fractions import Fraction

import pytest

from spatialcurate.config import Config, ConfigError, load_config, parse_config_text


def test_defaults():
    cfg = Config()
    assert cfg.thresholds.tau_v == Fraction(1, 5)
    assert cfg.decode.and_probability == 0.1
    assert cfg.union_mode == "exact" and cfg.relation_rule == "octant"


def test_file_then_flags(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# thresholds\ntau_v = 0.25\nglobal_seed = 7  # trailing\nexclude_crowd = no\n\nunion_mode=enclosing_box\n")
    cfg = load_config(p)
    assert cfg.thresholds.tau_v == Fraction(1, 4)
    assert cfg.global_seed == 7 and cfg.exclude_crowd is False
    assert cfg.union_mode == "enclosing_box"
    cfg = load_config(p, {"tau_v": "0.3", "global_seed": None})
    assert cfg.thresholds.tau_v == Fraction(3, 10)
    assert cfg.global_seed == 7


@pytest.mark.parametrize(
    "text",
    ["tau_v = 1.5", "tau_v = abc", "bogus = 1", "tau_s", "union_mode = hull", "and_probability = 2",
     "max_expansion = 0.5", "min_area = 0", "exclude_crowd = maybe", "metric = l1", "conf_threshold = -1"],
)
def test_bad_values_rejected(tmp_path, text):
    p = tmp_path / "bad.cfg"
    p.write_text(text + "\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_unknown_override_rejected():
    with pytest.raises(ConfigError):
        load_config(None, {"tau_x": 1})


def test_parse_config_text():
    assert parse_config_text("templates = c = d") == {"templates": "c = d"}
