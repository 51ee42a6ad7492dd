import pytest

from renewlab.config import ExperimentConfig, parse_config, parse_config_text
from renewlab.errors import ConfigError


def test_defaults():
    cfg = parse_config_text("")
    assert cfg == ExperimentConfig()
    assert cfg.derived_beta == pytest.approx(0.75)
    assert cfg.ulam_cap == 10**7 and cfg.tail_size == 10**7


def test_overrides_and_derived():
    cfg = parse_config_text("gamma1 = 2.5  # beta = 0.4\n", {"seed": "7"})
    assert cfg.derived_beta == pytest.approx(0.4)
    assert cfg.seed == 7 and cfg.ulam_cap == 10**5 and cfg.tail_size == 2 * 10**6
    assert parse_config_text("mode = iid\nbeta = 0.6").derived_beta == 0.6
    cfg = parse_config_text("t_ladder = 10, 100, 3\nn_list = 5,10\nformats = json")
    assert cfg.t_ladder == (10.0, 100.0, 3.0) and cfg.n_list == (5, 10)
    assert cfg.formats == ("json",)


def test_round_trip(tmp_path):
    cfg = ExperimentConfig(gamma1=1.6, A=(0.7, 0.9), N=12345, roof="constant:1.5")
    p = tmp_path / "exp.cfg"
    p.write_text(cfg.to_text())
    assert parse_config(str(p)) == cfg


@pytest.mark.parametrize("text,key", [
    ("c1 = 1.5", "c1"),
    ("gamma1 = 0.9", "gamma1"),
    ("roof = cubic:1", "roof"),
    ("A = 0.5", "A"),
    ("N = 0", "N"),
    ("beta = nan", "beta"),
    ("shards = two", "shards"),
    ("colour = red", "colour"),
    ("t_ladder = 100, 10, 3", "t_ladder"),
    ("mode = iid\niid_body = pareto", "c0"),
])
def test_errors_name_the_key(text, key):
    with pytest.raises(ConfigError) as err:
        parse_config_text(text)
    assert err.value.key == key


def test_missing_file():
    with pytest.raises(ConfigError):
        parse_config("/nonexistent/exp.cfg")


def test_frozen():
    with pytest.raises(Exception):
        ExperimentConfig().seed = 3
