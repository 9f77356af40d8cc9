from pathlib import Path

import pytest

from shaperet.config import CACHE_ENV, ConfigError, RunConfig, default_cache, format_config, load_config, parse_config


def test_defaults():
    cfg = RunConfig()
    assert cfg.kinds == ("Mean",) and cfg.combination == "none"
    assert (cfg.n_points, cfg.dictionary_size, cfg.max_iter) == (200, 50, 100)


def test_parse_types():
    v = parse_config("kinds = Mean, SI  # two kinds\ncombination = VS\nn_points = 500\n\ndataset = data\n")
    assert v == {"kinds": ("Mean", "SI"), "combination": "VS", "n_points": 500, "dataset": Path("data")}


def test_unknown_key():
    with pytest.raises(ConfigError, match="unknown"):
        parse_config("colour = red")


def test_missing_equals():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("seed = 1\nseed 2\n")


def test_relative_paths_follow_config_file(tmp_path):
    (tmp_path / "data").mkdir()
    p = tmp_path / "run.cfg"
    p.write_text("dataset = data\nout = results\n")
    cfg = load_config(p)
    assert cfg.dataset == tmp_path / "data" and cfg.out == tmp_path / "results"
    cfg.validate()


def test_overrides_win(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("seed = 3\ndictionary_size = 10\n")
    cfg = load_config(p, seed="9", dictionary_size=None)
    assert (cfg.seed, cfg.dictionary_size) == (9, 10)


def test_combination_needs_two_kinds():
    with pytest.raises(ConfigError, match="two descriptor kinds"):
        RunConfig(kinds=("Mean",), combination="VS").validate(need_dataset=False)


def test_plain_run_needs_one_kind():
    with pytest.raises(ConfigError):
        RunConfig(kinds=("Mean", "SI")).validate(need_dataset=False)


@pytest.mark.parametrize("kwargs", [dict(n_points=0), dict(dictionary_size=0), dict(sampler="sift"),
                                    dict(combination="concat"), dict(kinds=("Bogus",))])
def test_invalid_values(kwargs):
    with pytest.raises((ConfigError, ValueError)):
        RunConfig(**kwargs).validate(need_dataset=False)


def test_missing_dataset(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        RunConfig(dataset=tmp_path / "nope").validate()


def test_label_file_discovered(tmp_path):
    (tmp_path / "b.cla").write_text("")
    (tmp_path / "a.cla").write_text("")
    assert RunConfig(dataset=tmp_path).label_path == tmp_path / "a.cla"


def test_cache_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv(CACHE_ENV, str(tmp_path))
    assert default_cache() == tmp_path
    assert RunConfig().cache == tmp_path


def test_format_round_trip(tmp_path):
    cfg = RunConfig(dataset=tmp_path, kinds=("SI", "CI"), combination="HistD", seed=4,
                    out=tmp_path / "o", cache=tmp_path / "c")
    p = tmp_path / "run.cfg"
    p.write_text(format_config(cfg))
    assert load_config(p) == cfg
