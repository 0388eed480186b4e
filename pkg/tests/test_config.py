import pytest
import yaml

from loren.config import ConfigError, GlobalConfig, dump_yaml, from_dict, load_config, to_dict


def test_defaults_roundtrip():
    cfg = GlobalConfig()
    assert load_config(None) == cfg
    assert from_dict(yaml.safe_load(dump_yaml(cfg))) == cfg


def test_file_and_overrides(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("seed: 5\neval:\n  cr_list: [0.5]\n  stopping: {min_block_errors: 3, max_blocks: 9}\n")
    cfg = load_config(path, {"seed": 11, "paths.out_dir": "x"})
    assert cfg.seed == 11
    assert cfg.eval.cr_list == (0.5,)
    assert cfg.eval.stopping.max_blocks == 9
    assert cfg.path("bler_csv").as_posix() == "x/bler.csv"
    assert cfg.eval_config().seed == 11 and cfg.train_config("base").seed == 11


def test_seed_owned_by_top_level():
    assert "seed" not in to_dict(GlobalConfig())["eval"]
    with pytest.raises(ConfigError, match="eval: unknown field"):
        from_dict({"eval": {"seed": 3}})


@pytest.mark.parametrize("data,where", [
    ({"bogus": 1}, "unknown field"),
    ({"train": {"base": {"optimizer": {"momentum": 0.9}}}}, "train.base.optimizer"),
    ({"eval": {"stopping": {"min_block_errors": 0}}}, "eval.stopping"),
    ({"link": {"constellation": "qpsk"}}, "link"),
    ({"version": 2}, "version"),
    ({"model": {"num_rx": 1}}, "num_rx"),
    ({"link": {"num_subcarriers": 16}}, "link grid"),
    ({"eval": []}, "eval: expected a mapping"),
])
def test_invalid_fields_named(data, where):
    with pytest.raises(ConfigError, match=where):
        from_dict(data)


def test_bad_files(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.yaml")
    (tmp_path / "bad.yaml").write_text("a: [1,\n")
    with pytest.raises(ConfigError, match="invalid YAML"):
        load_config(tmp_path / "bad.yaml")
    (tmp_path / "list.yaml").write_text("- 1\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_config(tmp_path / "list.yaml")


def test_absolute_path_kept(tmp_path):
    cfg = from_dict({"paths": {"weights": str(tmp_path / "w.lrnw")}})
    assert cfg.path("weights") == tmp_path / "w.lrnw"
