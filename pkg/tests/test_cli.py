import pytest
import yaml

from loren import cli
from loren.config import from_dict

F = 16
TINY = {
    "link": {"num_subcarriers": F},
    "model": {"channels": 4, "num_subcarriers": F},
    "train": {"base": {"iterations": 4, "cr_list": [0.5, 0.75]},
              "adapters": {"iterations": 4, "cr_list": [0.5, 0.75]}},
    "eval": {"cr_list": [0.5, 0.75], "ebno_points_db": [2.0, 6.0],
             "stopping": {"min_block_errors": 2, "max_blocks": 4}},
}


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(TINY))
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_print_defaults(capsys):
    assert run("--print-defaults") == cli.EXIT_OK
    assert yaml.safe_load(capsys.readouterr().out)["eval"]["stopping"]["max_blocks"] == 20000


def test_missing_command(capsys):
    assert run() == cli.EXIT_CONFIG


def test_unknown_key_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("model: {chanels: 4}\n")
    assert run("hwcost", "--config", bad, "--out", tmp_path) == cli.EXIT_CONFIG
    assert "model: unknown field(s) chanels" in capsys.readouterr().err


def test_bad_workers(tmp_path):
    assert run("hwcost", "--workers", 0, "--out", tmp_path) == cli.EXIT_CONFIG


def test_hwcost_report(tmp_path, capsys):
    assert run("hwcost", "--out", tmp_path) == cli.EXIT_OK
    out = capsys.readouterr().out
    for line in ("conv_params_per_layer: 147456", "conv_params_all_rates: 442368",
                 "adapter_params_per_layer: 3072", "switch_us:Convolution: 20.48", "reads_per_subframe: 48"):
        assert line in out
    assert (tmp_path / "cost_report.csv").read_text().startswith("quantity,value\n")


def test_config_echo_roundtrip(tiny, tmp_path):
    out = tmp_path / "o"
    assert run("hwcost", "--config", tiny, "--seed", 9, "--out", out) == cli.EXIT_OK
    echoed = from_dict(yaml.safe_load((out / "config.yaml").read_text()))
    assert echoed.seed == 9 and echoed.model.channels == 4
    assert run("hwcost", "--config", out / "config.yaml", "--out", out) == cli.EXIT_OK


def test_ldpc_check(tmp_path, capsys):
    assert run("ldpc-check", "--blocks", 1, "--out", tmp_path) == cli.EXIT_OK
    rows = (tmp_path / "ldpc_check.csv").read_text().splitlines()
    assert rows[0] == "cr,n,k,rate,parity_ok,roundtrip_ok"
    assert len(rows) == 4 and all(r.endswith("True,True") for r in rows[1:])


def test_eval_without_weights(tiny, tmp_path, capsys):
    assert run("eval", "--config", tiny, "--out", tmp_path) == cli.EXIT_MISSING
    assert str(tmp_path / "base.lrnw") in capsys.readouterr().err


def test_adapters_missing(tiny, tmp_path, capsys):
    assert run("train-base", "--config", tiny, "--out", tmp_path) == cli.EXIT_OK
    assert run("eval", "--config", tiny, "--out", tmp_path) == cli.EXIT_MISSING
    assert str(tmp_path / "adapters.lrnw") in capsys.readouterr().err


def test_plot_nothing(tmp_path):
    assert run("plot", "--out", tmp_path) == cli.EXIT_MISSING


def test_pipeline_byte_identical(tiny, tmp_path):
    outputs = []
    for name, workers in (("a", 1), ("b", 2)):
        out = tmp_path / name
        for cmd in ("train-base", "train-adapters"):
            assert run(cmd, "--config", tiny, "--out", out) == cli.EXIT_OK
        assert run("eval", "--config", tiny, "--out", out, "--workers", workers) == cli.EXIT_OK
        assert run("plot", "--config", tiny, "--out", out) == cli.EXIT_OK
        outputs.append(out)
    a, b = outputs
    for f in ("bler.csv", "compare.csv", "base.loss.csv", "adapters.loss.csv", "bler_cr500.svg", "base.loss.svg"):
        assert (a / f).read_bytes() == (b / f).read_bytes(), f
    assert (a / "base.lrnw").read_bytes() == (b / "base.lrnw").read_bytes()
    assert len((a / "bler.csv").read_text().splitlines()) == 1 + 4 * 2 * 2


def test_adapter_rate_not_trained(tiny, tmp_path, capsys):
    assert run("train-base", "--config", tiny, "--out", tmp_path) == cli.EXIT_OK
    assert run("train-adapters", "--config", tiny, "--out", tmp_path) == cli.EXIT_OK
    wider = tmp_path / "wider.yaml"
    wider.write_text(yaml.safe_dump({**TINY, "eval": {**TINY["eval"], "cr_list": [0.5, 0.6666666666666666]}}))
    assert run("eval", "--config", wider, "--out", tmp_path) == cli.EXIT_CONFIG
    assert "no adapters" in capsys.readouterr().err
