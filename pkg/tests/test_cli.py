import json
import math

import pytest

from chlsim.cli import main


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_params(capsys):
    code, out, err = _run(capsys, "params", "--lambda", "1", "--n-width", "10")
    assert code == 0
    assert json.loads(out)["delta"] == pytest.approx(math.tanh(0.05))
    assert json.loads(err)["command"] == "params"


@pytest.mark.parametrize("argv", [
    ["params", "--delta", "0.1", "--lambda", "1"],
    ["params"],
    ["params", "--delta", "1.5"],
    ["bogus"],
    ["simulate", "--delta", "0.1", "--replicates", "0"],
    ["render", "--delta", "0.3"],
])
def test_usage_errors_exit_2(capsys, argv):
    code, out, err = _run(capsys, *argv)
    assert code == 2 and out == ""
    assert len(err.strip().splitlines()) <= 2 and "error" in err


def test_help(capsys):
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--help"])
    assert info.value.code == 0
    assert "--replicates" in capsys.readouterr().out


def test_oracle_l2(capsys):
    code, out, _ = _run(capsys, "oracle", "l2", "--delta", "1e-3")
    assert code == 0
    assert json.loads(out)["ratio_to_32_3_delta3"] == pytest.approx(0.99941, abs=1e-5)


def test_oracle_kinds(capsys):
    for kind in ("drift", "m2", "halving"):
        code, out, _ = _run(capsys, "oracle", kind, "--delta", "0.05")
        assert code == 0 and json.loads(out)["kind"] == kind


def test_config_file_and_override(tmp_path, capsys):
    conf = tmp_path / "run.ini"
    conf.write_text("delta = 0.3\nreplicates = 12\nseed = 4\n")
    out = tmp_path / "t.csv"
    code, stdout, err = _run(capsys, "trees", "--config", str(conf), "--replicates", "6",
                             "--out", str(out))
    assert code == 0
    assert json.loads(err)["replicates"] == 6
    assert json.loads(stdout)["count"] == 6
    assert len(out.read_text().splitlines()) == 7


def test_config_rejects_unknown_keys(tmp_path, capsys):
    conf = tmp_path / "bad.ini"
    conf.write_text("delta = 0.3\ncolour = red\n")
    code, _, err = _run(capsys, "trees", "--config", str(conf))
    assert code == 2 and "colour" in err


def test_uncertified_run_exits_1(tmp_path, capsys):
    code, _, err = _run(capsys, "simulate", "--delta", "0.05", "--cap", "10", "--replicates", "3")
    assert code == 1 and "uncertified" in err


def test_subcommands_smoke(tmp_path, capsys):
    runs = [
        ["chain", "--delta", "0.2", "--replicates", "20", "--mode", "hitting", "--low", "2.5",
         "--high", "3.8"],
        ["chain", "--delta", "0.1", "--replicates", "20", "--mode", "sigma-star"],
        ["chain", "--delta", "0.1", "--replicates", "5", "--mode", "moments", "--steps", "50"],
        ["simulate", "--delta", "0.3", "--replicates", "10", "--metric", "upsilon"],
        ["degree", "--delta", "0.3", "--replicates", "10"],
        ["trees", "--delta", "0.3", "--replicates", "10", "--decay", "5"],
        ["sweep", "--deltas", "0.25,0.3,0.4", "--replicates", "10", "--metric", "t_tree"],
        ["tail", "--delta", "0.4", "--replicates", "50"],
    ]
    for argv in runs:
        code, out, err = _run(capsys, *argv)
        assert code == 0, (argv, err)
        json.loads(out)


def test_render(tmp_path, capsys):
    out = tmp_path / "pic.svg"
    code, stdout, _ = _run(capsys, "render", "--delta", "0.4", "--seed", "1",
                           "--particles", "30", "--out", str(out))
    assert code == 0 and out.read_text().count("<polyline") == json.loads(stdout)["spines"]


def test_unwritable_output_exits_1(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, err = _run(capsys, "trees", "--delta", "0.3", "--replicates", "2",
                        "--out", str(blocker / "x.csv"))
    assert code == 1 and err.strip()
