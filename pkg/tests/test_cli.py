import json
import subprocess
import sys

import pytest

from alphamix.cli import EXIT_CONFIG, EXIT_OK, main

CONFIG = 'target = "ewgmm"\nd = 1\nJ = 3\nM = 40\nN = 5\ntrials = 2\nalpha = 0.2\ngamma = 0.5\neta = 0.5\n'


@pytest.fixture
def config_file(tmp_path):
    p = tmp_path / "exp.toml"
    p.write_text(CONFIG)
    return p


def test_targets_list(capsys):
    assert main(["targets", "list"]) == EXIT_OK
    names = [line.split("\t")[0] for line in capsys.readouterr().out.splitlines()]
    assert names == ["ewgmm", "imbalanced_gmm", "ewsmm"]


def test_run_and_eval(config_file, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", str(config_file), "--out", str(out), "--seed", "18446744073709551615",
                 "--trials", "3", "--set", "gamma=0.1"]) == EXIT_OK
    summary = (out / "summary.csv").read_text().splitlines()
    fields = dict(zip(summary[0].split(","), summary[1].split(",")))
    assert fields["trials"] == "3" and fields["seed"] == "18446744073709551615" and fields["gamma"] == "0.1"
    capsys.readouterr()
    assert main(["eval", str(out)]) == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert result["trials"] == 3


def test_sweep(config_file, tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", str(config_file), "--out", str(out), "--eta", "0", "0.5", "--J", "2", "3"]) == EXIT_OK
    assert len((out / "index.csv").read_text().splitlines()) == 5


@pytest.mark.parametrize("argv", [
    ["run", "{cfg}", "--out", "{out}", "--set", "J=0"],
    ["run", "{cfg}", "--out", "{out}", "--set", "nonsense=1"],
    ["run", "{cfg}", "--out", "{out}", "--set", "novalue"],
    ["run", "{missing}", "--out", "{out}"],
    ["eval", "{missing}"],
])
def test_config_errors_exit_2(config_file, tmp_path, argv):
    fill = dict(cfg=str(config_file), out=str(tmp_path / "o"), missing=str(tmp_path / "missing.toml"))
    assert main([a.format(**fill) for a in argv]) == EXIT_CONFIG


def test_module_entry_point(config_file, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "alphamix", "run", str(config_file), "--out",
                           str(tmp_path / "m"), "--set", "alpha=1.0"], capture_output=True, text=True)
    assert proc.returncode == EXIT_CONFIG
    assert "alpha" in proc.stderr
