import subprocess
import sys

import pytest

from centaur_sim import cli
from centaur_sim.config import RunConfig, parse_config_text, resolve
from centaur_sim.errors import InvalidParameterError, MissingPathError, SchemaVersionError
from centaur_sim.evalharness import read_report
from centaur_sim.geometry import load_vocabulary

SMALL = ["--k", "25", "--vocab-seed", "0"]


# -- configuration --------------------------------------------------------------


def test_precedence(tmp_path):
    assert resolve(environ={}).seed == 0
    assert resolve(environ={"CENTAUR_SIM_SEED": "7"}).seed == 7
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("format_version=1\nseed=11\neta=0.5\n")
    assert resolve(cfg_file, environ={"CENTAUR_SIM_SEED": "7"}).seed == 11
    cfg = resolve(cfg_file, {"seed": 3, "eta": None}, environ={"CENTAUR_SIM_SEED": "7"})
    assert cfg.seed == 3 and cfg.eta == 0.5


def test_config_text_round_trip():
    cfg = RunConfig(seed=4, eta=2.5e-4, persistent=False, categories="YLD:2,NONE")
    assert RunConfig(**parse_config_text(cfg.to_text())) == cfg
    assert cfg.category_mix() == {"YLD": 2.0, "NONE": 1.0}
    assert RunConfig().category_mix() is None
    assert RunConfig().threshold_list() == [0.2, 0.5, 0.8, 1.1, 1.4]


def test_config_errors(tmp_path):
    with pytest.raises(SchemaVersionError):
        parse_config_text("seed=1\n")
    with pytest.raises(SchemaVersionError):
        parse_config_text("format_version=2\n")
    with pytest.raises(InvalidParameterError):
        parse_config_text("format_version=1\nbogus=1\n")
    with pytest.raises(InvalidParameterError):
        parse_config_text("format_version=1\nseed=abc\n")
    with pytest.raises(InvalidParameterError):
        RunConfig(frames="1,x").frame_list()
    with pytest.raises(MissingPathError):
        resolve(tmp_path / "absent.cfg", environ={})


# -- command line ----------------------------------------------------------------


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert cli.main(["gen-vocab", "--out", str(root / "vocab.txt"), "--k", "25", "--speed-levels", "5",
                     "--curvature-levels", "5"]) == 0
    assert cli.main(["gen-scenes", "--out", str(root / "scenes.jsonl"), "--n", "10", "--seed", "2",
                     "--clip-length", "5"]) == 0
    assert cli.main(["train", "--out", str(root / "ck.txt"), "--vocab", str(root / "vocab.txt"), "--n", "12",
                     "--epochs", "2"]) == 0
    return root


def common(root):
    return ["--vocab", str(root / "vocab.txt"), "--checkpoint", str(root / "ck.txt"),
            "--scenes", str(root / "scenes.jsonl"), "--M", "10"]


def test_generated_files(workdir):
    assert load_vocabulary(workdir / "vocab.txt").k == 25
    assert (workdir / "ck.txt").read_text().startswith("format_version=1")


def test_eval_writes_reports(workdir, capsys):
    out = workdir / "eval"
    assert cli.main(["eval", "--out", str(out), "--strategy", "ttt", "--eta", "0.01"] + common(workdir)) == 0
    text = capsys.readouterr().out
    assert text.startswith("format_version=1\n") and "strategy=ttt" in text
    for name in ("records.csv", "report.json", "report.md", "categories.md", "categories.png"):
        assert (out / name).stat().st_size > 0
    res = read_report(out / "report.json")
    assert res.n_frames == 10 and res.strategy == "ttt"
    assert read_report(out / "records.csv", "csv") == list(res.records)


def test_eval_is_reproducible_from_printed_config(workdir, capsys, tmp_path):
    args = ["eval", "--out", str(tmp_path / "a"), "--strategy", "fallback"] + common(workdir)
    assert cli.main(args) == 0
    printed = capsys.readouterr().out.split("|")[0]
    cfg_text = "\n".join(line for line in printed.splitlines() if "=" in line and not line.startswith("#"))
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text(cfg_text.replace(f"out={tmp_path / 'a'}", f"out={tmp_path / 'b'}") + "\n")
    assert cli.main(["eval", "--config", str(cfg_file)]) == 0
    assert (tmp_path / "a" / "records.csv").read_text() == (tmp_path / "b" / "records.csv").read_text()


def test_failure_id_and_plot(workdir):
    out = workdir / "fail"
    assert cli.main(["failure-id", "--out", str(out), "--thresholds", "0.2,0.8"] + common(workdir)) == 0
    assert len((out / "failure.csv").read_text().splitlines()) == 3
    assert len((out / "uncertainty.csv").read_text().splitlines()) == 11
    assert (out / "threshold_sweep.png").stat().st_size > 0
    plots = workdir / "plots"
    args = ["plot", "--out", str(plots), "--frames", "0,3", "--vocab", str(workdir / "vocab.txt"),
            "--checkpoint", str(workdir / "ck.txt"), "--scenes", str(workdir / "scenes.jsonl"), "--M", "10"]
    assert cli.main(args) == 0
    assert (plots / "scores_frame00000.png").exists() and (plots / "scores_frame00003.png").exists()


def test_errors_exit_two_with_code(workdir, capsys):
    assert cli.main(["eval", "--bogus", "1"]) == 2
    assert "error code=unknown-flag" in capsys.readouterr().err
    assert cli.main(["eval", "--out", str(workdir / "x")] + SMALL) == 2
    assert "error code=missing-path" in capsys.readouterr().err
    assert cli.main(["eval", "--checkpoint", str(workdir / "ck.txt"), "--strategy", "pray", "--out",
                     str(workdir / "x")] + SMALL) == 2
    assert "error code=invalid-parameter" in capsys.readouterr().err
    assert cli.main(["gen-scenes", "--categories", "XYZ", "--out", str(workdir / "s.jsonl")]) == 2
    assert "error code=unknown-category" in capsys.readouterr().err


def test_console_entry_point_runs(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "centaur_sim.cli", "gen-vocab", "--k", "25", "--speed-levels", "5",
                           "--curvature-levels", "5", "--out", str(tmp_path / "v.txt")],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "# wrote" in proc.stdout
