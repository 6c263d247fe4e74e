import shutil
import subprocess
import sys

import pytest

from febe import cli
from febe.study import CSV_COLUMNS, read_csv


def test_solve_writes_csv(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code = cli.main(["solve", "--example", "2", "--levels", "2", "--mode", "uniform", "--out", str(out)])
    assert code == 0
    rows = read_csv(out)
    assert [r["dof"] for r in rows] == [21, 65]
    assert capsys.readouterr().out.splitlines()[0] == ",".join(CSV_COLUMNS)


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# study settings\nexample = 1\nlevels = 3\nmode = uniform  # inline comment\ng = 0.5\n")
    args = cli.build_parser().parse_args(["solve", "--config", str(cfg), "--levels", "2"])
    settings = cli.resolve_settings(args)
    assert settings["example"] == 1
    assert settings["levels"] == 2
    assert settings["g"] == 0.5
    assert settings["uzawa_rho"] == 25.0


@pytest.mark.parametrize("text", ["colour = red\n", "levels = many\n"])
def test_bad_config_rejected(tmp_path, text):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    with pytest.raises(SystemExit):
        cli.main(["solve", "--config", str(cfg)])


def test_missing_config_rejected(tmp_path):
    with pytest.raises(SystemExit):
        cli.main(["solve", "--config", str(tmp_path / "nope.cfg")])


def test_solver_failure_exit_code_and_partial_csv(tmp_path, capsys):
    out = tmp_path / "r.csv"
    cfg = tmp_path / "c.cfg"
    cfg.write_text("newton_max = 10\nline_search = never\n")
    code = cli.main(["solve", "--example", "1", "--levels", "4", "--config", str(cfg), "--out", str(out)])
    assert code != 0
    assert "level 2" in capsys.readouterr().err
    assert len(read_csv(out)) == 2


def test_invalid_levels(capsys):
    assert cli.main(["solve", "--levels", "0"]) != 0


def test_dump_meshes(tmp_path):
    code = cli.main(["solve", "--example", "2", "--levels", "2", "--mode", "adaptive",
                     "--mark-fraction", "0.2", "--dump-meshes", str(tmp_path / "m")])
    assert code == 0
    assert (tmp_path / "m" / "mesh_01.txt").exists()
    assert (tmp_path / "m" / "indicators_01.csv").exists()


def test_argument_validation():
    with pytest.raises(SystemExit):
        cli.main(["solve", "--example", "3"])
    with pytest.raises(SystemExit):
        cli.main(["solve", "--mode", "random"])


def test_console_script(tmp_path):
    exe = shutil.which("febe")
    cmd = [exe] if exe else [sys.executable, "-m", "febe.cli"]
    res = subprocess.run(cmd + ["solve", "--example", "1", "--levels", "1", "--uzawa-rho", "25",
                                "--p", "3", "--epsilon", "1e-5"], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert res.stdout.splitlines()[1].startswith("28,")
