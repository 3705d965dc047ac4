import json
import subprocess
import sys
from pathlib import Path

import pytest

from diracshell import __version__
from diracshell.cli import (EXIT_CONFIG, EXIT_OK, EXIT_REFUSAL, ConfigError, RunConfig, build_parser,
                            build_config, main, parse_grid, parse_levels, read_config_file)


def _cfg(*argv):
    return build_config(build_parser().parse_args(["spectrum", *argv]))


def test_parsers():
    assert parse_levels("1-3") == (1, 2, 3)
    assert parse_levels("1,3") == (1, 3)
    assert parse_grid("-0.9:0.9:11") == (-0.9, 0.9, 11)
    with pytest.raises(ConfigError):
        parse_grid("0:1")
    with pytest.raises(ConfigError):
        parse_levels("a-b")


def test_config_file_and_flag_override(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[surface]\nkind = coin\na = 1.0\nh = 0.3\ndelta = 0.2\n"
                   "[physics]\neta = 3.0\n[scan]\nlevels = 1-2\ngrid = -0.5:0.5:5\n"
                   "[run]\nseed = 7\n")
    cfg = _cfg("--config", str(ini), "--eta", "0.5")
    assert cfg.surface == "coin" and cfg.eta == 0.5 and cfg.levels == (1, 2) and cfg.seed == 7
    assert cfg.grid == (-0.5, 0.5, 5)


@pytest.mark.parametrize("text,field", [
    ("[physics]\nm = -1\n", "m:"),
    ("[scan]\nlevels = 3,1\n", "levels:"),
    ("[scan]\ngrid = -1.5:0.5:5\n", "grid:"),
    ("[surface]\nkind = torus\n", "surface:"),
    ("[nope]\nx = 1\n", "unknown section"),
    ("[physics]\nfoo = 1\n", "unknown key"),
    ("[threshold]\ncalibrate = false\n", "tau:"),
])
def test_field_level_errors(tmp_path, text, field):
    ini = tmp_path / "bad.ini"
    ini.write_text(text)
    with pytest.raises(ConfigError, match=field):
        _cfg("--config", str(ini))


def test_eta_and_sign_exclusive(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[physics]\neta = 1.0\nsign = 1\n")
    with pytest.raises(ConfigError, match="mutually exclusive"):
        _cfg("--config", str(ini))
    # a flag replaces the file's choice
    assert _cfg("--config", str(ini), "--sign", "-1").eta is None


def test_hash_ignores_output_dir_only():
    a, b = RunConfig().validate(), RunConfig(out="elsewhere").validate()
    assert a.hash() == b.hash()
    assert RunConfig(seed=1).hash() != a.hash()
    assert len(a.hash()) == 64


def test_eta_zero_exit_code(tmp_path, capsys):
    assert main(["spectrum", "--eta", "0", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "free operator" in capsys.readouterr().err


def test_unknown_suite(tmp_path):
    assert main(["verify", "nonsense", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_verify_algebra_writes_stamped_report(tmp_path):
    assert main(["verify", "algebra", "--out", str(tmp_path)]) == EXIT_OK
    (run,) = tmp_path.iterdir()
    rep = json.loads((run / "report.json").read_text())
    assert rep["passed"] and rep["version"] == __version__
    assert run.name == "verify-algebra-" + rep["config_hash"][:12]
    assert "runtime_s" not in rep


def test_every_file_carries_hash_and_schema(tmp_path):
    rc = main(["spectrum", "--eta", "1", "--levels", "1", "--grid=-0.95:0.95:31", "--out", str(tmp_path)])
    assert rc == EXIT_OK
    (run,) = tmp_path.iterdir()
    h = json.loads((run / "config.json").read_text())["config_hash"]
    schema = json.loads((run / "schema.json").read_text())
    files = {p.name for p in run.iterdir()}
    assert {"scan.csv", "roots.csv", "eigenvalues.json", "oracle.json", "oracle_comparison.csv",
            "config.json", "schema.json"} <= files
    for p in run.iterdir():
        text = p.read_text()
        assert h in text and (__version__ in text)
        if p.suffix == ".csv":
            header = text.split("\n")[1].split(",")
            assert header == [c["name"] for c in schema["files"][p.name]["columns"]]
    comp = (run / "oracle_comparison.csv").read_text().strip().split("\n")
    assert comp[2].split(",")[-1] == "1"


def test_zero_rhs_gives_zero_field(tmp_path):
    ini = tmp_path / "z.ini"
    ini.write_text("[resolvent]\nzeta = 0,0,0,0\n[scan]\nlevels = 1\n")
    assert main(["resolvent", "--config", str(ini), "--eta", "1", "--out", str(tmp_path)]) == EXIT_OK
    (run,) = [p for p in tmp_path.iterdir() if p.is_dir()]
    rows = (run / "field.csv").read_text().strip().split("\n")[2:]
    assert rows and all(float(r.split(",")[-1]) == 0 and float(r.split(",")[-2]) == 0 for r in rows)


def test_refusal_exit_code(tmp_path):
    rc = main(["resolvent", "--eta", "2", "--lambda", "0.3", "--levels", "1", "--out", str(tmp_path)])
    assert rc == EXIT_REFUSAL


def test_resolvent_residual_columns(tmp_path):
    assert main(["resolvent", "--eta", "1", "--levels", "1,2", "--out", str(tmp_path)]) == EXIT_OK
    (run,) = tmp_path.iterdir()
    lines = (run / "residuals.csv").read_text().strip().split("\n")
    assert "jump_residual" in lines[1] and "pde_residual" in lines[1]


def test_mesh_info_and_critical(tmp_path):
    assert main(["mesh-info", "--surface", "coin", "--levels", "1", "--out", str(tmp_path)]) == EXIT_OK
    assert main(["critical", "--surface", "coin", "--levels", "1", "--out", str(tmp_path)]) == EXIT_OK
    crit = next(p for p in tmp_path.iterdir() if p.name.startswith("critical"))
    counts = (crit / "near_kernel.csv").read_text().strip().split("\n")[2:]
    assert len(counts) == 2


def test_console_script_entry(tmp_path):
    out = subprocess.run([sys.executable, "-m", "diracshell.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout
