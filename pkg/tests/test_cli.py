import json
import shutil
import subprocess
import sys

import pytest

from axilab.cli import main

SMALL = """\
[run]
solver = "gamma"
name = "small"
t_end = 0.1
snapshot_every = 0.00125

[grid]
nr = 16
nz = 16
r_max = 1.0
z_len = 1.0

[initial]
kind = "r2"
amplitude = 1.0
"""


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "small.toml"
    cfg.write_text(SMALL)
    out = root / "run"
    assert main(["run", str(cfg), "--out", str(out), "--reproducible"]) == 0
    return out


def test_run_writes_artifacts(small_run):
    manifest = json.loads((small_run / "manifest.json").read_text())
    assert manifest["started"] is None and manifest["finished"] is None
    assert "steps.csv" in manifest["files"] and "diagnostics.json" in manifest["files"]
    assert len(list((small_run / "snapshots").glob("snap_*.axns"))) == 81
    header = (small_run / "steps.csv").read_text().splitlines()[0]
    assert header.startswith("t,sup_gamma,inf_gamma")


def test_verify_passes(small_run, capsys):
    assert main(["verify", str(small_run)]) == 0
    rep = json.loads((small_run / "verifier.json").read_text())
    assert rep["all_pass"] and {e["name"] for e in rep["entries"]} >= {"max_principle_sup", "mean_value"}
    assert "max_principle_sup" in capsys.readouterr().out


@pytest.mark.parametrize("fmt, name", [("csv", "norms.csv"), ("json", "report.json"), ("svg", "oscillation.svg")])
def test_report_formats(small_run, fmt, name):
    assert main(["report", str(small_run), "--format", fmt, "--reproducible"]) == 0
    assert (small_run / name).stat().st_size > 0


def test_report_alpha_for_r_squared(small_run):
    main(["report", str(small_run), "--format", "json"])
    rep = json.loads((small_run / "report.json").read_text())
    assert rep["diagnostics"]["alpha"] == pytest.approx(2.0, abs=0.1)


def test_svg_is_reproducible(small_run):
    main(["report", str(small_run), "--format", "svg", "--reproducible"])
    first = (small_run / "oscillation.svg").read_bytes()
    main(["report", str(small_run), "--format", "svg", "--reproducible"])
    assert (small_run / "oscillation.svg").read_bytes() == first
    assert b"<dc:date>" not in first


def test_bad_format_exits_2(small_run):
    with pytest.raises(SystemExit) as info:
        main(["report", str(small_run), "--format", "xml"])
    assert info.value.code == 2


def test_malformed_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text(SMALL.replace("nr = 16", "nr = 2"))
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "bad.toml:8:" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "absent.toml")]) == 2


def test_missing_artifacts_exit_3(small_run, tmp_path):
    broken = tmp_path / "broken"
    shutil.copytree(small_run, broken)
    shutil.rmtree(broken / "snapshots")
    assert main(["verify", str(broken)]) == 3
    assert main(["verify", str(tmp_path / "nothing")]) == 3
    assert main(["report", str(tmp_path / "nothing")]) == 3


def test_console_script_help():
    exe = shutil.which("axilab")
    cmd = [exe] if exe else [sys.executable, "-m", "axilab.cli"]
    res = subprocess.run(cmd + ["--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "verify" in res.stdout
