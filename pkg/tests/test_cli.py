import hashlib
import json
import subprocess
import sys

import pytest

from covertime.cli import main


def test_cover_happy_path(tmp_path, capsys):
    out = tmp_path / "r"
    assert main(["cover", "--domain", "square", "--n", "3", "--replicas", "20", "--seed", "7", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 7
    echoed = json.loads(capsys.readouterr().out.splitlines()[0])
    assert echoed["config"]["replicas"] == 20


def test_same_invocation_same_hash(tmp_path):
    args = ["cover", "--n", "3", "--replicas", "10", "--seed", "3"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b")])
    h = [hashlib.sha256((tmp_path / d / "records.jsonl").read_bytes()).hexdigest() for d in "ab"]
    assert h[0] == h[1]


def test_missing_n(capsys):
    assert main(["cover", "--replicas", "3"]) == 2
    assert "--n" in capsys.readouterr().err


def test_usage_errors(capsys):
    assert main(["cover", "--n", "3", "--bogus"]) == 2
    assert main(["cover", "--n", "3", "--rate", "7"]) == 2
    assert main(["cover", "--n", "3", "--domain", "blob"]) == 2
    assert "--domain" in capsys.readouterr().err
    assert main(["cover", "--n", "9"]) == 2
    assert main([]) == 2


def test_runtime_error(tmp_path, capsys):
    blocker = tmp_path / "f"
    blocker.write_text("")
    assert main(["race", "--replicas", "10", "--out", str(blocker / "x")]) == 1


def test_polygon_domain(tmp_path, capsys):
    poly = tmp_path / "tri.json"
    poly.write_text(json.dumps([[0, 0], [1, 0], [0, 1]]))
    assert main(["green", "--domain", f"polygon:{poly}", "--n", "2.5", "--out", str(tmp_path / "g")]) == 0
    assert (tmp_path / "g" / "records.jsonl").exists()


@pytest.mark.parametrize("argv", [
    ["gff-sample", "--n", "2", "--replicas", "2", "--u", "0.5"],
    ["extremes", "--n", "2.5", "--replicas", "2", "--rate", "retuned"],
    ["phase-a", "--n", "3.5", "--replicas", "3"],
    ["phase-b-race", "--n", "3.5", "--replicas", "5"],
    ["onedim-laws", "--replicas", "500"],
    ["ballot", "--replicas", "200"],
    ["race", "--replicas", "1000"],
])
def test_subcommands_run(argv, capsys):
    assert main(argv) == 0
    lines = capsys.readouterr().out.splitlines()
    assert json.loads(lines[0])["config"]["command"] == argv[0]
    assert "summary" in json.loads(lines[-1])


def test_gff_csv_output(tmp_path):
    assert main(["gff-sample", "--n", "2", "--replicas", "2", "--format", "csv", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "field_n2_r1.csv").read_text().startswith("x,y,value")


def test_help_lists_flags():
    out = subprocess.run([sys.executable, "-m", "covertime", "cover", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for flag in ("--domain", "--n", "--rate", "--replicas", "--seed", "--out", "--format", "--t", "--u"):
        assert flag in out.stdout
