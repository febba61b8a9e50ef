import json
import subprocess
import sys

import pytest

from virtglove.cli import main


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "ds"), "--per-label", "2", "--seed", "4"]) == 0
    return root


def test_synth_writes_manifest(data):
    doc = json.loads((data / "ds" / "manifest.json").read_text())
    assert len(doc["records"]) == 10 and doc["seed"] == 4


def test_frame_dumps(data, capsys):
    frames = data / "ds" / "frames"
    c, d, k = frames / "000000_color.ppm", frames / "000000_depth.pgm", frames / "000000_kps.json"
    assert main(["segment", "--color", str(c), "--depth", str(d), "--out", str(data / "m.pgm")]) == 0
    assert main(["dt", "--color", str(c), "--depth", str(d), "--out", str(data / "dt.pgm"), "--metric", "chessboard"]) == 0
    assert main(["glove", "--color", str(c), "--depth", str(d), "--keypoints", str(k), "--out", str(data / "g.ppm")]) == 0
    out = capsys.readouterr().out
    assert "hand pixels" in out and "palm (" in out and "glove drawn" in out
    assert (data / "g.ppm").read_bytes().startswith(b"P6\n640 480\n255\n")


def test_train_eval_run(data, capsys):
    m = data / "ds" / "manifest.json"
    model = data / "model.glvc"
    assert main(["train", "--manifest", str(m), "--out", str(model), "--epochs", "1"]) == 0
    assert main(["eval", "--manifest", str(m), "--model", str(model), "--split", "all",
                 "--json", str(data / "eval.json")]) == 0
    assert json.loads((data / "eval.json").read_text())["overall"]["attempted"] == 10
    assert main(["run", "--model", str(model), "--synthetic", "3"]) == 0
    out = capsys.readouterr().out
    assert "Accuracy" in out and "Confusion matrix" in out


def test_bench_json(data):
    path = data / "bench.json"
    assert main(["bench", "--frames", "30", "--warmup", "1", "--size", "320x240", "--json", str(path)]) == 0
    rep = json.loads(path.read_text())
    assert rep["budget_ms"] == 135 and "within_reaction" in rep


def test_global_flags_after_subcommand(data):
    frames = data / "ds" / "frames"
    args = ["segment", "--color", str(frames / "000000_color.ppm"), "--depth", str(frames / "000000_depth.pgm"),
            "--out", str(data / "m2.pgm")]
    assert main(["--threshold-mm", "450"] + args) == 0
    assert main(args + ["--threshold-mm", "450"]) == 0


@pytest.mark.parametrize("argv,code", [
    (["bogus"], 1),
    ([], 1),
    (["train", "--out", "x"], 1),
    (["synth", "--out", "/tmp/x", "--split", "0.5,0.5"], 1),
    (["eval", "--manifest", "/nonexistent/manifest.json", "--model", "/nonexistent/m"], 2),
])
def test_exit_codes(argv, code):
    assert main(argv) == code


def test_corrupt_frame_is_data_error(data, tmp_path):
    bad = tmp_path / "bad.ppm"
    bad.write_bytes(b"P6\n2 2\n255\n\x00")
    assert main(["segment", "--color", str(bad), "--depth", str(data / "ds" / "frames" / "000000_depth.pgm"),
                 "--out", str(tmp_path / "o.pgm")]) == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "virtglove", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "bench" in r.stdout
