import json

import numpy as np
import pytest

from spectrapan.grid import Field, read_field, read_panoptic_png, write_field
from spectrapan.run import EXIT_INVALID, EXIT_IO, EXIT_OK, run


def _status(capsys) -> dict:
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])


@pytest.fixture
def scene(tmp_path, capsys):
    out = tmp_path / "scene"
    assert run(["synth", "--kind", "roundtrip", "--seed", "4", "--out-dir", str(out)]) == EXIT_OK
    status = _status(capsys)
    assert status["status"] == "ok" and status["instances"] >= 1
    return out


def test_synth_writes_artifacts_with_sidecars(scene):
    for name in ("instances.png", "semantics.png", "panoptic.png", "panoptic.json", "categories.json", "scene.json"):
        assert (scene / name).exists()
        meta = json.loads((scene / f"{name}.meta.json").read_text())
        assert meta["artifact"] == name and "numpy" in meta["versions"]


def test_encode_decode_roundtrip(scene, tmp_path, capsys):
    field = tmp_path / "targets.field"
    assert run(["encode", "--instances", str(scene / "instances.png"), "-o", str(field)]) == EXIT_OK
    assert _status(capsys)["channels"] == 16
    assert read_field(field.read_bytes()).shape[0] == 16

    cells = tmp_path / "cells.png"
    assert run(["decode", "--pred", str(field), "--cluster", "-o", str(cells)]) == EXIT_OK
    status = _status(capsys)
    truth = read_panoptic_png((scene / "instances.png").read_bytes())
    decoded = read_panoptic_png(cells.read_bytes())
    assert status["labels"] == len(truth.labels())
    assert np.array_equal(decoded.ids == 0, truth.ids == 0)


def test_encode_modes(scene, tmp_path, capsys):
    for mode, channels in (("direct", 3), ("uv", 2)):
        out = tmp_path / f"{mode}.field"
        assert run(["encode", "--mode", mode, "--instances", str(scene / "instances.png"), "-o", str(out)]) == EXIT_OK
        assert _status(capsys)["channels"] == channels


def test_eds_weights(scene, tmp_path, capsys):
    out = tmp_path / "weights.field"
    args = ["eds", "--instances", str(scene / "instances.png"), "--semantics", str(scene / "semantics.png")]
    assert run(args + ["--D", "3", "--w-min", "0.1", "-o", str(out)]) == EXIT_OK
    status = _status(capsys)
    w = read_field(out.read_bytes()).values
    assert status["boundary_pixels"] > 0
    assert w.min() >= 0.1 - 1e-6 and w.max() <= 1.0


def test_eval_pq_self(scene, tmp_path, capsys):
    png, seg = str(scene / "panoptic.png"), str(scene / "panoptic.json")
    report = tmp_path / "pq.csv"
    argv = ["eval-pq", "--pred", png, "--truth", png, "--pred-segments", seg, "--truth-segments", seg]
    assert run(argv + ["--format", "csv", "-o", str(report)]) == EXIT_OK
    status = _status(capsys)
    assert status["pq"] == pytest.approx(1.0)
    bins = status["iou_by_size"]["bins"]
    # one stuff background segment, the rest are things
    assert sum(b["count"] for b in bins) == status["tp"] - 1
    assert all(b["mean_iou"] == pytest.approx(1.0) for b in bins if b["count"])
    assert report.read_text().splitlines()[0].startswith("category_id,")

    md = tmp_path / "pq.md"
    assert run(argv + ["--format", "md", "-o", str(md)]) == EXIT_OK
    _status(capsys)
    assert md.read_text().startswith("## Panoptic Quality")


def test_fuse(tmp_path, capsys):
    sem = np.zeros((4, 2, 2))
    sem[1] = 5.0
    (tmp_path / "sem.field").write_bytes(write_field(Field(sem)))
    (tmp_path / "inst.field").write_bytes(write_field(Field(np.zeros((16, 2, 2)))))
    (tmp_path / "cats.json").write_text('[{"id": 1, "isthing": 0}, {"id": 2, "isthing": 1}]')
    out = tmp_path / "fused.png"
    argv = ["fuse", "--semantic", str(tmp_path / "sem.field"), "--instance", str(tmp_path / "inst.field")]
    assert run(argv + ["--categories", str(tmp_path / "cats.json"), "-o", str(out)]) == EXIT_OK
    assert _status(capsys)["n_segments"] == 1
    assert (tmp_path / "fused.json").exists()


def test_loss_with_gradient_check(tmp_path, capsys):
    pred = Field(np.random.default_rng(0).normal(size=(8, 3, 3)))
    (tmp_path / "pred.field").write_bytes(write_field(pred))
    grad = tmp_path / "grad.field"
    argv = ["loss", "--kind", "tv", "--tv-norm", "pe", "--pred", str(tmp_path / "pred.field"), "--check-grad"]
    assert run(argv + ["-o", str(grad)]) == EXIT_OK
    status = _status(capsys)
    assert status["value"] > 0
    assert status["gradcheck"]["rel_error"] < 1e-6
    assert read_field(grad.read_bytes()).shape == (8, 3, 3)


def test_panoptic_loss_uses_configured_weights(scene, tmp_path, capsys):
    sem = tmp_path / "sem.field"
    sem.write_bytes(write_field(Field(np.zeros((4, 64, 64)))))
    inst = tmp_path / "inst.field"
    inst.write_bytes(write_field(Field(np.zeros((16, 64, 64)))))
    grad = tmp_path / "grad.field"
    argv = ["loss", "--kind", "panoptic", "--pred", str(inst), "--semantic", str(sem),
            "--labels", str(scene / "semantics.png"), "--instances", str(scene / "instances.png")]
    assert run(argv + ["--set", "loss.weights.dice=0", "-o", str(grad)]) == EXIT_OK
    status = _status(capsys)
    parts = status["components"]
    assert set(parts) == {"sem", "sem_tv", "inst", "inst_tv", "dice"}
    assert parts["sem"] == pytest.approx(np.log(4))
    assert status["value"] == pytest.approx(sum(v for k, v in parts.items() if k != "dice"))
    assert read_field(grad.read_bytes()).shape == (16, 64, 64)


def test_loss_needs_its_inputs(tmp_path, capsys):
    (tmp_path / "pred.field").write_bytes(write_field(Field(np.zeros((1, 2, 2)))))
    assert run(["loss", "--kind", "silog", "--pred", str(tmp_path / "pred.field")]) == EXIT_INVALID
    assert _status(capsys)["status"] == "error"


def test_lab_commands(capsys):
    assert run(["lab-contrast"]) == EXIT_OK
    status = _status(capsys)
    assert status["direct"] == 79.0 and status["pe"] < status["direct"]
    assert run(["lab-circles", "--R", "160", "--D", "20"]) == EXIT_OK
    assert 1.8 < _status(capsys)["ratio"] < 2.4


def test_lab_contrast_series(tmp_path, capsys):
    out = tmp_path / "contrast.csv"
    assert run(["lab-contrast", "--format", "csv", "-o", str(out)]) == EXIT_OK
    assert _status(capsys)["output"] == str(out)
    lines = out.read_text().splitlines()
    assert lines[0].split(",") == ["L", "points", "direct", "pe"]
    assert len(lines) == 1 + 4
    assert (tmp_path / "contrast.csv.meta.json").exists()


def test_lab_circles_series(tmp_path, capsys):
    out = tmp_path / "circles.json"
    assert run(["lab-circles", "--R", "40", "--D", "5", "-o", str(out)]) == EXIT_OK
    _status(capsys)
    series = json.loads(out.read_text())["series"]
    assert [r["D"] for r in series[:4]] == [1.25, 2.5, 5.0, 10.0]
    assert [r["w_min"] for r in series[4:]] == [0.0, 0.25, 0.5, 0.75, 1.0]
    # more weight far from boundaries moves the ratio toward the area ratio
    ratios = [r["ratio"] for r in series[4:]]
    assert ratios == sorted(ratios)
    assert series[-1]["ratio"] == pytest.approx(series[-1]["area_ratio"])


def test_help_and_version_keep_one_status_line(capsys):
    assert run(["--version"]) == EXIT_OK
    status = _status(capsys)
    assert status["status"] == "ok" and status["command"] is None
    for name in ("encode", "decode", "eds", "loss", "fuse", "eval-pq", "synth", "lab-contrast", "lab-circles",
                 "lab-train", "lab-loss-scale"):
        assert run([name, "--help"]) == EXIT_OK
        captured = capsys.readouterr()
        assert json.loads(captured.out)["command"] == name
        assert f"usage: spectrapan {name}" in captured.err


def test_lab_loss_scale_report(tmp_path, capsys):
    out = tmp_path / "scale.json"
    assert run(["lab-loss-scale", "-o", str(out)]) == EXIT_OK
    assert len(_status(capsys)["scenes"]) == 4
    assert len(json.loads(out.read_text())) == 4


def test_invalid_parameter_fails_before_io(tmp_path, capsys):
    out = tmp_path / "w.field"
    argv = ["eds", "--instances", str(tmp_path / "missing.png"), "--D", "-1", "-o", str(out)]
    assert run(argv) == EXIT_INVALID
    assert _status(capsys)["error"] == "RangeError"
    assert not out.exists()


def test_missing_input_is_io_error(tmp_path, capsys):
    assert run(["encode", "--instances", str(tmp_path / "missing.png"), "-o", str(tmp_path / "x")]) == EXIT_IO
    assert _status(capsys)["exit_code"] == EXIT_IO


def test_malformed_input_is_io_error(tmp_path, capsys):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"garbage")
    assert run(["encode", "--instances", str(bad), "-o", str(tmp_path / "x")]) == EXIT_IO
    assert _status(capsys)["error"] == "FormatError"


def test_usage_errors(capsys):
    assert run(["no-such-command"]) == EXIT_INVALID
    _status(capsys)
    assert run(["lab-contrast", "--set", "nope.key=1"]) == EXIT_INVALID
    _status(capsys)
    assert run(["decode", "--pred", "x", "--grid", "80", "-o", "y"]) == EXIT_INVALID
    _status(capsys)


def test_repeated_runs_are_byte_identical(scene, tmp_path, capsys):
    outputs = []
    for name in ("a.field", "b.field"):
        out = tmp_path / name
        assert run(["encode", "--instances", str(scene / "instances.png"), "--L", "3", "-o", str(out)]) == EXIT_OK
        _status(capsys)
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]
    again = tmp_path / "again"
    assert run(["synth", "--kind", "roundtrip", "--seed", "4", "--out-dir", str(again)]) == EXIT_OK
    _status(capsys)
    for name in ("instances.png", "panoptic.json", "scene.json"):
        assert (again / name).read_bytes() == (scene / name).read_bytes()
