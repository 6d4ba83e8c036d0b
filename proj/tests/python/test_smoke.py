import math
from pathlib import Path

import pytest

import scenediff as sd

DATA = Path(__file__).resolve().parent.parent / "data"


def test_iou_of_identical_and_disjoint_boxes():
    a = sd.Box([0.0, 0.5, 0.0], [1.0, 1.0, 1.0], 0.3)
    b = sd.Box([5.0, 0.5, 0.0], [1.0, 1.0, 1.0])
    assert sd.iou3d(a, a) == pytest.approx(1.0)
    assert sd.iou3d(a, b) == 0.0
    # Half overlap along x: 0.5 / 1.5.
    c = sd.Box([0.5, 0.5, 0.0], [1.0, 1.0, 1.0])
    assert sd.iou3d(sd.Box([0.0, 0.5, 0.0], [1.0, 1.0, 1.0]), c) == pytest.approx(1.0 / 3.0)
    assert len(sd.footprint(a)) == 4
    assert sd.sdf_point_box([0.0, 0.5, 0.0], b) > 0


def test_schedule_endpoints():
    s = sd.schedule(200)
    assert s["beta"][1] == pytest.approx(1e-4)
    assert s["beta"][200] == pytest.approx(0.02)
    prod = 1.0
    for b in s["beta"][1:]:
        prod *= 1.0 - b
    assert s["alpha_bar"][200] == pytest.approx(prod, rel=1e-9)


def test_load_and_render_golden_scene():
    doc = sd.load_scene(str(DATA / "minimal_scene.json"))
    assert doc["version"] == 1
    svg = sd.render(str(DATA / "minimal_scene.json"))
    assert svg == (DATA / "minimal_scene.svg").read_text()


def test_errors_map_to_python_exceptions(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"version": 2}')
    with pytest.raises(sd.SceneDiffError):
        sd.load_scene(str(bad))
    with pytest.raises(sd.ValidationError):
        sd.synth(str(tmp_path / "c"), count=2, room="kitchen")
    with pytest.raises(sd.ConfigError):
        sd.synth(str(tmp_path / "c"), count=2, mask_encoding="png")
    with pytest.raises(sd.SceneDiffError):
        sd.load_scene(str(tmp_path / "missing.json"))


def test_pipeline_end_to_end(tmp_path):
    corpus = tmp_path / "corpus"
    assert sd.synth(str(corpus), count=6, seed=3) == 6
    ckpt = tmp_path / "model.ckpt"
    losses = sd.train(str(corpus), str(ckpt), iterations=20, seed=3)
    assert len(losses) == 20
    assert all(math.isfinite(x) for x in losses)
    out = tmp_path / "generated"
    assert sd.sample(str(ckpt), str(corpus), str(out), steps=10, seed=3, count=3) == 3
    report = sd.evaluate(str(out), str(corpus))
    for key in ("iou_contact", "col_mot", "r_out", "col_obj"):
        assert math.isfinite(report["mean"][key])
    assert len(report["scenes"]) == 3
    again = tmp_path / "again"
    sd.sample(str(ckpt), str(corpus), str(again), steps=10, seed=3, count=3)
    assert sd.evaluate(str(again), str(corpus)) == report


def test_calibration_repairs_displaced_contacts(tmp_path):
    corpus = tmp_path / "corpus"
    sd.synth(str(corpus), count=4, seed=5)
    report = sd.calibrate(str(corpus), str(tmp_path / "cal"), corrupt=0.3, seed=1)
    summary = report["summary"]
    assert summary["records"] == len(report["records"]) > 0
    assert summary["mean_penetration_after"] <= summary["mean_penetration_before"]
    assert summary["success_rate"] > 0.5
    assert (tmp_path / "cal" / "manifest.json").exists()
