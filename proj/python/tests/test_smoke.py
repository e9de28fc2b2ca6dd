import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

import ulcerflow as uf

DATA = Path(__file__).resolve().parents[2] / "tests" / "data"
SKIN = (200, 210, 225)
WOUND = (190, 30, 35)


def disc_image(w, h, cx, cy, r):
    yy, xx = np.mgrid[0:h, 0:w]
    inside = (xx + 0.5 - cx) ** 2 + (yy + 0.5 - cy) ** 2 <= r * r
    img = np.empty((h, w, 3), np.uint8)
    img[:] = SKIN
    img[inside] = WOUND
    return img, inside


def test_overlap_matches_numpy():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = rng.random((17, 23)) < 0.4
        b = rng.random((17, 23)) < 0.4
        s = uf.overlap(a, b)
        inter, union = int((a & b).sum()), int((a | b).sum())
        assert s["intersection_px"] == inter
        assert s["union_px"] == union
        assert s["iou"] == inter / union
        assert s["dice"] == pytest.approx(2 * s["iou"] / (1 + s["iou"]))
    empty = np.zeros((4, 4), bool)
    assert uf.overlap(empty, empty)["both_empty"]


def test_letterbox_and_projection():
    lb, t = uf.letterbox(np.zeros((34, 38, 3), np.uint8))
    assert lb.shape == (512, 512, 3)
    assert t.scale == 512 / 38
    assert (t.pad_left, t.pad_top) == (0, 27)

    img, gt = disc_image(120, 90, 60, 45, 20)
    crop, rect = uf.crop_with_margin(img, uf.Box(40, 25, 40, 40), 0.1)
    roi, t = uf.letterbox(crop, rect[0], rect[1])
    prob = uf.fallback_probability(roi)
    assert prob.dtype == np.float32 and prob.shape == (512, 512)
    mask = uf.refine_mask(uf.binarize(prob, 0.5))
    full = uf.project_mask(mask, t, 120, 90)
    assert uf.overlap(full, gt)["iou"] > 0.95


def test_measure_and_grade():
    mask = np.zeros((100, 100), bool)
    mask[10:30, 10:30] = True
    m = uf.measure(mask, 10.0)
    assert m["area_cm2"] == pytest.approx(4.0)
    assert uf.grade_size(4.0, 2.0, 2.0, "designr2020") == "s6"
    assert uf.grade_size(3.99, 2.0, 1.995, "designr2020") == "s3"
    assert uf.grade_size(4.0, 2.0, 2.0, "s1-s5") == "S2"
    report = uf.designr_report(mask, np.zeros((100, 100, 3), np.uint8))
    size = next(e for e in report if e["dimension"] == "S")
    assert size["status"] == "not_computable"
    assert size["note"] == "uncalibrated"


def test_counting_helpers():
    assert uf.success_rate_text([True] * 521 + [False] * 5) == "521 / 526 (99.0%)"
    a = ["x"] * 521
    b = ["x"] * 493 + ["y"] * 28
    assert uf.format_percent(uf.percent_agreement(a, b)) == "94.6"
    mean, sd, n = uf.mean_sd([0.91, 0.95])
    assert mean == pytest.approx(0.93) and sd == pytest.approx(0.0283, abs=1e-4) and n == 2


def test_nms_and_random_roi():
    boxes = [uf.Box(0, 0, 10, 10, 0.9), uf.Box(1, 1, 10, 10, 0.8), uf.Box(50, 50, 5, 5, 0.7)]
    kept = uf.nms(boxes, 0.45)
    assert [b.confidence for b in kept] == [0.9, 0.7]
    b = uf.random_roi_baseline(640, 480, 3)
    assert 0.25 <= b.area / (640 * 480) <= 0.75
    assert uf.random_roi_baseline(640, 480, 3).x == b.x


def test_onnx_model_info():
    info = uf.model_info(DATA / "redness_detector.onnx", "detector")
    assert info["input_size"] == 512
    assert len(info["checksum"]) == 64
    with pytest.raises(uf.BackendError):
        uf.model_info(DATA / "missing.onnx")


def write_dataset(root, n=6):
    (root / "images").mkdir(parents=True)
    (root / "gt").mkdir()
    rows = []
    for i in range(n):
        img, gt = disc_image(160, 120, 80, 60, 15 + 3 * i)
        uf.write_image(img, root / "images" / f"w{i}.png")
        uf.write_mask(gt, root / "gt" / f"w{i}.png")
        rows.append([f"w{i}", f"images/w{i}.png", ["foot", "sacrum"][i % 2], "10", "", f"gt/w{i}.png"])
    with open(root / "manifest.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["image_id", "path", "site", "pixels_per_cm", "ruler_points", "gt_mask_path"])
        w.writerows(rows)
    return root / "manifest.csv"


def test_pipeline_and_evaluation(tmp_path):
    manifest = write_dataset(tmp_path / "data")
    out = tmp_path / "out"
    summary = uf.run_pipeline(manifest, out, {"workers": 2})
    assert summary["success_rate"] == "6 / 6 (100.0%)"
    records = [json.loads(line) for line in (out / "records.jsonl").read_text().splitlines()]
    assert [r["image_id"] for r in records] == [f"w{i}" for i in range(6)]
    r0 = records[0]["measurements"]["area_cm2"]
    assert r0 == pytest.approx(math.pi * 15 ** 2 / 100, rel=0.03)

    report = uf.evaluate(out / "records.jsonl", manifest)
    for site in report["sites"]:
        assert site["iou"]["mean"] > 0.95
    deltas = uf.compare_reports(report, report)
    assert all(d["iou_pp"] == 0 for d in deltas)

    with pytest.raises(uf.ConfigError):
        uf.run_pipeline(manifest, out, {"not_a_key": 1})
