import io
import json
import random

import pytest
from PIL import Image

from sarscout.cli import main
from sarscout.dataset import load_yolo_annotations
from sarscout.detector import parse_detections_jsonl, write_detections_jsonl

from .instances import random_instance
from .oracles import evaluate_oracle


def run(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestDetect:
    def test_prints_detection_set(self, fixture_image_path, detections_path, capsys):
        code, out, _ = run(
            ["detect", str(fixture_image_path), "--dets", str(detections_path)], capsys
        )
        assert code == 0
        doc = json.loads(out)
        assert doc["image_id"] == "s1"
        assert len(doc["boxes"]) == 2

    def test_writes_jsonl(self, tmp_path, fixture_image_path, detections_path, capsys):
        out_path = tmp_path / "out.jsonl"
        code, _, _ = run(
            ["detect", str(fixture_image_path), "--dets", str(detections_path),
             "--out", str(out_path)],
            capsys,
        )
        assert code == 0
        assert len(parse_detections_jsonl(out_path)["s1"]) == 2

    def test_unreadable_path_exits_2(self, detections_path, capsys):
        code, _, err = run(["detect", "/nope/missing.png", "--dets", str(detections_path)], capsys)
        assert code == 2
        assert "error" in err

    def test_missing_dets_is_usage_error(self, fixture_image_path, capsys):
        code, _, _ = run(["detect", str(fixture_image_path)], capsys)
        assert code == 1

    def test_json_errors_flag(self, detections_path, capsys):
        code, _, err = run(
            ["--json-errors", "detect", "/nope/missing.png", "--dets", str(detections_path)],
            capsys,
        )
        assert code == 2
        doc = json.loads(err)
        assert doc["error"]["type"] == "InputError"


class TestChat:
    def test_replays_scripted_dialogue_from_turn_zero(
        self, fixture_image_path, detections_path, tmp_path, capsys, monkeypatch
    ):
        script = tmp_path / "script.json"
        script.write_text(
            json.dumps(
                [
                    {"match": "Describe", "answer": "Two ships visible."},
                    {"match": None, "answer": "Acknowledged."},
                ]
            )
        )
        monkeypatch.setattr(
            "sys.stdin", io.StringIO("What types of ships are these?\nexit\n")
        )
        code, out, _ = run(
            ["chat", str(fixture_image_path), "--dets", str(detections_path),
             "--script", str(script)],
            capsys,
        )
        assert code == 0
        lines = [line for line in out.splitlines() if line.startswith("turn ")]
        assert lines[0] == "turn 0"
        assert lines == ["turn 0", "turn 1"]
        assert "model: Two ships visible." in out

    def test_store_persists_transcript(
        self, fixture_image_path, detections_path, tmp_path, capsys, monkeypatch
    ):
        script = tmp_path / "script.json"
        script.write_text(json.dumps([{"match": None, "answer": "ok"}]))
        store = tmp_path / "sessions"
        monkeypatch.setattr("sys.stdin", io.StringIO(""))
        code, _, _ = run(
            ["chat", str(fixture_image_path), "--dets", str(detections_path),
             "--script", str(script), "--store", str(store)],
            capsys,
        )
        assert code == 0
        assert len(list(store.glob("*.json"))) == 1


@pytest.fixture
def eval_fixture(tmp_path):
    """Small randomized instance materialized as YOLO labels + dets JSONL."""
    rng = random.Random(99)
    dets, gts = random_instance(rng, max_images=4, max_boxes=4)
    label_dir = tmp_path / "labels"
    label_dir.mkdir()
    dims_lines = ["image_id,width,height"]
    for image_id, gt in gts.items():
        dims_lines.append(f"{image_id},{gt.image_w},{gt.image_h}")
        lines = []
        for b in gt.boxes:
            cx = (b.x1 + b.x2) / 2 / gt.image_w
            cy = (b.y1 + b.y2) / 2 / gt.image_h
            w = (b.x2 - b.x1) / gt.image_w
            h = (b.y2 - b.y1) / gt.image_h
            lines.append(f"0 {cx!r} {cy!r} {w!r} {h!r}")
        (label_dir / f"{image_id}.txt").write_text("\n".join(lines) + ("\n" if lines else ""))
    dims_path = tmp_path / "dims.csv"
    dims_path.write_text("\n".join(dims_lines) + "\n")
    dets_path = tmp_path / "dets.jsonl"
    write_detections_jsonl(dets_path, list(dets.values()))
    return dets_path, label_dir, dims_path


class TestEval:
    def test_json_output_matches_oracle(self, eval_fixture, capsys):
        dets_path, label_dir, dims_path = eval_fixture
        code, out, _ = run(
            ["eval", "--dets", str(dets_path), "--gt", str(label_dir),
             "--dims", str(dims_path), "--format", "json"],
            capsys,
        )
        assert code == 0
        report = json.loads(out)

        # Recompute with the independent oracle over the same loaded inputs.
        from sarscout.dataset import load_dims_index

        gts = load_yolo_annotations(label_dir, load_dims_index(dims_path))
        grouped = parse_detections_jsonl(dets_path)
        det_boxes = {
            image_id: sorted(
                (b.clamped(gts[image_id].image_w, gts[image_id].image_h) for b in boxes),
                key=lambda b: -b.confidence,
            )
            for image_id, boxes in grouped.items()
        }
        expected = evaluate_oracle(det_boxes, {k: list(v.boxes) for k, v in gts.items()})
        assert report["map50"] == pytest.approx(expected["map50"], abs=1e-9)
        assert report["map5095"] == pytest.approx(expected["map5095"], abs=1e-9)

    def test_table_output(self, eval_fixture, capsys):
        dets_path, label_dir, dims_path = eval_fixture
        code, out, _ = run(
            ["eval", "--dets", str(dets_path), "--gt", str(label_dir),
             "--dims", str(dims_path), "--dataset-name", "demo"],
            capsys,
        )
        assert code == 0
        assert "demo mAP.50(%)" in out

    def test_dir_gt_requires_dims(self, eval_fixture, capsys):
        dets_path, label_dir, _ = eval_fixture
        code, _, _ = run(["eval", "--dets", str(dets_path), "--gt", str(label_dir)], capsys)
        assert code == 1

    def test_coco_gt_file(self, tmp_path, capsys):
        coco = {
            "images": [{"id": 1, "width": 100, "height": 100, "file_name": "a.png"}],
            "annotations": [{"id": 1, "image_id": 1, "bbox": [10, 10, 30, 30]}],
        }
        gt_path = tmp_path / "gt.json"
        gt_path.write_text(json.dumps(coco))
        dets_path = tmp_path / "dets.jsonl"
        dets_path.write_text('{"image_id":"a","x1":10,"y1":10,"x2":40,"y2":40,"conf":0.9}\n')
        code, out, _ = run(
            ["eval", "--dets", str(dets_path), "--gt", str(gt_path), "--format", "json"],
            capsys,
        )
        assert code == 0
        assert json.loads(out)["map50"] == 1.0


class TestOverlay:
    def test_writes_png(self, tmp_path, fixture_image_path, detections_path, capsys):
        out_path = tmp_path / "overlay.png"
        answer = tmp_path / "answer.txt"
        answer.write_text("traffic around x: 100-180, y: 120-200")
        code, out, _ = run(
            ["overlay", str(fixture_image_path), "--dets", str(detections_path),
             "--answer", str(answer), "--out", str(out_path)],
            capsys,
        )
        assert code == 0
        img = Image.open(out_path)
        assert img.size == (500, 375)
        assert "2 boxes, 1 regions" in out


class TestServe:
    def test_bad_config_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("max_sessions = 0\n")
        code, _, err = run(["serve", "--config", str(bad)], capsys)
        assert code == 2
        assert "error" in err
