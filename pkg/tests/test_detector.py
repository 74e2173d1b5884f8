import io
import json

import numpy as np
import pytest
from PIL import Image

from sarscout.detector import (
    DetectionSet,
    FileBackend,
    OnnxBackend,
    SidecarConfig,
    StubBackend,
    decode_head,
    load_detections_file,
    parse_detections_jsonl,
    write_detections_jsonl,
)
from sarscout.errors import (
    BackendError,
    DecodeError,
    InputError,
    NotFoundError,
    ParseError,
)
from sarscout.geometry import PixelBox


def png_bytes(w, h, value=0):
    buf = io.BytesIO()
    Image.new("L", (w, h), value).save(buf, format="PNG")
    return buf.getvalue()


@pytest.fixture
def fixture_image(tmp_path):
    path = tmp_path / "s1.png"
    path.write_bytes(png_bytes(500, 375))
    return path


@pytest.fixture
def detections_file(tmp_path):
    path = tmp_path / "dets.jsonl"
    path.write_text(
        '{"image_id":"s1","x1":10,"y1":20,"x2":50,"y2":60,"conf":0.97}\n'
        '{"image_id":"s1","x1":100,"y1":120,"x2":180,"y2":200,"conf":0.62}\n'
        '{"image_id":"other","x1":0,"y1":0,"x2":5,"y2":5,"conf":0.5}\n',
        encoding="utf-8",
    )
    return path


class TestDetectionSet:
    def test_invariants_hold(self):
        ds = DetectionSet(
            "a", 100, 100,
            (PixelBox(0, 0, 10, 10, confidence=0.9), PixelBox(5, 5, 20, 20, confidence=0.5)),
            "stub", 0.25, 0.45,
        )
        assert len(ds.boxes) == 2

    def test_rejects_out_of_bounds(self):
        with pytest.raises(InputError):
            DetectionSet("a", 100, 100, (PixelBox(0, 0, 120, 10, confidence=0.9),), "stub", 0.25, 0.45)

    def test_rejects_unsorted(self):
        with pytest.raises(InputError):
            DetectionSet(
                "a", 100, 100,
                (PixelBox(0, 0, 10, 10, confidence=0.5), PixelBox(0, 0, 10, 10, confidence=0.9)),
                "stub", 0.25, 0.45,
            )

    def test_rejects_below_threshold(self):
        with pytest.raises(InputError):
            DetectionSet("a", 100, 100, (PixelBox(0, 0, 10, 10, confidence=0.1),), "stub", 0.25, 0.45)

    def test_round_trips_through_dict(self):
        ds = DetectionSet(
            "a", 100, 100, (PixelBox(1, 2, 3, 4, confidence=0.9),), "file", 0.0, 0.45
        )
        assert DetectionSet.from_dict(json.loads(ds.to_json())) == ds


class TestDecodeHead:
    def test_all_scores_zero(self):
        raw = np.zeros((1, 5, 8), dtype=np.float32)
        assert decode_head(raw, 0.25) == []

    def test_single_anchor(self):
        raw = np.zeros((1, 5, 1), dtype=np.float32)
        raw[0, :, 0] = [100, 100, 20, 10, 0.9]
        (box,) = decode_head(raw, 0.25)
        assert (box.x1, box.y1, box.x2, box.y2) == (90, 95, 110, 105)
        assert box.confidence == pytest.approx(0.9)

    def test_threshold_filters(self):
        raw = np.zeros((1, 5, 2), dtype=np.float32)
        raw[0, :, 0] = [100, 100, 20, 10, 0.1]
        raw[0, :, 1] = [300, 300, 40, 40, 0.8]
        boxes = decode_head(raw, 0.25)
        assert len(boxes) == 1
        assert boxes[0].center() == (300, 300)

    def test_shape_mismatch(self):
        with pytest.raises(DecodeError) as err:
            decode_head(np.zeros((5, 8), dtype=np.float32), 0.25)
        assert "(1, 4+C, A)" in str(err.value)
        assert "(5, 8)" in str(err.value)

    def test_multi_class_takes_best(self):
        raw = np.zeros((1, 6, 1), dtype=np.float32)
        raw[0, :, 0] = [10, 10, 4, 4, 0.3, 0.7]
        (box,) = decode_head(raw, 0.25)
        assert box.class_id == 1
        assert box.confidence == pytest.approx(0.7)


class TestStubBackend:
    def test_blank_image_unscripted_yields_zero_boxes(self, fixture_image):
        ds = StubBackend().detect(fixture_image)
        assert ds.boxes == ()
        assert ds.image_id == "s1"
        assert (ds.image_w, ds.image_h) == (500, 375)

    def test_scripted_boxes_are_finalized(self, fixture_image):
        backend = StubBackend(
            {"s1": [PixelBox(0, 0, 10, 10, confidence=0.5), PixelBox(5, 5, 20, 20, confidence=0.9)]}
        )
        ds = backend.detect(fixture_image)
        assert [b.confidence for b in ds.boxes] == [0.9, 0.5]

    def test_unreadable_image(self, tmp_path):
        with pytest.raises(InputError):
            StubBackend().detect(tmp_path / "missing.png")

    def test_undecodable_bytes(self):
        with pytest.raises(InputError):
            StubBackend().detect(b"not an image", image_id="x")


class TestDetectionsFile:
    def test_fixture_file_yields_two_sorted_boxes(self, fixture_image, detections_file):
        ds = load_detections_file(detections_file, "s1", 500, 375)
        assert len(ds.boxes) == 2
        assert ds.boxes[0] == PixelBox(10, 20, 50, 60, confidence=0.97)
        assert ds.boxes[1] == PixelBox(100, 120, 180, 200, confidence=0.62)
        assert ds.detector_name == "file"

    def test_single_line_format(self, tmp_path):
        path = tmp_path / "one.jsonl"
        path.write_text('{"image_id":"s1","x1":10,"y1":20,"x2":50,"y2":60,"conf":0.97}\n')
        ds = load_detections_file(path, "s1", 100, 100)
        assert ds.boxes == (PixelBox(10, 20, 50, 60, confidence=0.97),)

    def test_absent_id_is_empty_set(self, detections_file):
        ds = load_detections_file(detections_file, "nowhere", 100, 100)
        assert ds.boxes == ()

    def test_absent_id_strict_mode_raises(self, detections_file):
        with pytest.raises(NotFoundError):
            load_detections_file(detections_file, "nowhere", 100, 100, missing="error")

    def test_conf_out_of_range_is_validation_error(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"image_id":"s1","x1":0,"y1":0,"x2":5,"y2":5,"conf":1.5}\n')
        with pytest.raises(ParseError) as err:
            parse_detections_jsonl(path)
        assert err.value.line == 1

    def test_bad_json_reports_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"image_id":"s1","x1":0,"y1":0,"x2":5,"y2":5,"conf":0.5}\n{oops\n')
        with pytest.raises(ParseError) as err:
            parse_detections_jsonl(path)
        assert err.value.line == 2

    def test_missing_field_reports_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"image_id":"s1","x1":0,"y1":0,"x2":5,"y2":5}\n')
        with pytest.raises(ParseError) as err:
            parse_detections_jsonl(path)
        assert "conf" in str(err.value)

    def test_boxes_clamped_to_image(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"image_id":"s1","x1":-5,"y1":-5,"x2":150,"y2":90,"conf":0.9}\n')
        ds = load_detections_file(path, "s1", 100, 80)
        assert (ds.boxes[0].x1, ds.boxes[0].y1, ds.boxes[0].x2, ds.boxes[0].y2) == (0, 0, 100, 80)

    def test_write_then_parse_round_trip(self, tmp_path):
        ds = DetectionSet(
            "s1", 100, 100,
            (PixelBox(1, 2, 3, 4, confidence=0.9), PixelBox(5, 6, 7, 8, confidence=0.4)),
            "file", 0.0, 0.45,
        )
        path = tmp_path / "out.jsonl"
        write_detections_jsonl(path, [ds])
        grouped = parse_detections_jsonl(path)
        assert grouped["s1"] == list(ds.boxes)


class TestFileBackend:
    def test_detect_uses_image_dims(self, fixture_image, detections_file):
        ds = FileBackend(detections_file).detect(fixture_image)
        assert (ds.image_w, ds.image_h) == (500, 375)
        assert len(ds.boxes) == 2

    def test_missing_file_is_backend_error(self, tmp_path):
        with pytest.raises(BackendError) as err:
            FileBackend(tmp_path / "none.jsonl")
        assert err.value.backend == "file"

    def test_malformed_file_is_backend_error(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text("{broken\n")
        with pytest.raises(BackendError):
            FileBackend(path)

    def test_matches_stub_backend_byte_for_byte(self, fixture_image, detections_file):
        file_ds = FileBackend(detections_file).detect(fixture_image, conf_threshold=0.0)
        stub = StubBackend(
            {"s1": [PixelBox(10, 20, 50, 60, confidence=0.97),
                    PixelBox(100, 120, 180, 200, confidence=0.62)]},
            name="file",
        )
        stub_ds = stub.detect(fixture_image, conf_threshold=0.0)
        assert stub_ds.to_json() == file_ds.to_json()


class FakeSession:
    """Quacks like an onnxruntime session: returns a canned head tensor."""

    def __init__(self, output):
        self.output = output
        self.calls = 0

    def run(self, _names, feeds):
        self.calls += 1
        (tensor,) = feeds.values()
        assert tensor.ndim == 4 and tensor.shape[0] == 1 and tensor.shape[1] == 3
        return [self.output]


def head_tensor(rows):
    """rows: list of (cx, cy, w, h, score) in model-input space."""
    raw = np.zeros((1, 5, max(len(rows), 1)), dtype=np.float32)
    for i, row in enumerate(rows):
        raw[0, :, i] = row
    return raw


class TestOnnxBackend:
    def test_missing_model_file(self, tmp_path):
        with pytest.raises(BackendError) as err:
            OnnxBackend(tmp_path / "weights.onnx")
        assert err.value.backend == "yolov8n-onnx"

    def test_decode_nms_unmap_pipeline(self, fixture_image):
        # 500x375 source letterboxed into 640x640: scale 1.28, pad_y 80.
        # A model-space box (128, 208, 256, 336) unmaps to (100, 100, 200, 200).
        session = FakeSession(head_tensor([(192, 272, 128, 128, 0.9)]))
        backend = OnnxBackend(None, session=session)
        ds = backend.detect(fixture_image)
        (box,) = ds.boxes
        assert (box.x1, box.y1, box.x2, box.y2) == pytest.approx((100, 100, 200, 200))
        assert ds.detector_name == "yolov8n-onnx"

    def test_well_separated_anchors_survive_nms(self, fixture_image):
        rows = [(100, 100, 40, 40, 0.9), (400, 400, 40, 40, 0.8), (250, 250, 40, 40, 0.7)]
        backend = OnnxBackend(None, session=FakeSession(head_tensor(rows)))
        ds = backend.detect(fixture_image)
        assert len(ds.boxes) == 3

    def test_overlapping_anchors_suppressed(self, fixture_image):
        rows = [(100, 100, 40, 40, 0.9), (102, 102, 40, 40, 0.8)]
        backend = OnnxBackend(None, session=FakeSession(head_tensor(rows)))
        ds = backend.detect(fixture_image)
        assert len(ds.boxes) == 1
        assert ds.boxes[0].confidence == pytest.approx(0.9)

    def test_session_failure_is_backend_error(self, fixture_image):
        class BrokenSession:
            def run(self, *_):
                raise RuntimeError("boom")

        backend = OnnxBackend(None, session=BrokenSession())
        with pytest.raises(BackendError):
            backend.detect(fixture_image)

    def test_sidecar_overrides(self, tmp_path, fixture_image):
        sidecar_path = tmp_path / "model.json"
        sidecar_path.write_text(json.dumps({"input_size": 320, "conf_threshold": 0.5, "name": "custom"}))
        sidecar = SidecarConfig.load(sidecar_path)
        assert sidecar.input_size == 320
        assert sidecar.name == "custom"
        session = FakeSession(head_tensor([(100, 100, 20, 20, 0.4)]))
        backend = OnnxBackend(None, sidecar=sidecar, session=session)
        ds = backend.detect(fixture_image)
        assert ds.boxes == ()  # 0.4 below sidecar threshold 0.5
        assert ds.detector_name == "custom"
