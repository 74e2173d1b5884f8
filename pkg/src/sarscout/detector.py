"""Detector backends producing ship boxes for an image.

Two production backends share one contract: an ONNX-exported detection model
run through an embeddable inference runtime, and a precomputed-detections
JSONL file (one JSON object per box). A scripted stub backend backs tests.
Backends are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import BackendError, DecodeError, InputError, InvalidArgumentError, ParseError
from .geometry import PixelBox, make_letterbox, nms, unmap_box

__all__ = [
    "DetectionSet",
    "DetectorBackend",
    "FileBackend",
    "OnnxBackend",
    "StubBackend",
    "decode_head",
    "load_detections_file",
    "parse_detections_jsonl",
    "write_detections_jsonl",
    "DEFAULT_CONF_THRESHOLD",
    "DEFAULT_NMS_THRESHOLD",
    "DEFAULT_INPUT_SIZE",
]

# YOLOv8-family conventions; configurable everywhere they are consumed.
DEFAULT_CONF_THRESHOLD = 0.25
DEFAULT_NMS_THRESHOLD = 0.45
DEFAULT_INPUT_SIZE = 640
LETTERBOX_PAD_VALUE = 114


@dataclass(frozen=True)
class DetectionSet:
    """Per-image detections in source-pixel coordinates plus provenance.

    Invariants: every box inside [0, image_w] x [0, image_h], boxes sorted by
    confidence descending, all confidences >= conf_threshold.
    """

    image_id: str
    image_w: int
    image_h: int
    boxes: tuple[PixelBox, ...]
    detector_name: str
    conf_threshold: float
    nms_threshold: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "boxes", tuple(self.boxes))
        for b in self.boxes:
            if b.x1 < 0 or b.y1 < 0 or b.x2 > self.image_w or b.y2 > self.image_h:
                raise InputError(
                    f"box ({b.x1}, {b.y1}, {b.x2}, {b.y2}) outside image "
                    f"{self.image_w}x{self.image_h} for {self.image_id!r}"
                )
            if b.confidence < self.conf_threshold:
                raise InputError(
                    f"box confidence {b.confidence} below threshold {self.conf_threshold}"
                )
        confs = [b.confidence for b in self.boxes]
        if confs != sorted(confs, reverse=True):
            raise InputError("detection boxes must be sorted by confidence descending")

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "image_w": self.image_w,
            "image_h": self.image_h,
            "detector_name": self.detector_name,
            "conf_threshold": self.conf_threshold,
            "nms_threshold": self.nms_threshold,
            "boxes": [
                {
                    "x1": b.x1,
                    "y1": b.y1,
                    "x2": b.x2,
                    "y2": b.y2,
                    "confidence": b.confidence,
                    "class_id": b.class_id,
                }
                for b in self.boxes
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "DetectionSet":
        return cls(
            image_id=d["image_id"],
            image_w=d["image_w"],
            image_h=d["image_h"],
            boxes=tuple(
                PixelBox(
                    b["x1"], b["y1"], b["x2"], b["y2"],
                    confidence=b["confidence"], class_id=b.get("class_id", 0),
                )
                for b in d["boxes"]
            ),
            detector_name=d["detector_name"],
            conf_threshold=d["conf_threshold"],
            nms_threshold=d["nms_threshold"],
        )


def _finalize_boxes(
    boxes: Sequence[PixelBox], image_w: int, image_h: int, conf_threshold: float
) -> tuple[PixelBox, ...]:
    """Clamp to image bounds, drop sub-threshold boxes, sort by confidence."""
    kept = [b.clamped(image_w, image_h) for b in boxes if b.confidence >= conf_threshold]
    kept.sort(key=lambda b: -b.confidence)
    return tuple(kept)


def _read_image(image: str | Path | bytes, image_id: str | None) -> tuple[str, int, int, bytes]:
    """Resolve an image reference to (image_id, width, height, raw bytes)."""
    if isinstance(image, (str, Path)):
        path = Path(image)
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise InputError(f"cannot read image {path}: {exc}") from exc
        resolved_id = image_id if image_id is not None else path.stem
    else:
        data = image
        resolved_id = image_id if image_id is not None else "image"
    try:
        with Image.open(io.BytesIO(data)) as img:
            w, h = img.size
    except (UnidentifiedImageError, OSError) as exc:
        raise InputError(f"cannot decode image {resolved_id!r}: {exc}") from exc
    return resolved_id, w, h, data


class DetectorBackend:
    """Contract: detect() returns a DetectionSet obeying all its invariants,
    deterministically for a fixed backend, image, and thresholds."""

    name: str = "base"

    def detect(
        self,
        image: str | Path | bytes,
        *,
        image_id: str | None = None,
        conf_threshold: float | None = None,
        nms_threshold: float | None = None,
    ) -> DetectionSet:
        raise NotImplementedError


class StubBackend(DetectorBackend):
    """Returns scripted boxes per image id; empty for unscripted ids. The
    name is settable so a scripted stub can stand in for any backend in
    serialization-equality tests."""

    def __init__(self, scripted: Mapping[str, Sequence[PixelBox]] | None = None,
                 *, name: str = "stub"):
        self.name = name
        self._scripted = {k: tuple(v) for k, v in (scripted or {}).items()}

    def detect(self, image, *, image_id=None, conf_threshold=None, nms_threshold=None):
        conf = DEFAULT_CONF_THRESHOLD if conf_threshold is None else conf_threshold
        nms_thr = DEFAULT_NMS_THRESHOLD if nms_threshold is None else nms_threshold
        resolved_id, w, h, _ = _read_image(image, image_id)
        boxes = _finalize_boxes(self._scripted.get(resolved_id, ()), w, h, conf)
        return DetectionSet(resolved_id, w, h, boxes, self.name, conf, nms_thr)


# --- precomputed-detections file backend ---------------------------------


def parse_detections_jsonl(path: str | Path) -> dict[str, list[PixelBox]]:
    """Parse a detections JSONL file into boxes grouped by image id.

    Format: one object per box with keys image_id, x1, y1, x2, y2 (floats,
    source pixels) and conf. UTF-8, LF-terminated. Errors carry line numbers.
    """
    path = Path(path)
    grouped: dict[str, list[PixelBox]] = {}
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read detections file: {exc}", path=str(path)) from exc
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", path=str(path), line=line_no) from exc
        try:
            image_id = str(rec["image_id"])
            box = PixelBox(
                float(rec["x1"]), float(rec["y1"]), float(rec["x2"]), float(rec["y2"]),
                confidence=float(rec["conf"]),
            )
        except KeyError as exc:
            raise ParseError(f"missing field {exc.args[0]!r}", path=str(path), line=line_no) from exc
        except (TypeError, ValueError, InvalidArgumentError) as exc:
            raise ParseError(str(exc), path=str(path), line=line_no) from exc
        grouped.setdefault(image_id, []).append(box)
    return grouped


def write_detections_jsonl(path: str | Path, dets: Sequence[DetectionSet]) -> None:
    lines = []
    for ds in dets:
        for b in ds.boxes:
            lines.append(
                json.dumps(
                    {"image_id": ds.image_id, "x1": b.x1, "y1": b.y1,
                     "x2": b.x2, "y2": b.y2, "conf": b.confidence}
                )
            )
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def load_detections_file(
    path: str | Path,
    image_id: str,
    image_w: int,
    image_h: int,
    *,
    conf_threshold: float = 0.0,
    nms_threshold: float = DEFAULT_NMS_THRESHOLD,
    missing: str = "empty",
) -> DetectionSet:
    """Load one image's detections from a JSONL file.

    An id absent from the file yields an empty DetectionSet (zero ships is a
    valid detector answer) unless missing="error", which raises NotFoundError.
    """
    grouped = parse_detections_jsonl(path)
    if image_id not in grouped:
        if missing == "error":
            from .errors import NotFoundError

            raise NotFoundError(f"no detections for image id {image_id!r} in {path}")
        boxes: tuple[PixelBox, ...] = ()
    else:
        boxes = _finalize_boxes(grouped[image_id], image_w, image_h, conf_threshold)
    return DetectionSet(image_id, image_w, image_h, boxes, "file", conf_threshold, nms_threshold)


class FileBackend(DetectorBackend):
    """Serves precomputed detections keyed by image id; no model runtime."""

    name = "file"

    def __init__(self, path: str | Path, *, missing: str = "empty"):
        self.path = Path(path)
        self.missing = missing
        if not self.path.is_file():
            raise BackendError(f"detections file not found: {self.path}", backend=self.name)
        try:
            self._grouped = parse_detections_jsonl(self.path)
        except ParseError as exc:
            raise BackendError(f"malformed detections file: {exc}", backend=self.name) from exc

    def detect(self, image, *, image_id=None, conf_threshold=None, nms_threshold=None):
        conf = 0.0 if conf_threshold is None else conf_threshold
        nms_thr = DEFAULT_NMS_THRESHOLD if nms_threshold is None else nms_threshold
        resolved_id, w, h, _ = _read_image(image, image_id)
        if resolved_id not in self._grouped and self.missing == "error":
            from .errors import NotFoundError

            raise NotFoundError(f"no detections for image id {resolved_id!r} in {self.path}")
        boxes = _finalize_boxes(self._grouped.get(resolved_id, ()), w, h, conf)
        return DetectionSet(resolved_id, w, h, boxes, self.name, conf, nms_thr)


# --- ONNX model backend ----------------------------------------------------


def decode_head(raw: np.ndarray, conf_threshold: float) -> list[PixelBox]:
    """Decode a raw (1, 4+C, A) detection head into model-space corner boxes.

    Rows 0..3 are (cx, cy, w, h) in model-input pixels; rows 4..4+C are
    per-class scores in [0, 1]. One candidate per anchor whose best class
    score clears conf_threshold. NMS is not applied here.
    """
    raw = np.asarray(raw)
    if raw.ndim != 3 or raw.shape[0] != 1 or raw.shape[1] < 5:
        raise DecodeError(
            f"expected head shape (1, 4+C, A) with C >= 1, got {tuple(raw.shape)}"
        )
    preds = raw[0]  # (4+C, A)
    scores = preds[4:, :]  # (C, A)
    best_class = np.argmax(scores, axis=0)
    best_score = scores[best_class, np.arange(scores.shape[1])]
    keep = best_score >= conf_threshold
    out: list[PixelBox] = []
    for i in np.nonzero(keep)[0]:
        cx, cy, w, h = (float(v) for v in preds[0:4, i])
        out.append(
            PixelBox(
                cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0,
                confidence=float(best_score[i]), class_id=int(best_class[i]),
            )
        )
    return out


@dataclass(frozen=True)
class SidecarConfig:
    """Model sidecar: preprocessing contract recorded next to the weights."""

    input_size: int = DEFAULT_INPUT_SIZE
    conf_threshold: float = DEFAULT_CONF_THRESHOLD
    nms_threshold: float = DEFAULT_NMS_THRESHOLD
    pad_value: int = LETTERBOX_PAD_VALUE
    scale: float = 1.0 / 255.0
    name: str = "yolov8n-onnx"

    @classmethod
    def load(cls, path: str | Path) -> "SidecarConfig":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot read sidecar config: {exc}", path=str(path)) from exc
        known = {f: d[f] for f in cls.__dataclass_fields__ if f in d}
        return cls(**known)


def _default_session_factory(model_path: Path):
    try:
        import onnxruntime  # type: ignore
    except ImportError as exc:
        raise BackendError(
            "onnxruntime is not installed; install sarscout[onnx] or use the file backend",
            backend="onnx",
        ) from exc
    return onnxruntime.InferenceSession(str(model_path), providers=["CPUExecutionProvider"])


class OnnxBackend(DetectorBackend):
    """Runs an exported single-class detection model.

    The session only needs a run(None, {input_name: array}) -> [output]
    method, so tests can substitute a canned session without any runtime.
    """

    def __init__(
        self,
        model_path: str | Path | None,
        sidecar: SidecarConfig | None = None,
        *,
        session: object | None = None,
        session_factory: Callable[[Path], object] | None = None,
        input_name: str = "images",
    ):
        self.sidecar = sidecar or SidecarConfig()
        self.name = self.sidecar.name
        self.input_name = input_name
        if session is not None:
            self._session = session
        else:
            if model_path is None:
                raise BackendError("no model path configured", backend=self.name)
            model_path = Path(model_path)
            if not model_path.is_file():
                raise BackendError(f"model file not found: {model_path}", backend=self.name)
            factory = session_factory or _default_session_factory
            self._session = factory(model_path)

    def _preprocess(self, data: bytes, w: int, h: int) -> np.ndarray:
        size = self.sidecar.input_size
        with Image.open(io.BytesIO(data)) as img:
            rgb = img.convert("RGB")
            t = make_letterbox(w, h, size, size)
            scaled = rgb.resize((round(w * t.scale), round(h * t.scale)), Image.BILINEAR)
            canvas = Image.new("RGB", (size, size), (self.sidecar.pad_value,) * 3)
            canvas.paste(scaled, (round(t.pad_x), round(t.pad_y)))
        arr = np.asarray(canvas, dtype=np.float32) * self.sidecar.scale
        return np.expand_dims(arr.transpose(2, 0, 1), 0)  # NCHW

    def detect(self, image, *, image_id=None, conf_threshold=None, nms_threshold=None):
        conf = self.sidecar.conf_threshold if conf_threshold is None else conf_threshold
        nms_thr = self.sidecar.nms_threshold if nms_threshold is None else nms_threshold
        resolved_id, w, h, data = _read_image(image, image_id)
        tensor = self._preprocess(data, w, h)
        try:
            outputs = self._session.run(None, {self.input_name: tensor})  # type: ignore[attr-defined]
        except Exception as exc:
            raise BackendError(f"inference failed: {exc}", backend=self.name) from exc
        candidates = decode_head(outputs[0], conf)
        t = make_letterbox(w, h, self.sidecar.input_size, self.sidecar.input_size)
        unmapped = [unmap_box(b, t) for b in nms(candidates, nms_thr)]
        boxes = _finalize_boxes(unmapped, w, h, conf)
        return DetectionSet(resolved_id, w, h, boxes, self.name, conf, nms_thr)
