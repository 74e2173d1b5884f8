"""Ground-truth annotation and split-manifest loading for the eval harness.

Two annotation formats are supported and must agree on shared fixtures:
YOLO-txt label directories (one "class cx cy w h" line per box, normalized
to [0, 1]) and COCO-subset JSON (images[] + annotations[] with xywh bboxes).
Image ids are file stems so labels, images, and detections join without a
registry. Pixel dimensions come from a dims-index CSV or from decoding the
image headers, selected by the caller; evaluation therefore runs without
the (non-redistributable) images whenever a dims index is supplied.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from PIL import Image, UnidentifiedImageError

from .errors import IntegrityError, NotFoundError, ParseError
from .geometry import PixelBox

__all__ = [
    "GroundTruthSet",
    "SplitManifest",
    "SplitReport",
    "load_dims_index",
    "read_image_dims",
    "load_yolo_annotations",
    "load_coco_annotations",
    "load_split_manifest",
    "validate_split",
]


@dataclass(frozen=True)
class GroundTruthSet:
    """Ground-truth boxes for one image; confidence is exactly 1.0."""

    image_id: str
    image_w: int
    image_h: int
    boxes: tuple[PixelBox, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "boxes", tuple(self.boxes))
        for b in self.boxes:
            if b.confidence != 1.0:
                raise IntegrityError(
                    f"ground-truth confidence must be 1.0, got {b.confidence} for {self.image_id!r}"
                )
            if b.x1 < 0 or b.y1 < 0 or b.x2 > self.image_w or b.y2 > self.image_h:
                raise IntegrityError(
                    f"ground-truth box outside image bounds for {self.image_id!r}"
                )


@dataclass(frozen=True)
class SplitManifest:
    """Train/test image-id lists; disjoint, duplicate-free."""

    dataset_name: str
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "train_ids", tuple(self.train_ids))
        object.__setattr__(self, "test_ids", tuple(self.test_ids))
        for name, ids in (("train", self.train_ids), ("test", self.test_ids)):
            if len(set(ids)) != len(ids):
                raise IntegrityError(f"duplicate ids in {name} split of {self.dataset_name!r}")
        overlap = set(self.train_ids) & set(self.test_ids)
        if overlap:
            raise IntegrityError(
                f"train/test overlap in {self.dataset_name!r}: {sorted(overlap)[:5]}"
            )


@dataclass(frozen=True)
class SplitReport:
    dataset_name: str
    train_count: int
    test_count: int
    missing_train: tuple[str, ...]
    missing_test: tuple[str, ...]


def load_dims_index(path: str | Path) -> dict[str, tuple[int, int]]:
    """Read an `image_id,width,height` CSV; a header row is skipped if present."""
    path = Path(path)
    dims: dict[str, tuple[int, int]] = {}
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read dims index: {exc}", path=str(path)) from exc
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise ParseError(f"expected 3 fields, got {len(parts)}", path=str(path), line=line_no)
        if line_no == 1 and not parts[1].isdigit():
            continue  # header
        try:
            dims[parts[0]] = (int(parts[1]), int(parts[2]))
        except ValueError as exc:
            raise ParseError(str(exc), path=str(path), line=line_no) from exc
    return dims


def read_image_dims(images_dir: str | Path) -> dict[str, tuple[int, int]]:
    """Build a dims map by decoding image headers under a directory."""
    dims: dict[str, tuple[int, int]] = {}
    for path in sorted(Path(images_dir).iterdir()):
        if not path.is_file():
            continue
        try:
            with Image.open(path) as img:
                dims[path.stem] = img.size
        except (UnidentifiedImageError, OSError):
            continue  # non-image files are allowed alongside
    return dims


def load_yolo_annotations(
    label_dir: str | Path,
    image_dims: Mapping[str, tuple[int, int]],
) -> dict[str, GroundTruthSet]:
    """Load a directory of YOLO-txt label files keyed by image id.

    Each line is "class cx cy w h" with values normalized to [0, 1]; centers
    and sizes are converted to pixel corner boxes using that image's
    dimensions from image_dims.
    """
    label_dir = Path(label_dir)
    out: dict[str, GroundTruthSet] = {}
    for path in sorted(label_dir.glob("*.txt")):
        image_id = path.stem
        if image_id not in image_dims:
            raise NotFoundError(f"no image dimensions for id {image_id!r} (from {path})")
        w, h = image_dims[image_id]
        boxes: list[PixelBox] = []
        for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 5:
                raise ParseError(
                    f"expected 'class cx cy w h', got {len(parts)} fields",
                    path=str(path), line=line_no,
                )
            try:
                cls = int(parts[0])
                cx, cy, bw, bh = (float(p) for p in parts[1:])
            except ValueError as exc:
                raise ParseError(str(exc), path=str(path), line=line_no) from exc
            for name, v in (("cx", cx), ("cy", cy), ("w", bw), ("h", bh)):
                if not 0.0 <= v <= 1.0:
                    raise ParseError(
                        f"normalized {name}={v} outside [0, 1]", path=str(path), line=line_no
                    )
            px_cx, px_cy = cx * w, cy * h
            px_w, px_h = bw * w, bh * h
            box = PixelBox(
                px_cx - px_w / 2.0,
                px_cy - px_h / 2.0,
                px_cx + px_w / 2.0,
                px_cy + px_h / 2.0,
                confidence=1.0,
                class_id=cls,
            ).clamped(w, h)
            boxes.append(box)
        out[image_id] = GroundTruthSet(image_id, w, h, tuple(boxes))
    return out


def load_coco_annotations(json_path: str | Path) -> dict[str, GroundTruthSet]:
    """Load a COCO-subset JSON: images[] (id, width, height, file_name) and
    annotations[] (image_id, bbox [x, y, w, h]). Ids map to file stems; every
    listed image is present in the result, with zero boxes when unannotated.
    """
    json_path = Path(json_path)
    try:
        doc = json.loads(json_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read COCO json: {exc}", path=str(json_path)) from exc
    if not isinstance(doc, dict) or "images" not in doc or "annotations" not in doc:
        raise ParseError("expected object with images[] and annotations[]", path=str(json_path))

    images: dict[int, dict] = {}
    boxes: dict[int, list[PixelBox]] = {}
    try:
        for img in doc["images"]:
            images[int(img["id"])] = img
            boxes[int(img["id"])] = []
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed images entry: {exc}", path=str(json_path)) from exc
    for ann in doc["annotations"]:
        try:
            image_id = int(ann["image_id"])
            x, y, w, h = (float(v) for v in ann["bbox"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed annotation: {exc}", path=str(json_path)) from exc
        if image_id not in images:
            raise IntegrityError(f"annotation references unknown image id {image_id}")
        img = images[image_id]
        boxes[image_id].append(
            PixelBox(x, y, x + w, y + h, confidence=1.0).clamped(
                float(img["width"]), float(img["height"])
            )
        )
    out: dict[str, GroundTruthSet] = {}
    for numeric_id, img in images.items():
        stem = Path(str(img["file_name"])).stem
        out[stem] = GroundTruthSet(
            stem, int(img["width"]), int(img["height"]), tuple(boxes[numeric_id])
        )
    return out


def load_split_manifest(
    dataset_name: str, train_file: str | Path, test_file: str | Path
) -> SplitManifest:
    """Load plain-text split files, one image id per line."""

    def read_ids(path: str | Path) -> tuple[str, ...]:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ParseError(f"cannot read split file: {exc}", path=str(path)) from exc
        return tuple(line.strip() for line in text.splitlines() if line.strip())

    return SplitManifest(dataset_name, read_ids(train_file), read_ids(test_file))


def validate_split(
    manifest: SplitManifest, annotations: Mapping[str, GroundTruthSet]
) -> SplitReport:
    """Report split counts and ids lacking annotations; never raises."""
    missing_train = tuple(i for i in manifest.train_ids if i not in annotations)
    missing_test = tuple(i for i in manifest.test_ids if i not in annotations)
    return SplitReport(
        dataset_name=manifest.dataset_name,
        train_count=len(manifest.train_ids),
        test_count=len(manifest.test_ids),
        missing_train=missing_train,
        missing_test=missing_test,
    )
