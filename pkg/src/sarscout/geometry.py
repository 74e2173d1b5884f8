"""Box primitives shared by every other module.

Canonical box form is corner coordinates (x1, y1, x2, y2) in pixels with the
origin at the image's top-left corner, x growing right and y growing down.
Center/size forms exist only at format boundaries (detector head decode,
YOLO-txt labels). All arithmetic is double precision.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import InvalidArgumentError

__all__ = [
    "PixelBox",
    "LetterboxTransform",
    "iou",
    "nms",
    "make_letterbox",
    "map_box",
    "unmap_box",
]


@dataclass(frozen=True)
class PixelBox:
    """Axis-aligned box in image pixel coordinates with a confidence score.

    Invariants: x1 <= x2, y1 <= y2 and 0 <= confidence <= 1. The class id is
    always 0 here ("ship"); it is kept as a field so serialized detections
    stay self-describing.
    """

    x1: float
    y1: float
    x2: float
    y2: float
    confidence: float = 1.0
    class_id: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "x1", float(self.x1))
        object.__setattr__(self, "y1", float(self.y1))
        object.__setattr__(self, "x2", float(self.x2))
        object.__setattr__(self, "y2", float(self.y2))
        object.__setattr__(self, "confidence", float(self.confidence))
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise InvalidArgumentError(
                f"box corners out of order: ({self.x1}, {self.y1}, {self.x2}, {self.y2})"
            )
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidArgumentError(f"confidence {self.confidence} outside [0, 1]")

    def width(self) -> float:
        return self.x2 - self.x1

    def height(self) -> float:
        return self.y2 - self.y1

    def area(self) -> float:
        return self.width() * self.height()

    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))

    def clamped(self, image_w: float, image_h: float) -> PixelBox:
        """Return a copy clamped to [0, image_w] x [0, image_h]."""
        return replace(
            self,
            x1=min(max(self.x1, 0.0), image_w),
            y1=min(max(self.y1, 0.0), image_h),
            x2=min(max(self.x2, 0.0), image_w),
            y2=min(max(self.y2, 0.0), image_h),
        )


@dataclass(frozen=True)
class LetterboxTransform:
    """Aspect-preserving resize + centered padding into a fixed canvas.

    scale = min(dst_w/src_w, dst_h/src_h); pad is the (non-negative) border
    on each side of the scaled image inside the destination canvas.
    """

    scale: float
    pad_x: float
    pad_y: float
    src_w: int
    src_h: int
    dst_w: int
    dst_h: int


def make_letterbox(src_w: int, src_h: int, dst_w: int, dst_h: int) -> LetterboxTransform:
    """Build the letterbox transform from a source image into a model canvas."""
    if min(src_w, src_h, dst_w, dst_h) <= 0:
        raise InvalidArgumentError(
            f"letterbox dimensions must be positive, got ({src_w}, {src_h}) -> ({dst_w}, {dst_h})"
        )
    scale = min(dst_w / src_w, dst_h / src_h)
    pad_x = (dst_w - scale * src_w) / 2.0
    pad_y = (dst_h - scale * src_h) / 2.0
    return LetterboxTransform(scale, pad_x, pad_y, src_w, src_h, dst_w, dst_h)


def map_box(b: PixelBox, t: LetterboxTransform) -> PixelBox:
    """Map a source-image box into letterboxed model-input coordinates."""
    return replace(
        b,
        x1=b.x1 * t.scale + t.pad_x,
        y1=b.y1 * t.scale + t.pad_y,
        x2=b.x2 * t.scale + t.pad_x,
        y2=b.y2 * t.scale + t.pad_y,
    )


def unmap_box(b: PixelBox, t: LetterboxTransform) -> PixelBox:
    """Map a model-space box back to source-image pixels, clamped to bounds."""
    inv = replace(
        b,
        x1=(b.x1 - t.pad_x) / t.scale,
        y1=(b.y1 - t.pad_y) / t.scale,
        x2=(b.x2 - t.pad_x) / t.scale,
        y2=(b.y2 - t.pad_y) / t.scale,
    )
    return inv.clamped(t.src_w, t.src_h)


def iou(a: PixelBox, b: PixelBox) -> float:
    """Intersection over union in [0, 1]; 0 when the union is empty."""
    ix1 = max(a.x1, b.x1)
    iy1 = max(a.y1, b.y1)
    ix2 = min(a.x2, b.x2)
    iy2 = min(a.y2, b.y2)
    inter = max(0.0, ix2 - ix1) * max(0.0, iy2 - iy1)
    if inter <= 0.0:
        return 0.0
    union = a.area() + b.area() - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def nms(dets: list[PixelBox], iou_threshold: float) -> list[PixelBox]:
    """Greedy non-maximum suppression.

    Boxes are visited in confidence order (ties keep input order); a box is
    kept iff its IoU with every already-kept box is <= iou_threshold. Output
    is sorted by confidence descending and is a subset of the input.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise InvalidArgumentError(f"iou_threshold {iou_threshold} outside [0, 1]")
    ordered = sorted(dets, key=lambda b: -b.confidence)  # stable: ties by input index
    kept: list[PixelBox] = []
    for box in ordered:
        if all(iou(box, k) <= iou_threshold for k in kept):
            kept.append(box)
    return kept
