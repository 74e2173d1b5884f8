"""Detection-vs-ground-truth matching, average precision, and mAP reports.

Metric definitions: AP at each IoU threshold in {0.50, 0.55, ..., 0.95}
(exactly ten thresholds), mAP.50 = AP at 0.50, mAP.50:.95 = unweighted mean
over the ten. Detections are pooled across images and ranked by confidence
(ties by image id, then input order); AP uses 101-point interpolation by
default, with an all-points variant available since published tooling does
not always state which it used.

Matching is greedy per image in confidence order: a detection is a true
positive iff its best-IoU unmatched ground truth clears the threshold
(inclusive); IoU ties break toward the lower ground-truth index, and each
ground truth is credited to at most one detection per threshold.
"""

from __future__ import annotations

import json
from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .dataset import GroundTruthSet
from .detector import DetectionSet
from .errors import IntegrityError, InvalidArgumentError
from .geometry import PixelBox, iou

__all__ = [
    "IOU_THRESHOLDS",
    "MatchRecord",
    "EvalReport",
    "match_detections",
    "average_precision",
    "evaluate",
    "comparison_table",
]

IOU_THRESHOLDS: tuple[float, ...] = tuple(round(50 + 5 * k) / 100.0 for k in range(10))

INTERPOLATIONS = ("101point", "all_points")


@dataclass(frozen=True)
class MatchRecord:
    """One detection's outcome at one IoU threshold."""

    image_id: str
    det_conf: float
    is_tp: bool
    iou_threshold: float


@dataclass(frozen=True)
class EvalReport:
    """Table-row-shaped result: AP per threshold plus the two headline means."""

    detector_name: str
    dataset_name: str
    ap_by_threshold: dict[float, float]
    map50: float
    map5095: float
    image_count: int
    gt_count: int
    det_count: int
    interpolation: str = "101point"
    warnings: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "detector_name": self.detector_name,
            "dataset_name": self.dataset_name,
            "ap_by_threshold": {f"{t:.2f}": v for t, v in self.ap_by_threshold.items()},
            "map50": self.map50,
            "map5095": self.map5095,
            "counts": {
                "images": self.image_count,
                "gts": self.gt_count,
                "dets": self.det_count,
            },
            "interpolation": self.interpolation,
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def match_detections(
    dets: DetectionSet | Sequence[PixelBox],
    gts: GroundTruthSet | Sequence[PixelBox],
    iou_threshold: float,
) -> list[MatchRecord]:
    """Greedily match one image's detections to its ground truths."""
    det_boxes = list(dets.boxes) if isinstance(dets, DetectionSet) else list(dets)
    gt_boxes = list(gts.boxes) if isinstance(gts, GroundTruthSet) else list(gts)
    image_id = dets.image_id if isinstance(dets, DetectionSet) else ""

    order = sorted(range(len(det_boxes)), key=lambda i: (-det_boxes[i].confidence, i))
    gt_taken = [False] * len(gt_boxes)
    records: list[MatchRecord] = []
    for i in order:
        det = det_boxes[i]
        best_iou = 0.0
        best_j = -1
        for j, gt in enumerate(gt_boxes):
            if gt_taken[j]:
                continue
            v = iou(det, gt)
            if v > best_iou:  # strict: equal IoU keeps the lower gt index
                best_iou = v
                best_j = j
        is_tp = best_j >= 0 and best_iou >= iou_threshold
        if is_tp:
            gt_taken[best_j] = True
        records.append(MatchRecord(image_id, det.confidence, is_tp, iou_threshold))
    return records


def _ranked_tp_flags(records: Sequence[MatchRecord]) -> list[bool]:
    # Pooled ranking: confidence descending, ties by image id then input order.
    indexed = list(enumerate(records))
    indexed.sort(key=lambda pair: (-pair[1].det_conf, pair[1].image_id, pair[0]))
    return [r.is_tp for _, r in indexed]


def average_precision(
    records: Sequence[MatchRecord],
    total_gt: int,
    *,
    interpolation: str = "101point",
) -> float:
    """AP over pooled match records against total_gt ground truths.

    101-point mode samples the precision envelope at recall 0.00..1.00 in
    steps of 0.01 and averages; all-points mode integrates the envelope over
    the exact recall steps. total_gt = 0 yields 0.0 by convention.
    """
    if interpolation not in INTERPOLATIONS:
        raise InvalidArgumentError(f"interpolation must be one of {INTERPOLATIONS}")
    if total_gt == 0:
        return 0.0
    flags = _ranked_tp_flags(records)
    precisions: list[float] = []
    recalls: list[float] = []
    tp = fp = 0
    for flag in flags:
        if flag:
            tp += 1
        else:
            fp += 1
        precisions.append(tp / (tp + fp))
        recalls.append(tp / total_gt)
    if not precisions:
        return 0.0

    # Precision envelope: env[k] = max precision at rank >= k.
    env = precisions[:]
    for k in range(len(env) - 2, -1, -1):
        env[k] = max(env[k], env[k + 1])

    if interpolation == "101point":
        total = 0.0
        for i in range(101):
            r = i / 100.0
            idx = bisect_left(recalls, r)
            if idx < len(recalls):
                total += env[idx]
        return total / 101.0

    # All-points: sum precision-envelope area over recall increments.
    area = 0.0
    prev_recall = 0.0
    for k in range(len(recalls)):
        if recalls[k] > prev_recall:
            area += (recalls[k] - prev_recall) * env[k]
            prev_recall = recalls[k]
    return area


def evaluate(
    dets_by_image: Mapping[str, DetectionSet],
    gts_by_image: Mapping[str, GroundTruthSet],
    *,
    detector_name: str | None = None,
    dataset_name: str = "",
    interpolation: str = "101point",
) -> EvalReport:
    """Evaluate detections against ground truth over the ten IoU thresholds.

    The image keyspace is the union of both maps; an image without
    detections contributes zero boxes, one without ground truth contributes
    zero targets (its detections are all false positives).
    """
    image_ids = sorted(set(dets_by_image) | set(gts_by_image))
    for image_id in image_ids:
        ds = dets_by_image.get(image_id)
        gt = gts_by_image.get(image_id)
        if ds is not None and gt is not None:
            if (ds.image_w, ds.image_h) != (gt.image_w, gt.image_h):
                raise IntegrityError(
                    f"dims disagree for {image_id!r}: detections say "
                    f"{ds.image_w}x{ds.image_h}, ground truth says {gt.image_w}x{gt.image_h}"
                )

    total_gt = sum(len(gts_by_image[i].boxes) for i in image_ids if i in gts_by_image)
    total_det = sum(len(dets_by_image[i].boxes) for i in image_ids if i in dets_by_image)

    warnings: list[str] = []
    if total_gt == 0:
        warnings.append("no ground-truth boxes; AP defined as 0")

    ap_by_threshold: dict[float, float] = {}
    for thr in IOU_THRESHOLDS:
        pooled: list[MatchRecord] = []
        for image_id in image_ids:
            ds = dets_by_image.get(image_id)
            if ds is None or not ds.boxes:
                continue
            gt = gts_by_image.get(image_id)
            gt_boxes: Sequence[PixelBox] = gt.boxes if gt is not None else ()
            pooled.extend(match_detections(ds, gt_boxes, thr))
        ap_by_threshold[thr] = average_precision(pooled, total_gt, interpolation=interpolation)

    aps = [ap_by_threshold[t] for t in IOU_THRESHOLDS]
    name = detector_name
    if name is None:
        names = {d.detector_name for d in dets_by_image.values()}
        name = names.pop() if len(names) == 1 else "mixed"
    return EvalReport(
        detector_name=name,
        dataset_name=dataset_name,
        ap_by_threshold=ap_by_threshold,
        map50=ap_by_threshold[0.50],
        map5095=sum(aps) / len(aps),
        image_count=len(image_ids),
        gt_count=total_gt,
        det_count=total_det,
        interpolation=interpolation,
        warnings=tuple(warnings),
    )


def comparison_table(reports: Sequence[EvalReport], *, fmt: str = "markdown") -> str:
    """Render reports as a detector-selection comparison table.

    Rows are detectors, column pairs are dataset x {mAP.50, mAP.50:.95},
    values as percentages with one decimal. Row and dataset order follow
    first appearance in `reports`.
    """
    if fmt not in ("markdown", "csv"):
        raise InvalidArgumentError("fmt must be 'markdown' or 'csv'")
    detectors: list[str] = []
    datasets: list[str] = []
    cells: dict[tuple[str, str], EvalReport] = {}
    for r in reports:
        if r.detector_name not in detectors:
            detectors.append(r.detector_name)
        if r.dataset_name not in datasets:
            datasets.append(r.dataset_name)
        cells[(r.detector_name, r.dataset_name)] = r

    header = ["Method"]
    for ds in datasets:
        header += [f"{ds} mAP.50(%)", f"{ds} mAP.50:.95(%)"]
    rows = [header]
    for det in detectors:
        row = [det]
        for ds in datasets:
            r = cells.get((det, ds))
            if r is None:
                row += ["-", "-"]
            else:
                row += [f"{100.0 * r.map50:.1f}", f"{100.0 * r.map5095:.1f}"]
        rows.append(row)

    if fmt == "csv":
        return "\n".join(",".join(row) for row in rows) + "\n"
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    out = []
    for k, row in enumerate(rows):
        out.append("| " + " | ".join(c.ljust(w) for c, w in zip(row, widths)) + " |")
        if k == 0:
            out.append("|" + "|".join("-" * (w + 2) for w in widths) + "|")
    return "\n".join(out) + "\n"
