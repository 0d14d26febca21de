"""Detector and classifier evaluation mathematics.

Covers box geometry (IoU), confidence-ranked prediction/ground-truth
matching, average precision with 101-point interpolation, mAP@0.5 and
mAP@0.5:0.95, greedy NMS, and confusion-matrix based classification
metrics. All operations are pure functions over immutable inputs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kb import ClfClass, DetClass

#: IoU thresholds for the mAP@0.5:0.95 average (0.50 to 0.95, step 0.05).
COCO_IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))

#: Recall sample points for 101-point AP interpolation.
RECALL_POINTS = tuple(round(0.01 * i, 2) for i in range(101))


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel space, corner form."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        vals = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(v) and v >= 0 for v in vals):
            raise ValueError(f"box coordinates must be finite and >= 0: {vals}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box: {vals}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min


@dataclass(frozen=True)
class GroundTruthBox:
    bbox: BBox
    cls: DetClass
    image_id: str


@dataclass(frozen=True)
class PredictionBox:
    bbox: BBox
    cls: DetClass
    confidence: float
    image_id: str

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence out of range: {self.confidence}")


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def match_predictions(
    preds: list[PredictionBox],
    gts: list[GroundTruthBox],
    iou_thresh: float,
) -> list[tuple[PredictionBox, GroundTruthBox | None]]:
    """Greedy one-to-one matching within a single image.

    Predictions are processed in descending confidence (ties keep input
    order); each takes the highest-IoU unmatched ground truth of the same
    class with IoU >= iou_thresh (IoU ties resolved by lowest ground-truth
    index). Unmatched predictions are false positives; unmatched ground
    truths are false negatives.
    """
    if not (0.0 < iou_thresh <= 1.0):
        raise ValueError(f"iou_thresh must be in (0, 1]: {iou_thresh}")
    image_ids = {p.image_id for p in preds} | {g.image_id for g in gts}
    if len(image_ids) > 1:
        raise ValueError(f"mixed image_ids in matching: {sorted(image_ids)}")

    order = sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, i))
    taken = [False] * len(gts)
    result: list[tuple[PredictionBox, GroundTruthBox | None]] = [None] * len(preds)  # type: ignore[list-item]
    for i in order:
        p = preds[i]
        best_j, best_iou = -1, 0.0
        for j, g in enumerate(gts):
            if taken[j] or g.cls != p.cls:
                continue
            v = iou(p.bbox, g.bbox)
            if v >= iou_thresh and v > best_iou:
                best_j, best_iou = j, v
        if best_j >= 0:
            taken[best_j] = True
            result[i] = (p, gts[best_j])
        else:
            result[i] = (p, None)
    return result


def _ranked_tp_flags(
    preds: list[PredictionBox],
    gts: list[GroundTruthBox],
    iou_thresh: float,
) -> list[bool]:
    """Confidence-ranked TP/FP flags, matching applied per image."""
    by_image: dict[str, tuple[list[PredictionBox], list[GroundTruthBox]]] = {}
    for g in gts:
        by_image.setdefault(g.image_id, ([], []))[1].append(g)
    for p in preds:
        by_image.setdefault(p.image_id, ([], []))[0].append(p)
    is_tp: dict[int, bool] = {}
    for img_preds, img_gts in by_image.values():
        for p, g in match_predictions(img_preds, img_gts, iou_thresh):
            is_tp[id(p)] = g is not None
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, i))
    return [is_tp[id(preds[i])] for i in order]


def average_precision(
    preds: list[PredictionBox],
    gts: list[GroundTruthBox],
    iou_thresh: float,
) -> float:
    """AP from the confidence-ranked PR curve, 101-point interpolation.

    Uses the monotone (running-max) precision envelope sampled at recalls
    0.00, 0.01, ..., 1.00.
    """
    if not gts:
        raise ValueError("undefined AP: zero ground truths")
    flags = _ranked_tp_flags(preds, gts, iou_thresh)
    n_gt = len(gts)
    recalls: list[float] = []
    precisions: list[float] = []
    tp = fp = 0
    for f in flags:
        tp, fp = tp + f, fp + (not f)
        recalls.append(tp / n_gt)
        precisions.append(tp / (tp + fp))
    # Monotone envelope from the right.
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    total = 0.0
    k = 0
    for r in RECALL_POINTS:
        while k < len(recalls) and recalls[k] < r - 1e-12:
            k += 1
        total += precisions[k] if k < len(recalls) else 0.0
    return total / len(RECALL_POINTS)


def precision_recall(
    preds: list[PredictionBox],
    gts: list[GroundTruthBox],
    iou_thresh: float = 0.5,
) -> tuple[float, float]:
    """Micro precision/recall over all predictions at the given IoU threshold."""
    flags = _ranked_tp_flags(preds, gts, iou_thresh)
    tp = sum(flags)
    prec = tp / len(flags) if flags else 0.0
    rec = tp / len(gts) if gts else 0.0
    return prec, rec


@dataclass(frozen=True)
class DetEvalReport:
    precision: float
    recall: float
    map50: float
    map5095: float
    per_class_ap50: dict[DetClass, float]

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "map50": self.map50,
            "map5095": self.map5095,
            "per_class_ap50": {c.name: v for c, v in self.per_class_ap50.items()},
        }


def map_range(
    preds: list[PredictionBox],
    gts: list[GroundTruthBox],
) -> tuple[float, float]:
    """(mAP@0.5, mAP@0.5:0.95) over the classes present in the ground truth."""
    classes = sorted({g.cls for g in gts})
    if not classes:
        raise ValueError("undefined mAP: zero ground truths")
    ap50s: list[float] = []
    ap_means: list[float] = []
    for c in classes:
        cp = [p for p in preds if p.cls == c]
        cg = [g for g in gts if g.cls == c]
        aps = [average_precision(cp, cg, t) for t in COCO_IOU_THRESHOLDS]
        ap50s.append(aps[0])
        ap_means.append(sum(aps) / len(aps))
    return sum(ap50s) / len(ap50s), sum(ap_means) / len(ap_means)


def detection_report(
    preds: list[PredictionBox],
    gts: list[GroundTruthBox],
) -> DetEvalReport:
    map50, map5095 = map_range(preds, gts)
    prec, rec = precision_recall(preds, gts, 0.5)
    per_class = {
        c: average_precision(
            [p for p in preds if p.cls == c], [g for g in gts if g.cls == c], 0.5
        )
        for c in sorted({g.cls for g in gts})
    }
    return DetEvalReport(prec, rec, map50, map5095, per_class)


def nms(preds: list[PredictionBox], iou_thresh: float) -> list[PredictionBox]:
    """Greedy per-class suppression by descending confidence (single image).

    Output contains no same-class pair with IoU >= iou_thresh and is ordered
    by descending confidence (ties keep input order).
    """
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, i))
    kept: list[PredictionBox] = []
    for i in order:
        p = preds[i]
        if any(k.cls == p.cls and iou(k.bbox, p.bbox) >= iou_thresh for k in kept):
            continue
        kept.append(p)
    return kept


@dataclass(frozen=True)
class ConfusionMatrix:
    """Row = true class, column = predicted class, over the 13 ClfClass values."""

    classes: tuple[ClfClass, ...]
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row(self, c: ClfClass) -> np.ndarray:
        return self.counts[self.classes.index(c)]


def confusion_matrix(
    true_labels: list[ClfClass], pred_labels: list[ClfClass]
) -> ConfusionMatrix:
    if len(true_labels) != len(pred_labels):
        raise ValueError(
            f"label length mismatch: {len(true_labels)} true vs {len(pred_labels)} predicted"
        )
    classes = tuple(ClfClass)
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(true_labels, pred_labels):
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(classes, counts)


def classification_report(m: ConfusionMatrix) -> dict:
    """Accuracy, per-class precision/recall/F1, and macro averages.

    Ratios with a zero denominator are reported as 0.0 and flagged in the
    per-class ``undefined`` list so batch evaluation stays total.
    """
    total = m.total
    if total == 0:
        raise ValueError("empty confusion matrix")
    diag = np.diag(m.counts)
    row_sums = m.counts.sum(axis=1)
    col_sums = m.counts.sum(axis=0)
    per_class = {}
    for i, c in enumerate(m.classes):
        undefined = []
        if col_sums[i] > 0:
            prec = diag[i] / col_sums[i]
        else:
            prec, undefined = 0.0, undefined + ["precision"]
        if row_sums[i] > 0:
            rec = diag[i] / row_sums[i]
        else:
            rec, undefined = 0.0, undefined + ["recall"]
        f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
        per_class[c.value] = {
            "precision": float(prec),
            "recall": float(rec),
            "f1": float(f1),
            "support": int(row_sums[i]),
            "undefined": undefined,
        }
    vals = list(per_class.values())
    return {
        "accuracy": float(diag.sum() / total),
        "per_class": per_class,
        "macro_precision": sum(v["precision"] for v in vals) / len(vals),
        "macro_recall": sum(v["recall"] for v in vals) / len(vals),
        "macro_f1": sum(v["f1"] for v in vals) / len(vals),
        "total": total,
    }


# --- CSV interchange -------------------------------------------------------
# Header: image_id,class_id,x_min,y_min,x_max,y_max[,confidence]

def read_gt_csv(path: str | Path) -> list[GroundTruthBox]:
    out = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            out.append(
                GroundTruthBox(
                    bbox=BBox(
                        float(row["x_min"]), float(row["y_min"]),
                        float(row["x_max"]), float(row["y_max"]),
                    ),
                    cls=DetClass(int(row["class_id"])),
                    image_id=row["image_id"],
                )
            )
    return out


def read_pred_csv(path: str | Path) -> list[PredictionBox]:
    out = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            out.append(
                PredictionBox(
                    bbox=BBox(
                        float(row["x_min"]), float(row["y_min"]),
                        float(row["x_max"]), float(row["y_max"]),
                    ),
                    cls=DetClass(int(row["class_id"])),
                    confidence=float(row["confidence"]),
                    image_id=row["image_id"],
                )
            )
    return out


def write_boxes_csv(path: str | Path, preds: list[PredictionBox]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["image_id", "class_id", "x_min", "y_min", "x_max", "y_max", "confidence"])
        for p in preds:
            w.writerow(
                [p.image_id, int(p.cls), p.bbox.x_min, p.bbox.y_min,
                 p.bbox.x_max, p.bbox.y_max, p.confidence]
            )
