"""Stage 1 -> Stage 2 orchestration.

Runs a detector backend over images, filters switchboard (NA) detections,
applies the detector-confidence floor and NMS, crops socket regions, runs
the classifier backend, and assigns each finding a lifecycle status. Every
detection leaves a trace in the audit log, so funnel counts always conserve:

    detections = NA_FILTERED + dropped_by_det_conf + NMS_suppressed + findings
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from threading import Lock
from typing import Protocol, runtime_checkable

from PIL import Image

from .kb import ClfClass, DetClass
from .vision_eval import BBox, PredictionBox, nms

logger = logging.getLogger(__name__)

CLF_CLASSES = tuple(ClfClass)


@dataclass(frozen=True)
class ImageRef:
    """One input image: id plus a path or in-memory payload."""

    id: str
    path: Path | None = None
    data: bytes | None = None

    def load(self) -> Image.Image:
        if self.data is not None:
            return Image.open(io.BytesIO(self.data)).convert("RGB")
        if self.path is not None:
            return Image.open(self.path).convert("RGB")
        raise ValueError(f"ImageRef {self.id} has neither path nor data")

    @property
    def size(self) -> tuple[int, int]:
        img = self.load()
        return img.size


@dataclass(frozen=True)
class CropContext:
    """Identifies a crop back to its source detection (needed by stub backends)."""

    image_id: str
    bbox: BBox
    det_index: int


@runtime_checkable
class DetectorBackend(Protocol):
    descriptor: str

    def detect(self, image: ImageRef) -> list[PredictionBox]: ...


@runtime_checkable
class ClassifierBackend(Protocol):
    descriptor: str

    def classify(self, crop: Image.Image, context: CropContext) -> tuple[float, ...]: ...


class FindingStatus(Enum):
    VALID = "VALID"
    NOISE = "NOISE"
    BELOW_THRESHOLD = "BELOW_THRESHOLD"
    NA_FILTERED = "NA_FILTERED"


@dataclass(frozen=True)
class PipelineConfig:
    det_conf_min: float = 0.25
    clf_threshold: float = 0.70
    crop_pad_fraction: float = 0.10
    nms_iou: float = 0.50

    def __post_init__(self):
        if not (0.0 <= self.det_conf_min <= 1.0):
            raise ValueError(f"det_conf_min out of range: {self.det_conf_min}")
        if not (0.0 <= self.clf_threshold <= 1.0):
            raise ValueError(f"clf_threshold out of range: {self.clf_threshold}")
        if self.crop_pad_fraction < 0:
            raise ValueError(f"crop_pad_fraction must be >= 0: {self.crop_pad_fraction}")
        if not (0.0 < self.nms_iou <= 1.0):
            raise ValueError(f"nms_iou must be in (0, 1]: {self.nms_iou}")

    def to_dict(self) -> dict:
        return {
            "det_conf_min": self.det_conf_min,
            "clf_threshold": self.clf_threshold,
            "crop_pad_fraction": self.crop_pad_fraction,
            "nms_iou": self.nms_iou,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        return cls(**{k: d[k] for k in ("det_conf_min", "clf_threshold", "crop_pad_fraction", "nms_iou") if k in d})


@dataclass(frozen=True)
class SocketFinding:
    """One detected socket crop with its classification and lifecycle status."""

    finding_id: str
    image_id: str
    bbox: BBox
    det_conf: float
    probs: tuple[float, ...]  # over CLF_CLASSES order
    top_class: ClfClass
    top_prob: float
    status: FindingStatus

    def to_dict(self) -> dict:
        return {
            "finding_id": self.finding_id,
            "image_id": self.image_id,
            "bbox": [self.bbox.x_min, self.bbox.y_min, self.bbox.x_max, self.bbox.y_max],
            "det_conf": self.det_conf,
            "probs": {c.value: p for c, p in zip(CLF_CLASSES, self.probs)},
            "top_class": self.top_class.value,
            "top_prob": self.top_prob,
            "status": self.status.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SocketFinding":
        probs = tuple(float(d["probs"][c.value]) for c in CLF_CLASSES)
        return cls(
            finding_id=d["finding_id"],
            image_id=d["image_id"],
            bbox=BBox(*d["bbox"]),
            det_conf=float(d["det_conf"]),
            probs=probs,
            top_class=ClfClass(d["top_class"]),
            top_prob=float(d["top_prob"]),
            status=FindingStatus(d["status"]),
        )


def finding_status(top_class: ClfClass, top_prob: float, cfg: PipelineConfig) -> FindingStatus:
    """Status is a pure function of (top_class, top_prob, config)."""
    if top_class is ClfClass.NOISE:
        return FindingStatus.NOISE
    if top_prob < cfg.clf_threshold:
        return FindingStatus.BELOW_THRESHOLD
    return FindingStatus.VALID


def make_finding(
    finding_id: str,
    image_id: str,
    bbox: BBox,
    det_conf: float,
    probs: tuple[float, ...],
    cfg: PipelineConfig,
) -> SocketFinding:
    if len(probs) != len(CLF_CLASSES):
        raise ValueError(f"expected {len(CLF_CLASSES)} probabilities, got {len(probs)}")
    total = sum(probs)
    if any(p < 0 for p in probs) or abs(total - 1.0) > 1e-6:
        raise ValueError(f"probabilities must be a simplex (sum {total})")
    top_idx = max(range(len(probs)), key=lambda i: (probs[i], -i))
    top_class = CLF_CLASSES[top_idx]
    top_prob = probs[top_idx]
    return SocketFinding(
        finding_id=finding_id,
        image_id=image_id,
        bbox=bbox,
        det_conf=det_conf,
        probs=probs,
        top_class=top_class,
        top_prob=top_prob,
        status=finding_status(top_class, top_prob, cfg),
    )


def crop(image: Image.Image, bbox: BBox, pad_fraction: float) -> Image.Image:
    """Crop expanded by pad_fraction of box width/height per side, clamped."""
    w, h = image.size
    if bbox.x_min >= w or bbox.y_min >= h:
        raise ValueError("bbox does not intersect image")
    pad_x = bbox.width * pad_fraction
    pad_y = bbox.height * pad_fraction
    x0 = max(0.0, bbox.x_min - pad_x)
    y0 = max(0.0, bbox.y_min - pad_y)
    x1 = min(float(w), bbox.x_max + pad_x)
    y1 = min(float(h), bbox.y_max + pad_y)
    if x1 <= x0 or y1 <= y0:
        raise ValueError("empty crop after clamping")
    return image.crop((round(x0), round(y0), round(x1), round(y1)))


def padded_box_size(bbox: BBox, pad_fraction: float) -> tuple[float, float]:
    """Crop dimensions before clamping (exposed for geometry tests)."""
    return (
        bbox.width * (1 + 2 * pad_fraction),
        bbox.height * (1 + 2 * pad_fraction),
    )


@dataclass
class PipelineResult:
    findings: list[SocketFinding]
    audit: list[dict]
    errors: list[dict]
    counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "findings": [f.to_dict() for f in self.findings],
            "audit": self.audit,
            "errors": self.errors,
            "counts": self.counts,
        }


def run_pipeline(
    images: list[ImageRef],
    detector: DetectorBackend,
    classifier: ClassifierBackend,
    cfg: PipelineConfig,
    jobs: int = 1,
) -> PipelineResult:
    """Detect, filter, crop, and classify; partial results are first-class.

    Backend failures on one image become error records; remaining images are
    still processed. Findings are ordered by (image_id, descending det_conf).
    """
    det_lock = Lock() if getattr(detector, "single_flight", False) else None
    clf_lock = Lock() if getattr(classifier, "single_flight", False) else None

    def process(image: ImageRef):
        findings: list[SocketFinding] = []
        audit: list[dict] = []
        errors: list[dict] = []
        counts = {"detections": 0, "na_filtered": 0, "dropped_det_conf": 0, "nms_suppressed": 0}
        try:
            if det_lock:
                with det_lock:
                    detections = detector.detect(image)
            else:
                detections = detector.detect(image)
        except Exception as e:  # backend contract: failure is an image-level record
            errors.append({"image_id": image.id, "stage": "detect", "error": str(e)})
            return findings, audit, errors, counts
        counts["detections"] = len(detections)

        sockets: list[PredictionBox] = []
        for i, det in enumerate(detections):
            record = {
                "image_id": image.id,
                "det_index": i,
                "class_id": int(det.cls),
                "bbox": [det.bbox.x_min, det.bbox.y_min, det.bbox.x_max, det.bbox.y_max],
                "det_conf": det.confidence,
            }
            if det.cls is DetClass.NA_SWITCHBOARD:
                counts["na_filtered"] += 1
                record["outcome"] = "NA_FILTERED"
            elif det.confidence < cfg.det_conf_min:
                counts["dropped_det_conf"] += 1
                record["outcome"] = "DROPPED_DET_CONF"
            else:
                record["outcome"] = "PENDING"
                sockets.append(det)
            audit.append(record)

        kept = nms(sockets, cfg.nms_iou)
        kept_ids = {id(p) for p in kept}
        suppressed = [p for p in sockets if id(p) not in kept_ids]
        counts["nms_suppressed"] = len(suppressed)
        index_of = {id(det): i for i, det in enumerate(detections)}
        for p in suppressed:
            audit[index_of[id(p)]]["outcome"] = "NMS_SUPPRESSED"

        img = None
        for p in kept:
            det_index = index_of[id(p)]
            try:
                if img is None:
                    img = image.load()
                roi = crop(img, p.bbox, cfg.crop_pad_fraction)
                ctx = CropContext(image_id=image.id, bbox=p.bbox, det_index=det_index)
                if clf_lock:
                    with clf_lock:
                        probs = classifier.classify(roi, ctx)
                else:
                    probs = classifier.classify(roi, ctx)
                f = make_finding(
                    finding_id=f"{image.id}:{det_index}",
                    image_id=image.id,
                    bbox=p.bbox,
                    det_conf=p.confidence,
                    probs=tuple(probs),
                    cfg=cfg,
                )
            except Exception as e:
                errors.append(
                    {"image_id": image.id, "stage": "classify", "det_index": det_index, "error": str(e)}
                )
                audit[det_index]["outcome"] = "ERROR"
                continue
            findings.append(f)
            audit[det_index]["outcome"] = f.status.value
            audit[det_index]["top_class"] = f.top_class.value
            audit[det_index]["top_prob"] = f.top_prob
        return findings, audit, errors, counts

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_image = list(pool.map(process, images))
    else:
        per_image = [process(im) for im in images]

    result = PipelineResult(findings=[], audit=[], errors=[], counts={
        "detections": 0, "na_filtered": 0, "dropped_det_conf": 0,
        "nms_suppressed": 0, "findings": 0,
    })
    for findings, audit, errors, counts in per_image:
        result.findings.extend(findings)
        result.audit.extend(audit)
        result.errors.extend(errors)
        for k, v in counts.items():
            result.counts[k] += v
    result.findings.sort(key=lambda f: (f.image_id, -f.det_conf, f.finding_id))
    result.audit.sort(key=lambda r: (r["image_id"], r["det_index"]))
    result.counts["findings"] = len(result.findings)
    return result


def apply_threshold(
    findings: list[SocketFinding], t: float, comparator: str = "strict"
) -> list[SocketFinding]:
    """VALID findings whose top_prob clears t; order preserved.

    comparator 'strict' keeps top_prob > t; 'inclusive' keeps top_prob >= t.
    """
    if not (0.0 <= t <= 1.0):
        raise ValueError(f"threshold out of range: {t}")
    if comparator not in ("strict", "inclusive"):
        raise ValueError(f"unknown comparator: {comparator}")
    if comparator == "strict":
        return [f for f in findings if f.status is FindingStatus.VALID and f.top_prob > t]
    return [f for f in findings if f.status is FindingStatus.VALID and f.top_prob >= t]


# --- stub backends ---------------------------------------------------------

class StubDetector:
    """Deterministic detector that replays sidecar annotations.

    Annotations use the prediction CSV interchange format
    (image_id,class_id,x_min,y_min,x_max,y_max,confidence).
    """

    def __init__(
        self,
        annotations: dict[str, list[PredictionBox]],
        default: list[tuple[BBox, DetClass, float]] | None = None,
    ):
        self._annotations = annotations
        self._default = default or []
        self.descriptor = "stub-detector/1"

    @classmethod
    def from_csv(cls, path: str | Path) -> "StubDetector":
        from .vision_eval import read_pred_csv

        annotations: dict[str, list[PredictionBox]] = {}
        for p in read_pred_csv(path):
            annotations.setdefault(p.image_id, []).append(p)
        return cls(annotations)

    def detect(self, image: ImageRef) -> list[PredictionBox]:
        if image.id in self._annotations:
            return list(self._annotations[image.id])
        return [
            PredictionBox(bbox=b, cls=c, confidence=conf, image_id=image.id)
            for b, c, conf in self._default
        ]


class StubClassifier:
    """Deterministic classifier replaying sidecar labels as (near) one-hot vectors.

    Labels are keyed by (image_id, det_index). With noise_eps > 0, the one-hot
    vector is smoothed toward uniform by a seeded per-crop amount, keeping the
    labelled class on top.
    """

    def __init__(
        self,
        labels: dict[tuple[str, int], ClfClass],
        top_prob: float = 1.0,
        noise_eps: float = 0.0,
        seed: int = 0,
        default_label: ClfClass | None = None,
    ):
        if not (1.0 / len(CLF_CLASSES) < top_prob <= 1.0):
            raise ValueError(f"top_prob must exceed uniform: {top_prob}")
        self._labels = labels
        self._top_prob = top_prob
        self._noise_eps = noise_eps
        self._seed = seed
        self._default_label = default_label
        self._per_crop_prob: dict[tuple[str, int], float] = {}
        self.descriptor = "stub-classifier/1"

    @classmethod
    def from_csv(cls, path: str | Path, **kwargs) -> "StubClassifier":
        """Sidecar CSV header: image_id,det_index,label[,top_prob]."""
        labels: dict[tuple[str, int], ClfClass] = {}
        probs: dict[tuple[str, int], float] = {}
        with open(path, newline="", encoding="utf-8") as f:
            for row in csv.DictReader(f):
                key = (row["image_id"], int(row["det_index"]))
                labels[key] = ClfClass(row["label"])
                if row.get("top_prob"):
                    probs[key] = float(row["top_prob"])
        clf = cls(labels, **kwargs)
        clf._per_crop_prob = probs
        return clf

    def classify(self, crop: Image.Image, context: CropContext) -> tuple[float, ...]:
        import hashlib
        import random

        key = (context.image_id, context.det_index)
        if key in self._labels:
            label = self._labels[key]
        elif self._default_label is not None:
            label = self._default_label
        else:
            raise KeyError(f"no sidecar label for {key}")
        top = self._per_crop_prob.get(key, self._top_prob)
        if self._noise_eps:
            digest = hashlib.sha256(
                f"{self._seed}:{context.image_id}:{context.det_index}".encode()
            ).digest()
            rng = random.Random(int.from_bytes(digest[:8], "big"))
            top = max(top - rng.uniform(0, self._noise_eps), 1.0 / len(CLF_CLASSES) + 1e-6)
        rest = (1.0 - top) / (len(CLF_CLASSES) - 1)
        return tuple(top if c is label else rest for c in CLF_CLASSES)


def load_backend_config(path: str | Path):
    """Plugin config JSON: {"kind": "stub"|"onnx", ...} -> backend pair member.

    Detector config: {"kind": "stub", "annotations": csv} or
    {"kind": "onnx", "model_path": ..., "input_size": ...}.
    Classifier config: {"kind": "stub", "labels": csv, ...} or onnx.
    """
    cfg = json.loads(Path(path).read_text("utf-8"))
    kind = cfg.get("kind")
    base = Path(path).parent
    if kind == "stub":
        if "annotations" in cfg:
            return StubDetector.from_csv(base / cfg["annotations"])
        if "labels" in cfg:
            kwargs = {k: cfg[k] for k in ("top_prob", "noise_eps", "seed") if k in cfg}
            return StubClassifier.from_csv(base / cfg["labels"], **kwargs)
        raise ValueError(f"stub config needs 'annotations' or 'labels': {path}")
    if kind == "onnx":
        from .onnx_backend import OnnxClassifier, OnnxDetector

        model_path = base / cfg["model_path"]
        if cfg.get("role") == "classifier":
            return OnnxClassifier(model_path, input_size=cfg.get("input_size", 299))
        return OnnxDetector(model_path, input_size=cfg.get("input_size", 640))
    raise ValueError(f"unknown backend kind {kind!r} in {path}")
