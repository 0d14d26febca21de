"""ONNX model backends for the detection/classification stages.

Requires the optional ``onnxruntime`` package; imported lazily so the rest
of the system works without it. These wrappers enforce the backend contract
at the boundary: detector boxes are clamped to image bounds with confidences
in [0, 1], classifier outputs are renormalized onto the 13-class simplex.
Metric values of supplied models are external properties and are not
asserted anywhere.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .kb import ClfClass, DetClass
from .vision_eval import BBox, PredictionBox


def _session(model_path: Path):
    try:
        import onnxruntime  # type: ignore[import-not-found]
    except ImportError as e:
        raise RuntimeError(
            "onnxruntime is not installed; ONNX backends are unavailable "
            "(use the stub backends, or install the 'onnxruntime' package)"
        ) from e
    return onnxruntime.InferenceSession(str(model_path), providers=["CPUExecutionProvider"])


class OnnxDetector:
    """YOLO-style single-output detector: rows of (x0, y0, x1, y1, conf, class)."""

    def __init__(self, model_path: str | Path, input_size: int = 640):
        self._sess = _session(Path(model_path))
        self._input = self._sess.get_inputs()[0].name
        self._size = input_size
        self.descriptor = f"onnx-detector/{Path(model_path).name}"

    def detect(self, image) -> list[PredictionBox]:
        img = image.load()
        w, h = img.size
        resized = img.resize((self._size, self._size), Image.BILINEAR)
        arr = np.asarray(resized, dtype=np.float32).transpose(2, 0, 1)[None] / 255.0
        rows = np.asarray(self._sess.run(None, {self._input: arr})[0]).reshape(-1, 6)
        sx, sy = w / self._size, h / self._size
        out: list[PredictionBox] = []
        for x0, y0, x1, y1, conf, cls_id in rows:
            x0, x1 = sorted((float(x0) * sx, float(x1) * sx))
            y0, y1 = sorted((float(y0) * sy, float(y1) * sy))
            x0, y0 = max(0.0, x0), max(0.0, y0)
            x1, y1 = min(float(w), x1), min(float(h), y1)
            if x1 <= x0 or y1 <= y0:
                continue
            out.append(
                PredictionBox(
                    bbox=BBox(x0, y0, x1, y1),
                    cls=DetClass(int(cls_id)),
                    confidence=min(1.0, max(0.0, float(conf))),
                    image_id=image.id,
                )
            )
        return out


class OnnxClassifier:
    """13-way classifier; logits or probabilities are normalized to a simplex."""

    def __init__(self, model_path: str | Path, input_size: int = 299):
        self._sess = _session(Path(model_path))
        self._input = self._sess.get_inputs()[0].name
        self._size = input_size
        self.descriptor = f"onnx-classifier/{Path(model_path).name}"

    def classify(self, crop: Image.Image, context) -> tuple[float, ...]:
        resized = crop.convert("RGB").resize((self._size, self._size), Image.BILINEAR)
        arr = np.asarray(resized, dtype=np.float32)[None] / 255.0
        raw = np.asarray(self._sess.run(None, {self._input: arr})[0]).reshape(-1)
        if raw.shape[0] != len(ClfClass):
            raise ValueError(f"model emits {raw.shape[0]} classes, expected {len(ClfClass)}")
        if raw.min() < 0 or not np.isclose(raw.sum(), 1.0, atol=1e-3):
            raw = np.exp(raw - raw.max())
        probs = raw / raw.sum()
        return tuple(float(p) for p in probs)
