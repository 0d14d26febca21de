"""Synthetic finding fixtures for evaluator validation and demos.

These generators produce deterministic finding sets with known funnel and
score counts, so the scoring arithmetic can be checked end to end without
any trained models.
"""

from __future__ import annotations

from .kb import ClfClass, KnowledgeBase
from .pipeline import CLF_CLASSES, BBox, PipelineConfig, SocketFinding, make_finding

#: (top_prob, correct, wrong) per confidence bin. Cumulative counts at the
#: 0.7 / 0.8 / 0.9 thresholds are 1595/146, 1421/95, 1167/45 (totals 1741,
#: 1516, 1212); the no-threshold totals are 1967 correct / 399 wrong over
#: 2,366 findings. Probabilities sit strictly inside their bins so strict
#: and inclusive comparators agree on these counts.
THRESHOLD_FIXTURE_BINS = (
    (0.65, 372, 253),
    (0.75, 174, 51),
    (0.85, 254, 50),
    (0.95, 1167, 45),
)


def _one_hot_probs(cls: ClfClass, top: float) -> tuple[float, ...]:
    rest = (1.0 - top) / (len(CLF_CLASSES) - 1)
    return tuple(top if c is cls else rest for c in CLF_CLASSES)


def make_threshold_fixture(
    kb: KnowledgeBase,
) -> tuple[list[SocketFinding], dict[str, str]]:
    """Finding set + truth map realizing THRESHOLD_FIXTURE_BINS.

    Correct findings pair plug type G with truth GB (a valid KB pair); wrong
    findings pair type H with truth US (invalid: H maps to a single country).
    """
    assert kb.is_valid_pair(ClfClass.G, "GB")
    assert not kb.is_valid_pair(ClfClass.H, "US")
    cfg = PipelineConfig(det_conf_min=0.0, clf_threshold=0.0, nms_iou=1.0)
    findings: list[SocketFinding] = []
    truth: dict[str, str] = {}
    i = 0
    for top, n_correct, n_wrong in THRESHOLD_FIXTURE_BINS:
        for cls, country, n in ((ClfClass.G, "GB", n_correct), (ClfClass.H, "US", n_wrong)):
            for _ in range(n):
                image_id = f"img{i:05d}"
                findings.append(
                    make_finding(
                        finding_id=f"{image_id}:0",
                        image_id=image_id,
                        bbox=BBox(10, 10, 140, 97),
                        det_conf=0.9,
                        probs=_one_hot_probs(cls, top),
                        cfg=cfg,
                    )
                )
                truth[image_id] = country
                i += 1
    return findings, truth


def make_funnel_detections(
    n_total: int = 3759, n_noise: int = 1393
) -> tuple[list[str], str, str]:
    """CSV payloads for a detection funnel: n_total sockets, n_noise of which
    classify as NOISE.

    Returns (image_ids, detections_csv, labels_csv) in the stub sidecar
    formats; running the pipeline over these with a zero det_conf floor
    yields exactly n_total - n_noise non-noise findings.
    """
    det_lines = ["image_id,class_id,x_min,y_min,x_max,y_max,confidence"]
    label_lines = ["image_id,det_index,label,top_prob"]
    image_ids = []
    for i in range(n_total):
        image_id = f"f{i:05d}"
        image_ids.append(image_id)
        det_lines.append(f"{image_id},1,10,10,140,97,0.9")
        label = "NOISE" if i < n_noise else "G"
        label_lines.append(f"{image_id},0,{label},0.95")
    return image_ids, "\n".join(det_lines) + "\n", "\n".join(label_lines) + "\n"
