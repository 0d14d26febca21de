"""Stage 3: evidence scoring, threshold sweeps, and candidate-country ranking.

Each retained finding is scored against ground truth: +1 when its predicted
plug type and the image's true country form a valid knowledge-base pair, -1
when they do not, 0 for NOISE (which never enters the correct/wrong counts).
The forward direction, ranking candidate countries for an investigator,
aggregates classifier confidence per country over the knowledge base.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field

from .kb import KnowledgeBase, PlugType
from .pipeline import FindingStatus, SocketFinding, apply_threshold

logger = logging.getLogger(__name__)


def score_finding(kb: KnowledgeBase, f: SocketFinding, true_country: str) -> int:
    """+1 valid (type, country) pair, -1 invalid, 0 for NOISE."""
    if f.status not in (FindingStatus.VALID, FindingStatus.NOISE):
        raise ValueError(f"finding {f.finding_id} has unscoreable status {f.status.value}")
    if f.status is FindingStatus.NOISE:
        return 0
    return 1 if kb.is_valid_pair(f.top_class, true_country) else -1


@dataclass(frozen=True)
class SweepRow:
    threshold: float
    correct: int
    wrong: int
    total: int
    accuracy: float

    def __post_init__(self):
        if self.total != self.correct + self.wrong:
            raise ValueError(f"total {self.total} != correct {self.correct} + wrong {self.wrong}")

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "correct": self.correct,
            "wrong": self.wrong,
            "total": self.total,
            "accuracy": self.accuracy,
        }


@dataclass
class Evaluation:
    row: SweepRow
    per_class: dict[str, dict[str, int]]  # plug type -> {"correct": n, "wrong": n}
    noise_count: int
    excluded: list[str] = field(default_factory=list)  # finding ids without truth


def evaluate(
    findings: list[SocketFinding],
    truth: dict[str, str],
    kb: KnowledgeBase,
    t: float,
    comparator: str = "inclusive",
) -> Evaluation:
    """Score all retained findings at threshold t and aggregate counts.

    Findings whose image has no truth entry are excluded and logged. NOISE
    findings score 0 and appear only in noise_count.
    """
    retained = apply_threshold(findings, t, comparator)
    noise = [f for f in findings if f.status is FindingStatus.NOISE]
    correct = wrong = 0
    per_class: dict[str, dict[str, int]] = {}
    excluded: list[str] = []
    for f in retained:
        if f.image_id not in truth:
            excluded.append(f.finding_id)
            logger.warning("no truth entry for image %s; finding %s excluded", f.image_id, f.finding_id)
            continue
        s = score_finding(kb, f, truth[f.image_id])
        bucket = per_class.setdefault(f.top_class.value, {"correct": 0, "wrong": 0})
        if s > 0:
            correct += 1
            bucket["correct"] += 1
        else:
            wrong += 1
            bucket["wrong"] += 1
    noise_count = 0
    for f in noise:
        if f.image_id in truth:
            noise_count += 1
        else:
            excluded.append(f.finding_id)
    total = correct + wrong
    accuracy = correct / total if total else 0.0
    return Evaluation(
        row=SweepRow(threshold=t, correct=correct, wrong=wrong, total=total, accuracy=accuracy),
        per_class=per_class,
        noise_count=noise_count,
        excluded=excluded,
    )


def threshold_sweep(
    findings: list[SocketFinding],
    truth: dict[str, str],
    kb: KnowledgeBase,
    thresholds: list[float],
    comparator: str = "inclusive",
) -> list[SweepRow]:
    """One SweepRow per threshold; thresholds must be sorted ascending."""
    if sorted(thresholds) != list(thresholds):
        raise ValueError("thresholds must be sorted ascending")
    return [evaluate(findings, truth, kb, t, comparator).row for t in thresholds]


def sweep_chart_csv(rows: list[SweepRow]) -> str:
    """Chart-ready series: threshold,accuracy,total."""
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["threshold", "accuracy", "total"])
    for r in rows:
        w.writerow([r.threshold, f"{r.accuracy:.6f}", r.total])
    return buf.getvalue()


def sweep_report(
    findings: list[SocketFinding],
    truth: dict[str, str],
    kb: KnowledgeBase,
    thresholds: list[float],
    comparator: str = "inclusive",
    backend_descriptors: dict[str, str] | None = None,
) -> dict:
    """Full evaluation report (JSON-serializable)."""
    evals = [evaluate(findings, truth, kb, t, comparator) for t in thresholds]
    return {
        "rows": [e.row.to_dict() for e in evals],
        "per_class": {str(e.row.threshold): e.per_class for e in evals},
        "metadata": {
            "kb_version": kb.version,
            "comparator": comparator,
            "backends": backend_descriptors or {},
            "finding_count": len(findings),
        },
    }


@dataclass(frozen=True)
class GeoCandidate:
    country: str
    score: float
    supporting: tuple[str, ...]  # finding ids
    intersection: bool  # supported by every distinct detected plug type

    def to_dict(self) -> dict:
        return {
            "country": self.country,
            "score": self.score,
            "supporting": list(self.supporting),
            "intersection": self.intersection,
        }


def rank_candidates(
    kb: KnowledgeBase,
    findings: list[SocketFinding],
    t: float,
    comparator: str = "inclusive",
) -> list[GeoCandidate]:
    """Rank candidate countries by accumulated classifier confidence.

    Every retained VALID finding contributes its top_prob to each country of
    its predicted plug type. Output is sorted by descending score, ties by
    country code; countries covered by all distinct detected types carry the
    intersection flag.
    """
    retained = apply_threshold(findings, t, comparator)
    scores: dict[str, float] = {}
    supporting: dict[str, list[str]] = {}
    seen_types: set[PlugType] = set()
    for f in sorted(retained, key=lambda f: f.finding_id):
        pt = f.top_class.plug_type
        assert pt is not None  # VALID findings are never NOISE
        seen_types.add(pt)
        for c in sorted(kb.countries_for(pt)):
            scores[c] = scores.get(c, 0.0) + f.top_prob
            supporting.setdefault(c, []).append(f.finding_id)
    intersection = {
        c for c in scores
        if seen_types and all(pt in kb.types_for_country(c) for pt in seen_types)
    }
    out = [
        GeoCandidate(
            country=c,
            score=scores[c],
            supporting=tuple(supporting[c]),
            intersection=c in intersection,
        )
        for c in scores
    ]
    out.sort(key=lambda g: (-g.score, g.country))
    return out


def read_truth_csv(path) -> dict[str, str]:
    """Truth file: CSV with image_id,country columns."""
    truth: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            truth[row["image_id"]] = row["country"]
    return truth


def read_findings_json(path) -> list[SocketFinding]:
    doc = json.loads(open(path, encoding="utf-8").read())
    items = doc["findings"] if isinstance(doc, dict) else doc
    return [SocketFinding.from_dict(d) for d in items]
