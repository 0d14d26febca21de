import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socketgeo.kb import ClfClass, DetClass
from socketgeo.vision_eval import (
    BBox,
    ConfusionMatrix,
    GroundTruthBox,
    PredictionBox,
    average_precision,
    classification_report,
    confusion_matrix,
    iou,
    map_range,
    match_predictions,
    nms,
    precision_recall,
)

from .oracles import ap_101, classification_stats, greedy_match, greedy_nms, rect_iou


def gt(x0, y0, x1, y1, cls=DetClass.SOCKET, image_id="img"):
    return GroundTruthBox(BBox(x0, y0, x1, y1), cls, image_id)


def pred(x0, y0, x1, y1, conf, cls=DetClass.SOCKET, image_id="img"):
    return PredictionBox(BBox(x0, y0, x1, y1), cls, conf, image_id)


class TestBBox:
    def test_rejects_degenerate(self):
        with pytest.raises(ValueError):
            BBox(5, 0, 5, 10)
        with pytest.raises(ValueError):
            BBox(0, 10, 10, 5)

    def test_rejects_negative_and_nonfinite(self):
        with pytest.raises(ValueError):
            BBox(-1, 0, 5, 5)
        with pytest.raises(ValueError):
            BBox(0, 0, float("inf"), 5)


class TestIoU:
    def test_identity(self):
        b = BBox(3, 4, 10, 12)
        assert iou(b, b) == 1.0

    def test_disjoint(self):
        assert iou(BBox(0, 0, 1, 1), BBox(2, 2, 3, 3)) == 0.0

    def test_known_third(self):
        # intersection 2, union 6
        assert iou(BBox(0, 0, 2, 2), BBox(1, 0, 3, 2)) == pytest.approx(1 / 3)

    def test_random_properties(self):
        rng = random.Random(7)
        for _ in range(10_000):
            a = _random_box(rng)
            b = _random_box(rng)
            v = iou(a, b)
            assert 0.0 <= v <= 1.0
            assert v == iou(b, a)
            assert v == pytest.approx(
                rect_iou((a.x_min, a.y_min, a.x_max, a.y_max),
                         (b.x_min, b.y_min, b.x_max, b.y_max))
            )


def _random_box(rng, span=50.0):
    x0, y0 = rng.uniform(0, span), rng.uniform(0, span)
    return BBox(x0, y0, x0 + rng.uniform(0.5, span / 2), y0 + rng.uniform(0.5, span / 2))


class TestMatching:
    def test_exact_hit(self):
        matches = match_predictions([pred(0, 0, 10, 10, 0.9)], [gt(0, 0, 10, 10)], 0.5)
        assert matches[0][1] is not None

    def test_one_to_one(self):
        p1 = pred(0, 0, 10, 10, 0.9)
        p2 = pred(1, 0, 11, 10, 0.8)
        matches = dict(match_predictions([p2, p1], [gt(0, 0, 10, 10)], 0.5))
        assert matches[p1] is not None  # higher confidence wins
        assert matches[p2] is None

    def test_mixed_image_ids_rejected(self):
        with pytest.raises(ValueError, match="mixed image_ids"):
            match_predictions([pred(0, 0, 1, 1, 0.5, image_id="a")],
                              [gt(0, 0, 1, 1, image_id="b")], 0.5)

    def test_class_must_match(self):
        matches = match_predictions(
            [pred(0, 0, 10, 10, 0.9, cls=DetClass.NA_SWITCHBOARD)],
            [gt(0, 0, 10, 10, cls=DetClass.SOCKET)], 0.5,
        )
        assert matches[0][1] is None

    def test_oracle_equivalence_randomized(self):
        rng = random.Random(42)
        for _ in range(300):
            n_p, n_g = rng.randint(0, 6), rng.randint(0, 4)
            preds = [
                pred(*_rect(rng), conf=round(rng.random(), 3),
                     cls=DetClass(rng.randint(0, 1)))
                for _ in range(n_p)
            ]
            gts = [gt(*_rect(rng), cls=DetClass(rng.randint(0, 1))) for _ in range(n_g)]
            thresh = rng.choice([0.3, 0.5, 0.7])
            got = match_predictions(preds, gts, thresh)
            oracle = greedy_match(
                [((p.bbox.x_min, p.bbox.y_min, p.bbox.x_max, p.bbox.y_max), p.cls, p.confidence) for p in preds],
                [((g.bbox.x_min, g.bbox.y_min, g.bbox.x_max, g.bbox.y_max), g.cls) for g in gts],
                thresh,
            )
            for i, (p, matched_gt) in enumerate(got):
                assert p is preds[i]
                expected = None if oracle[i] is None else gts[oracle[i]]
                assert matched_gt is expected


def _rect(rng, span=20.0):
    x0, y0 = rng.uniform(0, span), rng.uniform(0, span)
    return x0, y0, x0 + rng.uniform(1, span / 2), y0 + rng.uniform(1, span / 2)


class TestAveragePrecision:
    def test_perfect_detector(self):
        gts = [gt(0, 0, 10, 10), gt(20, 20, 30, 30)]
        preds = [pred(0, 0, 10, 10, 0.9), pred(20, 20, 30, 30, 0.8)]
        assert average_precision(preds, gts, 0.5) == pytest.approx(1.0)

    def test_no_predictions(self):
        assert average_precision([], [gt(0, 0, 10, 10)], 0.5) == 0.0

    def test_zero_gts_error(self):
        with pytest.raises(ValueError, match="undefined AP"):
            average_precision([pred(0, 0, 1, 1, 0.5)], [], 0.5)

    def test_small_case_against_oracle(self):
        gts = [gt(0, 0, 10, 10), gt(20, 0, 30, 10), gt(40, 0, 50, 10)]
        preds = [
            pred(0, 0, 10, 10, 0.9),
            pred(20, 0, 29, 10, 0.85),
            pred(60, 0, 70, 10, 0.7),
            pred(40, 0, 50, 10, 0.6),
        ]
        expected = ap_101(
            {"img": [((p.bbox.x_min, p.bbox.y_min, p.bbox.x_max, p.bbox.y_max), p.cls, p.confidence) for p in preds]},
            {"img": [((g.bbox.x_min, g.bbox.y_min, g.bbox.x_max, g.bbox.y_max), g.cls) for g in gts]},
            0.5,
        )
        assert average_precision(preds, gts, 0.5) == pytest.approx(expected, abs=1e-12)

    def test_confidence_rescale_invariance(self):
        rng = random.Random(3)
        gts = [gt(*_rect(rng)) for _ in range(4)]
        preds = [pred(*_rect(rng), conf=rng.uniform(0.1, 0.5)) for _ in range(6)]
        scaled = [
            PredictionBox(p.bbox, p.cls, min(1.0, p.confidence * 2), p.image_id)
            for p in preds
        ]
        assert average_precision(preds, gts, 0.5) == average_precision(scaled, gts, 0.5)

    def test_monotone_in_iou_threshold(self):
        rng = random.Random(11)
        for _ in range(50):
            gts = [gt(*_rect(rng)) for _ in range(rng.randint(1, 4))]
            preds = [pred(*_rect(rng), conf=round(rng.random(), 3)) for _ in range(rng.randint(0, 6))]
            aps = [average_precision(preds, gts, t) for t in
                   [0.5 + 0.05 * i for i in range(10)]]
            for lo, hi in zip(aps, aps[1:]):
                assert hi <= lo + 1e-12


class TestMapRange:
    def test_perfect(self):
        gts = [gt(0, 0, 10, 10), gt(20, 20, 30, 30, cls=DetClass.NA_SWITCHBOARD)]
        preds = [pred(0, 0, 10, 10, 0.9), pred(20, 20, 30, 30, 0.8, cls=DetClass.NA_SWITCHBOARD)]
        m50, m5095 = map_range(preds, gts)
        assert m50 == pytest.approx(1.0)
        assert m5095 == pytest.approx(1.0)

    def test_map5095_le_map50(self):
        rng = random.Random(5)
        for _ in range(20):
            gts = [gt(*_rect(rng), cls=DetClass(rng.randint(0, 1))) for _ in range(rng.randint(1, 4))]
            preds = [pred(*_rect(rng), conf=round(rng.random(), 3), cls=DetClass(rng.randint(0, 1)))
                     for _ in range(rng.randint(0, 6))]
            m50, m5095 = map_range(preds, gts)
            assert m5095 <= m50 + 1e-12

    def test_two_class_against_per_threshold_oracle(self):
        rng = random.Random(9)
        gts = [gt(*_rect(rng), cls=DetClass(i % 2)) for i in range(4)]
        preds = [pred(*_rect(rng), conf=round(rng.random(), 3), cls=DetClass(i % 2)) for i in range(6)]
        m50, m5095 = map_range(preds, gts)
        per_class = []
        for cls in (DetClass.NA_SWITCHBOARD, DetClass.SOCKET):
            cp = {"img": [((p.bbox.x_min, p.bbox.y_min, p.bbox.x_max, p.bbox.y_max), p.cls, p.confidence)
                          for p in preds if p.cls == cls]}
            cg = {"img": [((g.bbox.x_min, g.bbox.y_min, g.bbox.x_max, g.bbox.y_max), g.cls)
                          for g in gts if g.cls == cls]}
            per_class.append([ap_101(cp, cg, 0.5 + 0.05 * i) for i in range(10)])
        assert m50 == pytest.approx(sum(c[0] for c in per_class) / 2, abs=1e-12)
        assert m5095 == pytest.approx(
            sum(sum(c) / 10 for c in per_class) / 2, abs=1e-12
        )


class TestNMS:
    def test_single_box(self):
        p = pred(0, 0, 10, 10, 0.5)
        assert nms([p], 0.5) == [p]

    def test_duplicate_boxes(self):
        hi = pred(0, 0, 10, 10, 0.9)
        lo = pred(0, 0, 10, 10, 0.5)
        assert nms([lo, hi], 0.5) == [hi]

    def test_subset_and_idempotent(self):
        rng = random.Random(13)
        for _ in range(100):
            preds = [pred(*_rect(rng), conf=round(rng.random(), 3),
                          cls=DetClass(rng.randint(0, 1)))
                     for _ in range(rng.randint(0, 8))]
            out = nms(preds, 0.5)
            assert set(map(id, out)) <= set(map(id, preds))
            assert nms(out, 0.5) == out
            confs = [p.confidence for p in out]
            assert confs == sorted(confs, reverse=True)

    def test_cluster_against_oracle(self):
        rng = random.Random(17)
        for _ in range(200):
            preds = [pred(*_rect(rng, span=8), conf=round(rng.random(), 3))
                     for _ in range(5)]
            got = nms(preds, 0.4)
            boxes = [((p.bbox.x_min, p.bbox.y_min, p.bbox.x_max, p.bbox.y_max), p.cls, p.confidence)
                     for p in preds]
            expected = [preds[i] for i in greedy_nms(boxes, 0.4)]
            assert got == expected


class TestConfusionMatrix:
    def test_all_correct_is_diagonal(self):
        labels = list(ClfClass) * 2
        m = confusion_matrix(labels, labels)
        assert m.total == 26
        assert np.all(m.counts == np.diag(np.diag(m.counts)))

    def test_empty(self):
        m = confusion_matrix([], [])
        assert m.total == 0
        assert not m.counts.any()

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length mismatch"):
            confusion_matrix([ClfClass.A], [])

    def test_hand_counted_fixture(self):
        rng = random.Random(23)
        classes = list(ClfClass)
        true = [rng.choice(classes) for _ in range(30)]
        predicted = [rng.choice(classes) for _ in range(30)]
        m = confusion_matrix(true, predicted)
        for i, ci in enumerate(m.classes):
            for j, cj in enumerate(m.classes):
                tally = sum(1 for t, p in zip(true, predicted) if t is ci and p is cj)
                assert m.counts[i, j] == tally
        assert m.counts.sum() == 30
        for i, ci in enumerate(m.classes):
            assert m.counts[i].sum() == sum(1 for t in true if t is ci)


class TestClassificationReport:
    def test_diagonal_perfect(self):
        labels = list(ClfClass)
        r = classification_report(confusion_matrix(labels, labels))
        assert r["accuracy"] == 1.0
        assert all(v["f1"] == 1.0 for v in r["per_class"].values())

    def test_half_correct_single_class(self):
        true = [ClfClass.A] * 4
        predicted = [ClfClass.A, ClfClass.A, ClfClass.B, ClfClass.B]
        r = classification_report(confusion_matrix(true, predicted))
        assert r["accuracy"] == 0.5

    def test_empty_matrix_error(self):
        with pytest.raises(ValueError, match="empty"):
            classification_report(confusion_matrix([], []))

    def test_undefined_ratios_flagged(self):
        # class B never true and never predicted
        true = [ClfClass.A, ClfClass.A]
        predicted = [ClfClass.A, ClfClass.A]
        r = classification_report(confusion_matrix(true, predicted))
        b = r["per_class"]["B"]
        assert b["precision"] == 0.0 and b["recall"] == 0.0
        assert set(b["undefined"]) == {"precision", "recall"}

    def test_matches_fraction_oracle(self):
        rng = random.Random(29)
        classes = list(ClfClass)
        for _ in range(100):
            n = rng.randint(1, 60)
            true = [rng.choice(classes) for _ in range(n)]
            predicted = [rng.choice(classes) for _ in range(n)]
            m = confusion_matrix(true, predicted)
            r = classification_report(m)
            accuracy, stats = classification_stats(
                [t.value for t in true], [p.value for p in predicted]
            )
            assert abs(r["accuracy"] - float(accuracy)) < 1e-12
            assert r["accuracy"] == np.trace(m.counts) / m.total
            for cls_value, (prec, rec, f1, support) in stats.items():
                got = r["per_class"][cls_value]
                assert abs(got["precision"] - float(prec)) < 1e-12
                assert abs(got["recall"] - float(rec)) < 1e-12
                assert abs(got["f1"] - float(f1)) < 1e-12
                assert got["support"] == support


@given(
    st.tuples(
        st.floats(0, 100), st.floats(0, 100),
        st.floats(0.1, 50), st.floats(0.1, 50),
    ),
    st.tuples(
        st.floats(0, 100), st.floats(0, 100),
        st.floats(0.1, 50), st.floats(0.1, 50),
    ),
)
@settings(max_examples=200, deadline=None)
def test_iou_hypothesis_properties(a, b):
    ba = BBox(a[0], a[1], a[0] + a[2], a[1] + a[3])
    bb = BBox(b[0], b[1], b[0] + b[2], b[1] + b[3])
    v = iou(ba, bb)
    assert 0.0 <= v <= 1.0
    assert v == iou(bb, ba)
    assert iou(ba, ba) == 1.0


def test_precision_recall_perfect():
    gts = [gt(0, 0, 10, 10)]
    preds = [pred(0, 0, 10, 10, 0.9)]
    assert precision_recall(preds, gts) == (1.0, 1.0)
