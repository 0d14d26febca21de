import io
import json

import pytest
from PIL import Image

from socketgeo.kb import ClfClass, DetClass
from socketgeo.pipeline import (
    CLF_CLASSES,
    CropContext,
    FindingStatus,
    ImageRef,
    PipelineConfig,
    SocketFinding,
    StubClassifier,
    StubDetector,
    apply_threshold,
    crop,
    finding_status,
    load_backend_config,
    make_finding,
    padded_box_size,
    run_pipeline,
)
from socketgeo.vision_eval import BBox, PredictionBox


def _png_bytes(img: Image.Image) -> bytes:
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def _one_hot(cls: ClfClass, top: float = 0.9) -> tuple[float, ...]:
    rest = (1.0 - top) / (len(CLF_CLASSES) - 1)
    return tuple(top if c is cls else rest for c in CLF_CLASSES)


CFG = PipelineConfig()


class TestConfig:
    def test_defaults(self):
        assert CFG.det_conf_min == 0.25
        assert CFG.clf_threshold == 0.70
        assert CFG.crop_pad_fraction == 0.10
        assert CFG.nms_iou == 0.50

    def test_round_trip(self):
        cfg = PipelineConfig(det_conf_min=0.3, clf_threshold=0.8)
        assert PipelineConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"det_conf_min": 1.5},
            {"clf_threshold": -0.1},
            {"crop_pad_fraction": -0.01},
            {"nms_iou": 0.0},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            PipelineConfig(**kwargs)


class TestStatus:
    def test_pure_function(self):
        assert finding_status(ClfClass.G, 0.95, CFG) is FindingStatus.VALID
        assert finding_status(ClfClass.G, 0.69, CFG) is FindingStatus.BELOW_THRESHOLD
        assert finding_status(ClfClass.G, 0.70, CFG) is FindingStatus.VALID
        assert finding_status(ClfClass.NOISE, 0.99, CFG) is FindingStatus.NOISE
        # NOISE wins even below threshold
        assert finding_status(ClfClass.NOISE, 0.1, CFG) is FindingStatus.NOISE

    def test_make_finding_simplex(self):
        box = BBox(0, 0, 10, 10)
        with pytest.raises(ValueError, match="simplex"):
            make_finding("f", "i", box, 0.9, (0.5,) * 13, CFG)
        with pytest.raises(ValueError, match="expected 13"):
            make_finding("f", "i", box, 0.9, (1.0,), CFG)

    def test_argmax_tie_lowest_index(self):
        box = BBox(0, 0, 10, 10)
        probs = [0.0] * 13
        probs[2] = 0.5
        probs[5] = 0.5
        f = make_finding("f", "i", box, 0.9, tuple(probs), CFG)
        assert f.top_class is CLF_CLASSES[2]

    def test_finding_round_trip(self):
        f = make_finding("i:0", "i", BBox(1, 2, 3, 4), 0.8, _one_hot(ClfClass.F), CFG)
        f2 = SocketFinding.from_dict(json.loads(json.dumps(f.to_dict())))
        assert f2 == f


class TestCrop:
    def test_reference_geometry(self, make_image):
        # 130x87 box, 10% pad per side -> 156x105 crop after rounding
        img = make_image(500, 400)
        box = BBox(100, 100, 230, 187)
        out = crop(img, box, 0.1)
        assert out.size == (156, 105)
        w, h = padded_box_size(box, 0.1)
        assert (round(w), round(h)) == (156, 104)  # pre-rounding width/height

    def test_clamped_at_edges(self, make_image):
        img = make_image(100, 100)
        out = crop(img, BBox(0, 0, 50, 50), 0.2)
        assert out.size == (60, 60)

    def test_disjoint_box_rejected(self, make_image):
        with pytest.raises(ValueError, match="does not intersect"):
            crop(make_image(50, 50), BBox(60, 60, 70, 70), 0.1)

    def test_zero_pad_exact(self, make_image):
        out = crop(make_image(100, 100), BBox(10, 20, 30, 50), 0.0)
        assert out.size == (20, 30)


def _detector_for(images, boxes_per_image):
    annotations = {}
    for ref in images:
        annotations[ref.id] = [
            PredictionBox(bbox=b, cls=c, confidence=conf, image_id=ref.id)
            for b, c, conf in boxes_per_image.get(ref.id, [])
        ]
    return StubDetector(annotations)


class TestRunPipeline:
    @pytest.fixture
    def one_image(self, make_image):
        return [ImageRef(id="img1", data=_png_bytes(make_image(200, 150, seed=1)))]

    def test_single_valid_finding(self, one_image):
        det = _detector_for(one_image, {"img1": [(BBox(20, 20, 120, 100), DetClass.SOCKET, 0.9)]})
        clf = StubClassifier({("img1", 0): ClfClass.G}, top_prob=0.95)
        result = run_pipeline(one_image, det, clf, CFG)
        assert len(result.findings) == 1
        f = result.findings[0]
        assert f.finding_id == "img1:0"
        assert f.top_class is ClfClass.G
        assert f.top_prob == pytest.approx(0.95)
        assert f.status is FindingStatus.VALID
        assert result.counts == {
            "detections": 1, "na_filtered": 0, "dropped_det_conf": 0,
            "nms_suppressed": 0, "findings": 1,
        }

    def test_funnel_conservation(self, one_image):
        boxes = [
            (BBox(0, 0, 50, 50), DetClass.NA_SWITCHBOARD, 0.9),   # NA filtered
            (BBox(20, 20, 120, 100), DetClass.SOCKET, 0.9),       # kept
            (BBox(22, 22, 122, 102), DetClass.SOCKET, 0.8),       # NMS suppressed
            (BBox(150, 100, 190, 140), DetClass.SOCKET, 0.1),     # below det floor
        ]
        det = _detector_for(one_image, {"img1": boxes})
        clf = StubClassifier({}, default_label=ClfClass.C, top_prob=0.9)
        result = run_pipeline(one_image, det, clf, CFG)
        c = result.counts
        assert c["detections"] == 4
        assert c["na_filtered"] == 1
        assert c["dropped_det_conf"] == 1
        assert c["nms_suppressed"] == 1
        assert c["findings"] == 1
        assert (
            c["detections"]
            == c["na_filtered"] + c["dropped_det_conf"] + c["nms_suppressed"] + c["findings"]
        )
        outcomes = [r["outcome"] for r in result.audit]
        assert outcomes == ["NA_FILTERED", "VALID", "NMS_SUPPRESSED", "DROPPED_DET_CONF"]

    def test_noise_and_below_threshold_status(self, one_image):
        boxes = [
            (BBox(10, 10, 60, 60), DetClass.SOCKET, 0.9),
            (BBox(100, 80, 160, 130), DetClass.SOCKET, 0.8),
        ]
        det = _detector_for(one_image, {"img1": boxes})
        clf = StubClassifier({("img1", 0): ClfClass.NOISE, ("img1", 1): ClfClass.F}, top_prob=0.95)
        clf._per_crop_prob[("img1", 1)] = 0.5
        result = run_pipeline(one_image, det, clf, CFG)
        statuses = {f.finding_id: f.status for f in result.findings}
        assert statuses == {
            "img1:0": FindingStatus.NOISE,
            "img1:1": FindingStatus.BELOW_THRESHOLD,
        }

    def test_classifier_error_becomes_record(self, one_image):
        det = _detector_for(one_image, {"img1": [(BBox(10, 10, 60, 60), DetClass.SOCKET, 0.9)]})
        clf = StubClassifier({})  # no label, no default: raises per crop
        result = run_pipeline(one_image, det, clf, CFG)
        assert result.findings == []
        assert len(result.errors) == 1
        assert result.errors[0]["stage"] == "classify"
        assert result.audit[0]["outcome"] == "ERROR"

    def test_detector_error_becomes_record(self, one_image):
        class Boom:
            descriptor = "boom/1"

            def detect(self, image):
                raise RuntimeError("backend down")

        clf = StubClassifier({}, default_label=ClfClass.A)
        result = run_pipeline(one_image, Boom(), clf, CFG)
        assert result.findings == []
        assert result.errors[0]["stage"] == "detect"

    def test_unreadable_image_is_record_not_crash(self):
        images = [ImageRef(id="bad", data=b"not an image")]
        det = StubDetector({}, default=[(BBox(0, 0, 10, 10), DetClass.SOCKET, 0.9)])
        clf = StubClassifier({}, default_label=ClfClass.A)
        result = run_pipeline(images, det, clf, CFG)
        assert result.findings == []
        assert len(result.errors) == 1

    def test_deterministic_and_parallel_equivalent(self, make_image):
        images = [
            ImageRef(id=f"img{i}", data=_png_bytes(make_image(120, 90, seed=i)))
            for i in range(6)
        ]
        boxes = {
            ref.id: [(BBox(10, 10, 70, 60), DetClass.SOCKET, 0.9),
                     (BBox(60, 30, 110, 80), DetClass.SOCKET, 0.7)]
            for ref in images
        }
        det = _detector_for(images, boxes)
        clf = StubClassifier({}, default_label=ClfClass.C, top_prob=0.9, noise_eps=0.1, seed=5)
        r1 = run_pipeline(images, det, clf, CFG)
        r2 = run_pipeline(images, det, clf, CFG, jobs=4)
        assert r1.findings == r2.findings
        assert r1.counts == r2.counts
        assert r1.audit == r2.audit

    def test_findings_sorted(self, make_image):
        images = [
            ImageRef(id=name, data=_png_bytes(make_image(120, 90)))
            for name in ("b", "a")
        ]
        boxes = {
            "a": [(BBox(10, 10, 50, 50), DetClass.SOCKET, 0.6),
                  (BBox(60, 10, 100, 50), DetClass.SOCKET, 0.9)],
            "b": [(BBox(10, 10, 50, 50), DetClass.SOCKET, 0.8)],
        }
        det = _detector_for(images, boxes)
        clf = StubClassifier({}, default_label=ClfClass.A, top_prob=0.9)
        result = run_pipeline(images, det, clf, CFG)
        assert [f.finding_id for f in result.findings] == ["a:1", "a:0", "b:0"]


class TestApplyThreshold:
    def _findings(self, probs):
        return [
            make_finding(f"i:{k}", "i", BBox(0, 0, 10, 10), 0.9, _one_hot(ClfClass.G, p), CFG)
            for k, p in enumerate(probs)
        ]

    def test_strict_vs_inclusive(self):
        fs = self._findings([0.80, 0.90])
        assert len(apply_threshold(fs, 0.80, "strict")) == 1
        assert len(apply_threshold(fs, 0.80, "inclusive")) == 2

    def test_monotone_in_threshold(self):
        fs = self._findings([0.72, 0.75, 0.81, 0.88, 0.93, 0.99])
        sizes = [len(apply_threshold(fs, t)) for t in (0.0, 0.3, 0.7, 0.8, 0.9, 1.0)]
        assert sizes == sorted(sizes, reverse=True)

    def test_excludes_non_valid(self):
        noise = make_finding("i:9", "i", BBox(0, 0, 10, 10), 0.9, _one_hot(ClfClass.NOISE, 0.99), CFG)
        assert apply_threshold([noise], 0.0) == []

    def test_validation(self):
        with pytest.raises(ValueError, match="threshold"):
            apply_threshold([], 1.5)
        with pytest.raises(ValueError, match="comparator"):
            apply_threshold([], 0.5, "fuzzy")


class TestBackendConfig:
    def test_stub_round_trip(self, tmp_path, make_image):
        (tmp_path / "det.csv").write_text(
            "image_id,class_id,x_min,y_min,x_max,y_max,confidence\n"
            "img1,1,10,10,60,60,0.9\n"
        )
        (tmp_path / "clf.csv").write_text("image_id,det_index,label,top_prob\nimg1,0,G,0.95\n")
        (tmp_path / "det.json").write_text(json.dumps({"kind": "stub", "annotations": "det.csv"}))
        (tmp_path / "clf.json").write_text(json.dumps({"kind": "stub", "labels": "clf.csv"}))
        det = load_backend_config(tmp_path / "det.json")
        clf = load_backend_config(tmp_path / "clf.json")
        images = [ImageRef(id="img1", data=_png_bytes(make_image(100, 100)))]
        result = run_pipeline(images, det, clf, CFG)
        assert len(result.findings) == 1
        assert result.findings[0].top_class is ClfClass.G
        assert result.findings[0].top_prob == pytest.approx(0.95)

    def test_unknown_kind(self, tmp_path):
        p = tmp_path / "b.json"
        p.write_text(json.dumps({"kind": "mystery"}))
        with pytest.raises(ValueError, match="unknown backend kind"):
            load_backend_config(p)


class TestStubClassifier:
    def test_per_instance_prob_table(self):
        # regression: the per-crop override table must not be shared
        a = StubClassifier({("i", 0): ClfClass.A})
        b = StubClassifier({("i", 0): ClfClass.A})
        a._per_crop_prob[("i", 0)] = 0.5
        assert ("i", 0) not in b._per_crop_prob

    def test_noise_eps_keeps_label_on_top(self, make_image):
        clf = StubClassifier({}, default_label=ClfClass.K, top_prob=0.4, noise_eps=0.3, seed=2)
        img = make_image(20, 20)
        for i in range(50):
            probs = clf.classify(img, CropContext("img", BBox(0, 0, 5, 5), i))
            assert sum(probs) == pytest.approx(1.0)
            top = max(range(13), key=probs.__getitem__)
            assert CLF_CLASSES[top] is ClfClass.K
