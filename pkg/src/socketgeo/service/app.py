"""Case-oriented HTTP service exposing the socket-geolocation pipeline.

Endpoints: POST /cases; POST /cases/{id}/images (multipart); GET
/cases/{id}/findings; POST /cases/{id}/overrides; GET /cases/{id}/candidates;
GET /cases/{id}/report; GET /healthz. Images are processed asynchronously on
a bounded worker pool; all responses are derived from the persisted
(findings + overrides) state, so exports are reproducible.
"""

from __future__ import annotations

import io
import json
import logging
import uuid
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

from fastapi import Depends, FastAPI, File, Request, Response, UploadFile
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .. import geoloc
from ..ingest import country_display_name
from ..kb import KnowledgeBase, default_kb, is_valid_country_code
from ..pipeline import (
    ClassifierBackend,
    DetectorBackend,
    FindingStatus,
    ImageRef,
    PipelineConfig,
    crop,
    run_pipeline,
)
from .models import (
    CandidatesResponse,
    CandidateView,
    CaseResponse,
    CreateCaseRequest,
    FindingsPage,
    FindingView,
    JobStatusResponse,
    OverrideRequest,
    SubmitImagesResponse,
    TruthRequest,
)
from .storage import CaseStore, NotFound, effective_findings

logger = logging.getLogger(__name__)

REPORT_THRESHOLDS = (0.7, 0.8, 0.9)


def create_app(
    data_dir: str | Path,
    detector: DetectorBackend,
    classifier: ClassifierBackend,
    kb: KnowledgeBase | None = None,
    static_dir: str | Path | None = None,
    token: str | None = None,
    workers: int = 4,
) -> FastAPI:
    kb = kb or default_kb()
    store = CaseStore(data_dir)
    pool = ThreadPoolExecutor(max_workers=workers)

    async def require_token(request: Request):
        if token and request.headers.get("Authorization") != f"Bearer {token}":
            raise PermissionError("missing or invalid bearer token")

    app = FastAPI(title="socketgeo", dependencies=[Depends(require_token)])
    app.state.store = store
    app.state.kb = kb

    @app.exception_handler(NotFound)
    async def _not_found(request, exc):
        return JSONResponse(status_code=404, content={"code": "not_found", "message": str(exc), "detail": None})

    @app.exception_handler(ValueError)
    async def _bad_value(request, exc):
        return JSONResponse(status_code=422, content={"code": "invalid", "message": str(exc), "detail": None})

    @app.exception_handler(PermissionError)
    async def _forbidden(request, exc):
        return JSONResponse(status_code=401, content={"code": "unauthorized", "message": str(exc), "detail": None})

    def _case(case_id: str):
        return store.get_case(case_id)

    def _effective(case_id: str):
        case = _case(case_id)
        return case, effective_findings(
            store.findings(case_id), store.overrides(case_id), case.config
        )

    # --- health and shared data ------------------------------------------

    @app.get("/healthz")
    def healthz():
        return {
            "status": "ok",
            "kb_version": kb.version,
            "detector": detector.descriptor,
            "classifier": classifier.descriptor,
        }

    @app.get("/kb")
    def kb_view():
        return {
            "version": kb.version,
            "entries": {t.value: sorted(kb.countries_for(t)) for t in kb.entries},
        }

    @app.get("/boundaries")
    def boundaries():
        raw = resources.files("socketgeo.data").joinpath(
            "country_boundaries.geojson"
        ).read_bytes()
        return Response(content=raw, media_type="application/geo+json")

    # --- cases ------------------------------------------------------------

    @app.post("/cases", response_model=CaseResponse)
    def create_case(req: CreateCaseRequest):
        cfg = PipelineConfig(**req.config.model_dump())
        case = store.create_case(req.title, cfg, kb.version)
        return case.to_dict()

    @app.get("/cases/{case_id}", response_model=CaseResponse)
    def get_case(case_id: str):
        return _case(case_id).to_dict()

    # --- image submission and processing ---------------------------------

    def _process_image(case_id: str, image_id: str, cfg: PipelineConfig):
        store.set_image_status(case_id, image_id, "RUNNING")
        try:
            data = store.get_blob(store.image_sha(case_id, image_id))
            result = run_pipeline(
                [ImageRef(id=image_id, data=data)], detector, classifier, cfg
            )
            store.add_findings(case_id, result.findings, result.audit)
            if result.errors:
                store.set_image_status(
                    case_id, image_id, "DONE",
                    error=json.dumps(result.errors, sort_keys=True),
                )
            else:
                store.set_image_status(case_id, image_id, "DONE")
        except Exception as e:
            logger.exception("processing failed for %s/%s", case_id, image_id)
            store.set_image_status(case_id, image_id, "FAILED", error=str(e))

    @app.post("/cases/{case_id}/images", response_model=SubmitImagesResponse)
    async def submit_images(case_id: str, files: list[UploadFile] = File(...)):
        case = _case(case_id)
        job_id = uuid.uuid4().hex
        image_ids: list[str] = []
        reused: list[str] = []
        rejected: list[dict] = []
        for f in files:
            data = await f.read()
            try:
                from PIL import Image

                Image.open(io.BytesIO(data)).verify()
            except Exception as e:
                rejected.append({"filename": f.filename, "error": f"unreadable image: {e}"})
                continue
            image_id, is_new = store.register_image(case_id, data, job_id)
            if is_new:
                image_ids.append(image_id)
                pool.submit(_process_image, case_id, image_id, case.config)
            else:
                reused.append(image_id)
        return SubmitImagesResponse(
            job_id=job_id, image_ids=image_ids, reused=reused, rejected=rejected
        )

    @app.get("/cases/{case_id}/jobs/{job_id}", response_model=JobStatusResponse)
    def job_status(case_id: str, job_id: str):
        _case(case_id)
        images = store.job_status(case_id, job_id)
        done = all(i["status"] in ("DONE", "FAILED") for i in images)
        return JobStatusResponse(job_id=job_id, images=images, done=done)

    # --- findings ---------------------------------------------------------

    def _finding_view(case_id: str, f, overridden: set[str]) -> FindingView:
        d = f.to_dict()
        return FindingView(
            **d,
            overridden=f.finding_id in overridden,
            crop_url=f"/cases/{case_id}/findings/{f.finding_id}/crop",
        )

    @app.get("/cases/{case_id}/findings", response_model=FindingsPage)
    def list_findings(
        case_id: str, status: str | None = None, page: int = 1, page_size: int = 50
    ):
        if page < 1 or page_size < 1:
            raise ValueError("page and page_size must be >= 1")
        _, findings = _effective(case_id)
        overridden = {o["finding_id"] for o in store.overrides(case_id)}
        if status:
            wanted = FindingStatus(status)
            findings = [f for f in findings if f.status is wanted]
        findings.sort(key=lambda f: f.finding_id)
        start = (page - 1) * page_size
        items = [
            _finding_view(case_id, f, overridden)
            for f in findings[start:start + page_size]
        ]
        return FindingsPage(items=items, page=page, page_size=page_size, total=len(findings))

    @app.get("/cases/{case_id}/findings/{finding_id}/crop")
    def finding_crop(case_id: str, finding_id: str):
        case, findings = _effective(case_id)
        match = [f for f in findings if f.finding_id == finding_id]
        if not match:
            raise NotFound(f"finding {finding_id}")
        f = match[0]
        data = store.get_blob(store.image_sha(case_id, f.image_id))
        from PIL import Image

        img = Image.open(io.BytesIO(data)).convert("RGB")
        roi = crop(img, f.bbox, case.config.crop_pad_fraction)
        buf = io.BytesIO()
        roi.save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    # --- overrides --------------------------------------------------------

    @app.post("/cases/{case_id}/overrides")
    def add_override(case_id: str, req: OverrideRequest):
        _case(case_id)
        record = store.add_override(
            case_id, req.finding_id, req.action, req.set_class, req.actor
        )
        _, findings = _effective(case_id)
        view = [f.to_dict() for f in findings if f.finding_id == req.finding_id]
        return {"override": record, "finding": view[0] if view else None}

    @app.get("/cases/{case_id}/overrides")
    def list_overrides(case_id: str):
        _case(case_id)
        return {"overrides": store.overrides(case_id)}

    # --- truth (optional, enables sweep rows in reports) ------------------

    @app.post("/cases/{case_id}/truth")
    def set_truth(case_id: str, req: TruthRequest):
        _case(case_id)
        bad = [c for c in req.truth.values() if not is_valid_country_code(c)]
        if bad:
            raise ValueError(f"invalid country codes: {sorted(set(bad))}")
        store.set_truth(case_id, req.truth)
        return {"count": len(req.truth)}

    # --- candidates and report -------------------------------------------

    def _candidates(case_id: str, threshold: float) -> list[CandidateView]:
        _, findings = _effective(case_id)
        ranked = geoloc.rank_candidates(kb, findings, threshold)
        return [
            CandidateView(
                country=c.country,
                country_name=country_display_name(c.country),
                score=c.score,
                supporting=list(c.supporting),
                intersection=c.intersection,
            )
            for c in ranked
        ]

    @app.get("/cases/{case_id}/candidates", response_model=CandidatesResponse)
    def get_candidates(case_id: str, threshold: float = 0.7):
        _case(case_id)
        if not (0.0 <= threshold <= 1.0):
            raise ValueError(f"threshold out of range: {threshold}")
        return CandidatesResponse(
            threshold=threshold, candidates=_candidates(case_id, threshold)
        )

    @app.get("/cases/{case_id}/report")
    def export_report(case_id: str):
        case, findings = _effective(case_id)
        thresholds = sorted({case.config.clf_threshold, *REPORT_THRESHOLDS})
        truth = store.truth(case_id)
        sweep_rows = (
            [r.to_dict() for r in geoloc.threshold_sweep(findings, truth, kb, thresholds)]
            if truth else []
        )
        report = {
            "case": case.to_dict(),
            "kb_version": case.kb_version,
            "backends": {"detector": detector.descriptor, "classifier": classifier.descriptor},
            "findings": [f.to_dict() for f in findings],
            "overrides": store.overrides(case_id),
            "candidates": {
                str(t): [c.model_dump() for c in _candidates(case_id, t)]
                for t in thresholds
            },
            "sweep_rows": sweep_rows,
        }
        payload = json.dumps(report, sort_keys=True, indent=1).encode()
        return Response(content=payload, media_type="application/json")

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
