"""Pydantic request/response models for the case service API."""

from __future__ import annotations

from pydantic import BaseModel, Field


class PipelineConfigModel(BaseModel):
    det_conf_min: float = Field(default=0.25, ge=0.0, le=1.0)
    clf_threshold: float = Field(default=0.70, ge=0.0, le=1.0)
    crop_pad_fraction: float = Field(default=0.10, ge=0.0)
    nms_iou: float = Field(default=0.50, gt=0.0, le=1.0)


class CreateCaseRequest(BaseModel):
    title: str
    config: PipelineConfigModel = PipelineConfigModel()


class CaseResponse(BaseModel):
    case_id: str
    title: str
    created_at: str
    config: PipelineConfigModel
    kb_version: str


class SubmitImagesResponse(BaseModel):
    job_id: str
    image_ids: list[str]
    reused: list[str]
    rejected: list[dict]


class JobStatusResponse(BaseModel):
    job_id: str
    images: list[dict]
    done: bool


class FindingView(BaseModel):
    finding_id: str
    image_id: str
    bbox: list[float]
    det_conf: float
    probs: dict[str, float]
    top_class: str
    top_prob: float
    status: str
    overridden: bool
    crop_url: str


class FindingsPage(BaseModel):
    items: list[FindingView]
    page: int
    page_size: int
    total: int


class OverrideRequest(BaseModel):
    finding_id: str
    action: str  # MARK_NOISE | SET_CLASS | RESTORE
    set_class: str | None = None
    actor: str = "anonymous"


class CandidateView(BaseModel):
    country: str
    country_name: str
    score: float
    supporting: list[str]
    intersection: bool


class CandidatesResponse(BaseModel):
    threshold: float
    candidates: list[CandidateView]


class TruthRequest(BaseModel):
    truth: dict[str, str]  # image_id -> alpha-2 country code


class ErrorResponse(BaseModel):
    code: str
    message: str
    detail: str | None = None
