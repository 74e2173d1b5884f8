"""Pydantic request/response models for the HTTP API.

These mirror the package's domain types one-to-one; every 2xx body the
service emits validates against one of them, and /v1/schema publishes the
JSON Schemas for client codegen.
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field

from ..detector import DetectionSet
from ..session import ChatSession, Turn


class BoxModel(BaseModel):
    x1: float
    y1: float
    x2: float
    y2: float
    confidence: float = Field(ge=0.0, le=1.0)
    class_id: int = 0


class DetectionSetModel(BaseModel):
    image_id: str
    image_w: int
    image_h: int
    detector_name: str
    conf_threshold: float
    nms_threshold: float
    boxes: list[BoxModel]

    @classmethod
    def from_domain(cls, ds: DetectionSet) -> "DetectionSetModel":
        return cls.model_validate(ds.to_dict())


class TurnModel(BaseModel):
    index: int
    user_text: str
    system_text: str
    scene_block: str
    answer_text: str
    model_name: str
    latency_ms: int
    token_usage: dict | None = None

    @classmethod
    def from_domain(cls, turn: Turn) -> "TurnModel":
        return cls(
            index=turn.index,
            user_text=turn.user_text,
            system_text=turn.composed.system_text,
            scene_block=turn.composed.scene_block,
            answer_text=turn.answer_text,
            model_name=turn.model_name,
            latency_ms=turn.latency_ms,
            token_usage=turn.token_usage,
        )


class ImageInfoModel(BaseModel):
    id: str
    w: int
    h: int


class SessionCreatedModel(BaseModel):
    session_id: str
    turn0: TurnModel

    @classmethod
    def from_domain(cls, session: ChatSession) -> "SessionCreatedModel":
        return cls(session_id=session.session_id, turn0=TurnModel.from_domain(session.turns[0]))


class TranscriptModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    session_id: str
    created_at: str
    image: ImageInfoModel
    detector_name: str
    mode: str
    template_version: str
    scene_block_every_turn: bool
    detections: DetectionSetModel
    turns: list[TurnModel]


class AskRequestModel(BaseModel):
    question: str


class RegionModel(BaseModel):
    x_min: float | None
    x_max: float | None
    y_min: float | None
    y_max: float | None
    kind: str
    source_span: list[int]


class GroundingScoreModel(BaseModel):
    regions: int
    boxes_covered: int
    coverage: float
    spurious_area_ratio: float
    no_reference: bool


class GroundingReportModel(BaseModel):
    session_id: str
    turn_index: int
    regions: list[RegionModel]
    score: GroundingScoreModel


class HealthModel(BaseModel):
    status: str = "ok"


class ErrorDetailModel(BaseModel):
    type: str
    message: str


class ErrorModel(BaseModel):
    error: ErrorDetailModel


SCHEMA_INDEX = {
    "SessionCreated": SessionCreatedModel,
    "Turn": TurnModel,
    "Transcript": TranscriptModel,
    "DetectionSet": DetectionSetModel,
    "GroundingReport": GroundingReportModel,
    "Health": HealthModel,
    "Error": ErrorModel,
}
