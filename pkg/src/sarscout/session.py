"""Multi-turn dialogue sessions: turn 0 is the opening image+guide exchange,
subsequent turns append strictly in order.

Detections and mode are computed once at session start and frozen for the
session's lifetime. Every turn resends the full verbatim history (dialogues
here are short; correctness over cost), with the image attached to turn 0's
user message. The scene block is re-attached to every user message by
default so each message stays self-contained; the flag is recorded in the
transcript so the choice is auditable. Transcripts are JSON documents in a
directory store; an in-memory store backs tests.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Protocol

from .detector import DetectionSet, DetectorBackend
from .errors import IntegrityError, InvalidArgumentError, NotFoundError
from .prompting import (
    MODES,
    WITH_BOXES,
    WITHOUT_BOXES,
    PromptBundle,
    SceneContext,
    TemplateSet,
    compose,
    turn_zero_guide,
)
from .vlm_client import ChatRequest, ImagePart, Message, TextPart, VlmClient, encode_image

__all__ = [
    "Turn",
    "ChatSession",
    "SessionStore",
    "InMemorySessionStore",
    "DirectorySessionStore",
    "SessionManager",
    "export_transcript",
    "import_transcript",
    "transcript_to_json",
    "recompose_transcript",
    "verify_transcript_replay",
]


@dataclass(frozen=True)
class Turn:
    """One completed exchange. user_text is the raw question; the composed
    bundle holds the exact prompt bytes that were sent."""

    index: int
    user_text: str
    composed: PromptBundle
    answer_text: str
    model_name: str
    latency_ms: int
    token_usage: dict | None = None


@dataclass(frozen=True)
class ChatSession:
    session_id: str
    created_at: str  # ISO-8601 UTC
    image_id: str
    image_w: int
    image_h: int
    detections: DetectionSet
    mode: str
    template_version: str
    scene_block_every_turn: bool
    turns: tuple[Turn, ...]

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise InvalidArgumentError(f"mode must be one of {MODES}")
        object.__setattr__(self, "turns", tuple(self.turns))
        for i, turn in enumerate(self.turns):
            if turn.index != i:
                raise IntegrityError(
                    f"turn indices must be 0..n-1 with no gaps; position {i} holds index {turn.index}"
                )

    def with_turn(self, turn: Turn) -> "ChatSession":
        return replace(self, turns=self.turns + (turn,))


class SessionStore(Protocol):
    def save(self, session: ChatSession, image_bytes: bytes | None = None) -> None: ...

    def load(self, session_id: str) -> ChatSession: ...

    def image_bytes(self, session_id: str) -> bytes: ...

    def list_ids(self) -> list[str]: ...


class InMemorySessionStore:
    def __init__(self):
        self._sessions: dict[str, ChatSession] = {}
        self._images: dict[str, bytes] = {}
        self._lock = threading.Lock()

    def save(self, session: ChatSession, image_bytes: bytes | None = None) -> None:
        with self._lock:
            self._sessions[session.session_id] = session
            if image_bytes is not None:
                self._images[session.session_id] = image_bytes

    def load(self, session_id: str) -> ChatSession:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise NotFoundError(f"unknown session {session_id!r}") from None

    def image_bytes(self, session_id: str) -> bytes:
        try:
            return self._images[session_id]
        except KeyError:
            raise NotFoundError(f"no stored image for session {session_id!r}") from None

    def list_ids(self) -> list[str]:
        return sorted(self._sessions)


class DirectorySessionStore:
    """One JSON transcript and one raw image file per session id."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _doc_path(self, session_id: str) -> Path:
        return self.directory / f"{session_id}.json"

    def _img_path(self, session_id: str) -> Path:
        return self.directory / f"{session_id}.img"

    def save(self, session: ChatSession, image_bytes: bytes | None = None) -> None:
        if image_bytes is not None:
            self._img_path(session.session_id).write_bytes(image_bytes)
        tmp = self._doc_path(session.session_id).with_suffix(".json.tmp")
        tmp.write_text(transcript_to_json(export_transcript(session)), encoding="utf-8")
        tmp.replace(self._doc_path(session.session_id))

    def load(self, session_id: str) -> ChatSession:
        path = self._doc_path(session_id)
        if not path.is_file():
            raise NotFoundError(f"unknown session {session_id!r}")
        return import_transcript(json.loads(path.read_text(encoding="utf-8")))

    def image_bytes(self, session_id: str) -> bytes:
        path = self._img_path(session_id)
        if not path.is_file():
            raise NotFoundError(f"no stored image for session {session_id!r}")
        return path.read_bytes()

    def list_ids(self) -> list[str]:
        return sorted(p.stem for p in self.directory.glob("*.json"))


# --- transcript serialization ----------------------------------------------


def export_transcript(session: ChatSession) -> dict:
    """Deterministic transcript document; key order is fixed by construction."""
    return {
        "session_id": session.session_id,
        "created_at": session.created_at,
        "image": {"id": session.image_id, "w": session.image_w, "h": session.image_h},
        "detector_name": session.detections.detector_name,
        "mode": session.mode,
        "template_version": session.template_version,
        "scene_block_every_turn": session.scene_block_every_turn,
        "detections": session.detections.to_dict(),
        "turns": [
            {
                "index": t.index,
                "user_text": t.user_text,
                "system_text": t.composed.system_text,
                "scene_block": t.composed.scene_block,
                "answer_text": t.answer_text,
                "model_name": t.model_name,
                "latency_ms": t.latency_ms,
                "token_usage": t.token_usage,
            }
            for t in session.turns
        ],
    }


def transcript_to_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def import_transcript(doc: dict) -> ChatSession:
    """Rebuild an equivalent session from a transcript (no live handles)."""
    try:
        detections = DetectionSet.from_dict(doc["detections"])
        turns = []
        for t in doc["turns"]:
            scene_block = t["scene_block"]
            turns.append(
                Turn(
                    index=t["index"],
                    user_text=t["user_text"],
                    composed=PromptBundle(
                        system_text=t["system_text"],
                        scene_block=scene_block,
                        user_text=t["user_text"],
                        boxes_included=bool(scene_block),
                        template_version=doc["template_version"],
                    ),
                    answer_text=t["answer_text"],
                    model_name=t["model_name"],
                    latency_ms=t["latency_ms"],
                    token_usage=t.get("token_usage"),
                )
            )
        return ChatSession(
            session_id=doc["session_id"],
            created_at=doc["created_at"],
            image_id=doc["image"]["id"],
            image_w=doc["image"]["w"],
            image_h=doc["image"]["h"],
            detections=detections,
            mode=doc["mode"],
            template_version=doc["template_version"],
            scene_block_every_turn=doc["scene_block_every_turn"],
            turns=tuple(turns),
        )
    except KeyError as exc:
        raise IntegrityError(f"transcript missing field {exc.args[0]!r}") from exc


def recompose_transcript(doc: dict, templates: TemplateSet) -> list[PromptBundle]:
    """Re-derive every turn's PromptBundle from the transcript's detections,
    mode, questions, and the given templates."""
    if templates.version != doc["template_version"]:
        raise IntegrityError(
            f"template version mismatch: transcript has {doc['template_version']!r}, "
            f"templates are {templates.version!r}"
        )
    detections = DetectionSet.from_dict(doc["detections"])
    ctx = SceneContext.from_detections(detections)
    bundles = []
    for t in doc["turns"]:
        turn_mode = doc["mode"]
        if t["index"] > 0 and not doc["scene_block_every_turn"]:
            turn_mode = WITHOUT_BOXES
        bundles.append(compose(ctx, t["user_text"], turn_mode, templates))
    return bundles


def verify_transcript_replay(doc: dict, templates: TemplateSet) -> None:
    """Raise IntegrityError unless recomposition reproduces the stored prompt
    bytes for every turn."""
    for t, bundle in zip(doc["turns"], recompose_transcript(doc, templates)):
        if bundle.system_text != t["system_text"]:
            raise IntegrityError(f"turn {t['index']}: system text drifted")
        if bundle.scene_block != t["scene_block"]:
            raise IntegrityError(f"turn {t['index']}: scene block drifted")


# --- orchestration ----------------------------------------------------------


def _iso_utc(epoch_s: float) -> str:
    return (
        datetime.fromtimestamp(epoch_s, tz=timezone.utc)
        .isoformat(timespec="seconds")
        .replace("+00:00", "Z")
    )


class SessionManager:
    """Owns the session lifecycle against a store, detector, and VLM client.

    Per-session turn processing is serialized by a session-level lock so
    turn indices form a contiguous range under concurrent asks; reads see
    only completed turns.
    """

    def __init__(
        self,
        store: SessionStore,
        detector: DetectorBackend,
        vlm: VlmClient,
        templates: TemplateSet,
        *,
        model_name: str | None = None,
        default_mode: str = WITH_BOXES,
        scene_block_every_turn: bool = True,
        conf_threshold: float | None = None,
        nms_threshold: float | None = None,
        max_image_bytes: int | None = None,
        request_timeout_ms: int | None = None,
        clock: Callable[[], float] = time.time,
        id_factory: Callable[[], str] | None = None,
    ):
        self.store = store
        self.detector = detector
        self.vlm = vlm
        self.templates = templates
        self.model_name = model_name or getattr(vlm, "model_name", "vlm")
        self.default_mode = default_mode
        self.scene_block_every_turn = scene_block_every_turn
        self.conf_threshold = conf_threshold
        self.nms_threshold = nms_threshold
        self.max_image_bytes = max_image_bytes
        self.request_timeout_ms = request_timeout_ms
        self.clock = clock
        self.id_factory = id_factory or (lambda: uuid.uuid4().hex[:12])
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _session_lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def _user_message(self, bundle: PromptBundle, image: ImagePart | None) -> Message:
        text = bundle.user_text
        if bundle.scene_block:
            text = f"{bundle.scene_block}\n\n{bundle.user_text}"
        parts: tuple[TextPart | ImagePart, ...] = (TextPart(text),)
        if image is not None:
            parts = (image, TextPart(text))
        return Message("user", parts)

    def _bundle_for_turn(self, session: ChatSession, question: str, index: int) -> PromptBundle:
        ctx = SceneContext.from_detections(session.detections)
        mode = session.mode
        if index > 0 and not session.scene_block_every_turn:
            mode = WITHOUT_BOXES
        return compose(ctx, question, mode, self.templates)

    def _chat(self, session: ChatSession, bundle: PromptBundle, image_bytes: bytes) -> tuple[str, int, dict | None]:
        """Send system + full prior history + the new user message."""
        image_part = encode_image(
            image_bytes,
            **({"max_bytes": self.max_image_bytes} if self.max_image_bytes else {}),
        )
        messages: list[Message] = [Message("system", (TextPart(bundle.system_text),))]
        for prior in session.turns:
            messages.append(self._user_message(prior.composed, image_part if prior.index == 0 else None))
            messages.append(Message("assistant", (TextPart(prior.answer_text),)))
        messages.append(self._user_message(bundle, image_part if not session.turns else None))
        extra = {"timeout_ms": self.request_timeout_ms} if self.request_timeout_ms else {}
        request = ChatRequest(model_name=self.model_name, messages=tuple(messages), **extra)
        started = self.clock()
        response = self.vlm.chat(request)
        latency_ms = int(round((self.clock() - started) * 1000))
        return response.answer_text, latency_ms, response.token_usage

    def start_session(
        self,
        image: bytes | str | Path,
        *,
        mode: str | None = None,
        image_id: str | None = None,
        opening_question: str | None = None,
    ) -> ChatSession:
        """Detect once, freeze detections, run turn 0, persist. A detector or
        VLM failure propagates and nothing is persisted."""
        mode = mode if mode is not None else self.default_mode
        if mode not in MODES:
            raise InvalidArgumentError(f"mode must be one of {MODES}")
        if isinstance(image, (str, Path)):
            image_bytes = Path(image).read_bytes()
            image_id = image_id or Path(image).stem
        else:
            image_bytes = image
            image_id = image_id or "upload"
        detections = self.detector.detect(
            image_bytes,
            image_id=image_id,
            conf_threshold=self.conf_threshold,
            nms_threshold=self.nms_threshold,
        )
        ctx = SceneContext.from_detections(detections)
        raw_question = (
            opening_question if opening_question is not None else self.templates.turn_zero
        ).strip()
        bundle = turn_zero_guide(ctx, mode, self.templates, question=raw_question)
        created_at = _iso_utc(self.clock())
        session = ChatSession(
            session_id=self.id_factory(),
            created_at=created_at,
            image_id=detections.image_id,
            image_w=detections.image_w,
            image_h=detections.image_h,
            detections=detections,
            mode=mode,
            template_version=self.templates.version,
            scene_block_every_turn=self.scene_block_every_turn,
            turns=(),
        )
        answer, latency_ms, usage = self._chat(session, bundle, image_bytes)
        session = session.with_turn(
            Turn(0, raw_question, bundle, answer, self.model_name, latency_ms, usage)
        )
        self.store.save(session, image_bytes=image_bytes)
        return session

    def ask(self, session_id: str, question: str) -> Turn:
        """Append one turn; on VLM failure the session is left unchanged."""
        lock = self._session_lock(session_id)
        with lock:
            session = self.store.load(session_id)
            index = len(session.turns)
            raw_question = question.strip()
            bundle = self._bundle_for_turn(session, raw_question, index)
            image_bytes = self.store.image_bytes(session_id)
            answer, latency_ms, usage = self._chat(session, bundle, image_bytes)
            turn = Turn(index, raw_question, bundle, answer, self.model_name, latency_ms, usage)
            self.store.save(session.with_turn(turn))
            return turn

    def get(self, session_id: str) -> ChatSession:
        return self.store.load(session_id)

    def export(self, session_id: str) -> dict:
        return export_transcript(self.store.load(session_id))
