"""Composite-text construction: detections fused with the user's question.

The scene block is a deterministic rendering of a detection set — header
with the coordinate convention and image size, then one line per ship with
integer pixel corners, size, and confidence to two decimals. Templates live
as external text files so prompt wording can be revised without code
changes; bundles record the template version for replay.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .detector import DetectionSet
from .errors import InvalidArgumentError
from .geometry import PixelBox

__all__ = [
    "WITH_BOXES",
    "WITHOUT_BOXES",
    "MODES",
    "SceneContext",
    "PromptBundle",
    "TemplateSet",
    "load_templates",
    "render_scene_block",
    "render_box_tuple",
    "compose",
    "turn_zero_guide",
]

WITH_BOXES = "with_boxes"
WITHOUT_BOXES = "without_boxes"
MODES = (WITH_BOXES, WITHOUT_BOXES)

_TEMPLATE_FILES = ("system", "scene", "ship_line", "turn_zero", "user")


@dataclass(frozen=True)
class SceneContext:
    """What the detector saw: dimensions, count, and the boxes themselves."""

    image_w: int
    image_h: int
    ship_count: int
    detections: tuple[PixelBox, ...]
    detector_name: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "detections", tuple(self.detections))
        if self.ship_count != len(self.detections):
            raise InvalidArgumentError(
                f"ship_count {self.ship_count} != {len(self.detections)} detections"
            )

    @classmethod
    def from_detections(cls, ds: DetectionSet) -> "SceneContext":
        return cls(ds.image_w, ds.image_h, len(ds.boxes), ds.boxes, ds.detector_name)


@dataclass(frozen=True)
class PromptBundle:
    """One composed prompt: role text, optional scene block, user text."""

    system_text: str
    scene_block: str
    user_text: str
    boxes_included: bool
    template_version: str

    def __post_init__(self) -> None:
        if not self.boxes_included and self.scene_block:
            raise InvalidArgumentError("scene_block must be empty when boxes are excluded")


@dataclass(frozen=True)
class TemplateSet:
    system: str
    scene: str
    ship_line: str
    turn_zero: str
    user: str
    version: str


def _version_of(texts: dict[str, str]) -> str:
    digest = hashlib.sha256()
    for name in _TEMPLATE_FILES:
        digest.update(texts[name].encode("utf-8"))
    return digest.hexdigest()[:8]


def load_templates(template_dir: str | Path | None = None) -> TemplateSet:
    """Load templates from a directory, or the packaged defaults when None.

    The directory holds system.txt, scene.txt, ship_line.txt, turn_zero.txt
    and user.txt (UTF-8); an optional VERSION file names the set, otherwise
    a content hash is used.
    """
    texts: dict[str, str] = {}
    if template_dir is None:
        root = resources.files("sarscout") / "templates"
        for name in _TEMPLATE_FILES:
            texts[name] = (root / f"{name}.txt").read_text(encoding="utf-8")
        version = (root / "VERSION").read_text(encoding="utf-8").strip()
    else:
        root = Path(template_dir)
        for name in _TEMPLATE_FILES:
            path = root / f"{name}.txt"
            if not path.is_file():
                raise InvalidArgumentError(f"missing template file: {path}")
            texts[name] = path.read_text(encoding="utf-8")
        version_file = root / "VERSION"
        version = (
            version_file.read_text(encoding="utf-8").strip()
            if version_file.is_file()
            else _version_of(texts)
        )
    return TemplateSet(
        system=texts["system"].strip(),
        scene=texts["scene"],
        ship_line=texts["ship_line"].strip(),
        turn_zero=texts["turn_zero"].strip(),
        user=texts["user"].strip(),
        version=version,
    )


def render_box_tuple(box: PixelBox) -> str:
    """The integer-rounded corner tuple exactly as it appears in prompts."""
    return f"({round(box.x1)},{round(box.y1)},{round(box.x2)},{round(box.y2)})"


def render_scene_block(ctx: SceneContext, templates: TemplateSet) -> str:
    """Deterministic scene-context text: one line per detection, ordered by
    confidence descending then index, corners as integer pixels and
    confidence to two decimals."""
    ordered = sorted(
        range(len(ctx.detections)), key=lambda i: (-ctx.detections[i].confidence, i)
    )
    lines = []
    for rank, i in enumerate(ordered, start=1):
        b = ctx.detections[i]
        x1, y1, x2, y2 = round(b.x1), round(b.y1), round(b.x2), round(b.y2)
        lines.append(
            templates.ship_line.format(
                index=rank,
                x1=x1, y1=y1, x2=x2, y2=y2,
                width=x2 - x1, height=y2 - y1,
                confidence=f"{b.confidence:.2f}",
            )
        )
    return templates.scene.format(
        detector_name=ctx.detector_name,
        image_w=ctx.image_w,
        image_h=ctx.image_h,
        ship_count=ctx.ship_count,
        ship_lines="\n".join(lines),
    ).strip()


def compose(
    ctx: SceneContext,
    question: str,
    mode: str,
    templates: TemplateSet,
) -> PromptBundle:
    """Fuse the scene context (in with_boxes mode) with a user question."""
    if mode not in MODES:
        raise InvalidArgumentError(f"mode must be one of {MODES}, got {mode!r}")
    question = question.strip()
    if not question:
        raise InvalidArgumentError("question must be non-empty")
    scene_block = render_scene_block(ctx, templates) if mode == WITH_BOXES else ""
    return PromptBundle(
        system_text=templates.system,
        scene_block=scene_block,
        user_text=templates.user.format(question=question),
        boxes_included=mode == WITH_BOXES,
        template_version=templates.version,
    )


def turn_zero_guide(
    ctx: SceneContext,
    mode: str,
    templates: TemplateSet,
    question: str | None = None,
) -> PromptBundle:
    """The fixed opening exchange: scene description guide plus the image."""
    return compose(ctx, question if question is not None else templates.turn_zero, mode, templates)
