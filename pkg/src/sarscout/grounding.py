"""Verify coordinates cited in model answers against detector boxes.

Answers mention coordinates three ways this module recognizes: axis ranges
("x: 100-300", "x from 100 to 300", "x between 100 and 300"), coordinate
pairs "(120, 340)", and 4-tuples "(x1, y1, x2, y2)". Parsing runs a small
tokenizer and pattern grammar per sentence; an x-range and a y-range in the
same sentence merge into one region. Anything outside the grammar is
reported as unparsed rather than guessed, and parsing never raises.

Coverage is center containment: a range region covers a reference box iff
the box center lies inside it; a point covers a box iff the point lies
inside the box.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from PIL import Image, ImageDraw, UnidentifiedImageError

from .errors import InputError, InvalidArgumentError
from .geometry import PixelBox

__all__ = [
    "AnswerRegion",
    "GroundingScore",
    "OverlayStyle",
    "extract_regions",
    "score_grounding",
    "render_overlay",
    "grounding_report",
]


@dataclass(frozen=True)
class AnswerRegion:
    """Coordinate span parsed from an answer. A None bound means the answer
    constrained only the other axis. source_span indexes the answer text."""

    x_min: float | None
    x_max: float | None
    y_min: float | None
    y_max: float | None
    kind: str  # "range" | "point"
    source_span: tuple[int, int]

    def __post_init__(self) -> None:
        if self.kind not in ("range", "point"):
            raise InvalidArgumentError(f"kind must be 'range' or 'point', got {self.kind!r}")
        if self.x_min is not None and self.x_max is not None and self.x_min > self.x_max:
            raise InvalidArgumentError("x_min > x_max")
        if self.y_min is not None and self.y_max is not None and self.y_min > self.y_max:
            raise InvalidArgumentError("y_min > y_max")

    def bounds_key(self) -> tuple:
        return (self.kind, self.x_min, self.x_max, self.y_min, self.y_max)

    def to_dict(self) -> dict:
        return {
            "x_min": self.x_min, "x_max": self.x_max,
            "y_min": self.y_min, "y_max": self.y_max,
            "kind": self.kind, "source_span": list(self.source_span),
        }


@dataclass(frozen=True)
class GroundingScore:
    regions: int
    boxes_covered: int
    coverage: float
    spurious_area_ratio: float
    no_reference: bool = False

    def to_dict(self) -> dict:
        return {
            "regions": self.regions,
            "boxes_covered": self.boxes_covered,
            "coverage": self.coverage,
            "spurious_area_ratio": self.spurious_area_ratio,
            "no_reference": self.no_reference,
        }


# --- tokenizer --------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"(?P<NUM>\d+(?:\.\d+)?)|(?P<WORD>[A-Za-z]+)|(?P<PUNCT>[(),:=])|(?P<DASH>[-–—])|(?P<END>[.;!?\n])"
)

_FILLERS = {
    "coordinate", "coordinates", "value", "values", "range", "ranges", "ranging",
    "axis", "position", "positions", "is", "are", "lies", "lie", "span", "spans",
    "spanning", "roughly", "approximately", "about", "around", "of", "in", "the",
}


@dataclass(frozen=True)
class _Token:
    kind: str  # NUM | WORD | LPAREN | RPAREN | COMMA | COLON | EQUALS | DASH
    text: str
    start: int
    end: int


def _tokenize_sentences(text: str) -> list[list[_Token]]:
    sentences: list[list[_Token]] = [[]]
    punct_kinds = {"(": "LPAREN", ")": "RPAREN", ",": "COMMA", ":": "COLON", "=": "EQUALS"}
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        if kind == "END":
            if sentences[-1]:
                sentences.append([])
            continue
        if kind == "PUNCT":
            kind = punct_kinds[m.group()]
        sentences[-1].append(_Token(kind, m.group(), m.start(), m.end()))
    return [s for s in sentences if s]


# --- grammar ----------------------------------------------------------------


def _match_tuple(tokens: Sequence[_Token], i: int):
    """LPAREN NUM COMMA NUM (COMMA NUM COMMA NUM)? RPAREN -> (values, span, next_i)."""
    if tokens[i].kind != "LPAREN":
        return None
    values: list[float] = []
    j = i + 1
    expect_num = True
    while j < len(tokens):
        tok = tokens[j]
        if expect_num:
            if tok.kind != "NUM":
                return None
            values.append(float(tok.text))
            expect_num = False
        else:
            if tok.kind == "COMMA":
                expect_num = True
            elif tok.kind == "RPAREN":
                if len(values) in (2, 4):
                    return values, (tokens[i].start, tok.end), j + 1
                return None
            else:
                return None
        j += 1
    return None


def _match_axis_range(tokens: Sequence[_Token], i: int):
    """AXIS filler* range-expr -> (axis, lo, hi, span, next_i)."""
    tok = tokens[i]
    if tok.kind != "WORD" or tok.text.lower() not in ("x", "y"):
        return None
    axis = tok.text.lower()
    j = i + 1
    fillers = 0
    while j < len(tokens) and fillers < 3:
        t = tokens[j]
        if t.kind in ("COLON", "EQUALS") or (
            t.kind == "WORD" and t.text.lower() in _FILLERS
        ):
            j += 1
            fillers += 1
            continue
        if t.kind == "DASH" and j + 1 < len(tokens) and tokens[j + 1].kind == "WORD":
            # hyphenated label like "x-coordinates"
            j += 1
            fillers += 1
            continue
        break
    if j >= len(tokens):
        return None
    t = tokens[j]
    # "from NUM to NUM"
    if t.kind == "WORD" and t.text.lower() == "from":
        if (
            j + 3 < len(tokens)
            and tokens[j + 1].kind == "NUM"
            and tokens[j + 2].kind == "WORD"
            and tokens[j + 2].text.lower() == "to"
            and tokens[j + 3].kind == "NUM"
        ):
            lo, hi = float(tokens[j + 1].text), float(tokens[j + 3].text)
            return axis, lo, hi, (tok.start, tokens[j + 3].end), j + 4
        return None
    # "between NUM and NUM"
    if t.kind == "WORD" and t.text.lower() == "between":
        if (
            j + 3 < len(tokens)
            and tokens[j + 1].kind == "NUM"
            and tokens[j + 2].kind == "WORD"
            and tokens[j + 2].text.lower() == "and"
            and tokens[j + 3].kind == "NUM"
        ):
            lo, hi = float(tokens[j + 1].text), float(tokens[j + 3].text)
            return axis, lo, hi, (tok.start, tokens[j + 3].end), j + 4
        return None
    # "NUM - NUM" or "NUM to NUM"
    if t.kind == "NUM" and j + 2 < len(tokens):
        sep, last = tokens[j + 1], tokens[j + 2]
        if (
            sep.kind == "DASH" or (sep.kind == "WORD" and sep.text.lower() == "to")
        ) and last.kind == "NUM":
            lo, hi = float(t.text), float(last.text)
            return axis, lo, hi, (tok.start, last.end), j + 3
    return None


def _clamp(v: float | None, hi: float) -> float | None:
    if v is None:
        return None
    return min(max(v, 0.0), hi)


def extract_regions(answer_text: str, image_w: int, image_h: int) -> list[AnswerRegion]:
    """Parse coordinate references out of an answer. Total: unparseable text
    yields an empty list, values are clamped to the image, duplicates are
    dropped."""
    if not answer_text:
        return []
    regions: list[AnswerRegion] = []
    for tokens in _tokenize_sentences(answer_text):
        x_ranges: list[tuple[float, float, tuple[int, int]]] = []
        y_ranges: list[tuple[float, float, tuple[int, int]]] = []
        i = 0
        while i < len(tokens):
            matched_tuple = _match_tuple(tokens, i)
            if matched_tuple:
                values, span, i = matched_tuple
                if len(values) == 2:
                    x, y = values
                    regions.append(AnswerRegion(x, x, y, y, "point", span))
                else:
                    x1, y1, x2, y2 = values
                    x1, x2 = min(x1, x2), max(x1, x2)
                    y1, y2 = min(y1, y2), max(y1, y2)
                    regions.append(AnswerRegion(x1, x2, y1, y2, "range", span))
                continue
            matched_range = _match_axis_range(tokens, i)
            if matched_range:
                axis, lo, hi, span, i = matched_range
                lo, hi = min(lo, hi), max(lo, hi)
                (x_ranges if axis == "x" else y_ranges).append((lo, hi, span))
                continue
            i += 1
        # Pair x with y ranges in order; leftovers constrain one axis only.
        for k in range(max(len(x_ranges), len(y_ranges))):
            xr = x_ranges[k] if k < len(x_ranges) else None
            yr = y_ranges[k] if k < len(y_ranges) else None
            span_points = [s for r in (xr, yr) if r is not None for s in r[2]]
            span = (min(span_points), max(span_points))
            regions.append(
                AnswerRegion(
                    xr[0] if xr else None, xr[1] if xr else None,
                    yr[0] if yr else None, yr[1] if yr else None,
                    "range", span,
                )
            )

    clamped: list[AnswerRegion] = []
    seen: set[tuple] = set()
    for r in regions:
        c = AnswerRegion(
            _clamp(r.x_min, float(image_w)), _clamp(r.x_max, float(image_w)),
            _clamp(r.y_min, float(image_h)), _clamp(r.y_max, float(image_h)),
            r.kind, r.source_span,
        )
        if c.bounds_key() not in seen:
            seen.add(c.bounds_key())
            clamped.append(c)
    return clamped


# --- scoring -----------------------------------------------------------------


def _covers(region: AnswerRegion, box: PixelBox) -> bool:
    if region.kind == "point":
        px = region.x_min if region.x_min is not None else -1.0
        py = region.y_min if region.y_min is not None else -1.0
        return box.x1 <= px <= box.x2 and box.y1 <= py <= box.y2
    cx, cy = box.center()
    ok_x = (region.x_min is None or region.x_min <= cx) and (
        region.x_max is None or cx <= region.x_max
    )
    ok_y = (region.y_min is None or region.y_min <= cy) and (
        region.y_max is None or cy <= region.y_max
    )
    return ok_x and ok_y


def score_grounding(
    regions: Sequence[AnswerRegion],
    reference: Sequence[PixelBox],
    *,
    image_w: int | None = None,
    image_h: int | None = None,
) -> GroundingScore:
    """Fraction of reference boxes covered by at least one region, plus how
    much region area falls outside the image (when dims are given)."""
    if not reference:
        return GroundingScore(len(regions), 0, 0.0, _spurious_ratio(regions, image_w, image_h),
                              no_reference=True)
    covered = sum(1 for b in reference if any(_covers(r, b) for r in regions))
    return GroundingScore(
        regions=len(regions),
        boxes_covered=covered,
        coverage=covered / len(reference),
        spurious_area_ratio=_spurious_ratio(regions, image_w, image_h),
    )


def _spurious_ratio(
    regions: Sequence[AnswerRegion], image_w: int | None, image_h: int | None
) -> float:
    if image_w is None or image_h is None:
        return 0.0
    total = 0.0
    inside = 0.0
    for r in regions:
        if r.kind == "point":
            continue
        x0 = r.x_min if r.x_min is not None else 0.0
        x1 = r.x_max if r.x_max is not None else float(image_w)
        y0 = r.y_min if r.y_min is not None else 0.0
        y1 = r.y_max if r.y_max is not None else float(image_h)
        area = max(0.0, x1 - x0) * max(0.0, y1 - y0)
        ix0, ix1 = max(x0, 0.0), min(x1, float(image_w))
        iy0, iy1 = max(y0, 0.0), min(y1, float(image_h))
        inter = max(0.0, ix1 - ix0) * max(0.0, iy1 - iy0)
        total += area
        inside += inter
    if total <= 0.0:
        return 0.0
    return (total - inside) / total


# --- overlay rendering --------------------------------------------------------


@dataclass(frozen=True)
class OverlayStyle:
    """Fixed styling constants so overlay goldens stay stable."""

    box_outline: tuple[int, int, int, int] = (255, 40, 40, 255)
    box_width: int = 2
    caption_fill: tuple[int, int, int, int] = (255, 40, 40, 255)
    region_fill: tuple[int, int, int, int] = (40, 120, 255, 64)
    region_outline: tuple[int, int, int, int] = (40, 120, 255, 200)
    region_width: int = 2


DEFAULT_STYLE = OverlayStyle()


def render_overlay(
    image: bytes | str | Path,
    detections: Sequence[PixelBox] = (),
    regions: Sequence[AnswerRegion] = (),
    style: OverlayStyle = DEFAULT_STYLE,
) -> bytes:
    """Draw detection boxes (outline + confidence caption) and answer regions
    (semi-transparent fill) onto the image; returns PNG bytes of the same
    dimensions. With nothing to draw the pixels pass through unchanged."""
    data = Path(image).read_bytes() if isinstance(image, (str, Path)) else image
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise InputError(f"cannot decode image for overlay: {exc}") from exc

    if not detections and not regions:
        out = io.BytesIO()
        img.save(out, format="PNG")
        return out.getvalue()

    w, h = img.size
    base = img.convert("RGBA")
    layer = Image.new("RGBA", base.size, (0, 0, 0, 0))
    draw = ImageDraw.Draw(layer)

    for r in regions:
        x0 = 0.0 if r.x_min is None else r.x_min
        x1 = float(w) if r.x_max is None else r.x_max
        y0 = 0.0 if r.y_min is None else r.y_min
        y1 = float(h) if r.y_max is None else r.y_max
        if r.kind == "point":
            # small diamond marker around the point
            px, py = x0, y0
            draw.ellipse([px - 4, py - 4, px + 4, py + 4],
                         fill=style.region_fill, outline=style.region_outline, width=1)
        else:
            draw.rectangle([x0, y0, x1, y1], fill=style.region_fill,
                           outline=style.region_outline, width=style.region_width)

    for b in detections:
        draw.rectangle([b.x1, b.y1, b.x2, b.y2],
                       outline=style.box_outline, width=style.box_width)
        caption = f"{b.confidence:.2f}"
        cy = b.y1 - 12 if b.y1 >= 12 else b.y2 + 2
        draw.text((b.x1 + 2, cy), caption, fill=style.caption_fill)

    composed = Image.alpha_composite(base, layer).convert("RGB")
    out = io.BytesIO()
    composed.save(out, format="PNG")
    return out.getvalue()


def grounding_report(
    session_id: str,
    turn_index: int,
    answer_text: str,
    reference: Sequence[PixelBox],
    image_w: int,
    image_h: int,
) -> dict:
    """The per-turn verification document: parsed regions plus their score."""
    regions = extract_regions(answer_text, image_w, image_h)
    score = score_grounding(regions, reference, image_w=image_w, image_h=image_h)
    return {
        "session_id": session_id,
        "turn_index": turn_index,
        "regions": [r.to_dict() for r in regions],
        "score": score.to_dict(),
    }
