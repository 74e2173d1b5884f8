import io
import json
import random
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from sarscout.errors import InputError
from sarscout.geometry import PixelBox
from sarscout.grounding import (
    AnswerRegion,
    extract_regions,
    grounding_report,
    render_overlay,
    score_grounding,
)

from .oracles import coverage_oracle

CORPUS = json.loads(
    (Path(__file__).parent / "fixtures" / "parser_corpus.json").read_text(encoding="utf-8")
)


def region(x_min, x_max, y_min, y_max, kind="range"):
    return AnswerRegion(x_min, x_max, y_min, y_max, kind, (0, 0))


class TestParserCorpus:
    def test_corpus_is_large_enough(self):
        assert len(CORPUS) >= 30
        assert sum(1 for e in CORPUS if not e["regions"]) >= 5  # negatives included

    @pytest.mark.parametrize("entry", CORPUS, ids=lambda e: (e["text"][:40] or "<empty>"))
    def test_exact_match(self, entry):
        got = extract_regions(entry["text"], 640, 640)
        simplified = [
            {
                "kind": r.kind,
                "x_min": r.x_min, "x_max": r.x_max,
                "y_min": r.y_min, "y_max": r.y_max,
            }
            for r in got
        ]
        expected = [
            {
                "kind": e["kind"],
                "x_min": e["x_min"], "x_max": e["x_max"],
                "y_min": e["y_min"], "y_max": e["y_max"],
            }
            for e in entry["regions"]
        ]
        assert simplified == expected

    def test_source_spans_are_valid_and_contain_numbers(self):
        for entry in CORPUS:
            text = entry["text"]
            for r in extract_regions(text, 640, 640):
                start, end = r.source_span
                assert 0 <= start < end <= len(text)
                assert any(ch.isdigit() for ch in text[start:end])


class TestParserTotality:
    @settings(max_examples=300, deadline=None)
    @given(st.text(max_size=200))
    def test_never_raises_on_arbitrary_text(self, text):
        regions = extract_regions(text, 640, 480)
        for r in regions:
            for v, hi in ((r.x_min, 640), (r.x_max, 640), (r.y_min, 480), (r.y_max, 480)):
                if v is not None:
                    assert 0 <= v <= hi

    @settings(max_examples=200, deadline=None)
    @given(
        st.text(
            alphabet="xy0123456789 ():,-.betweenfromtoand\n", max_size=120
        )
    )
    def test_never_raises_on_coordinate_like_text(self, text):
        extract_regions(text, 1000, 1000)


class TestScoring:
    def test_whole_image_region_covers_all(self):
        boxes = [PixelBox(i * 100, i * 100, i * 100 + 50, i * 100 + 50) for i in range(5)]
        score = score_grounding([region(0, 640, 0, 640)], boxes, image_w=640, image_h=640)
        assert score.coverage == 1.0
        assert score.boxes_covered == 5

    def test_no_regions_zero_coverage(self):
        score = score_grounding([], [PixelBox(0, 0, 10, 10)])
        assert score.coverage == 0.0

    def test_half_coverage(self):
        boxes = [PixelBox(50, 50, 150, 150), PixelBox(550, 550, 650, 650)]
        score = score_grounding([region(0, 400, 0, 400)], boxes)
        assert score.coverage == 0.5

    def test_point_covers_box_containing_it(self):
        box = PixelBox(100, 100, 200, 200)
        inside = region(150, 150, 150, 150, kind="point")
        outside = region(50, 50, 50, 50, kind="point")
        assert score_grounding([inside], [box]).coverage == 1.0
        assert score_grounding([outside], [box]).coverage == 0.0

    def test_single_axis_region(self):
        boxes = [PixelBox(90, 0, 110, 10), PixelBox(300, 0, 320, 10)]
        score = score_grounding([region(80, 120, None, None)], boxes)
        assert score.boxes_covered == 1

    def test_empty_reference_flagged(self):
        score = score_grounding([region(0, 10, 0, 10)], [])
        assert score.coverage == 0.0
        assert score.no_reference

    def test_adding_region_never_decreases_coverage(self):
        rng = random.Random(13)
        for _ in range(100):
            boxes = [
                PixelBox(x1 := rng.uniform(0, 500), y1 := rng.uniform(0, 500),
                         x1 + rng.uniform(1, 100), y1 + rng.uniform(1, 100))
                for _ in range(rng.randrange(1, 6))
            ]
            regions = [
                region(a := rng.uniform(0, 500), a + rng.uniform(1, 200),
                       b := rng.uniform(0, 500), b + rng.uniform(1, 200))
                for _ in range(rng.randrange(0, 4))
            ]
            extra = region(0, 640, 0, 640)
            before = score_grounding(regions, boxes).coverage
            after = score_grounding(regions + [extra], boxes).coverage
            assert after >= before

    def test_matches_center_count_oracle(self):
        rng = random.Random(21)
        for _ in range(200):
            boxes = [
                PixelBox(x1 := rng.uniform(0, 600), y1 := rng.uniform(0, 600),
                         x1 + rng.uniform(1, 80), y1 + rng.uniform(1, 80))
                for _ in range(rng.randrange(1, 8))
            ]
            regions = []
            for _ in range(rng.randrange(0, 5)):
                if rng.random() < 0.3:
                    px, py = rng.uniform(0, 680), rng.uniform(0, 680)
                    regions.append(region(px, px, py, py, kind="point"))
                else:
                    a, b = rng.uniform(0, 600), rng.uniform(0, 600)
                    regions.append(
                        region(
                            a if rng.random() < 0.85 else None,
                            a + rng.uniform(1, 150) if rng.random() < 0.85 else None,
                            b, b + rng.uniform(1, 150),
                        )
                        if rng.random() < 0.9
                        else region(a, a + rng.uniform(1, 150), None, None)
                    )
            # x_min None with x_max set is representable; normalize pairs
            score = score_grounding(regions, boxes)
            assert score.boxes_covered == coverage_oracle(regions, boxes)

    def test_spurious_area_ratio(self):
        # Half the region hangs off the right edge of a 100-wide image.
        score = score_grounding(
            [region(50, 150, 0, 100)], [PixelBox(0, 0, 10, 10)], image_w=100, image_h=100
        )
        assert score.spurious_area_ratio == pytest.approx(0.5)

    def test_spurious_zero_without_dims(self):
        score = score_grounding([region(50, 150, 0, 100)], [PixelBox(0, 0, 10, 10)])
        assert score.spurious_area_ratio == 0.0


def png_image(w=100, h=100, mode="RGB", color=(0, 0, 0)):
    buf = io.BytesIO()
    Image.new(mode, (w, h), color).save(buf, format="PNG")
    return buf.getvalue()


class TestOverlay:
    def test_nothing_to_draw_is_pixel_identical(self):
        src = png_image(64, 48, mode="L", color=7)
        out = render_overlay(src)
        assert Image.open(io.BytesIO(out)).tobytes() == Image.open(io.BytesIO(src)).tobytes()
        assert Image.open(io.BytesIO(out)).size == (64, 48)

    def test_box_edge_pixels_probe(self):
        out = render_overlay(
            png_image(), detections=[PixelBox(10, 10, 50, 50, confidence=0.9)]
        )
        img = Image.open(io.BytesIO(out))
        assert img.getpixel((10, 10)) == (255, 40, 40)
        assert img.getpixel((50, 30)) == (255, 40, 40)
        assert img.getpixel((30, 30)) == (0, 0, 0)

    def test_region_fill_probe(self):
        out = render_overlay(png_image(), regions=[region(60, 90, 60, 90)])
        img = Image.open(io.BytesIO(out))
        r, g, b = img.getpixel((75, 75))
        assert b > r and b > 0  # translucent blue wash

    def test_deterministic_bytes(self):
        args = dict(
            detections=[PixelBox(10, 10, 50, 50, confidence=0.5)],
            regions=[region(60, 90, 60, 90)],
        )
        assert render_overlay(png_image(), **args) == render_overlay(png_image(), **args)

    def test_dimensions_preserved(self):
        out = render_overlay(
            png_image(123, 77), detections=[PixelBox(5, 5, 20, 20, confidence=0.5)]
        )
        assert Image.open(io.BytesIO(out)).size == (123, 77)

    def test_undecodable_image(self):
        with pytest.raises(InputError):
            render_overlay(b"garbage")

    def test_unbounded_region_drawn_to_edges(self):
        out = render_overlay(png_image(), regions=[region(None, None, 40, 60)])
        img = Image.open(io.BytesIO(out))
        r, g, b = img.getpixel((1, 50))
        assert b > 0  # fill reaches the left edge


class TestReport:
    def test_report_shape(self):
        boxes = [PixelBox(100, 100, 200, 200, confidence=0.9)]
        doc = grounding_report(
            "sess1", 2, "traffic concentrates around x: 100-200, y: 100-200",
            boxes, 640, 640,
        )
        assert doc["session_id"] == "sess1"
        assert doc["turn_index"] == 2
        assert len(doc["regions"]) == 1
        assert doc["score"]["coverage"] == 1.0

    def test_unparsed_answer_reports_empty(self):
        doc = grounding_report("s", 0, "open water, nothing to see", [], 100, 100)
        assert doc["regions"] == []
        assert doc["score"]["no_reference"]
