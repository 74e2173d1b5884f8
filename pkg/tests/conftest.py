import io
import json
import sys

import pytest
from PIL import Image, ImageDraw


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        marker = item.get_closest_marker("criterion")
        if marker:
            status = "PASS" if rep.passed else "FAIL"
            print(f"ACCEPTANCE [{status}] {marker.args[0]}", file=sys.__stdout__)

from sarscout.detector import FileBackend, StubBackend
from sarscout.prompting import load_templates
from sarscout.session import InMemorySessionStore, SessionManager
from sarscout.vlm_client import MockVlmClient

FIXED_EPOCH = 1_768_478_400.0  # 2026-01-15T12:00:00Z


class FakeClock:
    """Monotone fake clock: each call advances a fixed step, so created_at
    and latency_ms are deterministic in golden transcripts."""

    def __init__(self, start: float = FIXED_EPOCH, step: float = 0.25):
        self.now = start
        self.step = step

    def __call__(self) -> float:
        current = self.now
        self.now += self.step
        return current


def make_sar_png(w: int = 500, h: int = 375) -> bytes:
    """Synthetic SAR-like scene: dark sea, two bright ship blobs."""
    img = Image.new("L", (w, h), 18)
    draw = ImageDraw.Draw(img)
    draw.rectangle([10, 20, 50, 60], fill=230)
    draw.rectangle([100, 120, 180, 200], fill=200)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


FIXTURE_BOXES = [
    {"image_id": "s1", "x1": 10.0, "y1": 20.0, "x2": 50.0, "y2": 60.0, "conf": 0.97},
    {"image_id": "s1", "x1": 100.0, "y1": 120.0, "x2": 180.0, "y2": 200.0, "conf": 0.62},
]

MOCK_SCRIPT = [
    {"match": "Describe this SAR scene", "answer": "Two ships are visible: a small one near the top-left at (30, 40) and a larger one around x: 100-180, y: 120-200."},
    {"match": "types", "answer": "Judging by size, Ship 1 (40 x 39 px) is likely a patrol craft and Ship 2 (80 x 80 px) a cargo vessel."},
    {"match": "densest", "answer": "Ship traffic concentrates in the region x: 100-180, y: 120-200."},
    {"match": "collision", "answer": "The ships are well separated; the southern vessel should hold course and pass astern of the northern one."},
    {"match": None, "answer": "The scene shows open water with isolated vessels."},
]


@pytest.fixture
def fixture_png() -> bytes:
    return make_sar_png()


@pytest.fixture
def fixture_image_path(tmp_path, fixture_png):
    path = tmp_path / "s1.png"
    path.write_bytes(fixture_png)
    return path


@pytest.fixture
def detections_path(tmp_path):
    path = tmp_path / "detections.jsonl"
    path.write_text(
        "".join(json.dumps(rec) + "\n" for rec in FIXTURE_BOXES), encoding="utf-8"
    )
    return path


@pytest.fixture
def file_backend(detections_path):
    return FileBackend(detections_path)


@pytest.fixture
def mock_vlm():
    return MockVlmClient(MOCK_SCRIPT)


@pytest.fixture
def templates():
    return load_templates()


@pytest.fixture
def manager(file_backend, mock_vlm, templates):
    ids = iter(f"sess{i:04d}" for i in range(10_000))
    return SessionManager(
        InMemorySessionStore(),
        file_backend,
        mock_vlm,
        templates,
        clock=FakeClock(),
        id_factory=lambda: next(ids),
    )


def make_manager(store, backend, vlm, templates, **kwargs):
    ids = iter(f"sess{i:04d}" for i in range(10_000))
    kwargs.setdefault("clock", FakeClock())
    kwargs.setdefault("id_factory", lambda: next(ids))
    return SessionManager(store, backend, vlm, templates, **kwargs)


@pytest.fixture
def stub_backend():
    return StubBackend()
