"""Session flow against a live chat endpoint; mock and live clients must be
indistinguishable to callers. Gated on VLM_BASE_URL being configured, so the
default (offline) run skips it."""

import os

import pytest

from sarscout.detector import FileBackend
from sarscout.prompting import load_templates
from sarscout.session import InMemorySessionStore, SessionManager
from sarscout.vlm_client import OpenAiCompatClient

pytestmark = pytest.mark.skipif(
    not os.environ.get("VLM_BASE_URL"),
    reason="VLM_BASE_URL not configured; live endpoint suite is gated",
)


def test_live_session_flow(fixture_image_path, detections_path):
    manager = SessionManager(
        InMemorySessionStore(),
        FileBackend(detections_path),
        OpenAiCompatClient.from_env(os.environ),
        load_templates(),
    )
    session = manager.start_session(fixture_image_path)
    assert session.turns[0].index == 0
    assert session.turns[0].answer_text
    turn = manager.ask(session.session_id, "How many ships are in this scene?")
    assert turn.index == 1
    assert turn.answer_text
