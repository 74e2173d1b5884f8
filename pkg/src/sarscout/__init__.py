"""Box-grounded visual question answering for SAR ship imagery.

A detector backend produces ship bounding boxes, the prompt composer fuses
them with user questions into a composite text, a chat client talks to a
vision-language endpoint, dialogue sessions log every turn starting at 0,
and the grounding module checks coordinates cited in answers against the
boxes. A full mAP.50 / mAP.50:.95 evaluation harness supports detector
selection.
"""

from .detector import DetectionSet, FileBackend, OnnxBackend, StubBackend
from .errors import SarScoutError
from .evaluation import EvalReport, evaluate
from .geometry import LetterboxTransform, PixelBox, iou, make_letterbox, nms, unmap_box
from .grounding import AnswerRegion, GroundingScore, extract_regions, score_grounding
from .prompting import PromptBundle, SceneContext, compose, load_templates
from .session import ChatSession, SessionManager, Turn
from .vlm_client import ChatRequest, ChatResponse, MockVlmClient, OpenAiCompatClient

__version__ = "0.1.0"

__all__ = [
    "AnswerRegion",
    "ChatRequest",
    "ChatResponse",
    "ChatSession",
    "DetectionSet",
    "EvalReport",
    "FileBackend",
    "GroundingScore",
    "LetterboxTransform",
    "MockVlmClient",
    "OnnxBackend",
    "OpenAiCompatClient",
    "PixelBox",
    "PromptBundle",
    "SarScoutError",
    "SceneContext",
    "SessionManager",
    "StubBackend",
    "Turn",
    "__version__",
    "compose",
    "evaluate",
    "extract_regions",
    "iou",
    "load_templates",
    "make_letterbox",
    "nms",
    "score_grounding",
    "unmap_box",
]
