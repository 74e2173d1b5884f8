"""Exception taxonomy shared across the pipeline.

Every error raised by this package derives from SarScoutError so callers
(CLI, HTTP service) can map failures to exit codes / status codes by type.
"""

from __future__ import annotations


class SarScoutError(Exception):
    """Base class for all errors raised by sarscout."""


class InvalidArgumentError(SarScoutError):
    """A caller-supplied value violates a documented precondition."""


class InputError(SarScoutError):
    """User-provided input (image, question) is unusable."""


class ImageTooLargeError(InputError):
    def __init__(self, size: int, limit: int):
        super().__init__(f"image is {size} bytes, limit is {limit} bytes")
        self.size = size
        self.limit = limit


class UnsupportedImageError(InputError):
    def __init__(self, detected: str):
        super().__init__(f"unsupported image format: {detected} (expected PNG or JPEG)")
        self.detected = detected


class ParseError(SarScoutError):
    """A data file failed to parse or validate; carries path and line."""

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        loc = ""
        if path is not None:
            loc = f"{path}:" if line is None else f"{path}:{line}:"
        super().__init__(f"{loc} {message}" if loc else message)
        self.path = path
        self.line = line


class NotFoundError(SarScoutError):
    """A referenced entity (session, image id) does not exist."""


class IntegrityError(SarScoutError):
    """Cross-referenced records disagree (dims mismatch, dangling ids)."""


class ConfigError(SarScoutError):
    """Service configuration is missing, malformed, or inconsistent."""


class BackendError(SarScoutError):
    """A detector backend is unavailable or failed; carries backend name."""

    def __init__(self, message: str, *, backend: str):
        super().__init__(f"[{backend}] {message}")
        self.backend = backend


class DecodeError(SarScoutError):
    """Raw detector head output does not match the expected layout."""


class VlmError(SarScoutError):
    """Base class for chat-client failures."""


class TransportError(VlmError):
    """Network-level failure; safe to retry idempotently."""


class VlmTimeoutError(TransportError):
    def __init__(self, elapsed_ms: int):
        super().__init__(f"request timed out after {elapsed_ms} ms")
        self.elapsed_ms = elapsed_ms


class RequestError(VlmError):
    """Well-formed error response from the provider; never retried."""

    def __init__(self, message: str, *, status: int):
        super().__init__(f"HTTP {status}: {message}")
        self.status = status


class ProtocolError(VlmError):
    """Response body does not follow the chat-completions schema."""
