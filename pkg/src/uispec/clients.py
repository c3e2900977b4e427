"""Pluggable model and detector clients, with deterministic test doubles.

The model protocol is deliberately thin: a request is prompt text plus
optional image bytes, the response is UTF-8 text.  The mock client maps the
SHA-256 of the request onto fixture files in a directory, which makes every
pipeline stage replayable byte-for-byte without network access.
"""
from __future__ import annotations

import base64
import hashlib
import json
import os
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

from .errors import ClientError, DetectorError

ENV_ENDPOINT = "SPEC_MODEL_ENDPOINT"
ENV_KEY = "SPEC_MODEL_KEY"
ENV_MOCK_DIR = "SPEC_MOCK_DIR"


@runtime_checkable
class ModelClient(Protocol):
    def complete(self, prompt: str, image: bytes | None = None) -> str:
        """Return the model's text response for one request."""
        ...


def request_digest(prompt: str, image: bytes | None = None) -> str:
    h = hashlib.sha256()
    h.update(prompt.encode("utf-8"))
    h.update(b"\x00")
    if image:
        h.update(image)
    return h.hexdigest()


class MockModelClient:
    """Replays canned responses keyed by request hash.

    Fixture files live under ``fixture_dir`` as ``<sha256>.txt``.  Missing
    fixtures raise :class:`ClientError`, mirroring a transport failure.
    """

    def __init__(self, fixture_dir: str | os.PathLike):
        self.fixture_dir = Path(fixture_dir)

    def complete(self, prompt: str, image: bytes | None = None) -> str:
        path = self.fixture_dir / (request_digest(prompt, image) + ".txt")
        if not path.is_file():
            raise ClientError(f"no fixture for request {path.stem[:12]}...")
        return path.read_text(encoding="utf-8")

    def register(self, prompt: str, response: str, image: bytes | None = None) -> Path:
        """Write the fixture a given request will resolve to (test helper)."""
        self.fixture_dir.mkdir(parents=True, exist_ok=True)
        path = self.fixture_dir / (request_digest(prompt, image) + ".txt")
        path.write_text(response, encoding="utf-8")
        return path


class ScriptedModelClient:
    """Feeds a fixed sequence of responses and records every request.

    With ``repeat_last=True`` the final response is replayed forever — the
    shape needed for "always returns the same broken answer" tests.
    """

    def __init__(self, responses: Sequence[str], repeat_last: bool = False):
        self._responses = list(responses)
        self._repeat_last = repeat_last
        self.requests: list[tuple[str, bytes | None]] = []

    @property
    def calls(self) -> int:
        return len(self.requests)

    def complete(self, prompt: str, image: bytes | None = None) -> str:
        self.requests.append((prompt, image))
        index = len(self.requests) - 1
        if index >= len(self._responses):
            if self._repeat_last and self._responses:
                return self._responses[-1]
            raise ClientError(f"scripted client exhausted after {len(self._responses)} responses")
        return self._responses[index]


class HttpModelClient:
    """Live client: POSTs ``{"prompt", "image_b64"?}`` as JSON and expects
    ``{"text": ...}`` back.  Endpoint and bearer key come from the
    constructor or the SPEC_MODEL_ENDPOINT / SPEC_MODEL_KEY environment."""

    def __init__(self, endpoint: str | None = None, key: str | None = None, timeout: float = 120.0):
        self.endpoint = endpoint or os.environ.get(ENV_ENDPOINT)
        self.key = key or os.environ.get(ENV_KEY)
        self.timeout = timeout
        if not self.endpoint:
            raise ClientError(f"no model endpoint configured ({ENV_ENDPOINT})")

    def complete(self, prompt: str, image: bytes | None = None) -> str:
        payload: dict = {"prompt": prompt}
        if image is not None:
            payload["image_b64"] = base64.b64encode(image).decode("ascii")
        request = urllib.request.Request(
            self.endpoint,
            data=json.dumps(payload).encode("utf-8"),
            headers={
                "Content-Type": "application/json",
                **({"Authorization": f"Bearer {self.key}"} if self.key else {}),
            },
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                body = json.loads(response.read().decode("utf-8"))
        except (urllib.error.URLError, ValueError) as exc:
            raise ClientError(f"model endpoint failed: {exc}") from exc
        if not isinstance(body, dict) or not isinstance(body.get("text"), str):
            raise ClientError("model endpoint answered without a 'text' field")
        return body["text"]


def client_from_env() -> "ModelClient | None":
    """Mock client when SPEC_MOCK_DIR is set, live client when an endpoint
    is, otherwise None."""
    mock_dir = os.environ.get(ENV_MOCK_DIR)
    if mock_dir:
        return MockModelClient(mock_dir)
    if os.environ.get(ENV_ENDPOINT):
        return HttpModelClient()
    return None


# ---------------------------------------------------------------------------
# Region detectors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DetectedBox:
    """Raw detector output in pixels; score 1.0 for fixture boxes."""

    x: int
    y: int
    w: int
    h: int
    score: float = 1.0


@runtime_checkable
class DetectorClient(Protocol):
    def detect(self, image) -> list[DetectedBox]:
        """Return candidate region boxes for an (H, W, 3) image array."""
        ...


class SidecarDetector:
    """Fixture detector: reads boxes from a JSON sidecar list of
    ``{"x", "y", "w", "h"}`` objects instead of running a model."""

    def __init__(self, boxes: Sequence[dict] | None = None, path: str | os.PathLike | None = None):
        if path is not None:
            try:
                boxes = json.loads(Path(path).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise DetectorError(f"cannot read sidecar {path}: {exc}") from exc
        if boxes is None:
            boxes = []
        self._boxes = [self._parse(b) for b in boxes]

    @staticmethod
    def _parse(obj: dict) -> DetectedBox:
        try:
            return DetectedBox(
                x=int(obj["x"]), y=int(obj["y"]), w=int(obj["w"]), h=int(obj["h"]),
                score=float(obj.get("score", 1.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DetectorError(f"bad sidecar box {obj!r}") from exc

    def detect(self, image) -> list[DetectedBox]:
        return list(self._boxes)
