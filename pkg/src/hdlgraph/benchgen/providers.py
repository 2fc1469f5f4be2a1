"""Text-generation providers: remote HTTP, transcript replay, and recording."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import urllib.error
import urllib.request
from collections.abc import Callable
from pathlib import Path
from typing import Protocol

from ..errors import ProviderError

logger = logging.getLogger(__name__)


def prompt_key(prompt: str) -> str:
    """Transcript key: hex SHA-256 of the UTF-8 prompt."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class TextGenProvider(Protocol):
    def generate(self, prompt: str) -> str: ...


def load_transcript(path: str | os.PathLike[str]) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in data.items()):
        raise ProviderError(f"{path}: transcript must map prompt hashes to strings")
    return data


def dumps_transcript(entries: dict[str, str]) -> str:
    return json.dumps(dict(sorted(entries.items())), indent=2, ensure_ascii=True) + "\n"


class ReplayProvider:
    """Answers from a recorded transcript; unseen prompts are an error."""

    name = "replay"

    def __init__(self, transcript: dict[str, str] | str | os.PathLike[str]) -> None:
        self.entries = dict(transcript) if isinstance(transcript, dict) \
            else load_transcript(transcript)

    def generate(self, prompt: str) -> str:
        key = prompt_key(prompt)
        try:
            return self.entries[key]
        except KeyError:
            raise ProviderError(f"prompt {key[:12]} not in transcript") from None


class RemoteProvider:
    """POST ``{"prompt": ...}`` and read ``{"text": ...}`` back."""

    name = "remote"

    def __init__(self, endpoint: str, timeout: float = 60.0) -> None:
        self.endpoint = endpoint
        self.timeout = timeout

    def generate(self, prompt: str) -> str:
        req = urllib.request.Request(self.endpoint,
                                     data=json.dumps({"prompt": prompt}).encode("utf-8"),
                                     headers={"Content-Type": "application/json"},
                                     method="POST")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                body = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, json.JSONDecodeError) as exc:
            raise ProviderError(f"text generation failed: {exc}") from exc
        if not isinstance(body, dict) or not isinstance(body.get("text"), str):
            raise ProviderError("response must be an object with a string 'text'")
        return body["text"]


class CallableProvider:
    """Adapter for a plain function; handy for scripted runs."""

    name = "callable"

    def __init__(self, fn: Callable[[str], str]) -> None:
        self.fn = fn

    def generate(self, prompt: str) -> str:
        return self.fn(prompt)


class RecordingProvider:
    """Forward to ``inner`` and keep every exchange for a replay transcript."""

    def __init__(self, inner: TextGenProvider) -> None:
        self.inner = inner
        self.entries: dict[str, str] = {}
        self._lock = threading.Lock()

    def generate(self, prompt: str) -> str:
        text = self.inner.generate(prompt)
        with self._lock:
            self.entries[prompt_key(prompt)] = text
        return text

    def save(self, path: str | os.PathLike[str]) -> None:
        Path(path).write_text(dumps_transcript(self.entries), encoding="utf-8")
