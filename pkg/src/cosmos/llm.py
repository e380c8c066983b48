"""Minimal chat-completions HTTP client shared by the remote world model, policy and judge."""

from __future__ import annotations

import json
import logging
import os
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from string import Template
from typing import Any, Mapping

from cosmos.errors import ChatError
from cosmos.types import TokenUsage

log = logging.getLogger(__name__)

TOKEN_ENV = "COSMOS_WM_TOKEN"


def load_template(ref: str | Path) -> Template:
    """Load a prompt template by path, or by bundled name (``data/prompts/<name>.txt``)."""
    p = Path(ref)
    if not p.suffix and not p.exists():
        p = Path(str(resources.files("cosmos") / "data" / "prompts" / f"{ref}.txt"))
    return Template(p.read_text(encoding="utf-8"))


@dataclass
class ChatClient:
    endpoint: str
    model: str
    token_env: str = TOKEN_ENV
    timeout_s: float = 60.0
    max_in_flight: int = 4
    api_key: str | None = field(default=None, repr=False)
    usage: TokenUsage = field(default_factory=TokenUsage)

    def __post_init__(self):
        self._slots = threading.BoundedSemaphore(self.max_in_flight)
        self._usage_lock = threading.Lock()

    def complete(self, messages: list[Mapping[str, str]]) -> str:
        body = json.dumps({"model": self.model, "messages": list(messages), "temperature": 0}).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        token = self.api_key or os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        req = urllib.request.Request(self.endpoint, data=body, headers=headers, method="POST")
        with self._slots:
            try:
                with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                    raw = resp.read().decode("utf-8")
            except (urllib.error.URLError, OSError) as exc:
                raise ChatError(f"request to {self.endpoint} failed: {exc}") from None
        try:
            reply = json.loads(raw)
            content = reply["choices"][0]["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError):
            raise ChatError(f"unexpected reply shape: {raw[:200]!r}") from None
        self._record_usage(reply.get("usage") or {})
        if not isinstance(content, str):
            raise ChatError("reply content is not text")
        return content

    def _record_usage(self, usage: Mapping[str, Any]) -> None:
        prompt = int(usage.get("prompt_tokens", 0) or 0)
        output = int(usage.get("completion_tokens", 0) or 0)
        with self._usage_lock:
            self.usage = self.usage + TokenUsage(prompt, output)
