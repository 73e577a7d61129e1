"""Chat-completion providers: HTTP endpoint and a record/replay transcript cache."""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import httpx

LABEL_MODEL = "LLaMA-3 8B"
EXTRACT_MODEL = "Mistral-7B Instruct"


class TransportError(Exception):
    pass


class TranscriptMiss(TransportError):
    pass


@dataclass
class ChatConfig:
    endpoint: str = "http://127.0.0.1:8000/v1/chat/completions"
    model_id: str = EXTRACT_MODEL
    temperature: float = 0.1
    max_tokens: int = 512
    retries: int = 2
    timeout: float = 120.0
    context_budget: int = 16_000
    token_env: Optional[str] = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "ChatConfig":
        return cls(**d)


def request_payload(messages, cfg: ChatConfig) -> dict:
    return {
        "model": cfg.model_id,
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_tokens,
        "messages": [{"role": m["role"], "content": m["content"]} for m in messages],
    }


class HttpChatProvider:
    """POST {model, temperature, messages} and return the first choice's content."""

    def __init__(self, client: Optional[httpx.Client] = None):
        self.client = client

    def complete(self, messages, cfg: ChatConfig) -> str:
        if self.client is None:
            self.client = httpx.Client(timeout=cfg.timeout)
        headers = {}
        token = os.environ.get(cfg.token_env) if cfg.token_env else None
        if token:
            headers["Authorization"] = f"Bearer {token}"
        try:
            resp = self.client.post(cfg.endpoint, json=request_payload(messages, cfg), headers=headers,
                                    timeout=cfg.timeout)
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"]
        except (httpx.HTTPError, KeyError, IndexError, TypeError, ValueError) as exc:
            raise TransportError(f"chat request to {cfg.endpoint} failed: {exc}") from exc


def transcript_key(messages, cfg: ChatConfig) -> str:
    payload = {"model": cfg.model_id, "temperature": cfg.temperature,
               "messages": [{"role": m["role"], "content": m["content"]} for m in messages]}
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class TranscriptCache:
    """Prompt-hash keyed record/replay layer over another provider.

    Modes: ``replay`` (a miss raises :class:`TranscriptMiss`), ``record``
    (always call through and overwrite) and ``replay_or_record``.
    """

    MODES = ("replay", "record", "replay_or_record")

    def __init__(self, root, inner=None, mode: str = "replay"):
        if mode not in self.MODES:
            raise ValueError(f"unknown transcript mode {mode!r}")
        if mode != "replay" and inner is None:
            raise ValueError(f"mode {mode!r} needs an inner provider")
        self.root = Path(root)
        self.inner = inner
        self.mode = mode
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def path_for(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def complete(self, messages, cfg: ChatConfig) -> str:
        key = transcript_key(messages, cfg)
        path = self.path_for(key)
        if self.mode != "record" and path.is_file():
            self.hits += 1
            return json.loads(path.read_text(encoding="utf-8"))["response"]
        if self.mode == "replay":
            self.misses += 1
            raise TranscriptMiss(f"no recorded transcript for prompt {key[:12]}")
        response = self.inner.complete(messages, cfg)
        entry = {"key": key, "request": request_payload(messages, cfg), "response": response}
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(entry, indent=1, ensure_ascii=False, sort_keys=True) + "\n",
                            encoding="utf-8")
        self.misses += 1
        return response


def config_snapshot(cfg: ChatConfig) -> dict:
    return asdict(cfg)
