"""Uniform client for embedding and chat-completion endpoints.

Speaks the de facto open inference wire protocol: POST {base}/v1/embeddings
and POST {base}/v1/chat/completions, JSON over HTTP. Retries transient
failures with exponential backoff plus jitter and caps in-flight requests
per endpoint.
"""

from __future__ import annotations

import os
import random
import threading
import time
from dataclasses import dataclass, field

import httpx
import numpy as np

from .errors import DimsInconsistent, EmptyCompletion, RateLimited, TransportError
from .prompts import load_prompt


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_backoff: float = 0.5

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model_name: str
    api_key_env: str = ""
    timeout: float = 30.0
    max_concurrency: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    batch_limit: int = 128

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")


@dataclass(frozen=True)
class ChatRequest:
    user: str
    system: str | None = None
    temperature: float = 0.0
    max_tokens: int = 512
    seed: int | None = None

    def __post_init__(self):
        if not self.user:
            raise ValueError("user message must be non-empty")


@dataclass(frozen=True)
class JudgeVerdict:
    verdict: str  # "true" | "false" | "invalid"
    raw: str


_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class ModelGateway:
    """Blocking client for one endpoint; safe to share across threads."""

    def __init__(self, config: EndpointConfig, sleep=time.sleep, jitter_rng: random.Random | None = None):
        self.config = config
        self._sleep = sleep
        self._rng = jitter_rng or random.Random()
        self._sem = threading.BoundedSemaphore(config.max_concurrency)
        headers = {}
        key = os.environ.get(config.api_key_env) if config.api_key_env else None
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(
            base_url=config.base_url.rstrip("/"),
            timeout=config.timeout,
            headers=headers,
        )

    def close(self):
        self._client.close()

    def _post(self, path: str, payload: dict) -> dict:
        retry = self.config.retry
        last_exc: Exception | None = None
        rate_limited = False
        for attempt in range(1, retry.max_attempts + 1):
            try:
                with self._sem:
                    resp = self._client.post(path, json=payload)
                if resp.status_code == 200:
                    return resp.json()
                if resp.status_code in _RETRYABLE_STATUS:
                    rate_limited = resp.status_code == 429
                    last_exc = TransportError(f"HTTP {resp.status_code} from {path}")
                else:
                    raise TransportError(f"HTTP {resp.status_code} from {path}: {resp.text[:500]}")
            except httpx.HTTPError as exc:
                rate_limited = False
                last_exc = exc
            if attempt < retry.max_attempts:
                backoff = retry.base_backoff * 2 ** (attempt - 1)
                backoff *= 1.0 + self._rng.uniform(-0.25, 0.25)
                self._sleep(backoff)
        if rate_limited:
            raise RateLimited(f"{path}: rate limited after {retry.max_attempts} attempts") from last_exc
        raise TransportError(f"{path}: failed after {retry.max_attempts} attempts: {last_exc}") from last_exc

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        """Embed texts, order-preserving; splits into sub-batches as needed."""
        if not texts:
            return []
        vectors: list[np.ndarray] = []
        for start in range(0, len(texts), self.config.batch_limit):
            batch = texts[start:start + self.config.batch_limit]
            body = self._post("/v1/embeddings", {"model": self.config.model_name, "input": batch})
            data = body.get("data", [])
            if len(data) != len(batch):
                raise DimsInconsistent(
                    f"asked for {len(batch)} embeddings, got {len(data)}")
            data = sorted(data, key=lambda d: d.get("index", 0))
            vectors.extend(np.asarray(d["embedding"], dtype=np.float32) for d in data)
        dims = {v.shape[0] for v in vectors}
        if len(dims) != 1:
            raise DimsInconsistent(f"ragged embedding dims: {sorted(dims)}")
        return vectors

    def generate(self, req: ChatRequest) -> str:
        messages = []
        if req.system:
            messages.append({"role": "system", "content": req.system})
        messages.append({"role": "user", "content": req.user})
        payload = {
            "model": self.config.model_name,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        if req.seed is not None:
            payload["seed"] = req.seed
        body = self._post("/v1/chat/completions", payload)
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise EmptyCompletion(f"malformed completion body: {body}") from exc
        if content is None or not content.strip():
            raise EmptyCompletion("endpoint returned an empty completion")
        return content


# ---------------------------------------------------------------------------
# LLM-as-judge
# ---------------------------------------------------------------------------

JUDGE_TEMPLATE = load_prompt("judge_prompt").rstrip("\n")


def render_judge_prompt(query: str, gold: str, generated: str) -> str:
    """Fill the judge prompt template; the wording itself never varies."""
    if not (query and gold and generated):
        raise ValueError("judge inputs must be non-empty")
    return (JUDGE_TEMPLATE
            .replace("{query}", query)
            .replace("{ground truth answer}", gold)
            .replace("{generated answer}", generated))


def classify_verdict(raw: str) -> str:
    """Map a raw judge completion to true/false/invalid.

    Only trim + case-fold leniency; anything else scores invalid so the
    metric stays honest.
    """
    normalized = raw.strip().upper()
    if normalized == "TRUE":
        return "true"
    if normalized == "FALSE":
        return "false"
    return "invalid"


def judge(gateway: ModelGateway, query: str, gold: str, generated: str,
          max_tokens: int = 8) -> JudgeVerdict:
    """TRUE/FALSE factual-accuracy verdict at temperature 0."""
    raw = gateway.generate(ChatRequest(
        user=render_judge_prompt(query, gold, generated),
        temperature=0.0,
        max_tokens=max_tokens,
    ))
    return JudgeVerdict(verdict=classify_verdict(raw), raw=raw)
