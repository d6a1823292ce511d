"""Pipeline configuration: one JSON document, validated strictly.

API keys never live in the config file; endpoint entries only name the
environment variable that holds the key.
"""

from __future__ import annotations

import json
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field

from .gateway import EndpointConfig, RetryPolicy


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RetrySettings(_Strict):
    max_attempts: int = Field(default=3, ge=1)
    base_backoff: float = Field(default=0.5, gt=0)


class EndpointSettings(_Strict):
    base_url: str
    model_name: str
    api_key_env: str = ""
    timeout: float = Field(default=30.0, gt=0)
    max_concurrency: int = Field(default=4, ge=1)
    batch_limit: int = Field(default=128, ge=1)
    retry: RetrySettings = RetrySettings()

    def to_endpoint(self) -> EndpointConfig:
        return EndpointConfig(
            base_url=self.base_url,
            model_name=self.model_name,
            api_key_env=self.api_key_env,
            timeout=self.timeout,
            max_concurrency=self.max_concurrency,
            batch_limit=self.batch_limit,
            retry=RetryPolicy(max_attempts=self.retry.max_attempts,
                              base_backoff=self.retry.base_backoff),
        )


class ChunkingSettings(_Strict):
    target_chars: int = Field(default=1200, gt=0)
    max_chars: int = Field(default=2400, gt=0)
    overlap_budget: int = Field(default=200, ge=0)


class DatagenSettings(_Strict):
    n_simple: int = Field(default=3, ge=0)
    n_complex: int = Field(default=2, ge=0)
    pool_k: int = Field(default=20, ge=1)
    expanded_n: int = Field(default=5, ge=1)
    batch_size: int = Field(default=16, ge=2)
    seed: int = 0


class RetrievalSettings(_Strict):
    k1: float = 1.2
    b: float = 0.75
    rrf_k: float = Field(default=60.0, gt=0)
    fuse_depth: int = Field(default=50, ge=1)
    k_eval: int = Field(default=5, ge=1)
    n_contexts: int = Field(default=5, ge=1)


class ServerSettings(_Strict):
    host: str = "127.0.0.1"
    port: int = 8000


class PipelineConfig(_Strict):
    corpus_dir: str
    source_manifest: str | None = None
    validation_dataset: str | None = None
    embedding_model_id: str = ""
    chunking: ChunkingSettings = ChunkingSettings()
    datagen: DatagenSettings = DatagenSettings()
    retrieval: RetrievalSettings = RetrievalSettings()
    embedding: EndpointSettings
    generator: EndpointSettings
    judge: EndpointSettings | None = None
    server: ServerSettings = ServerSettings()

    def snapshot(self) -> dict:
        """Full config for report embedding; contains no secret values."""
        return self.model_dump()


def load_config(path: str | Path) -> PipelineConfig:
    with open(path, encoding="utf-8") as fh:
        return PipelineConfig.model_validate(json.load(fh))
