from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from ragforge.config import EndpointSettings, PipelineConfig, RetrySettings
from ragforge.gateway import EndpointConfig, ModelGateway, RetryPolicy

from mockserver import MockModelServer


def make_gateway(base_url: str, *, max_attempts: int = 2, base_backoff: float = 0.01,
                 timeout: float = 10.0, max_concurrency: int = 8,
                 batch_limit: int = 128) -> ModelGateway:
    return ModelGateway(EndpointConfig(
        base_url=base_url,
        model_name="mock-model",
        timeout=timeout,
        max_concurrency=max_concurrency,
        batch_limit=batch_limit,
        retry=RetryPolicy(max_attempts=max_attempts, base_backoff=base_backoff),
    ))


class StubEmbedGateway:
    """embed_batch backed by a text -> vector table; no network."""

    def __init__(self, table: dict[str, np.ndarray], default_dims: int = 8):
        self.table = table
        self.default_dims = default_dims

    def embed_batch(self, texts):
        out = []
        for t in texts:
            if t in self.table:
                out.append(np.asarray(self.table[t], dtype=np.float32))
            else:
                out.append(np.ones(self.default_dims, dtype=np.float32))
        return out


def write_source_docs(root: Path, n_docs: int) -> Path:
    """Write n_docs small structured-markup documents plus a source manifest."""
    docs_dir = root / "docs"
    docs_dir.mkdir(parents=True, exist_ok=True)
    entries = {}
    for i in range(n_docs):
        doc_id = f"doc{i:02d}"
        body = (
            f"<html><body><h2>Report {i}</h2>"
            f"<p>Topic zq{i}marker appears in report {i}. "
            f"The zq{i}marker figure equals {100 + i} units this year.</p>"
            f"</body></html>"
        )
        path = docs_dir / f"{doc_id}.html"
        path.write_text(body, encoding="utf-8")
        entries[doc_id] = {"structured_markup": path.name}
    manifest = docs_dir / "sources.json"
    manifest.write_text(json.dumps({"documents": entries}), encoding="utf-8")
    return manifest


def make_pipeline_config(root: Path, base_url: str, *, n_docs: int = 3,
                         validation_dataset: str | None = None,
                         write_file: bool = False, **overrides):
    """Build a PipelineConfig (and optionally config.json) for a tiny workspace."""
    manifest = write_source_docs(root, n_docs)
    endpoint = dict(base_url=base_url, model_name="mock-model", timeout=10.0,
                    retry=RetrySettings(max_attempts=2, base_backoff=0.01).model_dump())
    payload = {
        "corpus_dir": str(root / "corpus"),
        "source_manifest": str(manifest),
        "validation_dataset": validation_dataset,
        "embedding": endpoint,
        "generator": endpoint,
        **overrides,
    }
    config = PipelineConfig.model_validate(payload)
    if write_file:
        config_path = root / "config.json"
        config_path.write_text(json.dumps(payload), encoding="utf-8")
        return config, config_path
    return config


@pytest.fixture
def mock_server():
    with MockModelServer() as server:
        yield server


@pytest.fixture
def echo_gateway(mock_server):
    gw = make_gateway(mock_server.base_url)
    yield gw
    gw.close()
