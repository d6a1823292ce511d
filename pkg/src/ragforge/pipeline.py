"""Stage orchestration shared by the CLI and the service's job workers.

Each stage reads and writes files under config.corpus_dir, so the corpus
directory is the full state of a pipeline run.
"""

from __future__ import annotations

import logging
from functools import partial
from pathlib import Path
from typing import Callable

from . import datagen as dg
from .answer import AnswerRequest, AnswerResult, synthesize
from .config import PipelineConfig
from .corpus import (
    CorpusHandle,
    CorpusManifest,
    EmbeddingStore,
    build_bm25,
    load_corpus,
    save_corpus,
)
from .errors import StorageError
from .evaluation import (
    EvalItem,
    load_dataset,
    run_answer_eval,
    run_retrieval_eval,
    write_report,
)
from .gateway import ModelGateway
from .ingest import (
    ChunkingPolicy,
    convert_document,
    load_source_manifest,
    read_chunks_jsonl,
    write_chunks_jsonl,
)
from .retrieve import (
    SEMANTIC,
    RetrievalStrategy,
    Retriever,
    StrategyReport,
    load_strategy,
    save_strategy,
    semantic_search,
)

log = logging.getLogger(__name__)

Progress = Callable[[float, str], None]


def _noop_progress(fraction: float, message: str):
    pass


class Pipeline:
    def __init__(self, config: PipelineConfig):
        self.config = config
        self.corpus_dir = Path(config.corpus_dir)
        self._embed_gw: ModelGateway | None = None
        self._gen_gw: ModelGateway | None = None
        self._judge_gw: ModelGateway | None = None

    # Gateways are built lazily so offline stages never touch endpoints.
    @property
    def embed_gateway(self) -> ModelGateway:
        if self._embed_gw is None:
            self._embed_gw = ModelGateway(self.config.embedding.to_endpoint())
        return self._embed_gw

    @property
    def gen_gateway(self) -> ModelGateway:
        if self._gen_gw is None:
            self._gen_gw = ModelGateway(self.config.generator.to_endpoint())
        return self._gen_gw

    @property
    def judge_gateway(self) -> ModelGateway:
        if self._judge_gw is None:
            judge_cfg = self.config.judge or self.config.generator
            self._judge_gw = ModelGateway(judge_cfg.to_endpoint())
        return self._judge_gw

    def close(self):
        for gw in (self._embed_gw, self._gen_gw, self._judge_gw):
            if gw is not None:
                gw.close()

    # -- stages -------------------------------------------------------------

    def run_ingest(self, progress: Progress = _noop_progress) -> Path:
        """Convert every manifest document to chunks; writes chunks.jsonl."""
        if not self.config.source_manifest:
            raise StorageError("config has no source_manifest")
        policy = ChunkingPolicy(
            target_chars=self.config.chunking.target_chars,
            max_chars=self.config.chunking.max_chars,
            overlap_budget=self.config.chunking.overlap_budget,
        )
        docs = load_source_manifest(self.config.source_manifest)
        chunks = []
        for i, doc in enumerate(docs):
            chunks.extend(convert_document(doc, policy))
            progress((i + 1) / len(docs), f"converted {doc.doc_id}")
        self.corpus_dir.mkdir(parents=True, exist_ok=True)
        out = self.corpus_dir / "chunks.jsonl"
        write_chunks_jsonl(chunks, out)
        progress(1.0, f"wrote {len(chunks)} chunks")
        return out

    def run_index(self, progress: Progress = _noop_progress) -> CorpusHandle:
        """Build BM25 + embeddings from chunks.jsonl and persist the corpus."""
        chunks = read_chunks_jsonl(self.corpus_dir / "chunks.jsonl")
        progress(0.1, f"indexing {len(chunks)} chunks")
        index = build_bm25(chunks, k1=self.config.retrieval.k1, b=self.config.retrieval.b)
        progress(0.3, "bm25 index built")
        # Overlap is excluded from indexing text; only core_text is embedded.
        vectors = self.embed_gateway.embed_batch([c.core_text for c in chunks])
        dims = vectors[0].shape[0] if vectors else 1
        store = EmbeddingStore(dims=dims)
        store.upsert(list(zip([c.chunk_id for c in chunks], vectors)))
        progress(0.9, "embeddings stored")
        manifest = CorpusManifest(
            corpus_id=self.corpus_dir.name,
            chunk_count=len(chunks),
            embedding_model_id=self.config.embedding.model_name,
            embedding_dims=dims,
        )
        handle = CorpusHandle(manifest=manifest, chunks=chunks, index=index, store=store)
        save_corpus(self.corpus_dir, manifest, chunks, index, store)
        progress(1.0, "corpus saved")
        return handle

    def run_datagen(self, progress: Progress = _noop_progress) -> Path:
        """Generate and validate QA pairs; writes qa_pairs.jsonl."""
        chunks = read_chunks_jsonl(self.corpus_dir / "chunks.jsonl")
        chunks_by_id = {c.chunk_id: c for c in chunks}
        cfg = self.config.datagen
        pairs = []
        for i, chunk in enumerate(chunks):
            pairs.extend(dg.generate_qa(chunk, self.gen_gateway,
                                        n_simple=cfg.n_simple, n_complex=cfg.n_complex))
            progress(0.5 * (i + 1) / len(chunks), f"generated for {chunk.chunk_id}")
        validated = dg.validate_qa(pairs, chunks_by_id, self.gen_gateway)
        progress(0.95, f"{len(validated)}/{len(pairs)} pairs survived validation")
        out = self.corpus_dir / "qa_pairs.jsonl"
        dg.write_qa_pairs(validated, out)
        progress(1.0, "qa pairs written")
        return out

    def run_export_ft(self, progress: Progress = _noop_progress) -> list[Path]:
        """Mine negatives, build batches and triplets; writes the trainer files."""
        handle = load_corpus(self.corpus_dir)
        pairs = dg.read_qa_pairs(self.corpus_dir / "qa_pairs.jsonl")
        cfg = self.config.datagen
        chunks_by_id = handle.chunks_by_id
        all_ids = sorted(chunks_by_id)
        retrieve = partial(semantic_search, gateway=self.embed_gateway, store=handle.store)

        examples = []
        for i, pair in enumerate(pairs):
            neg = dg.mine_hard_negative(
                pair.question, pair.chunk_id, retrieve,
                pool_k=cfg.pool_k, rng_seed=cfg.seed + i, all_chunk_ids=all_ids)
            examples.append(dg.EmbedFTExample(
                question=pair.question, positive_chunk_id=pair.chunk_id,
                hard_negative_chunk_id=neg))
            progress(0.5 * (i + 1) / max(len(pairs), 1), "mining negatives")
        batches = dg.build_batches(examples, cfg.batch_size, rng_seed=cfg.seed)
        triplets = dg.build_expanded_triplets(pairs, retrieve, all_ids,
                                              n_contexts=cfg.expanded_n, rng_seed=cfg.seed)
        out = [self.corpus_dir / "embed_ft.jsonl",
               self.corpus_dir / "batches.jsonl",
               self.corpus_dir / "llm_ft.jsonl"]
        dg.export_embed_ft(examples, chunks_by_id, out[0])
        dg.export_batches(batches, examples, out[1])
        dg.export_llm_ft(triplets, chunks_by_id, out[2])
        progress(1.0, "fine-tune exports written")
        return out

    def run_choose_strategy(self, progress: Progress = _noop_progress) -> StrategyReport:
        """Pick the retrieval strategy on the validation set (semantic when absent)."""
        handle = load_corpus(self.corpus_dir)
        rcfg = self.config.retrieval
        if not self.config.validation_dataset:
            # No validation data: default to semantic search only.
            report = StrategyReport(metric_name="hit_rate",
                                    per_strategy={}, chosen=SEMANTIC, k_eval=rcfg.k_eval)
        else:
            items = load_dataset(self.config.validation_dataset)
            report_section = run_retrieval_eval(
                items, rcfg.k_eval, handle, self.embed_gateway,
                rrf_k=rcfg.rrf_k, fuse_depth=rcfg.fuse_depth)
            report = StrategyReport.from_json(report_section)
        save_strategy(report, self.corpus_dir / "strategy.json")
        progress(1.0, f"chosen strategy: {report.chosen}")
        return report

    # -- query paths --------------------------------------------------------

    def load_retriever(self) -> tuple[Retriever, CorpusHandle]:
        handle = load_corpus(self.corpus_dir)
        retriever = Retriever(handle.index, handle.store, self.embed_gateway)
        strategy_path = self.corpus_dir / "strategy.json"
        rcfg = self.config.retrieval
        if strategy_path.exists():
            report = load_strategy(strategy_path)
            retriever.lock(RetrievalStrategy(
                kind=report.chosen, rrf_k=rcfg.rrf_k, fuse_depth=rcfg.fuse_depth))
        return retriever, handle

    def answer(self, question: str, n_contexts: int | None = None) -> AnswerResult:
        retriever, handle = self.load_retriever()
        req = AnswerRequest(
            question=question,
            n_contexts=n_contexts or self.config.retrieval.n_contexts)
        return synthesize(req, retriever, handle.chunks_by_id, self.gen_gateway)

    def current_strategy(self) -> StrategyReport | None:
        path = self.corpus_dir / "strategy.json"
        return load_strategy(path) if path.exists() else None

    # -- evaluation ---------------------------------------------------------

    def run_eval(self, dataset_path: str, mode: str, out_dir: str | Path | None = None,
                 progress: Progress = _noop_progress) -> dict:
        items = load_dataset(dataset_path)
        retriever, handle = self.load_retriever()
        rcfg = self.config.retrieval
        retrieval_section = None
        if all(item.gold_chunk_ids for item in items) and items:
            retrieval_section = run_retrieval_eval(
                items, rcfg.k_eval, handle, self.embed_gateway,
                rrf_k=rcfg.rrf_k, fuse_depth=rcfg.fuse_depth)
            progress(0.3, "retrieval strategies scored")
        report = run_answer_eval(
            items, mode, retriever, handle,
            self.gen_gateway, self.judge_gateway, rcfg.n_contexts,
            dataset_id=Path(dataset_path).stem,
            config_snapshot=self.config.snapshot(),
            retrieval_section=retrieval_section)
        write_report(report, out_dir or self.corpus_dir)
        progress(1.0, f"accuracy {report['answers']['accuracy']:.3f}")
        return report

    def run_retrieval_only_eval(self, dataset_path: str,
                                progress: Progress = _noop_progress) -> dict:
        items = load_dataset(dataset_path)
        handle = load_corpus(self.corpus_dir)
        rcfg = self.config.retrieval
        section = run_retrieval_eval(items, rcfg.k_eval, handle, self.embed_gateway,
                                     rrf_k=rcfg.rrf_k, fuse_depth=rcfg.fuse_depth)
        progress(1.0, "retrieval evaluation done")
        return section
