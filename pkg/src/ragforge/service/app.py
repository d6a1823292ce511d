"""HTTP service wrapping the pipeline: job launches, status, answers, strategy."""

from __future__ import annotations

import json
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles

from ..config import PipelineConfig
from ..errors import JobConflict, RagForgeError, StorageError, TransportError
from ..evaluation import MODE_EXACT, MODE_JUDGE
from ..jobs import JOB_KINDS, JobRegistry
from ..pipeline import Pipeline
from .schemas import (
    AnswerApiRequest,
    AnswerApiResponse,
    ContextView,
    JobCreateRequest,
    JobCreateResponse,
    JobView,
)


def create_app(config: PipelineConfig, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="ragforge", version="0.1.0")
    pipeline = Pipeline(config)
    Path(config.corpus_dir).mkdir(parents=True, exist_ok=True)
    registry = JobRegistry(Path(config.corpus_dir) / "jobs.jsonl")
    app.state.pipeline = pipeline
    app.state.registry = registry

    def _job_work(kind: str, params: dict):
        def work(job, progress):
            if kind == "ingest":
                return pipeline.run_ingest(progress)
            if kind == "index":
                pipeline.run_index(progress)
                return pipeline.corpus_dir
            if kind == "datagen":
                return pipeline.run_datagen(progress)
            if kind == "export_ft":
                paths = pipeline.run_export_ft(progress)
                return paths[0].parent
            if kind == "eval_retrieval":
                report = pipeline.run_choose_strategy(progress)
                progress(1.0, f"chosen {report.chosen}")
                return pipeline.corpus_dir / "strategy.json"
            if kind == "eval_answers":
                mode = params.get("mode", MODE_JUDGE)
                if mode not in (MODE_EXACT, MODE_JUDGE):
                    raise ValueError(f"unknown mode {mode!r}")
                dataset = params["dataset"]
                out_dir = params.get("out_dir") or pipeline.corpus_dir
                pipeline.run_eval(dataset, mode, out_dir=out_dir, progress=progress)
                return Path(out_dir) / "report.json"
            raise ValueError(f"unknown job kind {kind!r}")
        return work

    @app.post("/api/jobs", response_model=JobCreateResponse, status_code=201)
    def create_job(body: JobCreateRequest):
        if body.kind not in JOB_KINDS:
            raise HTTPException(status_code=422, detail=f"unknown job kind {body.kind!r}")
        if body.kind == "eval_answers" and "dataset" not in body.params:
            raise HTTPException(status_code=422, detail="eval_answers requires params.dataset")
        try:
            job = app.state.registry.submit(body.kind, _job_work(body.kind, body.params),
                                            params=body.params)
        except JobConflict as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return JobCreateResponse(job_id=job.job_id)

    @app.get("/api/jobs", response_model=list[JobView])
    def list_jobs():
        return [JobView(**job.to_json()) for job in app.state.registry.list()]

    @app.get("/api/jobs/{job_id}", response_model=JobView)
    def get_job(job_id: str):
        job = app.state.registry.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="unknown job")
        return JobView(**job.to_json())

    @app.get("/api/jobs/{job_id}/report")
    def job_report(job_id: str):
        """The report.json produced by a succeeded eval_answers job."""
        job = app.state.registry.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="unknown job")
        if job.kind != "eval_answers" or job.state != "succeeded" or not job.result_path:
            raise HTTPException(status_code=404, detail="job has no report")
        path = Path(job.result_path)
        if not path.is_file():
            raise HTTPException(status_code=404, detail="report file missing")
        return json.loads(path.read_text(encoding="utf-8"))

    @app.post("/api/answer", response_model=AnswerApiResponse)
    def answer(body: AnswerApiRequest):
        try:
            result = pipeline.answer(body.question, n_contexts=body.n)
        except TransportError as exc:
            raise HTTPException(status_code=502, detail=str(exc))
        except StorageError as exc:
            raise HTTPException(status_code=409, detail=f"corpus not ready: {exc}")
        except RagForgeError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return AnswerApiResponse(
            answer=result.answer,
            contexts=[
                ContextView(chunk_id=cid, text=text, score=score, rank=i + 1)
                for i, ((cid, text), score) in enumerate(zip(result.contexts, result.scores))
            ],
        )

    @app.get("/api/strategy")
    def strategy():
        report = pipeline.current_strategy()
        if report is None:
            raise HTTPException(status_code=404, detail="no strategy chosen yet")
        return report.to_json()

    @app.get("/api/config")
    def config_view():
        # Config never holds key values, only env var names.
        return config.snapshot()

    static = Path(static_dir) if static_dir else None
    if static and static.is_dir():
        app.mount("/", StaticFiles(directory=static, html=True), name="webui")

    return app
