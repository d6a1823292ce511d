"""In-process async job registry with a persisted journal.

One job per kind may be in flight at a time: pipeline stages mutate the
corpus directory and must not interleave. Completed jobs survive restarts
as historical records via the journal file.
"""

from __future__ import annotations

import json
import threading
import traceback
import uuid
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .errors import JobConflict

JOB_KINDS = ("ingest", "datagen", "index", "eval_retrieval", "eval_answers", "export_ft")
LOG_TAIL_LINES = 50

QUEUED = "queued"
RUNNING = "running"
SUCCEEDED = "succeeded"
FAILED = "failed"

_ACTIVE = (QUEUED, RUNNING)


@dataclass
class Job:
    job_id: str
    kind: str
    state: str = QUEUED
    progress: float = 0.0
    log_tail: deque = field(default_factory=lambda: deque(maxlen=LOG_TAIL_LINES))
    result_path: str | None = None
    params: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "job_id": self.job_id,
            "kind": self.kind,
            "state": self.state,
            "progress": self.progress,
            "log_tail": list(self.log_tail),
            "result_path": self.result_path,
            "params": self.params,
        }


class JobRegistry:
    """Thread-safe registry; each submitted job runs on its own worker thread."""

    def __init__(self, journal_path: str | Path | None = None):
        self._lock = threading.Lock()
        self._jobs: dict[str, Job] = {}
        self._order: list[str] = []
        self._journal_path = Path(journal_path) if journal_path else None
        if self._journal_path and self._journal_path.exists():
            self._load_journal()

    def _load_journal(self):
        records: dict[str, dict] = {}
        order: list[str] = []
        for line in self._journal_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec["job_id"] not in records:
                order.append(rec["job_id"])
            records[rec["job_id"]] = rec
        for job_id in order:
            rec = records[job_id]
            job = Job(job_id=job_id, kind=rec["kind"], state=rec["state"],
                      progress=rec["progress"], result_path=rec.get("result_path"),
                      params=rec.get("params", {}))
            job.log_tail.extend(rec.get("log_tail", []))
            # A restart orphans anything that was still in flight.
            if job.state in _ACTIVE:
                job.state = FAILED
                job.log_tail.append("interrupted by restart")
            self._jobs[job_id] = job
            self._order.append(job_id)

    def _journal(self, job: Job):
        if self._journal_path:
            with open(self._journal_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(job.to_json()) + "\n")

    def get(self, job_id: str) -> Job | None:
        with self._lock:
            return self._jobs.get(job_id)

    def list(self) -> list[Job]:
        with self._lock:
            return [self._jobs[j] for j in self._order]

    def submit(self, kind: str, work: Callable, params: dict | None = None) -> Job:
        """work(job, progress_cb) runs on a fresh thread; may return a result path."""
        if kind not in JOB_KINDS:
            raise ValueError(f"unknown job kind {kind!r}")
        with self._lock:
            for job in self._jobs.values():
                if job.kind == kind and job.state in _ACTIVE:
                    raise JobConflict(f"a {kind} job is already {job.state}")
            job = Job(job_id=uuid.uuid4().hex[:12], kind=kind, params=params or {})
            self._jobs[job.job_id] = job
            self._order.append(job.job_id)
            self._journal(job)

        def progress(fraction: float, message: str):
            with self._lock:
                job.progress = max(job.progress, min(1.0, fraction))
                if message:
                    job.log_tail.append(message)

        def runner():
            with self._lock:
                job.state = RUNNING
                self._journal(job)
            try:
                result = work(job, progress)
                with self._lock:
                    job.progress = 1.0
                    job.state = SUCCEEDED
                    if result is not None:
                        job.result_path = str(result)
                    self._journal(job)
            except Exception as exc:
                with self._lock:
                    job.state = FAILED
                    job.log_tail.append(f"error: {exc}")
                    for line in traceback.format_exc().splitlines()[-5:]:
                        job.log_tail.append(line)
                    self._journal(job)

        threading.Thread(target=runner, name=f"job-{kind}-{job.job_id}", daemon=True).start()
        return job

    def wait(self, job_id: str, timeout: float = 60.0) -> Job:
        """Poll until the job leaves the active states (test/CLI convenience)."""
        import time
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            job = self.get(job_id)
            if job and job.state not in _ACTIVE:
                return job
            time.sleep(0.02)
        raise TimeoutError(f"job {job_id} still active after {timeout}s")
