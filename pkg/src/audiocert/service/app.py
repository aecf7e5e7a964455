"""HTTP service exposing certification over a small JSON API.

Jobs run on a background thread per submission and are polled by id. The
response carries both structured results and the rendered report artifacts,
so a thin client can write byte-identical files to a local run.
"""
from __future__ import annotations

import argparse
import threading
import uuid

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse

from .. import __version__
from ..certifier import CertBudget, certify_all
from ..driver import run_budget_sweep, run_corpus_job, run_transform_job
from ..errors import ConfigError, InvalidScoresError, ScorerError
from ..jobs import job_from_dict
from ..reports import dumps_toml, report_csv, report_txt, sweep_csv, sweep_txt
from ..scorer import parse_scorer_spec, probe_scorer
from ..types import Direction
from .models import (CertificateModel, HealthResponse, ItemModel, JobAccepted,
                     JobRequest, JobStatus, ProbeRequest, ProbeResponse,
                     ReportModel, ScoreCertifyRequest, ScoreCertifyResponse)

app = FastAPI(title="audiocert", version=__version__)


class JobStore:
    """In-memory registry of submitted jobs and their lifecycle state."""

    def __init__(self):
        self._lock = threading.Lock()
        self._jobs: dict[str, dict] = {}

    def create(self) -> str:
        job_id = uuid.uuid4().hex
        with self._lock:
            self._jobs[job_id] = {"status": "queued", "error": None,
                                  "error_kind": None, "reports": None, "artifacts": None}
        return job_id

    def update(self, job_id, **fields):
        with self._lock:
            self._jobs[job_id].update(fields)

    def get(self, job_id) -> dict:
        with self._lock:
            record = self._jobs.get(job_id)
            return dict(record) if record is not None else None


STORE = JobStore()


def _direction_from_name(name: str) -> Direction:
    return Direction.BONA_FIDE if name == "bona_fide" else Direction.SPOOF


def _certificate_model(cert) -> CertificateModel:
    return CertificateModel(
        bound=cert.bound, t_star=cert.t_star, c_hat=cert.c_hat, c_tilde=cert.c_tilde,
        error_prob=cert.error_prob, certified=cert.certified, epsilon=cert.epsilon,
        direction=cert.direction.value, cv_method=cert.cv_method, degenerate=cert.degenerate)


def _report_model(report) -> ReportModel:
    items = []
    for it in report.items:
        items.append(ItemModel(
            index=it.index, path=it.path, label=it.label,
            initial_class=it.initial.value if it.initial else None,
            counted_correct=it.counted_correct, bound=it.bound, t_star=it.t_star,
            c_hat=it.c_hat, c_tilde=it.c_tilde, error_prob=it.error_prob,
            cv_method=it.cv_method, degenerate=it.degenerate,
            certified={repr(eps): v for eps, v in it.certified.items()},
            error=it.error))
    binary = report.binary_pca
    return ReportModel(
        mode=report.mode, scorer=report.scorer_name, seed=report.seed,
        epsilon_grid=list(report.epsilon_grid), budget=report.budget,
        split_label=report.split_label,
        pca={repr(eps): v for eps, v in report.pca.items()},
        binary_pca=None if binary is None else {repr(eps): v for eps, v in binary.items()},
        mean_bound=report.mean_bound, mean_error_prob=report.mean_error_prob,
        items=items, config_echo=report.config_echo)


def _artifacts(reports, config_echo) -> dict:
    if len(reports) == 1 and reports[0].split_label is None:
        rep = reports[0]
        return {"report.txt": report_txt(rep), "report.csv": report_csv(rep),
                "config_echo": dumps_toml(rep.config_echo) + "\n"}
    return {"report.txt": sweep_txt(reports), "report.csv": sweep_csv(reports),
            "config_echo": dumps_toml(config_echo) + "\n"}


def _run_job(job_id: str, request: JobRequest):
    STORE.update(job_id, status="running")
    try:
        job = job_from_dict(request.job, base_dir=request.base_dir,
                            overrides=request.overrides)
        if job.splits:
            reports = run_budget_sweep(job, workers=request.workers)
        elif job.mode == "transform":
            reports = [run_transform_job(job, workers=request.workers)]
        else:
            reports = [run_corpus_job(job, workers=request.workers)]
        STORE.update(job_id, status="done",
                     reports=[_report_model(r) for r in reports],
                     artifacts=_artifacts(reports, job.config_echo))
    except ConfigError as exc:
        STORE.update(job_id, status="failed", error=str(exc), error_kind="config")
    except ScorerError as exc:
        STORE.update(job_id, status="failed", error=str(exc), error_kind="scorer")
    except Exception as exc:  # surfaced to the poller instead of a dead thread
        STORE.update(job_id, status="failed", error=f"{type(exc).__name__}: {exc}",
                     error_kind="internal")


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.post("/certify/scores", response_model=ScoreCertifyResponse)
def certify_scores(request: ScoreCertifyRequest) -> ScoreCertifyResponse:
    direction = _direction_from_name(request.direction)
    sign = -1.0 if direction is Direction.BONA_FIDE else 1.0
    try:
        budget = CertBudget(
            n=request.n, k=request.k, delta=request.delta, alpha=request.alpha,
            t_range=tuple(sorted((sign * request.t_min_magnitude,
                                  sign * request.t_max_magnitude))),
            direction=direction)
        scores = np.asarray(request.scores, dtype=np.float64)
        certs = certify_all(scores, budget, request.epsilons,
                            bootstrap_seed=request.bootstrap_seed)
    except (ValueError, ConfigError, InvalidScoresError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    return ScoreCertifyResponse(certificates=[_certificate_model(c) for c in certs])


@app.post("/jobs", response_model=JobAccepted, status_code=202)
def submit_job(request: JobRequest) -> JobAccepted:
    job_id = STORE.create()
    thread = threading.Thread(target=_run_job, args=(job_id, request), daemon=True)
    thread.start()
    return JobAccepted(job_id=job_id, status="queued")


def _lookup(job_id: str) -> dict:
    record = STORE.get(job_id)
    if record is None:
        raise HTTPException(status_code=404, detail=f"unknown job id {job_id}")
    return record


@app.get("/jobs/{job_id}", response_model=JobStatus)
def job_status(job_id: str) -> JobStatus:
    record = _lookup(job_id)
    return JobStatus(job_id=job_id, status=record["status"], error=record["error"],
                     error_kind=record["error_kind"], reports=record["reports"],
                     artifacts=record["artifacts"])


@app.get("/jobs/{job_id}/report.csv", response_class=PlainTextResponse)
def job_report_csv(job_id: str) -> str:
    record = _lookup(job_id)
    if record["status"] != "done":
        raise HTTPException(status_code=409, detail=f"job is {record['status']}")
    return record["artifacts"]["report.csv"]


@app.get("/jobs/{job_id}/report.txt", response_class=PlainTextResponse)
def job_report_txt(job_id: str) -> str:
    record = _lookup(job_id)
    if record["status"] != "done":
        raise HTTPException(status_code=409, detail=f"job is {record['status']}")
    return record["artifacts"]["report.txt"]


@app.post("/probe", response_model=ProbeResponse)
def probe(request: ProbeRequest) -> ProbeResponse:
    try:
        scorer = parse_scorer_spec(request.scorer)
    except ConfigError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    try:
        record = probe_scorer(scorer)
    except ScorerError as exc:
        raise HTTPException(status_code=502, detail=str(exc)) from exc
    finally:
        scorer.close()
    return ProbeResponse(**record)


def serve(argv=None) -> None:
    import uvicorn

    parser = argparse.ArgumentParser(prog="audiocert-service",
                                     description="HTTP certification service")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8000)
    args = parser.parse_args(argv)
    uvicorn.run(app, host=args.host, port=args.port)
