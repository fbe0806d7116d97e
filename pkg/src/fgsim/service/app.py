"""FastAPI service wrapping the simulator.

Synchronous endpoints cover generation, stats, training, and evaluation;
comparisons can optionally run as background jobs polled via /jobs/{id}.
Outputs are written on the server's filesystem and reported by path.
"""

from __future__ import annotations

import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..errors import ConfigError, FgsError, ParseError
from ..runner import cmd_compare, cmd_evaluate, cmd_generate, cmd_stats, cmd_train
from ..synth import default_profiles
from .schemas import (
    CompareRequest,
    CompareResponse,
    EvaluateRequest,
    EvaluateResponse,
    GeneratedGraphModel,
    GenerateResponse,
    HealthResponse,
    JobStatus,
    JobSubmitted,
    ProfileResponse,
    RunRequest,
    StatsRequest,
    StatsResponse,
    TrainResponse,
)


class _JobRegistry:
    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._jobs: dict[str, JobStatus] = {}

    def submit(self, target, *args) -> str:
        job_id = uuid.uuid4().hex
        with self._lock:
            self._jobs[job_id] = JobStatus(job_id=job_id, status="running")

        def wrapper() -> None:
            try:
                files = target(*args)
                with self._lock:
                    self._jobs[job_id] = JobStatus(job_id=job_id, status="done", files=files)
            except Exception as exc:  # jobs always record their failure
                with self._lock:
                    self._jobs[job_id] = JobStatus(job_id=job_id, status="failed", error=str(exc))

        threading.Thread(target=wrapper, daemon=True).start()
        return job_id

    def get(self, job_id: str) -> JobStatus | None:
        with self._lock:
            return self._jobs.get(job_id)


def create_app() -> FastAPI:
    app = FastAPI(title="fgsim", version=__version__)
    jobs = _JobRegistry()

    @app.exception_handler(FgsError)
    async def _fgs_error(_, exc: FgsError):  # pragma: no cover - thin mapping
        raise HTTPException(
            status_code=400 if isinstance(exc, (ConfigError, ParseError)) else 422,
            detail=str(exc),
        )

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.get("/profiles", response_model=list[ProfileResponse])
    def profiles() -> list[ProfileResponse]:
        return [
            ProfileResponse(
                name=p.name,
                n_company=p.n_company,
                n_customer=p.n_customer,
                n_product=p.n_product,
                n_certificate=p.n_certificate,
                edges={r.value: n for r, n in p.edges_per_relation.items()},
                total_nodes=p.total_nodes,
                total_edges=p.total_edges,
            )
            for p in default_profiles()
        ]

    @app.post("/generate", response_model=GenerateResponse)
    def generate(request: RunRequest) -> GenerateResponse:
        config = request.to_run_config()
        results = _guard(cmd_generate, config)
        return GenerateResponse(
            graphs=[
                GeneratedGraphModel(
                    client=r.client,
                    path=str(r.path),
                    seed=r.seed,
                    num_nodes=r.num_nodes,
                    num_edges=r.num_edges,
                )
                for r in results
            ],
            manifest_path=str(config.out_dir / "manifest.txt"),
        )

    @app.post("/stats", response_model=StatsResponse)
    def stats(request: StatsRequest) -> StatsResponse:
        rows, warnings = _guard(cmd_stats, [Path(p) for p in request.graph_paths])
        return StatsResponse(rows=rows, warnings=warnings)

    @app.post("/train", response_model=TrainResponse)
    def train(request: RunRequest) -> TrainResponse:
        config = request.to_run_config()
        out_dir = _guard(cmd_train, config)
        ckpts = sorted(str(p) for p in (out_dir / "checkpoints").glob("*.fgs"))
        return TrainResponse(out_dir=str(out_dir), checkpoints=ckpts)

    @app.post("/evaluate", response_model=EvaluateResponse)
    def evaluate(request: EvaluateRequest) -> EvaluateResponse:
        config = request.run.to_run_config()
        ckpt_dir = Path(request.checkpoint_dir) if request.checkpoint_dir else None
        rows = _guard(cmd_evaluate, config, ckpt_dir)
        return EvaluateResponse(rows=rows)

    @app.post("/compare", response_model=CompareResponse | JobSubmitted)
    def compare(request: CompareRequest):
        config = request.run.to_run_config()
        if request.background:
            job_id = jobs.submit(lambda: [str(p) for p in cmd_compare(config).files])
            return JobSubmitted(job_id=job_id)
        result = _guard(cmd_compare, config)
        from ..evalstats import summary_csv_rows

        return CompareResponse(
            files=[str(p) for p in result.files], summary=summary_csv_rows(result.report)
        )

    @app.get("/jobs/{job_id}", response_model=JobStatus)
    def job_status(job_id: str) -> JobStatus:
        status = jobs.get(job_id)
        if status is None:
            raise HTTPException(status_code=404, detail=f"no such job: {job_id}")
        return status

    return app


def _guard(fn, *args):
    """Translate simulator errors into HTTP error responses."""
    try:
        return fn(*args)
    except (ConfigError, ParseError) as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    except FileNotFoundError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    except FgsError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


app = create_app()
