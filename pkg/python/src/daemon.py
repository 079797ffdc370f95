"""
FastAPI daemon for running piperate experiments over HTTP
"""

import argparse
import logging
import re
import uuid
from pathlib import Path
from typing import Any, Dict, List, Optional

import uvicorn
from dotenv import load_dotenv
from fastapi import FastAPI, HTTPException
from fastapi.concurrency import run_in_threadpool
from pydantic import BaseModel

from .config import Settings, configure_logging
from .engine import format_ticks
from .harness import (
    ComparisonReport,
    InvalidScenario,
    MismatchedScenarios,
    RunNotFound,
    apply_overrides,
    compare,
    parse_scenario,
    run_experiment,
    write_run,
)

log = logging.getLogger(__name__)

VERSION = "0.1.0"
_RUN_ID = re.compile(r"^[A-Za-z0-9_.-]+$")


class HealthResponse(BaseModel):
    """Health check response"""
    status: str
    version: str


class ScenarioRequest(BaseModel):
    """A scenario document as decoded JSON"""
    scenario: Dict[str, Any]


class ValidateResponse(BaseModel):
    valid: bool
    containers: int = 0
    machines: int = 0


class RunRequest(BaseModel):
    """Request model for a simulation run"""
    scenario: Dict[str, Any]
    overrides: Dict[str, str] = {}
    run_id: Optional[str] = None


class TimelineRow(BaseModel):
    pipe: str
    container_id: str
    T: str


class RunResponse(BaseModel):
    """Response model for a finished run"""
    run_id: str
    run_dir: str
    pipes: int
    samples: int
    timeline: List[TimelineRow] = []
    never_controlled: List[str] = []
    rejected: List[str] = []


class CompareRequest(BaseModel):
    baseline: str
    shaped: str


def create_app(settings: Optional[Settings] = None) -> FastAPI:
    """Factory function to create the FastAPI app"""
    settings = settings or Settings.from_env()
    app = FastAPI(
        title="piperate",
        description="Data-rate control simulation service",
        version=VERSION,
    )

    def run_dir(run_id: str) -> Path:
        if not _RUN_ID.match(run_id):
            raise HTTPException(status_code=400, detail=f"Invalid run id: {run_id}")
        return settings.runs_dir / run_id

    @app.get("/health", response_model=HealthResponse)
    async def health_check():
        """Health check endpoint"""
        return HealthResponse(status="healthy", version=VERSION)

    @app.post("/validate", response_model=ValidateResponse)
    async def validate(request: ScenarioRequest):
        try:
            scenario = parse_scenario(request.scenario)
        except InvalidScenario as e:
            raise HTTPException(status_code=400, detail=str(e))
        return ValidateResponse(
            valid=True,
            containers=len(scenario.container_requests),
            machines=len(scenario.machines),
        )

    @app.post("/runs", response_model=RunResponse)
    async def create_run(request: RunRequest):
        run_id = request.run_id or uuid.uuid4().hex
        out_dir = run_dir(run_id)
        try:
            scenario = apply_overrides(
                parse_scenario(request.scenario), request.overrides
            )
        except InvalidScenario as e:
            raise HTTPException(status_code=400, detail=str(e))

        log.info("Starting run %s", run_id)
        # Each run owns its engine
        result = await run_in_threadpool(run_experiment, scenario)
        await run_in_threadpool(write_run, result, out_dir)
        return RunResponse(
            run_id=run_id,
            run_dir=str(out_dir),
            pipes=len(result.recorder.pipes),
            samples=len(result.recorder.samples),
            timeline=[
                TimelineRow(
                    pipe=r.pipe.render(),
                    container_id=r.container_id,
                    T=format_ticks(r.T),
                )
                for r in result.timeline.records
            ],
            never_controlled=[str(u) for u in result.timeline.uncontrolled],
            rejected=[cid for cid, _ in result.rejected],
        )

    @app.post("/compare", response_model=ComparisonReport)
    async def compare_runs(request: CompareRequest):
        try:
            return await run_in_threadpool(
                compare, run_dir(request.baseline), run_dir(request.shaped)
            )
        except (RunNotFound, FileNotFoundError) as e:
            raise HTTPException(status_code=404, detail=str(e))
        except MismatchedScenarios as e:
            raise HTTPException(status_code=409, detail=str(e))

    @app.get("/")
    async def root():
        """Root endpoint with basic info"""
        return {
            "service": "piperate",
            "version": VERSION,
            "status": "running",
            "endpoints": {
                "health": "/health",
                "validate": "/validate (POST)",
                "runs": "/runs (POST)",
                "compare": "/compare (POST)",
                "docs": "/docs",
            },
        }

    return app


def serve(settings: Settings) -> None:
    print("🔧 Starting piperate daemon")
    print(f"📁 Runs directory: {settings.runs_dir.resolve()}")
    print(f"🌐 Server will run on http://{settings.host}:{settings.port}")
    print(f"📚 API docs available at: http://{settings.host}:{settings.port}/docs")
    uvicorn.run(
        create_app(settings),
        host=settings.host,
        port=settings.port,
        log_level=settings.log_level.lower(),
    )


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the daemon"""
    load_dotenv()
    parser = argparse.ArgumentParser(description="piperate experiment daemon")
    parser.add_argument(
        "-p",
        "--port",
        type=int,
        help="Port to listen on (default: PIPERATE_PORT or 9876)",
    )
    parser.add_argument(
        "--host", help="Host to bind to (default: PIPERATE_HOST or 127.0.0.1)"
    )
    parser.add_argument(
        "--runs-dir",
        help="Directory for run outputs (default: PIPERATE_RUNS_DIR or ./runs)",
    )
    args = parser.parse_args(argv)

    settings = Settings.from_env()
    if args.port is not None:
        settings.port = args.port
    if args.host:
        settings.host = args.host
    if args.runs_dir:
        settings.runs_dir = Path(args.runs_dir)
    configure_logging(settings.log_level)
    serve(settings)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
