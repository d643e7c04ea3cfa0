"""HTTP review service over a run store.

All data endpoints live under /api and speak JSON with stable field names.
Status codes: 200 success, 400 malformed request, 404 unknown run or
instance, 422 semantically invalid verdict (violations listed in the body).
A static directory (the review UI build) can be mounted at the root.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .errors import DataError, NotFoundError, UsageError, ValidationError
from .evaluate import report_to_dict
from .runstore import FAILURE_STATUSES, RunStore
from .scheme import TagSpan


class SpanIn(BaseModel):
    tag: str
    start: int
    end: int


class VerdictIn(BaseModel):
    reviewer_id: str
    action: str
    act_present: Optional[bool] = None
    spans: Optional[list[SpanIn]] = None


def create_app(store: RunStore, ui_dir: Optional[str | Path] = None) -> FastAPI:
    app = FastAPI(title="spanact review service", docs_url=None, redoc_url=None)

    @app.exception_handler(NotFoundError)
    async def _not_found(_: Request, exc: NotFoundError) -> JSONResponse:
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.exception_handler(ValidationError)
    async def _invalid(_: Request, exc: ValidationError) -> JSONResponse:
        return JSONResponse(
            status_code=422, content={"detail": str(exc), "violations": exc.violations}
        )

    @app.exception_handler(DataError)
    async def _bad_data(_: Request, exc: DataError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(UsageError)
    async def _bad_usage(_: Request, exc: UsageError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(RequestValidationError)
    async def _malformed(_: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": "malformed request"})

    @app.get("/api/runs")
    def list_runs() -> dict[str, Any]:
        return {"runs": [m.to_dict() for m in store.list_runs()]}

    @app.get("/api/runs/{run_id}")
    def get_run(run_id: str) -> dict[str, Any]:
        run = store.load_run(run_id)
        return {
            "manifest": run.manifest.to_dict(),
            "scheme": run.scheme.to_dict(),
            "integrity_warnings": run.integrity_warnings,
        }

    @app.get("/api/runs/{run_id}/instances")
    def list_instances(
        run_id: str,
        status: Optional[str] = Query(default=None),
        offset: int = Query(default=0, ge=0),
        limit: int = Query(default=50, ge=1, le=500),
    ) -> dict[str, Any]:
        if status is not None and status not in ("pending", "reviewed", "failed"):
            raise DataError(f"unknown status filter {status!r}")
        entries = store.review_queue(run_id, status)
        page = entries[offset : offset + limit]
        return {
            "total": len(entries),
            "offset": offset,
            "limit": limit,
            "items": [
                {
                    "instance_id": e.instance_id,
                    "status": e.status,
                    "coverage": e.coverage,
                    "reviewed": e.reviewed,
                }
                for e in page
            ],
        }

    @app.get("/api/runs/{run_id}/instances/{instance_id}")
    def get_instance(run_id: str, instance_id: str) -> dict[str, Any]:
        run = store.load_run(run_id)
        instance = run.instances_by_id.get(instance_id)
        if instance is None:
            raise NotFoundError(f"no such instance in run {run_id}: {instance_id}")
        prediction = run.predictions_by_id.get(instance_id)
        transcript = run.transcripts.get(instance_id)
        verdict = store.latest_verdicts(run_id).get(instance_id)
        return {
            "instance": instance.to_dict(),
            "prediction": prediction.to_dict() if prediction else None,
            "transcript": transcript.to_dict() if transcript else None,
            "latest_verdict": verdict.to_dict() if verdict else None,
        }

    @app.post("/api/runs/{run_id}/instances/{instance_id}/verdict")
    def post_verdict(run_id: str, instance_id: str, body: VerdictIn) -> dict[str, Any]:
        spans: Optional[list[TagSpan]] = None
        if body.spans is not None:
            try:
                spans = [TagSpan(s.tag, s.start, s.end) for s in body.spans]
            except DataError as exc:
                raise ValidationError(str(exc)) from exc
        verdict = store.submit_verdict(
            run_id,
            instance_id,
            reviewer_id=body.reviewer_id,
            action=body.action,
            act_present=body.act_present,
            spans=spans,
        )
        return {"verdict": verdict.to_dict()}

    @app.get("/api/runs/{run_id}/metrics")
    def get_metrics(run_id: str) -> dict[str, Any]:
        run = store.load_run(run_id)
        verdicts = store.latest_verdicts(run_id)
        report = store.live_metrics(run_id)
        failed = sum(
            1 for p in run.predictions if p.status in FAILURE_STATUSES
        )
        return {
            "report": report_to_dict(report, no_act_label=run.scheme.no_act_label),
            "progress": {
                "total": len(run.instances),
                "reviewed": len(verdicts),
                "pending": len(run.instances) - len(verdicts),
                "failed": failed,
                "scored": report.n_instances,
            },
        }

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def serve(
    store: RunStore, host: str = "127.0.0.1", port: int = 8400, ui_dir: Optional[str] = None
) -> None:
    """Run the review service until interrupted."""
    import uvicorn

    uvicorn.run(create_app(store, ui_dir=ui_dir), host=host, port=port, log_level="info")
