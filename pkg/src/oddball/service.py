"""HTTP surface: every pipeline operation behind one POST endpoint.

Payloads carry file *content* (dump text, TSV text) rather than paths, so
the service is stateless and any client that can read its own files can
use it. Domain errors map to HTTP 400 with a structured detail
distinguishing usage errors from data errors.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__, pipeline
from .errors import OddballError, UsageError


class ValidateRequest(BaseModel):
    dump: str


class ViolationModel(BaseModel):
    line: int | None = None
    sentence_id: str | None = None
    field: str | None = None
    message: str


class ValidateResponse(BaseModel):
    valid: bool
    sentences: int
    violations: list[ViolationModel]
    warnings: list[str]


class ScoreRequest(BaseModel):
    dump: str
    dump2: str | None = None
    method: str = "oddballness"
    g: str = "identity"
    agg: str = "max"
    combine: str | None = None
    gold: str | None = None
    threshold: float | None = None


class ScoreResponse(BaseModel):
    scores: str = Field(description="score-file content, one JSON record per sentence")
    sentences: int
    tokens: int
    exactness: float


class TuneRequest(BaseModel):
    gold: str
    method: str = "oddballness"
    g: str = "identity"
    agg: str = "max"
    dump: str | None = None
    dump2: str | None = None
    combine: str | None = None
    scores: str | None = None
    grid: list[float] | None = None


class GridPointModel(BaseModel):
    threshold: float
    flagged: int
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f05: float


class TuneResponse(BaseModel):
    method: str
    best_threshold: float
    best_f05: float
    degenerate: bool
    grid: list[GridPointModel]
    sweep: str = Field(description="canonical sweep JSON content")


class EvalRequest(BaseModel):
    gold: str
    threshold: float
    method: str = "oddballness"
    g: str = "identity"
    agg: str = "max"
    dump: str | None = None
    dump2: str | None = None
    combine: str | None = None
    scores: str | None = None


class EvalResponse(BaseModel):
    method: str
    threshold: float
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f05: float
    report: str = Field(description="canonical eval JSON content")
    predictions: str = Field(description="predicted labels in dataset TSV shape")


class ReportRequest(BaseModel):
    dev_gold: str
    test_gold: str
    dev_dump: str
    test_dump: str
    dev_dump2: str | None = None
    test_dump2: str | None = None
    methods: list[str] | None = None
    g: str = "identity"
    agg: str = "max"
    grid: list[float] | None = None


class ReportRowModel(BaseModel):
    method: str
    label: str
    threshold: float
    dev_f05: float
    test_f05: float


class ReportResponse(BaseModel):
    rows: list[ReportRowModel]
    warnings: list[str]
    table: str
    summary: str = Field(description="canonical summary JSON content")


def _http_error(exc: OddballError) -> HTTPException:
    kind = "usage" if isinstance(exc, UsageError) else "data"
    return HTTPException(
        status_code=400,
        detail={"kind": kind, "error": type(exc).__name__, "message": str(exc)},
    )


def create_app() -> FastAPI:
    app = FastAPI(
        title="oddball",
        version=__version__,
        description="Token anomaly scoring from language-model probability dumps",
    )

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/validate", response_model=ValidateResponse)
    def validate(req: ValidateRequest):
        report = pipeline.validate_dump_text(req.dump)
        return ValidateResponse(
            valid=report.valid,
            sentences=report.sentences,
            violations=[
                ViolationModel(
                    line=v.line, sentence_id=v.sentence_id, field=v.field, message=v.message
                )
                for v in report.violations
            ],
            warnings=list(report.warnings),
        )

    @app.post("/score", response_model=ScoreResponse)
    def score(req: ScoreRequest):
        try:
            run = pipeline.run_score(
                dump_text=req.dump,
                method_name=req.method,
                g=req.g,
                agg=req.agg,
                dump2_text=req.dump2,
                combine_mode=req.combine,
                gold_text=req.gold,
                threshold=req.threshold,
            )
        except OddballError as exc:
            raise _http_error(exc) from exc
        return ScoreResponse(
            scores=run.content,
            sentences=run.sentences,
            tokens=run.tokens,
            exactness=run.exactness,
        )

    @app.post("/tune", response_model=TuneResponse)
    def tune(req: TuneRequest):
        try:
            run = pipeline.run_tune(
                gold_text=req.gold,
                method_name=req.method,
                g=req.g,
                agg=req.agg,
                dump_text=req.dump,
                dump2_text=req.dump2,
                combine_mode=req.combine,
                scores_text=req.scores,
                grid=req.grid,
            )
        except OddballError as exc:
            raise _http_error(exc) from exc
        return TuneResponse(
            method=run.method.kind,
            best_threshold=run.sweep.best_threshold,
            best_f05=run.sweep.best_f,
            degenerate=run.sweep.degenerate,
            grid=[
                GridPointModel(
                    threshold=p.threshold,
                    flagged=p.flagged,
                    tp=p.result.tp,
                    fp=p.result.fp,
                    fn=p.result.fn,
                    precision=p.result.precision,
                    recall=p.result.recall,
                    f05=p.result.f_beta,
                )
                for p in run.sweep.grid
            ],
            sweep=run.content,
        )

    @app.post("/eval", response_model=EvalResponse)
    def eval_(req: EvalRequest):
        try:
            run = pipeline.run_eval(
                gold_text=req.gold,
                method_name=req.method,
                threshold=req.threshold,
                g=req.g,
                agg=req.agg,
                dump_text=req.dump,
                dump2_text=req.dump2,
                combine_mode=req.combine,
                scores_text=req.scores,
            )
        except OddballError as exc:
            raise _http_error(exc) from exc
        return EvalResponse(
            method=run.method.kind,
            threshold=run.threshold,
            tp=run.result.tp,
            fp=run.result.fp,
            fn=run.result.fn,
            precision=run.result.precision,
            recall=run.result.recall,
            f05=run.result.f_beta,
            report=run.content,
            predictions=run.predictions,
        )

    @app.post("/report", response_model=ReportResponse)
    def report(req: ReportRequest):
        try:
            run = pipeline.run_report(
                dev_gold_text=req.dev_gold,
                test_gold_text=req.test_gold,
                dev_dump_text=req.dev_dump,
                test_dump_text=req.test_dump,
                methods=req.methods,
                g=req.g,
                agg=req.agg,
                dev_dump2_text=req.dev_dump2,
                test_dump2_text=req.test_dump2,
                grid=req.grid,
            )
        except OddballError as exc:
            raise _http_error(exc) from exc
        return ReportResponse(
            rows=[
                ReportRowModel(
                    method=row.method.kind,
                    label=row.label,
                    threshold=row.threshold,
                    dev_f05=row.dev.f_beta,
                    test_f05=row.test.f_beta,
                )
                for row in run.rows
            ],
            warnings=list(run.warnings),
            table=run.table,
            summary=run.summary,
        )

    return app


app = create_app()
