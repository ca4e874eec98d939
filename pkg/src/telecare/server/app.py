"""HTTP surface of the central server.

All endpoints live under /v1 and require the deployment's static bearer
token. Bodies are JSON with exact field names; unknown fields are
rejected. Error mapping: 401 unauthorized, 400 malformed or invalid input
(with the offending field named), 404 missing resource, 409 conflicting
alert acknowledgment.
"""

from __future__ import annotations

import json
import queue
from typing import Annotated, Any, Iterator, Literal

from fastapi import Depends, FastAPI, Header, HTTPException, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, ConfigDict, Field

from .alerts import Invalid
from .store import Conflict, NotFound, Store

EVENT_POLL_S = 0.5


class CellIn(BaseModel):
    model_config = ConfigDict(extra="forbid")
    mcc: int = Field(ge=0, le=999)
    mnc: int = Field(ge=0, le=999)
    lac: int = Field(ge=0, le=0xFFFF)
    ci: int = Field(ge=0, le=0xFFFFFFFF)


class ObservationIn(BaseModel):
    model_config = ConfigDict(extra="forbid")
    patient_id: str = Field(min_length=1)
    uplink_seq: int = Field(ge=0)
    timestamp_ms: int
    hr: Annotated[int, Field(ge=0, le=250)] | None
    spo2: Annotated[int, Field(ge=0, le=100)] | None
    flags: list[Literal["sensor_ok", "low_perfusion", "finger_out"]]
    mobility: Literal["resting", "active", "fall"]
    cell: CellIn
    reason: str


class PrescriptionIn(BaseModel):
    model_config = ConfigDict(extra="forbid")
    spo2_floor: int | None = None
    hr_ceiling: int | None = None
    hr_floor: int | None = None
    risk_ceiling: float | None = None
    clear_hold_s: int | None = None
    updated_by: str | None = None


class AckIn(BaseModel):
    model_config = ConfigDict(extra="forbid")
    actor: str = Field(min_length=1)


def create_app(store: Store, token: str) -> FastAPI:
    app = FastAPI(title="telecare central server", version="1.0")

    def require_auth(authorization: str | None = Header(default=None)) -> None:
        if authorization != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    auth = Depends(require_auth)

    @app.exception_handler(RequestValidationError)
    async def malformed_handler(request: Request, exc: RequestValidationError):
        fields = []
        for err in exc.errors():
            loc = [str(part) for part in err.get("loc", ()) if part != "body"]
            fields.append(".".join(loc) or "body")
        return JSONResponse(
            status_code=400,
            content={"error": "malformed", "fields": fields},
        )

    @app.exception_handler(NotFound)
    async def not_found_handler(request: Request, exc: NotFound):
        return JSONResponse(status_code=404, content={"error": "not_found", "detail": exc.what})

    @app.exception_handler(Invalid)
    async def invalid_handler(request: Request, exc: Invalid):
        return JSONResponse(
            status_code=400,
            content={"error": "invalid", "field": exc.field, "detail": str(exc)},
        )

    @app.exception_handler(Conflict)
    async def conflict_handler(request: Request, exc: Conflict):
        return JSONResponse(status_code=409, content={"error": "conflict", "detail": str(exc)})

    @app.post("/v1/observations", dependencies=[auth])
    def ingest(body: ObservationIn) -> dict[str, str]:
        return {"status": store.ingest(body.model_dump())}

    @app.get("/v1/patients", dependencies=[auth])
    def list_patients() -> list[dict[str, Any]]:
        return store.list_patients()

    @app.get("/v1/patients/{patient_id}/timeline", dependencies=[auth])
    def timeline(
        patient_id: str,
        from_ms: int | None = Query(default=None, alias="from"),
        to_ms: int | None = Query(default=None, alias="to"),
    ) -> list[dict[str, Any]]:
        return store.query_timeline(patient_id, from_ms, to_ms)

    @app.get("/v1/patients/{patient_id}/prescription", dependencies=[auth])
    def get_prescription(patient_id: str) -> dict[str, Any]:
        return store.get_prescription(patient_id).to_dict()

    @app.put("/v1/patients/{patient_id}/prescription", dependencies=[auth])
    def put_prescription(patient_id: str, body: PrescriptionIn) -> dict[str, Any]:
        fields = body.model_dump(exclude_none=True)
        return store.put_prescription(patient_id, fields).to_dict()

    @app.get("/v1/alerts", dependencies=[auth])
    def list_alerts(
        patient: str | None = Query(default=None),
        status: str | None = Query(default=None),
    ) -> list[dict[str, Any]]:
        return store.list_alerts(patient=patient, status=status)

    @app.post("/v1/alerts/{alert_id}/ack", dependencies=[auth])
    def acknowledge(alert_id: str, body: AckIn) -> dict[str, Any]:
        return store.acknowledge_alert(alert_id, body.actor)

    @app.get("/v1/events", dependencies=[auth])
    def events() -> StreamingResponse:
        """Server-push stream of new record/alert events (polling stays the contract)."""
        q = store.subscribe()

        def stream() -> Iterator[str]:
            try:
                yield ": connected\n\n"
                while True:
                    try:
                        event = q.get(timeout=EVENT_POLL_S)
                    except queue.Empty:
                        yield ": keepalive\n\n"
                        continue
                    yield f"data: {json.dumps(event, separators=(',', ':'))}\n\n"
            finally:
                store.unsubscribe(q)

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app
