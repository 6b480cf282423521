"""HTTP surface of the tracing service.

All bodies are UTF-8 JSON; authenticated endpoints take a bearer token in the
Authorization header. Status codes: 400 validation, 401 bad token, 403 wrong
role, 404 unknown entity, 409 duplicate/conflict.
"""

from __future__ import annotations

import asyncio
import json
from typing import Callable, Optional

from fastapi import Depends, FastAPI, Header, HTTPException, Request
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel

from .geo import GeoPoint, SafetyVerdict, UnsafeZone
from .service import BoundingBox, TracingService, ZoneEvent
from .store import (
    AlreadyRecoveredError,
    ApiCredential,
    AuthenticationError,
    AuthorizationError,
    DuplicateTokenError,
    DuplicateUsernameError,
    InvalidBloodGroupError,
    LocationReport,
    MalformedNidError,
    Notification,
    PatientNotActiveError,
    PatientRecord,
    Role,
    StaleTimestampError,
    StoreError,
    UnknownEntityError,
    UserAccount,
    ZoneAlreadyExistsError,
    parse_timestamp,
)

_STATUS_BY_ERROR: tuple[tuple[type, int], ...] = (
    (AuthenticationError, 401),
    (AuthorizationError, 403),
    (UnknownEntityError, 404),
    (DuplicateUsernameError, 409),
    (DuplicateTokenError, 409),
    (AlreadyRecoveredError, 409),
    (PatientNotActiveError, 409),
    (StaleTimestampError, 409),
    (ZoneAlreadyExistsError, 409),
    (MalformedNidError, 400),
    (InvalidBloodGroupError, 400),
)


class RegisterRequest(BaseModel):
    full_name: str
    username: str
    password: str
    nid: str
    blood_group: str
    infection_date: Optional[str] = None


class LoginRequest(BaseModel):
    username: str
    password: str


class TestSubject(BaseModel):
    user_id: Optional[str] = None
    full_name: Optional[str] = None
    nid: Optional[str] = None


class TestReportRequest(BaseModel):
    result: str
    subject: TestSubject = TestSubject()


class PatientLocationRequest(BaseModel):
    patient_id: str
    latitude: float
    longitude: float
    observed_at: str


class UserLocationRequest(BaseModel):
    latitude: float
    longitude: float
    observed_at: str


def _user_payload(account: UserAccount) -> dict:
    loc = None
    if account.last_location is not None:
        point, ts = account.last_location
        loc = {"latitude": point.latitude_deg, "longitude": point.longitude_deg,
               "observed_at": ts.isoformat()}
    return {
        "user_id": account.user_id,
        "username": account.username,
        "full_name": account.full_name,
        "blood_group": account.blood_group,
        "infection_date": account.infection_date.isoformat() if account.infection_date else None,
        "registered_at": account.registered_at.isoformat(),
        "last_location": loc,
    }


def _patient_payload(record: PatientRecord) -> dict:
    return {
        "patient_id": record.patient_id,
        "user_id": record.user_id,
        "reported_by": record.reported_by,
        "status": record.status.value,
        "confirmed_at": record.confirmed_at.isoformat(),
    }


def _report_payload(report: LocationReport) -> dict:
    return {
        "report_id": report.report_id,
        "patient_id": report.patient_id,
        "latitude": report.position.latitude_deg,
        "longitude": report.position.longitude_deg,
        "observed_at": report.observed_at.isoformat(),
    }


def _zone_public_payload(zone: UnsafeZone) -> dict:
    # the public zone view: geometry and creation time only
    return {
        "zone_id": zone.zone_id,
        "center": {"latitude": zone.center.latitude_deg,
                   "longitude": zone.center.longitude_deg},
        "radius_m": zone.radius_m,
        "created_at": zone.created_at.isoformat(),
    }


def _verdict_payload(verdict: SafetyVerdict) -> dict:
    return {
        "status": verdict.status.value,
        "matched_zone_id": verdict.matched_zone_id,
        "distance_to_nearest_zone_center_m": verdict.distance_to_nearest_zone_center_m,
    }


def create_app(service: TracingService, *, stream_poll_seconds: float = 0.25) -> FastAPI:
    app = FastAPI(title="geosafe tracing service", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={
            "error": "validation failed", "detail": jsonable_encoder(exc.errors()),
        })

    @app.exception_handler(StoreError)
    async def on_store_error(request: Request, exc: StoreError):
        for klass, code in _STATUS_BY_ERROR:
            if isinstance(exc, klass):
                return JSONResponse(status_code=code, content={"error": str(exc)})
        return JSONResponse(status_code=500, content={"error": str(exc)})

    def run(fn: Callable):
        """Invoke a domain call, mapping value errors to 400 responses."""
        try:
            return fn()
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None

    def credential_from(authorization: Optional[str]) -> ApiCredential:
        if not authorization or not authorization.startswith("Bearer "):
            raise HTTPException(status_code=401, detail="missing bearer token")
        credential = service.store.credential_for(authorization[len("Bearer "):])
        if credential is None:
            raise HTTPException(status_code=401, detail="unknown token")
        return credential

    def require_role(role: Role):
        def dependency(authorization: Optional[str] = Header(default=None)) -> ApiCredential:
            credential = credential_from(authorization)
            if credential.role is not role:
                raise HTTPException(
                    status_code=403,
                    detail=f"requires role {role.value}, token has {credential.role.value}")
            return credential
        return dependency

    require_user = require_role(Role.USER)
    require_hsp = require_role(Role.HEALTH_SERVICE_PROVIDER)
    require_tsp = require_role(Role.TELECOM_SERVICE_PROVIDER)
    require_government = require_role(Role.GOVERNMENT)

    # -- public ------------------------------------------------------------

    @app.post("/users", status_code=201)
    def register_user(req: RegisterRequest):
        account = run(lambda: service.register_user(
            full_name=req.full_name, username=req.username, password=req.password,
            nid=req.nid, blood_group=req.blood_group, infection_date=req.infection_date,
        ))
        return _user_payload(account)

    @app.post("/auth/login")
    def login(req: LoginRequest):
        credential = run(lambda: service.login(req.username, req.password))
        return {"token": credential.token, "role": credential.role.value,
                "principal_id": credential.principal_id}

    @app.get("/safety")
    def safety(lat: float, lon: float):
        point = run(lambda: GeoPoint(lat, lon))
        return _verdict_payload(service.safety_query(point))

    @app.get("/zones")
    def zones(south: float, west: float, north: float, east: float):
        box = run(lambda: BoundingBox(south=south, west=west, north=north, east=east))
        return {"zones": [_zone_public_payload(z) for z in service.list_zones(box)]}

    # -- provider roles -------------------------------------------------------

    @app.post("/reports/tests", status_code=201)
    def submit_test_report(req: TestReportRequest,
                           credential: ApiCredential = Depends(require_hsp)):
        record = run(lambda: service.submit_test_report(
            credential, req.result,
            subject_user_id=req.subject.user_id,
            subject_full_name=req.subject.full_name,
            subject_nid=req.subject.nid,
        ))
        return {"patient": _patient_payload(record) if record else None}

    @app.post("/reports/locations", status_code=201)
    def submit_patient_location(req: PatientLocationRequest,
                                credential: ApiCredential = Depends(require_tsp)):
        point = run(lambda: GeoPoint(req.latitude, req.longitude))
        observed_at = run(lambda: parse_timestamp(req.observed_at))
        report, event = service.submit_patient_location(
            credential, req.patient_id, point, observed_at)
        return {
            "report": _report_payload(report),
            "zone": _zone_public_payload(event.zone),
            "notified_user_count": len(event.notified_user_ids),
        }

    @app.post("/patients/{patient_id}/recovered")
    def mark_recovered(patient_id: str,
                       credential: ApiCredential = Depends(require_government)):
        record = service.mark_recovered(credential, patient_id)
        return _patient_payload(record)

    # -- citizen role ----------------------------------------------------------

    @app.put("/me/location")
    def record_my_location(req: UserLocationRequest,
                           credential: ApiCredential = Depends(require_user)):
        point = run(lambda: GeoPoint(req.latitude, req.longitude))
        observed_at = run(lambda: parse_timestamp(req.observed_at))
        account = service.record_user_location(credential, point, observed_at)
        return _user_payload(account)

    @app.get("/me/notifications")
    def my_notifications(since: Optional[str] = None,
                         credential: ApiCredential = Depends(require_user)):
        since_ts = run(lambda: parse_timestamp(since)) if since is not None else None
        notifications = service.fetch_notifications(credential, since_ts)
        return {"notifications": [n.payload() for n in notifications]}

    @app.get("/stream")
    async def stream(credential: ApiCredential = Depends(require_user),
                     limit: Optional[int] = None):
        async def events():
            sent = 0
            yield ": connected\n\n"
            while limit is None or sent < limit:
                for n in service.undelivered_notifications(credential.principal_id):
                    if limit is not None and sent >= limit:
                        break
                    data = json.dumps(n.payload(), separators=(",", ":"))
                    yield f"id: {n.notification_id}\nevent: notification\ndata: {data}\n\n"
                    service.store.mark_delivered([n.notification_id])
                    sent += 1
                if limit is not None and sent >= limit:
                    break
                await asyncio.sleep(stream_poll_seconds)

        return StreamingResponse(events(), media_type="text/event-stream", headers={
            "Cache-Control": "no-store", "X-Accel-Buffering": "no",
        })

    return app
