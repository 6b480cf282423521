"""Durable system of record: participants, patients, location reports, zones,
and notifications, persisted to an append-only record log with snapshots.

Every mutation is one or more log records; in-memory state is only ever
changed by applying a record, so replaying the log reproduces state exactly.

Log line format: ``<len>:<tag> <compact JSON body> <crc32 of body, 8 hex>``.
A corrupt trailing line (torn write) is discarded on recovery; corruption
anywhere else is an error. Snapshot files start with the header ``GSNAP v1``
followed by one canonical JSON document; writing a snapshot truncates the log.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import secrets
import threading
import uuid
import zlib
from dataclasses import dataclass, replace
from datetime import date, datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Optional

from .geo import GeoPoint, UnsafeZone

LOG_FILENAME = "registry.log"
SNAPSHOT_FILENAME = "registry.gsnap"
SNAPSHOT_HEADER = "GSNAP v1"

BLOOD_GROUPS = frozenset({"A+", "A-", "B+", "B-", "AB+", "AB-", "O+", "O-"})
NID_DIGIT_COUNTS = frozenset({10, 13, 17})

_PBKDF2_ITERATIONS = 60_000


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


def parse_timestamp(value: str | datetime) -> datetime:
    """ISO-8601 to aware UTC datetime; naive input is taken as UTC."""
    if isinstance(value, datetime):
        ts = value
    else:
        ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


class Role(str, Enum):
    USER = "User"
    HEALTH_SERVICE_PROVIDER = "HealthServiceProvider"
    TELECOM_SERVICE_PROVIDER = "TelecomServiceProvider"
    GOVERNMENT = "Government"


class PatientStatus(str, Enum):
    ACTIVE = "Active"
    RECOVERED = "Recovered"


class TestResult(str, Enum):
    POSITIVE = "Positive"
    NEGATIVE = "Negative"


# -- errors ------------------------------------------------------------------

class StoreError(Exception):
    """Base class for registry failures."""


class AuthenticationError(StoreError):
    """Unknown token or bad username/password."""


class AuthorizationError(StoreError):
    """Credential role not allowed for this operation."""


class DuplicateUsernameError(StoreError):
    pass


class DuplicateTokenError(StoreError):
    pass


class MalformedNidError(StoreError):
    pass


class InvalidBloodGroupError(StoreError):
    pass


class UnknownEntityError(StoreError):
    """Referenced entity does not exist."""


class UnknownUserError(UnknownEntityError):
    pass


class UnknownPatientError(UnknownEntityError):
    pass


class PatientNotActiveError(StoreError):
    """Location reported for a recovered patient."""


class AlreadyRecoveredError(StoreError):
    pass


class StaleTimestampError(StoreError):
    """Timestamp older than the latest one on record for this subject."""


class ZoneAlreadyExistsError(StoreError):
    """A zone for this location report was already created."""


class LogCorruptionError(StoreError):
    pass


class SnapshotFormatError(StoreError):
    pass


# -- records -------------------------------------------------------------------

@dataclass(frozen=True)
class UserAccount:
    user_id: str
    full_name: str
    username: str
    password_salt: str
    password_digest: str
    nid_salt: str
    nid_digest: str
    blood_group: str
    infection_date: Optional[date]
    registered_at: datetime
    last_location: Optional[tuple[GeoPoint, datetime]] = None


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    user_id: Optional[str]
    reported_by: str
    status: PatientStatus
    confirmed_at: datetime


@dataclass(frozen=True)
class LocationReport:
    report_id: str
    patient_id: str
    position: GeoPoint
    observed_at: datetime
    source: str


@dataclass(frozen=True)
class Notification:
    notification_id: str
    user_id: str
    zone_id: str
    zone_center: GeoPoint
    zone_radius_m: float
    distance_m: float
    issued_at: datetime
    message: str
    delivered: bool = False

    def payload(self) -> dict:
        """Wire form shown to the recipient: zone geometry only, no
        patient-related field of any kind."""
        return {
            "notification_id": self.notification_id,
            "zone_id": self.zone_id,
            "zone_center": {
                "latitude": self.zone_center.latitude_deg,
                "longitude": self.zone_center.longitude_deg,
            },
            "zone_radius_m": self.zone_radius_m,
            "distance_m": self.distance_m,
            "issued_at": self.issued_at.isoformat(),
            "message": self.message,
            "delivered": self.delivered,
        }


@dataclass(frozen=True)
class ApiCredential:
    token: str
    role: Role
    principal_id: str
    issued_at: datetime


def _digest(secret: str, salt_hex: str) -> str:
    return hashlib.pbkdf2_hmac(
        "sha256", secret.encode("utf-8"), bytes.fromhex(salt_hex), _PBKDF2_ITERATIONS
    ).hex()


def _validate_nid(nid: str) -> None:
    if not (isinstance(nid, str) and nid.isdigit() and len(nid) in NID_DIGIT_COUNTS):
        raise MalformedNidError(
            f"NID must be 10, 13, or 17 digits, got {len(nid) if isinstance(nid, str) else type(nid)}")


def _encode_line(tag: str, body: dict) -> str:
    body_str = json.dumps(body, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    crc = zlib.crc32(body_str.encode("utf-8")) & 0xFFFFFFFF
    return f"{len(tag)}:{tag} {body_str} {crc:08x}\n"


def _decode_line(line: str) -> tuple[str, dict]:
    line = line.rstrip("\n")
    prefix, sep, rest = line.partition(":")
    if not sep:
        raise ValueError("missing length prefix")
    n = int(prefix)
    if n <= 0 or len(rest) < n + 1 or rest[n] != " ":
        raise ValueError("bad record-type tag framing")
    tag = rest[:n]
    body_str, sep, crc_hex = rest[n + 1:].rpartition(" ")
    if not sep or len(crc_hex) != 8:
        raise ValueError("missing checksum")
    if zlib.crc32(body_str.encode("utf-8")) & 0xFFFFFFFF != int(crc_hex, 16):
        raise ValueError("checksum mismatch")
    return tag, json.loads(body_str)


class RegistryStore:
    """Single-writer registry with atomic, logged mutations.

    ``db_dir=None`` keeps everything in memory (handy in tests); otherwise
    the directory holds the record log and the latest snapshot, and opening
    the store recovers state from them.
    """

    def __init__(
        self,
        db_dir: str | Path | None = None,
        *,
        clock: Callable[[], datetime] = utcnow,
        fsync: bool = False,
    ):
        self._clock = clock
        self._fsync = fsync
        self._lock = threading.RLock()
        self._seq = 0

        self._users: dict[str, UserAccount] = {}
        self._username_to_id: dict[str, str] = {}
        self._credentials: dict[str, ApiCredential] = {}
        self._patients: dict[str, PatientRecord] = {}
        self._reports: dict[str, LocationReport] = {}
        self._last_report_at: dict[str, datetime] = {}
        self._zones: dict[str, UnsafeZone] = {}
        self._zone_by_report: dict[str, str] = {}
        self._report_by_zone: dict[str, str] = {}
        self._zones_by_patient: dict[str, list[str]] = {}
        self._notifications: dict[str, Notification] = {}
        self._notifs_by_user: dict[str, list[str]] = {}
        self._notified_pairs: set[tuple[str, str]] = set()
        self._tracking_requests: list[dict] = []
        self._audits: list[dict] = []

        self._db_dir: Optional[Path] = Path(db_dir) if db_dir is not None else None
        self._log_file = None
        if self._db_dir is not None:
            self._db_dir.mkdir(parents=True, exist_ok=True)
            self._recover()
            self._log_file = open(self._log_path, "a", encoding="utf-8")

    # -- persistence ------------------------------------------------------

    @property
    def _log_path(self) -> Path:
        assert self._db_dir is not None
        return self._db_dir / LOG_FILENAME

    @property
    def _snapshot_path(self) -> Path:
        assert self._db_dir is not None
        return self._db_dir / SNAPSHOT_FILENAME

    def close(self) -> None:
        with self._lock:
            if self._log_file is not None:
                self._log_file.close()
                self._log_file = None

    def _recover(self) -> None:
        if self._snapshot_path.exists():
            raw = self._snapshot_path.read_text(encoding="utf-8")
            header, _, body = raw.partition("\n")
            if header != SNAPSHOT_HEADER:
                raise SnapshotFormatError(f"unexpected snapshot header {header!r}")
            self._load_state(json.loads(body))
        if not self._log_path.exists():
            return
        good_end = 0
        with open(self._log_path, "r", encoding="utf-8", newline="") as fh:
            lines = fh.readlines()
        for i, line in enumerate(lines):
            try:
                if not line.endswith("\n"):
                    raise ValueError("torn write: no record terminator")
                tag, body = _decode_line(line)
            except (ValueError, json.JSONDecodeError) as exc:
                if i == len(lines) - 1:
                    # torn final record: discard it and carry on
                    with open(self._log_path, "r+b") as fb:
                        fb.truncate(good_end)
                    return
                raise LogCorruptionError(f"corrupt record on line {i + 1}: {exc}") from exc
            seq = int(body["seq"])
            if seq > self._seq:
                self._apply(tag, body)
                self._seq = seq
            good_end += len(line.encode("utf-8"))

    def _commit(self, tag: str, body: dict) -> None:
        """Assign a sequence number, append to the log, then apply."""
        body = dict(body)
        body["seq"] = self._seq + 1
        if self._log_file is not None:
            self._log_file.write(_encode_line(tag, body))
            self._log_file.flush()
            if self._fsync:
                os.fsync(self._log_file.fileno())
        self._seq = body["seq"]
        self._apply(tag, body)

    def snapshot(self) -> Path:
        """Write a full state dump and truncate the log."""
        if self._db_dir is None:
            raise StoreError("in-memory store has nowhere to snapshot")
        with self._lock:
            data = SNAPSHOT_HEADER + "\n" + json.dumps(
                self._state_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False
            ) + "\n"
            tmp = self._snapshot_path.with_suffix(".tmp")
            with open(tmp, "w", encoding="utf-8") as fh:
                fh.write(data)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, self._snapshot_path)
            if self._log_file is not None:
                self._log_file.close()
            self._log_file = open(self._log_path, "w", encoding="utf-8")
            return self._snapshot_path

    def state_bytes(self) -> bytes:
        """Canonical serialization of the full committed state."""
        with self._lock:
            return json.dumps(
                self._state_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False
            ).encode("utf-8")

    # -- state (de)serialization -------------------------------------------

    def _state_dict(self) -> dict:
        def dt(ts: datetime) -> str:
            return ts.isoformat()

        users = []
        for u in self._users.values():
            loc = None
            if u.last_location is not None:
                p, ts = u.last_location
                loc = {"latitude": p.latitude_deg, "longitude": p.longitude_deg,
                       "observed_at": dt(ts)}
            users.append({
                "user_id": u.user_id, "full_name": u.full_name, "username": u.username,
                "password_salt": u.password_salt, "password_digest": u.password_digest,
                "nid_salt": u.nid_salt, "nid_digest": u.nid_digest,
                "blood_group": u.blood_group,
                "infection_date": u.infection_date.isoformat() if u.infection_date else None,
                "registered_at": dt(u.registered_at), "last_location": loc,
            })
        return {
            "last_seq": self._seq,
            "users": users,
            "credentials": [
                {"token": c.token, "role": c.role.value, "principal_id": c.principal_id,
                 "issued_at": dt(c.issued_at)}
                for c in self._credentials.values()
            ],
            "patients": [
                {"patient_id": p.patient_id, "user_id": p.user_id, "reported_by": p.reported_by,
                 "status": p.status.value, "confirmed_at": dt(p.confirmed_at)}
                for p in self._patients.values()
            ],
            "reports": [
                {"report_id": r.report_id, "patient_id": r.patient_id,
                 "latitude": r.position.latitude_deg, "longitude": r.position.longitude_deg,
                 "observed_at": dt(r.observed_at), "source": r.source}
                for r in self._reports.values()
            ],
            "zones": [
                {"zone_id": z.zone_id, "report_id": self._report_by_zone.get(z.zone_id),
                 "patient_ref": z.patient_ref,
                 "latitude": z.center.latitude_deg, "longitude": z.center.longitude_deg,
                 "radius_m": z.radius_m, "area_m2": z.area_m2,
                 "created_at": dt(z.created_at), "expires_at": dt(z.expires_at),
                 "active": z.active}
                for z in self._zones.values()
            ],
            "notifications": [
                {"notification_id": n.notification_id, "user_id": n.user_id,
                 "zone_id": n.zone_id,
                 "zone_latitude": n.zone_center.latitude_deg,
                 "zone_longitude": n.zone_center.longitude_deg,
                 "zone_radius_m": n.zone_radius_m, "distance_m": n.distance_m,
                 "issued_at": dt(n.issued_at), "message": n.message,
                 "delivered": n.delivered}
                for n in self._notifications.values()
            ],
            "tracking_requests": list(self._tracking_requests),
            "audits": list(self._audits),
        }

    def _load_state(self, state: dict) -> None:
        self._seq = int(state["last_seq"])
        for u in state["users"]:
            loc = None
            if u["last_location"] is not None:
                l = u["last_location"]
                loc = (GeoPoint(l["latitude"], l["longitude"]), parse_timestamp(l["observed_at"]))
            account = UserAccount(
                user_id=u["user_id"], full_name=u["full_name"], username=u["username"],
                password_salt=u["password_salt"], password_digest=u["password_digest"],
                nid_salt=u["nid_salt"], nid_digest=u["nid_digest"],
                blood_group=u["blood_group"],
                infection_date=date.fromisoformat(u["infection_date"]) if u["infection_date"] else None,
                registered_at=parse_timestamp(u["registered_at"]), last_location=loc,
            )
            self._users[account.user_id] = account
            self._username_to_id[account.username] = account.user_id
        for c in state["credentials"]:
            cred = ApiCredential(token=c["token"], role=Role(c["role"]),
                                 principal_id=c["principal_id"],
                                 issued_at=parse_timestamp(c["issued_at"]))
            self._credentials[cred.token] = cred
        for p in state["patients"]:
            rec = PatientRecord(patient_id=p["patient_id"], user_id=p["user_id"],
                                reported_by=p["reported_by"], status=PatientStatus(p["status"]),
                                confirmed_at=parse_timestamp(p["confirmed_at"]))
            self._patients[rec.patient_id] = rec
        for r in state["reports"]:
            rep = LocationReport(report_id=r["report_id"], patient_id=r["patient_id"],
                                 position=GeoPoint(r["latitude"], r["longitude"]),
                                 observed_at=parse_timestamp(r["observed_at"]), source=r["source"])
            self._reports[rep.report_id] = rep
            prev = self._last_report_at.get(rep.patient_id)
            if prev is None or rep.observed_at > prev:
                self._last_report_at[rep.patient_id] = rep.observed_at
        for z in state["zones"]:
            zone = UnsafeZone(zone_id=z["zone_id"], center=GeoPoint(z["latitude"], z["longitude"]),
                              radius_m=z["radius_m"], area_m2=z["area_m2"],
                              patient_ref=z["patient_ref"],
                              created_at=parse_timestamp(z["created_at"]),
                              expires_at=parse_timestamp(z["expires_at"]), active=z["active"])
            self._zones[zone.zone_id] = zone
            if z["report_id"] is not None:
                self._zone_by_report[z["report_id"]] = zone.zone_id
                self._report_by_zone[zone.zone_id] = z["report_id"]
            self._zones_by_patient.setdefault(zone.patient_ref, []).append(zone.zone_id)
        for n in state["notifications"]:
            notif = Notification(
                notification_id=n["notification_id"], user_id=n["user_id"], zone_id=n["zone_id"],
                zone_center=GeoPoint(n["zone_latitude"], n["zone_longitude"]),
                zone_radius_m=n["zone_radius_m"], distance_m=n["distance_m"],
                issued_at=parse_timestamp(n["issued_at"]), message=n["message"],
                delivered=n["delivered"],
            )
            self._notifications[notif.notification_id] = notif
            self._notifs_by_user.setdefault(notif.user_id, []).append(notif.notification_id)
            self._notified_pairs.add((notif.user_id, notif.zone_id))
        self._tracking_requests = list(state["tracking_requests"])
        self._audits = list(state["audits"])

    # -- record application (the only state mutator) -----------------------

    def _apply(self, tag: str, body: dict) -> None:
        if tag == "user":
            account = UserAccount(
                user_id=body["user_id"], full_name=body["full_name"],
                username=body["username"],
                password_salt=body["password_salt"], password_digest=body["password_digest"],
                nid_salt=body["nid_salt"], nid_digest=body["nid_digest"],
                blood_group=body["blood_group"],
                infection_date=date.fromisoformat(body["infection_date"])
                if body["infection_date"] else None,
                registered_at=parse_timestamp(body["registered_at"]),
            )
            self._users[account.user_id] = account
            self._username_to_id[account.username] = account.user_id
        elif tag == "credential":
            cred = ApiCredential(token=body["token"], role=Role(body["role"]),
                                 principal_id=body["principal_id"],
                                 issued_at=parse_timestamp(body["issued_at"]))
            self._credentials[cred.token] = cred
        elif tag == "test_audit":
            self._audits.append({k: body[k] for k in (
                "audit_id", "reported_by", "result", "subject_user_id",
                "subject_name", "subject_nid_digest", "at")})
        elif tag == "patient":
            rec = PatientRecord(patient_id=body["patient_id"], user_id=body["user_id"],
                                reported_by=body["reported_by"], status=PatientStatus.ACTIVE,
                                confirmed_at=parse_timestamp(body["confirmed_at"]))
            self._patients[rec.patient_id] = rec
        elif tag == "tracking_request":
            self._tracking_requests.append({k: body[k] for k in (
                "request_id", "patient_id", "requested_at")})
        elif tag == "location_report":
            rep = LocationReport(report_id=body["report_id"], patient_id=body["patient_id"],
                                 position=GeoPoint(body["latitude"], body["longitude"]),
                                 observed_at=parse_timestamp(body["observed_at"]),
                                 source=body["source"])
            self._reports[rep.report_id] = rep
            self._last_report_at[rep.patient_id] = rep.observed_at
        elif tag == "zone":
            zone = UnsafeZone(
                zone_id=body["zone_id"], center=GeoPoint(body["latitude"], body["longitude"]),
                radius_m=body["radius_m"], area_m2=body["area_m2"],
                patient_ref=body["patient_ref"],
                created_at=parse_timestamp(body["created_at"]),
                expires_at=parse_timestamp(body["expires_at"]), active=True,
            )
            self._zones[zone.zone_id] = zone
            self._zone_by_report[body["report_id"]] = zone.zone_id
            self._report_by_zone[zone.zone_id] = body["report_id"]
            self._zones_by_patient.setdefault(zone.patient_ref, []).append(zone.zone_id)
        elif tag == "patient_recovered":
            rec = self._patients[body["patient_id"]]
            self._patients[rec.patient_id] = replace(rec, status=PatientStatus.RECOVERED)
            for zone_id in self._zones_by_patient.get(rec.patient_id, []):
                self._zones[zone_id] = self._zones[zone_id].deactivated()
        elif tag == "user_location":
            account = self._users[body["user_id"]]
            self._users[account.user_id] = replace(
                account,
                last_location=(GeoPoint(body["latitude"], body["longitude"]),
                               parse_timestamp(body["observed_at"])),
            )
        elif tag == "notification":
            notif = Notification(
                notification_id=body["notification_id"], user_id=body["user_id"],
                zone_id=body["zone_id"],
                zone_center=GeoPoint(body["zone_latitude"], body["zone_longitude"]),
                zone_radius_m=body["zone_radius_m"], distance_m=body["distance_m"],
                issued_at=parse_timestamp(body["issued_at"]), message=body["message"],
            )
            self._notifications[notif.notification_id] = notif
            self._notifs_by_user.setdefault(notif.user_id, []).append(notif.notification_id)
            self._notified_pairs.add((notif.user_id, notif.zone_id))
        elif tag == "delivered":
            for notification_id in body["notification_ids"]:
                notif = self._notifications[notification_id]
                self._notifications[notification_id] = replace(notif, delivered=True)
        else:
            raise LogCorruptionError(f"unknown record type {tag!r}")

    # -- credentials -------------------------------------------------------

    def issue_credential(self, role: Role, principal_id: str,
                         token: Optional[str] = None) -> ApiCredential:
        with self._lock:
            token = token if token is not None else secrets.token_urlsafe(32)
            if token in self._credentials:
                raise DuplicateTokenError("token already issued")
            self._commit("credential", {
                "token": token, "role": Role(role).value, "principal_id": principal_id,
                "issued_at": self._clock().isoformat(),
            })
            return self._credentials[token]

    def credential_for(self, token: str) -> Optional[ApiCredential]:
        with self._lock:
            return self._credentials.get(token)

    def credentials_with_role(self, role: Role) -> list[ApiCredential]:
        with self._lock:
            return [c for c in self._credentials.values() if c.role is role]

    @staticmethod
    def _require_role(credential: ApiCredential, role: Role) -> None:
        if not isinstance(credential, ApiCredential):
            raise AuthenticationError("missing credential")
        if credential.role is not role:
            raise AuthorizationError(
                f"operation requires role {role.value}, credential has {credential.role.value}")

    # -- users ---------------------------------------------------------------

    def register_user(
        self,
        full_name: str,
        username: str,
        password: str,
        nid: str,
        blood_group: str,
        infection_date: Optional[date | str] = None,
    ) -> UserAccount:
        with self._lock:
            if not username or not isinstance(username, str):
                raise ValueError("username must be a non-empty string")
            if username in self._username_to_id:
                raise DuplicateUsernameError(f"username {username!r} is taken")
            if not password:
                raise ValueError("password must be non-empty")
            _validate_nid(nid)
            if blood_group not in BLOOD_GROUPS:
                raise InvalidBloodGroupError(f"unknown blood group {blood_group!r}")
            if isinstance(infection_date, str):
                infection_date = date.fromisoformat(infection_date)
            password_salt = secrets.token_hex(16)
            nid_salt = secrets.token_hex(16)
            body = {
                "user_id": uuid.uuid4().hex,
                "full_name": full_name,
                "username": username,
                "password_salt": password_salt,
                "password_digest": _digest(password, password_salt),
                "nid_salt": nid_salt,
                "nid_digest": _digest(nid, nid_salt),
                "blood_group": blood_group,
                "infection_date": infection_date.isoformat() if infection_date else None,
                "registered_at": self._clock().isoformat(),
            }
            # the raw nid and password leave scope here; only digests persist
            self._commit("user", body)
            return self._users[body["user_id"]]

    def authenticate(self, username: str, password: str) -> UserAccount:
        with self._lock:
            user_id = self._username_to_id.get(username)
            if user_id is None:
                raise AuthenticationError("invalid username or password")
            account = self._users[user_id]
            if _digest(password, account.password_salt) != account.password_digest:
                raise AuthenticationError("invalid username or password")
            return account

    def user(self, user_id: str) -> UserAccount:
        with self._lock:
            try:
                return self._users[user_id]
            except KeyError:
                raise UnknownUserError(user_id) from None

    def user_by_username(self, username: str) -> Optional[UserAccount]:
        with self._lock:
            user_id = self._username_to_id.get(username)
            return self._users[user_id] if user_id else None

    def users_with_location(self) -> list[UserAccount]:
        with self._lock:
            return [u for u in self._users.values() if u.last_location is not None]

    # -- test reports and patients -------------------------------------------

    def submit_test_report(
        self,
        credential: ApiCredential,
        result: str | TestResult,
        *,
        subject_user_id: Optional[str] = None,
        subject_full_name: Optional[str] = None,
        subject_nid: Optional[str] = None,
    ) -> Optional[PatientRecord]:
        with self._lock:
            self._require_role(credential, Role.HEALTH_SERVICE_PROVIDER)
            result = TestResult(result)
            if subject_user_id is not None and subject_user_id not in self._users:
                raise UnknownUserError(subject_user_id)
            nid_digest = None
            if subject_nid is not None:
                _validate_nid(subject_nid)
                nid_digest = _digest(subject_nid, secrets.token_hex(16))
            now = self._clock().isoformat()
            self._commit("test_audit", {
                "audit_id": uuid.uuid4().hex,
                "reported_by": credential.principal_id,
                "result": result.value,
                "subject_user_id": subject_user_id,
                "subject_name": subject_full_name,
                "subject_nid_digest": nid_digest,
                "at": now,
            })
            if result is not TestResult.POSITIVE:
                return None
            patient_id = uuid.uuid4().hex
            self._commit("patient", {
                "patient_id": patient_id,
                "user_id": subject_user_id,
                "reported_by": credential.principal_id,
                "confirmed_at": now,
            })
            self._commit("tracking_request", {
                "request_id": uuid.uuid4().hex,
                "patient_id": patient_id,
                "requested_at": now,
            })
            return self._patients[patient_id]

    def patient(self, patient_id: str) -> PatientRecord:
        with self._lock:
            try:
                return self._patients[patient_id]
            except KeyError:
                raise UnknownPatientError(patient_id) from None

    def mark_recovered(self, credential: ApiCredential, patient_id: str) -> PatientRecord:
        with self._lock:
            self._require_role(credential, Role.GOVERNMENT)
            record = self.patient(patient_id)
            if record.status is PatientStatus.RECOVERED:
                raise AlreadyRecoveredError(patient_id)
            self._commit("patient_recovered", {
                "patient_id": patient_id,
                "at": self._clock().isoformat(),
            })
            return self._patients[patient_id]

    def tracking_requests(self) -> list[dict]:
        with self._lock:
            return list(self._tracking_requests)

    def audits(self) -> list[dict]:
        with self._lock:
            return list(self._audits)

    # -- patient locations and zones -------------------------------------------

    def submit_patient_location(
        self,
        credential: ApiCredential,
        patient_id: str,
        position: GeoPoint,
        observed_at: datetime,
    ) -> LocationReport:
        with self._lock:
            self._require_role(credential, Role.TELECOM_SERVICE_PROVIDER)
            record = self.patient(patient_id)
            if record.status is not PatientStatus.ACTIVE:
                raise PatientNotActiveError(patient_id)
            if not isinstance(position, GeoPoint):
                raise ValueError("position must be a GeoPoint")
            observed_at = parse_timestamp(observed_at)
            last = self._last_report_at.get(patient_id)
            if last is not None and observed_at < last:
                raise StaleTimestampError(
                    f"observed_at {observed_at.isoformat()} predates last report {last.isoformat()}")
            body = {
                "report_id": uuid.uuid4().hex,
                "patient_id": patient_id,
                "latitude": position.latitude_deg,
                "longitude": position.longitude_deg,
                "observed_at": observed_at.isoformat(),
                "source": credential.principal_id,
            }
            self._commit("location_report", body)
            return self._reports[body["report_id"]]

    def report(self, report_id: str) -> LocationReport:
        with self._lock:
            try:
                return self._reports[report_id]
            except KeyError:
                raise UnknownEntityError(report_id) from None

    def add_zone(self, zone: UnsafeZone, report_id: str) -> UnsafeZone:
        with self._lock:
            if report_id not in self._reports:
                raise UnknownEntityError(report_id)
            if report_id in self._zone_by_report:
                raise ZoneAlreadyExistsError(report_id)
            self._commit("zone", {
                "zone_id": zone.zone_id,
                "report_id": report_id,
                "patient_ref": zone.patient_ref,
                "latitude": zone.center.latitude_deg,
                "longitude": zone.center.longitude_deg,
                "radius_m": zone.radius_m,
                "area_m2": zone.area_m2,
                "created_at": zone.created_at.isoformat(),
                "expires_at": zone.expires_at.isoformat(),
            })
            return self._zones[zone.zone_id]

    def zone(self, zone_id: str) -> UnsafeZone:
        with self._lock:
            try:
                return self._zones[zone_id]
            except KeyError:
                raise UnknownEntityError(zone_id) from None

    def zones(self) -> list[UnsafeZone]:
        with self._lock:
            return list(self._zones.values())

    def active_zones(self, now: Optional[datetime] = None) -> list[UnsafeZone]:
        """Zones that are flagged active and, when ``now`` is given, unexpired."""
        with self._lock:
            out = []
            for z in self._zones.values():
                if not z.active:
                    continue
                if now is not None and z.expired(now):
                    continue
                out.append(z)
            return out

    def zone_for_report(self, report_id: str) -> Optional[UnsafeZone]:
        with self._lock:
            zone_id = self._zone_by_report.get(report_id)
            return self._zones[zone_id] if zone_id else None

    def zone_ids_for_patient(self, patient_id: str) -> list[str]:
        with self._lock:
            return list(self._zones_by_patient.get(patient_id, []))

    # -- user locations -----------------------------------------------------

    def record_user_location(
        self, credential: ApiCredential, position: GeoPoint, observed_at: datetime
    ) -> UserAccount:
        with self._lock:
            self._require_role(credential, Role.USER)
            account = self.user(credential.principal_id)
            if not isinstance(position, GeoPoint):
                raise ValueError("position must be a GeoPoint")
            observed_at = parse_timestamp(observed_at)
            if account.last_location is not None and observed_at < account.last_location[1]:
                raise StaleTimestampError(
                    f"observed_at {observed_at.isoformat()} predates the stored location")
            self._commit("user_location", {
                "user_id": account.user_id,
                "latitude": position.latitude_deg,
                "longitude": position.longitude_deg,
                "observed_at": observed_at.isoformat(),
            })
            return self._users[account.user_id]

    # -- notifications ---------------------------------------------------------

    def add_notifications(
        self, zone: UnsafeZone, recipients: Iterable[tuple[str, float, str]]
    ) -> list[Notification]:
        """Append one notification per (user_id, distance_m, message) triple,
        skipping any user already notified for this zone (at-most-once)."""
        with self._lock:
            created = []
            issued_at = self._clock().isoformat()
            for user_id, distance_m, message in recipients:
                if (user_id, zone.zone_id) in self._notified_pairs:
                    continue
                if user_id not in self._users:
                    raise UnknownUserError(user_id)
                body = {
                    "notification_id": uuid.uuid4().hex,
                    "user_id": user_id,
                    "zone_id": zone.zone_id,
                    "zone_latitude": zone.center.latitude_deg,
                    "zone_longitude": zone.center.longitude_deg,
                    "zone_radius_m": zone.radius_m,
                    "distance_m": distance_m,
                    "issued_at": issued_at,
                    "message": message,
                }
                self._commit("notification", body)
                created.append(self._notifications[body["notification_id"]])
            return created

    def notifications_for_user(self, user_id: str) -> list[Notification]:
        with self._lock:
            return [self._notifications[nid] for nid in self._notifs_by_user.get(user_id, [])]

    def users_notified_for_zone(self, zone_id: str) -> set[str]:
        with self._lock:
            return {u for (u, z) in self._notified_pairs if z == zone_id}

    def mark_delivered(self, notification_ids: list[str]) -> None:
        with self._lock:
            pending = [nid for nid in notification_ids
                       if nid in self._notifications and not self._notifications[nid].delivered]
            if pending:
                self._commit("delivered", {
                    "notification_ids": pending,
                    "at": self._clock().isoformat(),
                })

    def fetch_notifications(
        self, credential: ApiCredential, since: Optional[datetime] = None
    ) -> list[Notification]:
        """This user's notifications, newest first; returned ones are marked
        delivered."""
        with self._lock:
            self._require_role(credential, Role.USER)
            notifs = self.notifications_for_user(credential.principal_id)
            if since is not None:
                since = parse_timestamp(since)
                notifs = [n for n in notifs if n.issued_at >= since]
            notifs.sort(key=lambda n: n.issued_at, reverse=True)
            self.mark_delivered([n.notification_id for n in notifs])
            return [self._notifications[n.notification_id] for n in notifs]
