"""Tracing workflow orchestration: reports in, zones built, alerts out.

Wires the registry, the geodesy core, and two grid indexes (active zones,
user last-known locations) into the report -> track -> mark -> notify loop,
and answers the safety queries the public endpoints expose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Callable, Optional

from .geo import (
    BOUNDARY_GUARD_M,
    DEFAULT_ZONE_TTL,
    GeoPoint,
    SafetyStatus,
    SafetyVerdict,
    UnsafeZone,
    ZoneParameters,
    destination_point,
    find_unsafe_area,
    haversine_distance_m,
)
from .grid import GridIndex
from .store import (
    ApiCredential,
    LocationReport,
    Notification,
    PatientRecord,
    RegistryStore,
    Role,
    UserAccount,
    utcnow,
)

PROVIDER_ROLES = (Role.HEALTH_SERVICE_PROVIDER, Role.TELECOM_SERVICE_PROVIDER, Role.GOVERNMENT)


@dataclass(frozen=True)
class ZoneEvent:
    """Outcome of processing one patient location report."""

    zone: UnsafeZone
    report_id: str
    notified_user_ids: frozenset[str]


@dataclass(frozen=True)
class BoundingBox:
    south: float
    west: float
    north: float
    east: float

    def __post_init__(self) -> None:
        for name in ("south", "north"):
            v = getattr(self, name)
            if not (math.isfinite(v) and -90.0 <= v <= 90.0):
                raise ValueError(f"{name} latitude {v!r} invalid")
        for name in ("west", "east"):
            v = getattr(self, name)
            if not (math.isfinite(v) and -180.0 <= v <= 180.0):
                raise ValueError(f"{name} longitude {v!r} invalid")
        if self.south > self.north:
            raise ValueError("south must be <= north")

    def contains(self, p: GeoPoint) -> bool:
        if not self.south <= p.latitude_deg <= self.north:
            return False
        lon = p.longitude_deg
        if self.west <= self.east:
            return self.west <= lon <= self.east
        return lon >= self.west or lon <= self.east  # box wraps the antimeridian


def _nearest_box_point(box: BoundingBox, p: GeoPoint) -> GeoPoint:
    """Clamp ``p`` into the box (wrap-aware in longitude)."""
    lat = min(max(p.latitude_deg, box.south), box.north)
    lon = p.longitude_deg
    if box.west <= box.east:
        if lon < box.west or lon > box.east:
            # nearer edge by angular separation
            d_west = abs((lon - box.west + 180.0) % 360.0 - 180.0)
            d_east = abs((lon - box.east + 180.0) % 360.0 - 180.0)
            lon = box.west if d_west <= d_east else box.east
    else:
        if not (lon >= box.west or lon <= box.east):
            d_west = abs((lon - box.west + 180.0) % 360.0 - 180.0)
            d_east = abs((lon - box.east + 180.0) % 360.0 - 180.0)
            lon = box.west if d_west <= d_east else box.east
    return GeoPoint(lat, lon)


def zone_intersects_box(zone: UnsafeZone, box: BoundingBox) -> bool:
    nearest = _nearest_box_point(box, zone.center)
    return haversine_distance_m(zone.center, nearest) <= zone.radius_m + BOUNDARY_GUARD_M


def default_alert_message(distance_m: float, radius_m: float) -> str:
    return (f"Unsafe area alert: your last reported position is {distance_m:.1f} m "
            f"from the center of a marked zone (radius {radius_m:.1f} m). "
            "Please move away from the area and follow health guidance.")


class TracingService:
    """Network-facing orchestrator over a registry store."""

    def __init__(
        self,
        store: RegistryStore,
        params: ZoneParameters = ZoneParameters(),
        *,
        cell_size_deg: float = 0.001,
        zone_ttl: timedelta = DEFAULT_ZONE_TTL,
        clock: Callable[[], datetime] = utcnow,
    ):
        self.store = store
        self.params = params
        self.zone_ttl = zone_ttl
        self.clock = clock
        self.zone_index = GridIndex(cell_size_deg)
        self.user_index = GridIndex(cell_size_deg)
        self._rebuild_indexes()

    def _rebuild_indexes(self) -> None:
        now = self.clock()
        for zone in self.store.active_zones(now):
            self.zone_index.insert(zone.zone_id, zone.center, zone.radius_m)
        for account in self.store.users_with_location():
            self.user_index.insert(account.user_id, account.last_location[0])

    # -- account and credential plumbing ------------------------------------

    def register_user(self, **fields) -> UserAccount:
        return self.store.register_user(**fields)

    def login(self, username: str, password: str) -> ApiCredential:
        account = self.store.authenticate(username, password)
        return self.store.issue_credential(Role.USER, account.user_id)

    def ensure_provider_credentials(
        self, fixed_tokens: Optional[dict[Role, str]] = None
    ) -> dict[Role, str]:
        """Issue one credential per provider role unless one already exists.

        Returns role -> token for every provider role, so an operator can
        hand the tokens to the HSP/TSP/Government clients.
        """
        fixed_tokens = fixed_tokens or {}
        out: dict[Role, str] = {}
        for role in PROVIDER_ROLES:
            existing = self.store.credentials_with_role(role)
            if existing:
                out[role] = existing[0].token
                continue
            cred = self.store.issue_credential(
                role, f"{role.value.lower()}-1", token=fixed_tokens.get(role))
            out[role] = cred.token
        return out

    # -- the report -> track -> mark -> notify loop ---------------------------

    def submit_test_report(self, credential: ApiCredential, result: str,
                           **subject) -> Optional[PatientRecord]:
        return self.store.submit_test_report(credential, result, **subject)

    def submit_patient_location(
        self,
        credential: ApiCredential,
        patient_id: str,
        position: GeoPoint,
        observed_at: datetime,
    ) -> tuple[LocationReport, ZoneEvent]:
        report = self.store.submit_patient_location(credential, patient_id, position, observed_at)
        return report, self.on_location_report(report)

    def on_location_report(self, report: LocationReport) -> ZoneEvent:
        """Build the unsafe zone for a persisted report and fan out alerts.

        Idempotent per report id: re-delivery returns the existing event and
        creates nothing new. The index insert happens before anything is
        persisted, so an insert failure aborts the whole event.
        """
        existing = self.store.zone_for_report(report.report_id)
        if existing is not None:
            return ZoneEvent(
                zone=existing,
                report_id=report.report_id,
                notified_user_ids=frozenset(
                    self.store.users_notified_for_zone(existing.zone_id)),
            )
        zone = find_unsafe_area(
            report.position, self.params, patient_ref=report.patient_id,
            now=self.clock(), ttl=self.zone_ttl,
        )
        self.zone_index.insert(zone.zone_id, zone.center, zone.radius_m)
        try:
            zone = self.store.add_zone(zone, report.report_id)
            notify_radius = zone.radius_m + self.params.notify_buffer_m
            user_ids = self.user_index.query_disc(zone.center, notify_radius)
            recipients = []
            for user_id in sorted(user_ids):
                account = self.store.user(user_id)
                distance = haversine_distance_m(account.last_location[0], zone.center)
                recipients.append(
                    (user_id, distance, default_alert_message(distance, zone.radius_m)))
            self.store.add_notifications(zone, recipients)
        except Exception:
            self.zone_index.remove(zone.zone_id)
            raise
        return ZoneEvent(zone=zone, report_id=report.report_id,
                         notified_user_ids=frozenset(user_ids))

    def mark_recovered(self, credential: ApiCredential, patient_id: str) -> PatientRecord:
        record = self.store.mark_recovered(credential, patient_id)
        for zone_id in self.store.zone_ids_for_patient(patient_id):
            if zone_id in self.zone_index:
                self.zone_index.remove(zone_id)
        return record

    def record_user_location(
        self, credential: ApiCredential, position: GeoPoint, observed_at: datetime
    ) -> UserAccount:
        account = self.store.record_user_location(credential, position, observed_at)
        if account.user_id in self.user_index:
            self.user_index.remove(account.user_id)
        self.user_index.insert(account.user_id, position)
        return account

    # -- queries ------------------------------------------------------------

    def _effective(self, zone_id: str, now: datetime) -> Optional[UnsafeZone]:
        zone = self.store.zone(zone_id)
        if zone.active and not zone.expired(now):
            return zone
        return None

    def safety_query(self, p: GeoPoint, now: Optional[datetime] = None) -> SafetyVerdict:
        """Classify a point against the active zones, served through the index.

        Candidates come from the zone index and are confirmed exactly; the
        distance-to-nearest-center fills in from a pass over active zones.
        """
        now = now if now is not None else self.clock()
        matched: Optional[tuple[float, str]] = None
        for zone_id in self.zone_index.query_point(p):
            zone = self._effective(zone_id, now)
            if zone is None:
                continue
            key = (haversine_distance_m(p, zone.center), zone.zone_id)
            if matched is None or key < matched:
                matched = key
        nearest: Optional[float] = None
        for zone in self.store.active_zones(now):
            d = haversine_distance_m(p, zone.center)
            if nearest is None or d < nearest:
                nearest = d
        if matched is None:
            return SafetyVerdict(status=SafetyStatus.SAFE,
                                 distance_to_nearest_zone_center_m=nearest)
        return SafetyVerdict(status=SafetyStatus.UNSAFE, matched_zone_id=matched[1],
                             distance_to_nearest_zone_center_m=nearest)

    def list_zones(self, box: BoundingBox, now: Optional[datetime] = None) -> list[UnsafeZone]:
        """Active zones whose disc intersects the box; newest first."""
        now = now if now is not None else self.clock()
        zones = [z for z in self.store.active_zones(now) if zone_intersects_box(z, box)]
        zones.sort(key=lambda z: z.created_at, reverse=True)
        return zones

    def fetch_notifications(self, credential: ApiCredential,
                            since: Optional[datetime] = None) -> list[Notification]:
        return self.store.fetch_notifications(credential, since)

    def undelivered_notifications(self, user_id: str) -> list[Notification]:
        return [n for n in self.store.notifications_for_user(user_id) if not n.delivered]

    def sweep_expired(self, now: Optional[datetime] = None) -> int:
        """Drop expired or deactivated zones from the index. Returns the count."""
        now = now if now is not None else self.clock()
        dropped = 0
        for zone_id in list(self.zone_index.scan_ids()):
            if self._effective(zone_id, now) is None:
                self.zone_index.remove(zone_id)
                dropped += 1
        return dropped
