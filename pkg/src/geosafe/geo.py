"""Spherical geodesy core: Haversine distance, point offsetting, unsafe-zone
construction, and point safety classification.

All distances are great-circle distances on a sphere of radius 6371 km.
This is a deliberate model choice (no ellipsoidal correction); it carries a
documented distance error of at most ~0.5% versus a geodesic on WGS-84.
"""

from __future__ import annotations

import math
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from enum import Enum
from typing import Iterable, Optional, Sequence


@dataclass(frozen=True)
class GeoConstants:
    """Fixed model constants.

    ``printed_pi`` is the low-precision constant used only by
    :func:`algorithm1_verbatim`; every other computation uses machine pi.
    """

    earth_radius_km: float = 6371.0
    printed_pi: float = 3.1416

    @property
    def earth_radius_m(self) -> float:
        return self.earth_radius_km * 1000.0


CONSTANTS = GeoConstants()
EARTH_RADIUS_M = CONSTANTS.earth_radius_m

# Operations that construct geometry reject origins closer to a pole than
# this; longitude becomes degenerate there and the deployment context never
# approaches it.
MAX_CONSTRUCTION_LATITUDE_DEG = 89.9

# Two float64 great-circle evaluations of the same meter-scale distance can
# disagree by ~1e-10 m. Distances within this guard of a zone boundary are
# treated as on the boundary (inclusive, the safety-conservative side).
BOUNDARY_GUARD_M = 1e-9

DEFAULT_ZONE_TTL = timedelta(days=14)


class PoleProximityError(ValueError):
    """Raised when an operation is asked to construct geometry too close to a pole."""


class HaversineDomainError(ArithmeticError):
    """Raised by the verbatim transcription when its intermediate ``a`` leaves [0, 1].

    The transcribed formula mixes degree and radian units inside the cosine
    terms, so for some inputs the product of cosines is negative and the
    square roots in the next step are undefined.
    """

    def __init__(self, a: float):
        super().__init__(f"intermediate a={a!r} is outside [0, 1]; "
                         "the transcribed formula has no real-valued result here")
        self.a = a


@dataclass(frozen=True)
class GeoPoint:
    """A latitude/longitude pair in decimal degrees.

    Latitude must lie in [-90, +90]. Longitude is normalized on construction
    to [-180, +180); +180 maps to -180.
    """

    latitude_deg: float
    longitude_deg: float

    def __post_init__(self) -> None:
        lat = float(self.latitude_deg)
        lon = float(self.longitude_deg)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise ValueError(f"coordinates must be finite, got ({lat!r}, {lon!r})")
        if not -90.0 <= lat <= 90.0:
            raise ValueError(f"latitude {lat!r} outside [-90, +90]")
        if not -180.0 <= lon < 180.0:  # in-range values pass through bit-exact
            lon = math.fmod(lon + 180.0, 360.0)
            if lon < 0.0:
                lon += 360.0
            lon -= 180.0
        object.__setattr__(self, "latitude_deg", lat)
        object.__setattr__(self, "longitude_deg", lon)


@dataclass(frozen=True)
class ZoneParameters:
    """Zone sizing knobs: exposure distance, measurement-noise margin, and
    the extra reach used when selecting users to notify."""

    safe_distance_m: float = 1.8
    noise_m: float = 0.2
    notify_buffer_m: float = 100.0

    def __post_init__(self) -> None:
        if not self.safe_distance_m > 0:
            raise ValueError(f"safe_distance_m must be > 0, got {self.safe_distance_m!r}")
        if self.noise_m < 0:
            raise ValueError(f"noise_m must be >= 0, got {self.noise_m!r}")
        if self.notify_buffer_m < 0:
            raise ValueError(f"notify_buffer_m must be >= 0, got {self.notify_buffer_m!r}")

    @property
    def zone_radius_m(self) -> float:
        """Effective zone radius: safe distance plus noise margin."""
        return self.safe_distance_m + self.noise_m


@dataclass(frozen=True)
class HaversineTerms:
    """Intermediates of the transcribed distance computation."""

    dlat: float
    dlon: float
    a: float
    c: float
    d: float


@dataclass(frozen=True)
class UnsafeZone:
    """Circular exposure zone around an infected patient's reported position."""

    zone_id: str
    center: GeoPoint
    radius_m: float
    area_m2: float
    patient_ref: str  # internal only; never serialized to users
    created_at: datetime
    expires_at: datetime
    active: bool = True

    def __post_init__(self) -> None:
        if not self.radius_m > 0:
            raise ValueError(f"radius_m must be > 0, got {self.radius_m!r}")
        expected_area = math.pi * self.radius_m**2
        if abs(self.area_m2 - expected_area) > 1e-9 * expected_area:
            raise ValueError(f"area_m2 {self.area_m2!r} inconsistent with radius {self.radius_m!r}")
        if not self.expires_at > self.created_at:
            raise ValueError("expires_at must be after created_at")

    def deactivated(self) -> "UnsafeZone":
        return replace(self, active=False)

    def expired(self, now: datetime) -> bool:
        return now >= self.expires_at


class SafetyStatus(Enum):
    SAFE = "safe"
    UNSAFE = "unsafe"


@dataclass(frozen=True)
class SafetyVerdict:
    """Outcome of a point safety query.

    ``matched_zone_id`` is present iff the status is unsafe;
    ``distance_to_nearest_zone_center_m`` is None when no zones were considered.
    """

    status: SafetyStatus
    matched_zone_id: Optional[str] = None
    distance_to_nearest_zone_center_m: Optional[float] = None

    def __post_init__(self) -> None:
        if (self.status is SafetyStatus.UNSAFE) != (self.matched_zone_id is not None):
            raise ValueError("matched_zone_id must be present iff status is unsafe")


def haversine_distance_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters between two points.

    Total on valid points, symmetric in its arguments, and bounded by half
    the sphere circumference (pi * 6371 km).
    """
    phi1 = math.radians(a.latitude_deg)
    phi2 = math.radians(b.latitude_deg)
    dphi = math.radians(b.latitude_deg - a.latitude_deg)
    dlam = math.radians(b.longitude_deg - a.longitude_deg)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    h = min(1.0, max(0.0, h))  # clamp float overshoot near antipodes
    c = 2.0 * math.atan2(math.sqrt(h), math.sqrt(1.0 - h))
    return EARTH_RADIUS_M * c


def destination_point(origin: GeoPoint, bearing_deg: float, distance_m: float) -> GeoPoint:
    """Point reached by traveling ``distance_m`` from ``origin`` along the
    initial bearing's great circle.

    The round trip ``haversine_distance_m(origin, result)`` recovers
    ``distance_m`` within 1e-6 relative.
    """
    if distance_m < 0:
        raise ValueError(f"distance_m must be >= 0, got {distance_m!r}")
    if abs(origin.latitude_deg) > MAX_CONSTRUCTION_LATITUDE_DEG:
        raise PoleProximityError(
            f"origin latitude {origin.latitude_deg!r} is within 0.1 deg of a pole")
    if distance_m == 0:
        return origin
    delta = distance_m / EARTH_RADIUS_M
    theta = math.radians(bearing_deg % 360.0)
    phi1 = math.radians(origin.latitude_deg)
    lam1 = math.radians(origin.longitude_deg)
    sin_phi2 = math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * math.cos(theta)
    phi2 = math.asin(min(1.0, max(-1.0, sin_phi2)))
    lam2 = lam1 + math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(phi1),
        math.cos(delta) - math.sin(phi1) * sin_phi2,
    )
    return GeoPoint(math.degrees(phi2), math.degrees(lam2))


def find_unsafe_area(
    center: GeoPoint,
    params: ZoneParameters,
    patient_ref: str,
    now: datetime,
    *,
    ttl: timedelta = DEFAULT_ZONE_TTL,
    zone_id: Optional[str] = None,
) -> UnsafeZone:
    """Construct the unsafe zone around an infected patient's position.

    The radius is the safe separation distance plus the noise margin; the
    area is the plane-circle area pi * r^2 (the zone is meters wide, so
    spherical excess is negligible and uninteresting).
    """
    if abs(center.latitude_deg) > MAX_CONSTRUCTION_LATITUDE_DEG:
        raise PoleProximityError(
            f"zone center latitude {center.latitude_deg!r} is within 0.1 deg of a pole")
    radius_m = params.safe_distance_m + params.noise_m
    return UnsafeZone(
        zone_id=zone_id if zone_id is not None else uuid.uuid4().hex,
        center=center,
        radius_m=radius_m,
        area_m2=math.pi * radius_m**2,
        patient_ref=patient_ref,
        created_at=now,
        expires_at=now + ttl,
        active=True,
    )


def algorithm1_verbatim(
    plat_deg: float, plon_deg: float, noise: float
) -> tuple[HaversineTerms, float, float]:
    """Faithful transcription of the original unsafe-area pseudocode.

    Executes the transcribed steps exactly as written, including the 3.1416
    constant, the degree values fed to ``cos`` as if they were radians, and
    the kilometre-valued ``d`` added directly to the unitless noise term.
    Exists for fidelity documentation and comparison only; the service path
    never calls it.

    Returns the intermediate terms, the radius ``rad`` and the area.
    Raises :class:`HaversineDomainError` when the unit mixing pushes the
    intermediate ``a`` outside [0, 1].
    """
    GeoPoint(plat_deg, plon_deg)  # reuse the coordinate validity rules
    R = CONSTANTS.earth_radius_km
    PI = CONSTANTS.printed_pi
    dlat = plat_deg * (PI / 180.0)
    dlon = plon_deg * (PI / 180.0)
    a = math.sin(dlat / 2.0) ** 2 + math.cos(plat_deg + 1.6) * math.cos(plat_deg) * math.sin(dlon / 2.0) ** 2
    if not 0.0 <= a <= 1.0:
        raise HaversineDomainError(a)
    c = 2.0 * math.atan2(math.sqrt(a), math.sqrt(1.0 - a))
    d = R * c
    rad = d + noise
    area = PI * rad**2
    return HaversineTerms(dlat=dlat, dlon=dlon, a=a, c=c, d=d), rad, area


def zone_contains(zone: UnsafeZone, p: GeoPoint) -> bool:
    """Boundary-inclusive containment test used by every classification path."""
    return haversine_distance_m(p, zone.center) <= zone.radius_m + BOUNDARY_GUARD_M


def classify_point(p: GeoPoint, zones: Sequence[UnsafeZone]) -> SafetyVerdict:
    """Classify a point against a set of zones.

    Unsafe iff some active zone contains the point (boundary inclusive);
    the matched zone is the nearest containing one. Inactive zones are
    ignored entirely.
    """
    nearest_center: Optional[float] = None
    matched: Optional[tuple[float, str]] = None
    for zone in zones:
        if not zone.active:
            continue
        d = haversine_distance_m(p, zone.center)
        if nearest_center is None or d < nearest_center:
            nearest_center = d
        if d <= zone.radius_m + BOUNDARY_GUARD_M:
            key = (d, zone.zone_id)
            if matched is None or key < matched:
                matched = key
    if matched is None:
        return SafetyVerdict(
            status=SafetyStatus.SAFE,
            matched_zone_id=None,
            distance_to_nearest_zone_center_m=nearest_center,
        )
    return SafetyVerdict(
        status=SafetyStatus.UNSAFE,
        matched_zone_id=matched[1],
        distance_to_nearest_zone_center_m=nearest_center,
    )
