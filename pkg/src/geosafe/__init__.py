"""geosafe: geodesic unsafe zones, proximity alerts, and the tracing service
around them."""

from .geo import (
    CONSTANTS,
    EARTH_RADIUS_M,
    GeoConstants,
    GeoPoint,
    HaversineTerms,
    SafetyStatus,
    SafetyVerdict,
    UnsafeZone,
    ZoneParameters,
    algorithm1_verbatim,
    classify_point,
    destination_point,
    find_unsafe_area,
    haversine_distance_m,
)
from .grid import GridIndex
from .service import BoundingBox, TracingService, ZoneEvent
from .store import RegistryStore, Role

__all__ = [
    "CONSTANTS",
    "EARTH_RADIUS_M",
    "GeoConstants",
    "GeoPoint",
    "GridIndex",
    "HaversineTerms",
    "BoundingBox",
    "RegistryStore",
    "Role",
    "SafetyStatus",
    "SafetyVerdict",
    "TracingService",
    "UnsafeZone",
    "ZoneEvent",
    "ZoneParameters",
    "algorithm1_verbatim",
    "classify_point",
    "destination_point",
    "find_unsafe_area",
    "haversine_distance_m",
]

__version__ = "0.1.0"
