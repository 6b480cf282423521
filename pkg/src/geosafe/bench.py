"""Experiment harness: synthetic coordinate datasets, the runtime-scaling
benchmark over zone construction, and the index-vs-full-scan correctness
check with its sentence-per-probe report."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence, TextIO

import numpy as np

from .geo import (
    BOUNDARY_GUARD_M,
    GeoPoint,
    UnsafeZone,
    ZoneParameters,
    destination_point,
    find_unsafe_area,
)
from .grid import GridIndex


@dataclass(frozen=True)
class DatasetBox:
    south: float
    west: float
    north: float
    east: float

    def __post_init__(self) -> None:
        if not (self.south < self.north and self.west < self.east):
            raise ValueError(f"empty bounding box {self!r}")
        GeoPoint(self.south, self.west)
        GeoPoint(self.north, self.east)


# Default sampling region: the Dhaka area, matching the coordinate
# neighbourhood of the system's deployment context.
DHAKA_BBOX = DatasetBox(south=23.6, west=90.3, north=23.9, east=90.5)

DEFAULT_SIZES = tuple(range(1000, 10001, 1000))

# Runtimes reported for a prior C++ implementation of the same construction
# loop on a 2.3 GHz Core i5 laptop. Context only; absolute times are
# hardware-specific and never asserted.
REFERENCE_RUNTIMES_MS = {
    1000: 10, 2000: 22, 3000: 30, 4000: 39, 5000: 47,
    6000: 62, 7000: 71, 8000: 83, 9000: 97, 10000: 113,
}


@dataclass(frozen=True)
class BenchmarkRow:
    data_size: int
    runtime_ms: float

    def __post_init__(self) -> None:
        if self.data_size <= 0:
            raise ValueError("data_size must be > 0")
        if self.runtime_ms < 0:
            raise ValueError("runtime_ms must be >= 0")


@dataclass(frozen=True)
class LinearFit:
    slope_ms_per_point: float
    intercept_ms: float
    r_squared: float


@dataclass(frozen=True)
class BenchmarkResult:
    rows: tuple[BenchmarkRow, ...]
    fit: Optional[LinearFit]


@dataclass(frozen=True)
class CorrectnessReport:
    """Per-probe verdicts from the indexed path and the exhaustive oracle."""

    probes: int
    agreements: int
    records: tuple[tuple[GeoPoint, str, str], ...]  # (probe, index verdict, oracle verdict)

    @property
    def disagreements(self) -> list[tuple[GeoPoint, str, str]]:
        return [r for r in self.records if r[1] != r[2]]

    def lines(self) -> list[str]:
        return [sentence(p, index_verdict) for p, index_verdict, _ in self.records]


def sentence(p: GeoPoint, verdict: str) -> str:
    return (f"The user in location ({p.latitude_deg:.6f}, {p.longitude_deg:.6f}) "
            f"is in {verdict} area")


def _uniform_points(rng: np.random.Generator, n: int, bbox: DatasetBox) -> list[GeoPoint]:
    lats = rng.uniform(bbox.south, bbox.north, n)
    lons = rng.uniform(bbox.west, bbox.east, n)
    return [GeoPoint(float(lat), float(lon)) for lat, lon in zip(lats, lons)]


def generate_dataset(n: int, bbox: DatasetBox = DHAKA_BBOX, seed: int = 0) -> list[GeoPoint]:
    """``n`` points uniform over the box; identical sequences for one seed."""
    if n <= 0:
        raise ValueError(f"n must be > 0, got {n}")
    return _uniform_points(np.random.default_rng(seed), n, bbox)


class NaiveScanOracle:
    """Exhaustive containment scan over every zone, vectorized for bulk runs.

    Checks each zone with the same spherical model and boundary guard as the
    grid path; only the pruning differs, which is exactly what the check is
    meant to exercise.
    """

    def __init__(self, zones: Sequence[UnsafeZone]):
        self._lat_deg = np.array([z.center.latitude_deg for z in zones], dtype=np.float64)
        self._lon_deg = np.array([z.center.longitude_deg for z in zones], dtype=np.float64)
        self._cos_lat = np.cos(np.radians(self._lat_deg))
        self._limit = np.array([z.radius_m for z in zones], dtype=np.float64) + BOUNDARY_GUARD_M

    def distances_m(self, p: GeoPoint) -> np.ndarray:
        dphi = np.radians(self._lat_deg - p.latitude_deg)
        dlam = np.radians(self._lon_deg - p.longitude_deg)
        h = (np.sin(dphi / 2.0) ** 2
             + math.cos(math.radians(p.latitude_deg)) * self._cos_lat * np.sin(dlam / 2.0) ** 2)
        np.clip(h, 0.0, 1.0, out=h)
        return 6371000.0 * 2.0 * np.arctan2(np.sqrt(h), np.sqrt(1.0 - h))

    def unsafe(self, p: GeoPoint) -> bool:
        if self._lat_deg.size == 0:
            return False
        return bool(np.any(self.distances_m(p) <= self._limit))


def run_benchmark(
    sizes: Sequence[int] = DEFAULT_SIZES,
    seed: int = 0,
    *,
    repeats: int = 5,
    bbox: DatasetBox = DHAKA_BBOX,
) -> BenchmarkResult:
    """Time the zone-construction loop at each data size.

    Per size: one discarded warm-up run, then the median of ``repeats`` timed
    runs on the monotonic clock. Construction only; dataset generation is
    excluded from the timed region.
    """
    if list(sizes) != sorted(set(sizes)) or any(s <= 0 for s in sizes):
        raise ValueError("sizes must be strictly increasing positive integers")
    points = generate_dataset(max(sizes), bbox, seed)
    params = ZoneParameters()
    now = datetime.now(timezone.utc)
    rows = []
    for size in sizes:
        subset = points[:size]
        samples = []
        for rep in range(repeats + 1):
            start = time.perf_counter()
            for p in subset:
                find_unsafe_area(p, params, patient_ref="bench", now=now)
            elapsed_ms = (time.perf_counter() - start) * 1e3
            if rep > 0:  # discard the warm-up
                samples.append(elapsed_ms)
        samples.sort()
        median = samples[len(samples) // 2] if len(samples) % 2 else (
            (samples[len(samples) // 2 - 1] + samples[len(samples) // 2]) / 2.0)
        rows.append(BenchmarkRow(data_size=size, runtime_ms=median))
    return BenchmarkResult(rows=tuple(rows), fit=linear_fit(rows))


def linear_fit(rows: Sequence[BenchmarkRow]) -> Optional[LinearFit]:
    if len(rows) < 2:
        return None
    x = np.array([r.data_size for r in rows], dtype=np.float64)
    y = np.array([r.runtime_ms for r in rows], dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    predicted = slope * x + intercept
    ss_res = float(np.sum((y - predicted) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return LinearFit(slope_ms_per_point=float(slope), intercept_ms=float(intercept),
                     r_squared=r_squared)


def run_correctness(
    n_zones: int,
    n_probes: int,
    seed: int = 0,
    *,
    bbox: DatasetBox = DHAKA_BBOX,
    params: ZoneParameters = ZoneParameters(),
    cell_size_deg: float = 0.001,
) -> CorrectnessReport:
    """Compare indexed verdicts against the exhaustive oracle.

    Probe mix: half random points in the box, a quarter exact zone centers,
    a quarter points placed just inside or just outside a zone boundary
    (radius -/+ 0.5 m) where the inclusive-boundary rule actually bites.
    """
    if n_zones < 0 or n_probes <= 0:
        raise ValueError("n_zones must be >= 0 and n_probes > 0")
    rng = np.random.default_rng(seed)
    now = datetime.now(timezone.utc)
    zones = [
        find_unsafe_area(center, params, patient_ref=f"patient-{i}", now=now)
        for i, center in enumerate(_uniform_points(rng, n_zones, bbox) if n_zones else [])
    ]
    index = GridIndex(cell_size_deg)
    for zone in zones:
        index.insert(zone.zone_id, zone.center, zone.radius_m)
    oracle = NaiveScanOracle(zones)

    if zones:
        n_random = n_probes // 2
        n_centers = n_probes // 4
    else:
        n_random, n_centers = n_probes, 0
    n_edge = n_probes - n_random - n_centers

    probes = _uniform_points(rng, n_random, bbox)
    if n_centers:
        for i in rng.integers(0, len(zones), n_centers):
            probes.append(zones[i].center)
    if n_edge:
        picks = rng.integers(0, len(zones), n_edge)
        bearings = rng.uniform(0.0, 360.0, n_edge)
        offsets = rng.choice([-0.5, 0.5], n_edge)
        for i, bearing, off in zip(picks, bearings, offsets):
            zone = zones[i]
            probes.append(destination_point(zone.center, float(bearing), zone.radius_m + float(off)))

    records = []
    agreements = 0
    for p in probes:
        index_verdict = "unsafe" if index.query_point(p) else "safe"
        oracle_verdict = "unsafe" if oracle.unsafe(p) else "safe"
        if index_verdict == oracle_verdict:
            agreements += 1
        records.append((p, index_verdict, oracle_verdict))
    return CorrectnessReport(probes=len(probes), agreements=agreements, records=tuple(records))


# -- CSV output ----------------------------------------------------------------

def write_points_csv(points: Sequence[GeoPoint], out: TextIO) -> None:
    writer = csv.writer(out)
    writer.writerow(["latitude", "longitude"])
    for p in points:
        writer.writerow([repr(p.latitude_deg), repr(p.longitude_deg)])


def write_benchmark_csv(rows: Sequence[BenchmarkRow], out: TextIO) -> None:
    writer = csv.writer(out)
    writer.writerow(["data_size", "runtime_ms"])
    for row in rows:
        writer.writerow([row.data_size, f"{row.runtime_ms:.3f}"])


def write_correctness_csv(report: CorrectnessReport, out: TextIO) -> None:
    writer = csv.writer(out)
    writer.writerow(["lat", "lon", "index_verdict", "oracle_verdict"])
    for p, index_verdict, oracle_verdict in report.records:
        writer.writerow([repr(p.latitude_deg), repr(p.longitude_deg),
                         index_verdict, oracle_verdict])
