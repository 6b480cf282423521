"""Flat spatial hash over latitude/longitude cells.

Entries are (point, radius) pairs: zones carry their radius, bare user
positions use radius 0. Cells gather candidates quickly; every query is
confirmed with an exact Haversine test, so the index returns exactly what a
naive full scan would. Zones in this system are meters wide while default
cells are ~111 m, so candidate sets stay tiny.
"""

from __future__ import annotations

import math
import threading
from typing import Iterator, Optional

from .geo import BOUNDARY_GUARD_M, EARTH_RADIUS_M, GeoPoint, haversine_distance_m


class DuplicateEntryError(KeyError):
    """Insert with an id that is already present."""


class UnknownEntryError(KeyError):
    """Remove or lookup of an id that is not present."""


# Entries whose cell coverage would exceed this are kept on a side list that
# every query scans; bounds memory when someone configures a huge radius.
OVERSIZE_CELL_LIMIT = 4096


class GridIndex:
    """Grid of cell_size_deg x cell_size_deg buckets with exact confirmation.

    Thread-safe: one lock serializes mutations; queries observe either the
    state before or after a concurrent mutation, never a partial one.
    """

    def __init__(self, cell_size_deg: float = 0.001):
        if not (cell_size_deg > 0 and math.isfinite(cell_size_deg)):
            raise ValueError(f"cell_size_deg must be positive, got {cell_size_deg!r}")
        self.cell_size_deg = float(cell_size_deg)
        self.n_lon_cells = max(1, round(360.0 / self.cell_size_deg))
        self._cells: dict[tuple[int, int], set[str]] = {}
        self._entries: dict[str, tuple[GeoPoint, float]] = {}
        self._entry_cells: dict[str, tuple[tuple[int, int], ...]] = {}
        self._oversized: set[str] = set()
        self._lock = threading.RLock()

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, entry_id: str) -> bool:
        return entry_id in self._entries

    def entry(self, entry_id: str) -> tuple[GeoPoint, float]:
        with self._lock:
            try:
                return self._entries[entry_id]
            except KeyError:
                raise UnknownEntryError(entry_id) from None

    # -- cell geometry ----------------------------------------------------

    def _cell_of(self, p: GeoPoint) -> tuple[int, int]:
        cs = self.cell_size_deg
        return (math.floor(p.latitude_deg / cs),
                math.floor(p.longitude_deg / cs) % self.n_lon_cells)

    def _coverage(self, p: GeoPoint, radius_m: float, margin: int = 0,
                  limit: Optional[int] = OVERSIZE_CELL_LIMIT) -> Optional[set[tuple[int, int]]]:
        """Cells overlapped by the spherical cap (p, radius_m), grown by
        ``margin`` cells per side; None when more than ``limit`` cells."""
        cs = self.cell_size_deg
        if radius_m == 0 and margin == 0:
            return {self._cell_of(p)}
        # Exact bounding box of a spherical cap: the latitude extent is the
        # angular radius; the longitude extent is asin(sin(delta)/cos(lat))
        # unless the cap reaches a pole, in which case all longitudes.
        delta = (radius_m / EARTH_RADIUS_M) * (1.0 + 1e-12)
        delta_deg = math.degrees(delta)
        lat_lo = p.latitude_deg - delta_deg
        lat_hi = p.latitude_deg + delta_deg
        row_lo = math.floor(max(lat_lo, -90.0) / cs) - margin
        row_hi = math.floor(min(lat_hi, 90.0) / cs) + margin
        n_rows = row_hi - row_lo + 1

        full_band = False
        if lat_hi >= 90.0 or lat_lo <= -90.0 or delta >= math.pi / 2.0:
            full_band = True
        else:
            ratio = math.sin(delta) / math.cos(math.radians(p.latitude_deg))
            if ratio >= 1.0:
                full_band = True
            else:
                half_width_deg = math.degrees(math.asin(ratio)) * (1.0 + 1e-12)
                if half_width_deg >= 180.0:
                    full_band = True

        if full_band:
            col_spans = [(0, self.n_lon_cells - 1)]
        else:
            lo = p.longitude_deg - half_width_deg
            hi = p.longitude_deg + half_width_deg
            # split at the +-180 seam so floors are always taken on
            # normalized-range values
            if lo < -180.0:
                segments = [(-180.0, hi), (lo + 360.0, 180.0)]
            elif hi >= 180.0:
                segments = [(lo, 180.0), (-180.0, hi - 360.0)]
            else:
                segments = [(lo, hi)]
            col_spans = [(math.floor(s / cs) - margin, math.floor(e / cs) + margin)
                         for s, e in segments]

        n_cols = sum(c_hi - c_lo + 1 for c_lo, c_hi in col_spans)
        if limit is not None and n_rows * min(n_cols, self.n_lon_cells) > limit:
            return None
        cells: set[tuple[int, int]] = set()
        for row in range(row_lo, row_hi + 1):
            for c_lo, c_hi in col_spans:
                for col in range(c_lo, c_hi + 1):
                    cells.add((row, col % self.n_lon_cells))
        return cells

    # -- mutation ----------------------------------------------------------

    def insert(self, entry_id: str, point: GeoPoint, radius_m: float = 0.0) -> None:
        if radius_m < 0:
            raise ValueError(f"radius_m must be >= 0, got {radius_m!r}")
        with self._lock:
            if entry_id in self._entries:
                raise DuplicateEntryError(entry_id)
            cells = self._coverage(point, radius_m)
            self._entries[entry_id] = (point, radius_m)
            if cells is None:
                self._oversized.add(entry_id)
                self._entry_cells[entry_id] = ()
                return
            for cell in cells:
                self._cells.setdefault(cell, set()).add(entry_id)
            self._entry_cells[entry_id] = tuple(cells)

    def remove(self, entry_id: str) -> None:
        with self._lock:
            if entry_id not in self._entries:
                raise UnknownEntryError(entry_id)
            for cell in self._entry_cells.pop(entry_id):
                bucket = self._cells.get(cell)
                if bucket is not None:
                    bucket.discard(entry_id)
                    if not bucket:
                        del self._cells[cell]
            self._oversized.discard(entry_id)
            del self._entries[entry_id]

    # -- queries -----------------------------------------------------------

    def query_point(self, p: GeoPoint) -> set[str]:
        """Ids of entries whose disc contains ``p`` (boundary inclusive)."""
        with self._lock:
            row, col = self._cell_of(p)
            candidates: set[str] = set(self._oversized)
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    bucket = self._cells.get((row + dr, (col + dc) % self.n_lon_cells))
                    if bucket:
                        candidates.update(bucket)
            hits = set()
            for entry_id in candidates:
                point, radius = self._entries[entry_id]
                if haversine_distance_m(p, point) <= radius + BOUNDARY_GUARD_M:
                    hits.add(entry_id)
            return hits

    def query_disc(self, center: GeoPoint, radius_m: float) -> set[str]:
        """Ids of entries whose stored point lies within ``radius_m`` of
        ``center`` (boundary inclusive; entry radii are ignored)."""
        if radius_m < 0:
            raise ValueError(f"radius_m must be >= 0, got {radius_m!r}")
        with self._lock:
            cells = self._coverage(center, radius_m, margin=1)
            if cells is None:
                candidates = set(self._entries)
            else:
                candidates = set(self._oversized)
                for cell in cells:
                    bucket = self._cells.get(cell)
                    if bucket:
                        candidates.update(bucket)
            hits = set()
            for entry_id in candidates:
                point, _ = self._entries[entry_id]
                if haversine_distance_m(center, point) <= radius_m + BOUNDARY_GUARD_M:
                    hits.add(entry_id)
            return hits

    # -- introspection (tests) ----------------------------------------------

    def check_integrity(self) -> None:
        """Assert no dangling ids and exact cell registration."""
        with self._lock:
            for cell, bucket in self._cells.items():
                for entry_id in bucket:
                    assert entry_id in self._entries, f"dangling id {entry_id} in {cell}"
                    assert cell in self._entry_cells[entry_id]
            for entry_id, cells in self._entry_cells.items():
                assert entry_id in self._entries
                if entry_id in self._oversized:
                    assert cells == ()
                    continue
                point, radius = self._entries[entry_id]
                assert set(cells) == self._coverage(point, radius), \
                    f"entry {entry_id} cell registration does not match its coverage"
                for cell in cells:
                    assert entry_id in self._cells.get(cell, set())

    def scan_ids(self) -> Iterator[str]:
        with self._lock:
            return iter(list(self._entries))
