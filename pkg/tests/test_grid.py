"""Grid index tests, anchored to a naive full-scan oracle."""

import random
import threading

import pytest

from geosafe.geo import GeoPoint, destination_point, haversine_distance_m
from geosafe.grid import DuplicateEntryError, GridIndex, UnknownEntryError

GUARD = 1e-9


def naive_query_point(entries: dict, p: GeoPoint) -> set:
    return {eid for eid, (point, radius) in entries.items()
            if haversine_distance_m(p, point) <= radius + GUARD}


def naive_query_disc(entries: dict, center: GeoPoint, radius_m: float) -> set:
    return {eid for eid, (point, _) in entries.items()
            if haversine_distance_m(center, point) <= radius_m + GUARD}


def random_point(rng, south=23.6, west=90.3, north=23.9, east=90.5) -> GeoPoint:
    return GeoPoint(rng.uniform(south, north), rng.uniform(west, east))


class TestBasics:
    def test_insert_then_query_point_at_center(self):
        index = GridIndex()
        center = GeoPoint(23.75, 90.40)
        index.insert("a", center, 2.0)
        assert index.query_point(center) == {"a"}

    def test_point_entry_found_by_disc(self):
        index = GridIndex()
        p = GeoPoint(23.75, 90.40)
        index.insert("u", p, 0.0)
        assert index.query_disc(p, 1.0) == {"u"}

    def test_disc_boundary_inclusive_radius_zero(self):
        index = GridIndex()
        p = GeoPoint(23.75, 90.40)
        index.insert("u", p)
        assert index.query_disc(p, 0.0) == {"u"}

    def test_duplicate_insert_rejected(self):
        index = GridIndex()
        index.insert("a", GeoPoint(0, 0), 1.0)
        with pytest.raises(DuplicateEntryError):
            index.insert("a", GeoPoint(1, 1), 1.0)

    def test_remove(self):
        index = GridIndex()
        center = GeoPoint(23.75, 90.40)
        index.insert("a", center, 2.0)
        index.remove("a")
        assert index.query_point(center) == set()
        assert len(index) == 0
        index.check_integrity()

    def test_remove_unknown_rejected(self):
        with pytest.raises(UnknownEntryError):
            GridIndex().remove("ghost")

    def test_entry_150m_east_not_in_100m_disc(self):
        index = GridIndex()
        center = GeoPoint(23.75, 90.40)
        east = destination_point(center, 90.0, 150.0)
        index.insert("u", east, 0.0)
        assert index.query_disc(center, 100.0) == set()
        assert index.query_disc(center, 151.0) == {"u"}

    def test_rejects_negative_radius(self):
        index = GridIndex()
        with pytest.raises(ValueError):
            index.insert("a", GeoPoint(0, 0), -1.0)
        with pytest.raises(ValueError):
            index.query_disc(GeoPoint(0, 0), -1.0)


class TestOracleEquivalence:
    def test_query_point_vs_naive_scan(self):
        rng = random.Random(42)
        index = GridIndex()
        entries = {}
        for i in range(1000):
            point = random_point(rng)
            radius = rng.choice([0.0, rng.uniform(0.5, 5.0), rng.uniform(5.0, 500.0)])
            entries[f"e{i}"] = (point, radius)
            index.insert(f"e{i}", point, radius)
        for _ in range(200):
            probe = random_point(rng)
            assert index.query_point(probe) == naive_query_point(entries, probe)
        # probes exactly at entry positions stress the boundary rule
        for eid in list(entries)[:100]:
            probe = entries[eid][0]
            assert index.query_point(probe) == naive_query_point(entries, probe)

    def test_query_disc_vs_naive_scan(self):
        rng = random.Random(43)
        index = GridIndex()
        entries = {}
        for i in range(1000):
            point = random_point(rng)
            entries[f"u{i}"] = (point, 0.0)
            index.insert(f"u{i}", point)
        for _ in range(50):
            center = random_point(rng)
            radius = 10 ** rng.uniform(0, 4.5)  # 1 m .. ~30 km
            assert index.query_disc(center, radius) == naive_query_disc(entries, center, radius)

    def test_interleaved_mutations_vs_oracle(self):
        rng = random.Random(44)
        index = GridIndex()
        entries = {}
        next_id = 0
        for _ in range(500):
            if entries and rng.random() < 0.4:
                eid = rng.choice(list(entries))
                del entries[eid]
                index.remove(eid)
            else:
                eid = f"e{next_id}"
                next_id += 1
                point = random_point(rng)
                radius = rng.uniform(0.0, 50.0)
                entries[eid] = (point, radius)
                index.insert(eid, point, radius)
        index.check_integrity()
        assert len(index) == len(entries)
        for _ in range(200):
            probe = random_point(rng)
            radius = rng.uniform(0, 1000)
            assert index.query_point(probe) == naive_query_point(entries, probe)
            assert index.query_disc(probe, radius) == naive_query_disc(entries, probe, radius)


class TestCellSizeIndependence:
    def test_results_identical_across_cell_sizes(self):
        rng = random.Random(7)
        data = []
        for i in range(500):
            data.append((f"e{i}", random_point(rng), rng.uniform(0.0, 300.0)))
        probes = [random_point(rng) for _ in range(100)]
        discs = [(random_point(rng), rng.uniform(0, 500)) for _ in range(50)]
        results = []
        for cell_size in (0.0005, 0.001, 0.01):
            index = GridIndex(cell_size)
            for eid, point, radius in data:
                index.insert(eid, point, radius)
            results.append((
                [index.query_point(p) for p in probes],
                [index.query_disc(c, r) for c, r in discs],
            ))
        assert results[0] == results[1] == results[2]


class TestAntimeridian:
    def test_entries_and_probes_across_the_seam(self):
        index = GridIndex()
        west_side = GeoPoint(10.0, 179.9999)
        east_side = GeoPoint(10.0, -179.9999)
        separation = haversine_distance_m(west_side, east_side)
        assert separation < 25.0  # the two points straddle the seam closely
        index.insert("zone", west_side, 30.0)
        assert index.query_point(east_side) == {"zone"}
        index.insert("user", east_side, 0.0)
        # query_disc measures point-to-center distance; both entries' points qualify
        assert index.query_disc(west_side, 30.0) == {"zone", "user"}

    def test_disc_spanning_seam_vs_oracle(self):
        rng = random.Random(8)
        index = GridIndex()
        entries = {}
        for i in range(400):
            lon = rng.choice([rng.uniform(179.9, 180.0), rng.uniform(-180.0, -179.9)])
            point = GeoPoint(rng.uniform(-10, 10), lon)
            entries[f"e{i}"] = (point, 0.0)
            index.insert(f"e{i}", point)
        for _ in range(100):
            lon = rng.choice([rng.uniform(179.9, 180.0), rng.uniform(-180.0, -179.9)])
            center = GeoPoint(rng.uniform(-10, 10), lon)
            radius = 10 ** rng.uniform(1, 4)
            assert index.query_disc(center, radius) == naive_query_disc(entries, center, radius)


class TestOversizedEntries:
    def test_huge_radius_entry_still_exact(self):
        index = GridIndex()
        center = GeoPoint(23.75, 90.40)
        index.insert("big", center, 100_000.0)  # coverage far beyond the cell limit
        index.insert("small", destination_point(center, 90.0, 50.0), 2.0)
        probe_inside = destination_point(center, 45.0, 99_000.0)
        probe_outside = destination_point(center, 45.0, 101_000.0)
        assert "big" in index.query_point(probe_inside)
        assert "big" not in index.query_point(probe_outside)
        index.remove("big")
        assert index.query_point(probe_inside) == set()
        index.check_integrity()


class TestConcurrency:
    def test_parallel_readers_and_writers_stay_consistent(self):
        rng = random.Random(11)
        index = GridIndex()
        points = [random_point(rng) for _ in range(300)]
        errors = []

        def writer(offset):
            try:
                for i, p in enumerate(points[offset::3]):
                    index.insert(f"w{offset}-{i}", p, 5.0)
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        def reader():
            try:
                for p in points:
                    index.query_point(p)
                    index.query_disc(p, 50.0)
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        threads = [threading.Thread(target=writer, args=(k,)) for k in range(3)]
        threads += [threading.Thread(target=reader) for _ in range(3)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert errors == []
        index.check_integrity()
        entries = {eid: index.entry(eid) for eid in index.scan_ids()}
        for p in points[:50]:
            assert index.query_point(p) == naive_query_point(entries, p)
