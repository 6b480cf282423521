"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with ``pytest -s tests/test_acceptance.py`` to see them).

Criteria, with their pinned tolerances:

1. linearity      -- bench over 1000..10000 step 1000, median of 5: R^2 >= 0.95,
                    slope > 0, full run <= 60 s (absolute times recorded only).
2. correctness    -- 10000 zones / 1000 probes, 10 fixed seeds: zero
                    index/oracle disagreements, <= 30 s total.
3. geodesic-suite -- identity/symmetry/range/triangle over >= 10^4 random
                    pairs; destination round trip within 1e-6 relative;
                    antipodal distance exactly pi * 6371 km.
4. zone-constants -- default radius = 1.8 + noise; area = pi r^2 within 1e-9
                    relative; transcribed algorithm at (0,0,n) gives area
                    3.1416 * n^2 exactly.
5. end-to-end     -- positive test + location report: user 1 m away gets
                    exactly one notification, user 5 km away none; unsafe at
                    the report point, safe at the far user; no patient
                    identity bytes in any user-visible payload; safe again
                    after recovery.
6. durability     -- truncated final log line: recovery keeps every committed
                    record; replay is byte-identical when repeated.
7. authorization  -- every off-diagonal (role, endpoint) pair is rejected
                    with 403; missing/bogus tokens with 401.
"""

import json
import math
import random
import shutil
import time
from datetime import datetime, timedelta, timezone

import pytest
from fastapi.testclient import TestClient

from geosafe.api import create_app
from geosafe.bench import DEFAULT_SIZES, REFERENCE_RUNTIMES_MS, run_benchmark, run_correctness
from geosafe.geo import (
    EARTH_RADIUS_M,
    GeoPoint,
    ZoneParameters,
    algorithm1_verbatim,
    destination_point,
    find_unsafe_area,
    haversine_distance_m,
)
from geosafe.service import TracingService
from geosafe.store import RegistryStore, Role

NOW = datetime(2021, 3, 7, 12, 0, 0, tzinfo=timezone.utc)


def report_line(name):
    """Print the criterion verdict even when the assertion machinery fires."""
    class _Reporter:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            print(f"{'FAIL' if exc_type else 'PASS'} {name}")
            return False
    return _Reporter()


class TestCriterion1Linearity:
    def test_benchmark_scales_linearly(self):
        with report_line("linearity: R^2 >= 0.95 with positive slope, <= 60 s"):
            start = time.perf_counter()
            result = run_benchmark(DEFAULT_SIZES, seed=0)
            elapsed = time.perf_counter() - start
            for row in result.rows:
                ref = REFERENCE_RUNTIMES_MS[row.data_size]
                print(f"  {row.data_size:>6} points: {row.runtime_ms:8.2f} ms "
                      f"(reference implementation: {ref} ms)")
            print(f"  fit: slope {result.fit.slope_ms_per_point * 1000:.4f} ms/1000 points, "
                  f"R^2 {result.fit.r_squared:.5f}, wall {elapsed:.1f} s")
            assert result.fit is not None
            assert result.fit.r_squared >= 0.95
            assert result.fit.slope_ms_per_point > 0
            assert elapsed <= 60.0


class TestCriterion2Correctness:
    def test_ten_seeds_zero_disagreements(self):
        with report_line("correctness: 10 seeds x (10000 zones, 1000 probes), "
                         "zero disagreements, <= 30 s"):
            start = time.perf_counter()
            for seed in range(1, 11):
                report = run_correctness(10000, 1000, seed=seed)
                assert report.probes == 1000
                assert report.agreements + len(report.disagreements) == report.probes
                assert report.disagreements == [], f"seed {seed}: {report.disagreements[:3]}"
            elapsed = time.perf_counter() - start
            print(f"  10 seeds in {elapsed:.1f} s")
            assert elapsed <= 30.0


class TestCriterion3GeodesicSuite:
    def test_haversine_properties_and_round_trip(self):
        with report_line("geodesic suite: 10^4-pair properties, round trip 1e-6, "
                         "antipodal exact"):
            rng = random.Random(20210307)
            pairs = [
                (GeoPoint(rng.uniform(-90, 90), rng.uniform(-180, 180)),
                 GeoPoint(rng.uniform(-90, 90), rng.uniform(-180, 180)))
                for _ in range(10_000)
            ]
            half_circumference = math.pi * EARTH_RADIUS_M
            for a, b in pairs:
                d_ab = haversine_distance_m(a, b)
                assert d_ab == haversine_distance_m(b, a)  # symmetry
                assert 0.0 <= d_ab <= half_circumference   # range
                assert haversine_distance_m(a, a) == 0.0   # identity

            for _ in range(10_000):
                a = GeoPoint(rng.uniform(-90, 90), rng.uniform(-180, 180))
                b = GeoPoint(rng.uniform(-90, 90), rng.uniform(-180, 180))
                c = GeoPoint(rng.uniform(-90, 90), rng.uniform(-180, 180))
                assert (haversine_distance_m(a, c) <= haversine_distance_m(a, b)
                        + haversine_distance_m(b, c) + 1e-6)

            for _ in range(10_000):
                origin = GeoPoint(rng.uniform(-85, 85), rng.uniform(-180, 180))
                bearing = rng.uniform(0, 360)
                dist = 10 ** rng.uniform(-1, 5)  # 0.1 m .. 100 km
                there = destination_point(origin, bearing, dist)
                assert abs(haversine_distance_m(origin, there) - dist) <= 1e-6 * dist

            assert haversine_distance_m(GeoPoint(0, 0), GeoPoint(0, 180)) \
                == math.pi * 6371.0 * 1000.0


class TestCriterion4ZoneConstants:
    def test_radius_area_and_transcription_constants(self):
        with report_line("zone constants: radius = 1.8 + noise, area = pi r^2 @1e-9, "
                         "transcribed area = 3.1416 n^2 exactly"):
            center = GeoPoint(23.73, 90.41)
            zone = find_unsafe_area(center, ZoneParameters(), "p", NOW)
            assert zone.radius_m == 1.8 + 0.2
            for noise in (0.0, 0.2, 1.0, 7.5):
                z = find_unsafe_area(center, ZoneParameters(noise_m=noise), "p", NOW)
                assert z.radius_m == 1.8 + noise
                expected = math.pi * z.radius_m**2
                assert abs(z.area_m2 - expected) <= 1e-9 * expected
            for n in (0.0, 0.2, 1.0, 3.75):
                _, rad, area = algorithm1_verbatim(0.0, 0.0, n)
                assert rad == n
                assert area == 3.1416 * n**2


class TestCriterion5EndToEnd:
    def test_full_workflow_over_http(self):
        with report_line("end-to-end: one alert to the near user, verdicts correct, "
                         "no patient identity in user payloads, safe after recovery"):
            store = RegistryStore()
            service = TracingService(store, ZoneParameters(),
                                     clock=lambda: datetime.now(timezone.utc))
            client = TestClient(create_app(service, stream_poll_seconds=0.05))
            user_visible: list[str] = []

            def see(resp):
                user_visible.append(resp.text)
                return resp

            # two citizens register, log in, and share their positions
            report_point = GeoPoint(23.73, 90.41)
            near_point = destination_point(report_point, 90.0, 1.0)
            far_point = destination_point(report_point, 90.0, 5000.0)
            tokens = {}
            for username, point in (("near_user", near_point), ("far_user", far_point)):
                resp = see(client.post("/users", json={
                    "full_name": f"Citizen {username}", "username": username,
                    "password": "pw", "nid": "1234567890", "blood_group": "O-"}))
                assert resp.status_code == 201
                resp = see(client.post("/auth/login",
                                       json={"username": username, "password": "pw"}))
                tokens[username] = resp.json()["token"]
                resp = see(client.put("/me/location", json={
                    "latitude": point.latitude_deg, "longitude": point.longitude_deg,
                    "observed_at": "2021-03-07T09:00:00Z",
                }, headers={"Authorization": f"Bearer {tokens[username]}"}))
                assert resp.status_code == 200

            # HSP reports a positive test naming the patient; TSP reports the position
            hsp = store.issue_credential(Role.HEALTH_SERVICE_PROVIDER, "hsp-1").token
            tsp = store.issue_credential(Role.TELECOM_SERVICE_PROVIDER, "tsp-1").token
            gov = store.issue_credential(Role.GOVERNMENT, "gov-1").token
            patient_name, patient_nid = "Rahim Patient", "9876543210987"
            resp = client.post("/reports/tests", json={
                "result": "Positive",
                "subject": {"full_name": patient_name, "nid": patient_nid},
            }, headers={"Authorization": f"Bearer {hsp}"})
            patient_id = resp.json()["patient"]["patient_id"]
            resp = client.post("/reports/locations", json={
                "patient_id": patient_id,
                "latitude": report_point.latitude_deg,
                "longitude": report_point.longitude_deg,
                "observed_at": "2021-03-07T10:00:00Z",
            }, headers={"Authorization": f"Bearer {tsp}"})
            assert resp.status_code == 201
            assert resp.json()["notified_user_count"] == 1

            # exactly one notification, to the near user
            near_notifs = see(client.get(
                "/me/notifications",
                headers={"Authorization": f"Bearer {tokens['near_user']}"})).json()
            far_notifs = see(client.get(
                "/me/notifications",
                headers={"Authorization": f"Bearer {tokens['far_user']}"})).json()
            assert len(near_notifs["notifications"]) == 1
            assert far_notifs["notifications"] == []
            assert near_notifs["notifications"][0]["distance_m"] == pytest.approx(1.0, rel=1e-6)

            # verdicts: unsafe at the report point, safe at the far user
            at_report = see(client.get("/safety", params={
                "lat": report_point.latitude_deg, "lon": report_point.longitude_deg}))
            assert at_report.json()["status"] == "unsafe"
            at_far = see(client.get("/safety", params={
                "lat": far_point.latitude_deg, "lon": far_point.longitude_deg}))
            assert at_far.json()["status"] == "safe"
            zones_view = see(client.get("/zones", params={
                "south": 23.7, "west": 90.4, "north": 23.8, "east": 90.5}))
            assert len(zones_view.json()["zones"]) == 1

            # structural scan: no patient identity bytes in anything users saw
            blob = "\n".join(user_visible)
            for secret in (patient_id, patient_name, patient_nid, "patient"):
                assert secret not in blob, f"user-visible payload leaked {secret!r}"

            # government marks recovery; the same probe is safe again
            resp = client.post(f"/patients/{patient_id}/recovered",
                               headers={"Authorization": f"Bearer {gov}"})
            assert resp.status_code == 200
            after = client.get("/safety", params={
                "lat": report_point.latitude_deg, "lon": report_point.longitude_deg})
            assert after.json()["status"] == "safe"


class TestCriterion6Durability:
    def test_truncated_tail_and_idempotent_replay(self, tmp_path):
        with report_line("durability: torn final record discarded, committed state "
                         "recovered, replay byte-identical"):
            clock = lambda: NOW
            work = tmp_path / "db"
            store = RegistryStore(work, clock=clock)
            service = TracingService(store, ZoneParameters(), clock=clock)
            near = destination_point(GeoPoint(23.73, 90.41), 90.0, 1.0)
            account = service.register_user(
                full_name="Amina", username="amina", password="pw",
                nid="1234567890", blood_group="A+")
            cred = store.issue_credential(Role.USER, account.user_id)
            service.record_user_location(cred, near, NOW)
            hsp = store.issue_credential(Role.HEALTH_SERVICE_PROVIDER, "hsp-1")
            tsp = store.issue_credential(Role.TELECOM_SERVICE_PROVIDER, "tsp-1")
            patient = service.submit_test_report(hsp, "Positive")
            service.submit_patient_location(tsp, patient.patient_id,
                                            GeoPoint(23.73, 90.41), NOW)
            store.close()

            log = work / "registry.log"
            full_log = log.read_bytes()
            lines = full_log.splitlines(keepends=True)

            # expected state: replay of everything except the torn record
            intact = tmp_path / "intact"
            intact.mkdir()
            (intact / "registry.log").write_bytes(b"".join(lines[:-1]))
            expected = RegistryStore(intact, clock=clock).state_bytes()

            # simulated crash: final record torn mid-write
            log.write_bytes(b"".join(lines[:-1]) + lines[-1][: max(1, len(lines[-1]) // 2)])
            recovered = RegistryStore(work, clock=clock)
            assert recovered.state_bytes() == expected
            assert len(recovered.zones()) == 1  # the committed zone survived
            recovered.close()

            # replaying the same log again yields byte-identical state
            again = RegistryStore(work, clock=clock)
            assert again.state_bytes() == expected
            again.close()

            # the service rebuilds its indexes from the recovered registry
            rebuilt = TracingService(RegistryStore(work, clock=clock),
                                     ZoneParameters(), clock=clock)
            assert rebuilt.safety_query(GeoPoint(23.73, 90.41)).status.value == "unsafe"


PUBLIC_REQUESTS = [
    ("GET", "/safety?lat=23.7&lon=90.4"),
    ("GET", "/zones?south=23&west=90&north=24&east=91"),
]

GATED_REQUESTS = [
    ("POST", "/reports/tests", {"result": "Negative"}, Role.HEALTH_SERVICE_PROVIDER),
    ("POST", "/reports/locations",
     {"patient_id": "x", "latitude": 23.7, "longitude": 90.4,
      "observed_at": "2021-03-07T10:00:00Z"}, Role.TELECOM_SERVICE_PROVIDER),
    ("POST", "/patients/x/recovered", None, Role.GOVERNMENT),
    ("PUT", "/me/location",
     {"latitude": 23.7, "longitude": 90.4, "observed_at": "2021-03-07T10:00:00Z"},
     Role.USER),
    ("GET", "/me/notifications", None, Role.USER),
    ("GET", "/stream?limit=0", None, Role.USER),
]


class TestCriterion7AuthorizationMatrix:
    def test_exhaustive_role_endpoint_matrix(self):
        with report_line("authorization matrix: all off-diagonal (role, endpoint) "
                         "pairs rejected"):
            store = RegistryStore()
            service = TracingService(store, ZoneParameters())
            client = TestClient(create_app(service))
            account = service.register_user(
                full_name="Amina", username="amina", password="pw",
                nid="1234567890", blood_group="A+")
            tokens = {Role.USER: store.issue_credential(Role.USER, account.user_id).token}
            for role in (Role.HEALTH_SERVICE_PROVIDER, Role.TELECOM_SERVICE_PROVIDER,
                         Role.GOVERNMENT):
                tokens[role] = store.issue_credential(role, "x").token

            checked = 0
            for method, path, body, allowed in GATED_REQUESTS:
                for role in Role:
                    resp = client.request(method, path, json=body, headers={
                        "Authorization": f"Bearer {tokens[role]}"})
                    if role is allowed:
                        assert resp.status_code not in (401, 403), (method, path, role)
                    else:
                        assert resp.status_code == 403, (method, path, role)
                    checked += 1
                assert client.request(method, path, json=body).status_code == 401
            for method, path in PUBLIC_REQUESTS:
                for role in Role:
                    resp = client.request(method, path, headers={
                        "Authorization": f"Bearer {tokens[role]}"})
                    assert resp.status_code == 200
                    checked += 1
                assert client.request(method, path).status_code == 200
            print(f"  {checked} (role, endpoint) pairs checked")
