"""Experiment harness tests: dataset determinism, benchmark plumbing, the
correctness check's probe mix and report format, and the CLI subcommands."""

import csv
import io
import re

import pytest

from geosafe.bench import (
    DHAKA_BBOX,
    DatasetBox,
    NaiveScanOracle,
    generate_dataset,
    linear_fit,
    run_benchmark,
    run_correctness,
    sentence,
    write_benchmark_csv,
    write_correctness_csv,
    write_points_csv,
)
from geosafe.cli import main
from geosafe.geo import GeoPoint

SENTENCE_RE = re.compile(
    r"^The user in location \(-?\d+\.\d{6}, -?\d+\.\d{6}\) is in (safe|unsafe) area$")


class TestGenerateDataset:
    def test_single_point_in_box(self):
        (p,) = generate_dataset(1, DHAKA_BBOX, seed=5)
        assert DHAKA_BBOX.south <= p.latitude_deg <= DHAKA_BBOX.north
        assert DHAKA_BBOX.west <= p.longitude_deg <= DHAKA_BBOX.east

    def test_deterministic_per_seed(self):
        assert generate_dataset(100, seed=7) == generate_dataset(100, seed=7)
        assert generate_dataset(100, seed=7) != generate_dataset(100, seed=8)

    def test_full_size_run_all_valid(self):
        points = generate_dataset(10000, DHAKA_BBOX, seed=1)
        assert len(points) == 10000
        assert all(DHAKA_BBOX.south <= p.latitude_deg <= DHAKA_BBOX.north and
                   DHAKA_BBOX.west <= p.longitude_deg <= DHAKA_BBOX.east
                   for p in points)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            generate_dataset(0)
        with pytest.raises(ValueError):
            DatasetBox(south=24.0, west=90.0, north=23.0, east=91.0)
        with pytest.raises(ValueError):
            DatasetBox(south=23.0, west=91.0, north=24.0, east=90.0)


class TestBenchmark:
    def test_single_size_gives_one_row_and_no_fit(self):
        result = run_benchmark([1000], seed=0, repeats=1)
        assert len(result.rows) == 1
        assert result.rows[0].data_size == 1000
        assert result.rows[0].runtime_ms > 0
        assert result.fit is None

    def test_rejects_nonincreasing_sizes(self):
        with pytest.raises(ValueError):
            run_benchmark([2000, 1000])
        with pytest.raises(ValueError):
            run_benchmark([1000, 1000])

    def test_linear_fit_on_synthetic_line(self):
        from geosafe.bench import BenchmarkRow
        rows = [BenchmarkRow(n, 0.01 * n + 3.0) for n in range(1000, 6000, 1000)]
        fit = linear_fit(rows)
        assert fit.slope_ms_per_point == pytest.approx(0.01, rel=1e-9)
        assert fit.intercept_ms == pytest.approx(3.0, rel=1e-6)
        assert fit.r_squared == pytest.approx(1.0)

    def test_csv_format(self):
        from geosafe.bench import BenchmarkRow
        out = io.StringIO()
        write_benchmark_csv([BenchmarkRow(1000, 12.5)], out)
        lines = out.getvalue().splitlines()
        assert lines[0] == "data_size,runtime_ms"
        assert lines[1] == "1000,12.500"


class TestCorrectness:
    def test_zero_zones_all_safe_full_agreement(self):
        report = run_correctness(0, 50, seed=3)
        assert report.probes == 50
        assert report.agreements == 50
        assert report.disagreements == []
        assert all(v == "safe" for _, v, _ in report.records)

    def test_probe_mix_counts(self):
        report = run_correctness(20, 100, seed=4)
        assert report.probes == 100
        # half random, quarter centers, quarter boundary-adjacent
        center_hits = sum(1 for p, verdict, _ in report.records[50:75] if verdict == "unsafe")
        assert center_hits == 25  # exact centers always classify unsafe

    def test_small_run_no_disagreements(self):
        report = run_correctness(500, 200, seed=5)
        assert report.disagreements == []
        assert report.agreements == report.probes

    def test_deterministic(self):
        a = run_correctness(100, 60, seed=6)
        b = run_correctness(100, 60, seed=6)
        assert a.records == b.records

    def test_sentence_format(self):
        line = sentence(GeoPoint(23.750336, 90.448566), "safe")
        assert line == "The user in location (23.750336, 90.448566) is in safe area"
        report = run_correctness(50, 40, seed=7)
        for text in report.lines():
            assert SENTENCE_RE.match(text), text

    def test_csv_format(self):
        report = run_correctness(10, 8, seed=8)
        out = io.StringIO()
        write_correctness_csv(report, out)
        rows = list(csv.reader(io.StringIO(out.getvalue())))
        assert rows[0] == ["lat", "lon", "index_verdict", "oracle_verdict"]
        assert len(rows) == 1 + report.probes
        for lat, lon, iv, ov in rows[1:]:
            float(lat), float(lon)
            assert iv in ("safe", "unsafe") and ov in ("safe", "unsafe")

    def test_oracle_matches_scalar_distance(self):
        from geosafe.geo import ZoneParameters, find_unsafe_area, haversine_distance_m
        from datetime import datetime, timezone
        now = datetime.now(timezone.utc)
        zones = [find_unsafe_area(p, ZoneParameters(), f"p{i}", now)
                 for i, p in enumerate(generate_dataset(50, seed=9))]
        oracle = NaiveScanOracle(zones)
        for probe in generate_dataset(20, seed=10):
            distances = oracle.distances_m(probe)
            for z, d in zip(zones, distances):
                assert d == pytest.approx(haversine_distance_m(probe, z.center),
                                          rel=1e-12, abs=1e-9)


class TestCli:
    def test_gen_writes_csv(self, tmp_path, capsys):
        out = tmp_path / "points.csv"
        assert main(["gen", "--n", "25", "--seed", "3", "--out", str(out)]) == 0
        rows = list(csv.reader(out.open()))
        assert rows[0] == ["latitude", "longitude"]
        assert len(rows) == 26

    def test_gen_custom_bbox(self, tmp_path):
        out = tmp_path / "points.csv"
        main(["gen", "--n", "10", "--bbox", "10,20,11,21", "--seed", "1",
              "--out", str(out)])
        for lat, lon in list(csv.reader(out.open()))[1:]:
            assert 10 <= float(lat) <= 11 and 20 <= float(lon) <= 21

    def test_bench_writes_csv_and_fit(self, tmp_path, capsys):
        out = tmp_path / "bench.csv"
        assert main(["bench", "--sizes", "200,400,600", "--seed", "1",
                     "--out", str(out)]) == 0
        rows = list(csv.reader(out.open()))
        assert rows[0] == ["data_size", "runtime_ms"]
        assert [r[0] for r in rows[1:]] == ["200", "400", "600"]
        err = capsys.readouterr().err
        assert "linear fit" in err and "R^2" in err

    def test_check_prints_sentences_and_csv(self, tmp_path, capsys):
        out = tmp_path / "check.csv"
        assert main(["check", "--zones", "50", "--probes", "20", "--seed", "2",
                     "--out", str(out)]) == 0
        captured = capsys.readouterr()
        lines = captured.out.strip().splitlines()
        assert len(lines) == 20
        assert all(SENTENCE_RE.match(line) for line in lines)
        assert "0 disagreements" in captured.err
        rows = list(csv.reader(out.open()))
        assert rows[0] == ["lat", "lon", "index_verdict", "oracle_verdict"]

    def test_check_quiet(self, capsys):
        assert main(["check", "--zones", "10", "--probes", "5", "--seed", "2",
                     "--quiet"]) == 0
        assert capsys.readouterr().out == ""

    def test_points_csv_roundtrip(self):
        points = generate_dataset(5, seed=11)
        out = io.StringIO()
        write_points_csv(points, out)
        rows = list(csv.reader(io.StringIO(out.getvalue())))[1:]
        parsed = [GeoPoint(float(lat), float(lon)) for lat, lon in rows]
        assert parsed == points
