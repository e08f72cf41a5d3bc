"""Simulated camera fleet: latency models, count scripts, HTTP behavior."""

import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timedelta, timezone

import httpx
import numpy as np
import pytest
from PIL import Image
from zoneinfo import ZoneInfo

from peakflow import codec
from peakflow.camsim import (
    BimodalLatency,
    ConstantLatency,
    SCENARIO_NAMES,
    SCENARIO_RATE,
    SCENARIO_SPLIT,
    SCENARIO_START,
    Scenario,
    ScheduleScript,
    SimCameraSpec,
    UniformLatency,
    VirtualClock,
    load_scenario,
    render_frame,
    scenario_from_config,
    scenario_script,
    scripted_fleet,
    serve,
    sinusoidal_script,
)
from peakflow.core import ConfigurationError, VehicleClass

UTC = timezone.utc
NY = ZoneInfo("America/New_York")


def _flat_script(now):
    return {VehicleClass.CAR: 5}


class TestLatencyModels:
    def test_constant(self):
        import random

        assert ConstantLatency(20.0).sample(random.Random(0)) == 20.0
        with pytest.raises(ConfigurationError):
            ConstantLatency(-1.0)

    def test_uniform(self):
        import random

        rng = random.Random(0)
        model = UniformLatency(10.0, 20.0)
        for _ in range(100):
            assert 10.0 <= model.sample(rng) <= 20.0
        with pytest.raises(ConfigurationError):
            UniformLatency(20.0, 10.0)

    def test_bimodal(self):
        import random

        rng = random.Random(0)
        model = BimodalLatency(20.0, 200.0, 0.1)
        draws = [model.sample(rng) for _ in range(1000)]
        assert set(draws) == {20.0, 200.0}
        assert 0.08 <= draws.count(200.0) / 1000 <= 0.12
        with pytest.raises(ConfigurationError):
            BimodalLatency(20.0, 200.0, 1.5)


class TestVirtualClock:
    def test_validation(self):
        with pytest.raises(ConfigurationError):
            VirtualClock(datetime(2024, 12, 23), rate=1.0)
        with pytest.raises(ConfigurationError):
            VirtualClock(datetime(2024, 12, 23, tzinfo=UTC), rate=0.0)

    def test_accelerated_time(self):
        clock = VirtualClock(datetime(2024, 12, 23, tzinfo=UTC), rate=100.0)
        t1 = clock.now()
        time.sleep(0.1)
        advanced = (clock.now() - t1).total_seconds()
        # 0.1 real seconds at 100x is 10 simulated seconds, give or take jitter.
        assert 8.0 <= advanced <= 30.0

    def test_starts_at_start(self):
        start = datetime(2024, 12, 23, tzinfo=UTC)
        clock = VirtualClock(start, rate=1.0)
        assert abs((clock.now() - start).total_seconds()) < 1.0


class TestScheduleScript:
    def test_profile_length_validated(self):
        with pytest.raises(ConfigurationError):
            ScheduleScript((1,) * 23, (1,) * 24, (1,) * 24, (1,) * 24, split_at=SCENARIO_SPLIT)

    def test_profile_range_validated(self):
        with pytest.raises(ConfigurationError):
            ScheduleScript((256,) * 24, (1,) * 24, (1,) * 24, (1,) * 24, split_at=SCENARIO_SPLIT)


class TestScenarioScripts:
    def test_step_change_moves_only_weekday_mornings(self):
        script = scenario_script("step-change", delta=-3)
        # Tuesday Dec 24 is before the split, Tuesday Dec 31 is after.
        assert script(datetime(2024, 12, 24, 7, 30, tzinfo=NY)) == {VehicleClass.CAR: 15}
        assert script(datetime(2024, 12, 31, 7, 30, tzinfo=NY)) == {VehicleClass.CAR: 12}
        # Midday and afternoon plateaus are untouched.
        assert script(datetime(2024, 12, 24, 12, 30, tzinfo=NY)) == {VehicleClass.CAR: 14}
        assert script(datetime(2024, 12, 31, 12, 30, tzinfo=NY)) == {VehicleClass.CAR: 14}
        assert script(datetime(2024, 12, 31, 17, 30, tzinfo=NY)) == {VehicleClass.CAR: 20}
        # Weekends stay quiet in both periods (Sat Dec 28, Sat Jan 4).
        assert script(datetime(2024, 12, 28, 10, 0, tzinfo=NY)) == {VehicleClass.CAR: 2}
        assert script(datetime(2025, 1, 4, 10, 0, tzinfo=NY)) == {VehicleClass.CAR: 2}

    def test_step_change_respects_split_boundary(self):
        script = scenario_script("step-change", delta=-3)
        just_before = SCENARIO_SPLIT - timedelta(milliseconds=1)
        # Dec 30 00:00 is a Monday; hour 0 sits on the quiet plateau either way,
        # so probe the morning hours across the boundary instead.
        monday_before = datetime(2024, 12, 23, 7, 0, tzinfo=NY)
        monday_after = datetime(2024, 12, 30, 7, 0, tzinfo=NY)
        assert script(monday_before)[VehicleClass.CAR] == 15
        assert script(monday_after)[VehicleClass.CAR] == 12
        assert script(just_before)[VehicleClass.CAR] == 2

    def test_flat_scenario_is_constant(self):
        script = scenario_script("flat")
        for day in (24, 28, 31):
            for hour in (0, 8, 13, 20):
                t = datetime(2024, 12, day, hour, 0, tzinfo=NY)
                assert script(t) == {VehicleClass.CAR: 4}

    def test_weekend_only_shift(self):
        script = scenario_script("weekend-only-shift", delta=-3)
        # Weekdays identical across the split.
        for t in (datetime(2024, 12, 24, 7, 0, tzinfo=NY), datetime(2024, 12, 31, 7, 0, tzinfo=NY)):
            assert script(t) == {VehicleClass.CAR: 15}
        # Weekend level drops by three after the split.
        assert script(datetime(2024, 12, 28, 10, 0, tzinfo=NY)) == {VehicleClass.CAR: 4}
        assert script(datetime(2025, 1, 4, 10, 0, tzinfo=NY)) == {VehicleClass.CAR: 1}

    def test_unknown_scenario_rejected(self):
        with pytest.raises(ConfigurationError):
            scenario_script("rush-hour-chaos")

    def test_scripted_fleet_names_and_size(self):
        specs = scripted_fleet("flat", 10)
        assert [s.source for s in specs] == [f"cam-{i:03d}" for i in range(10)]
        with pytest.raises(ConfigurationError):
            scripted_fleet("flat", 0)


class TestSinusoidalScript:
    def test_peak_and_trough(self):
        script = sinusoidal_script(peak_hour=17.0, amplitude=10.0, base=12.0, timezone="UTC")
        peak = script(datetime(2025, 1, 8, 17, 0, tzinfo=UTC))[VehicleClass.CAR]
        trough = script(datetime(2025, 1, 8, 5, 0, tzinfo=UTC))[VehicleClass.CAR]
        assert peak == 22
        assert trough == 2

    def test_step_applies_after_split(self):
        split = datetime(2025, 1, 5, tzinfo=UTC)
        script = sinusoidal_script(step=5, split_at=split, timezone="UTC")
        before = script(split - timedelta(hours=24))[VehicleClass.CAR]
        after = script(split + timedelta(hours=24))[VehicleClass.CAR]
        assert after == before + 5

    def test_step_without_split_rejected(self):
        with pytest.raises(ConfigurationError):
            sinusoidal_script(step=3)


class TestRendering:
    def test_rendered_frame_decodes_to_script_counts(self):
        payload = render_frame(352, 240, {VehicleClass.CAR: 5})
        image = np.asarray(Image.open(io.BytesIO(payload)).convert("RGB"))
        counts = codec.decode_counts(image)
        assert counts is not None
        assert counts[VehicleClass.CAR] == 5
        assert sum(v for k, v in counts.items() if k != VehicleClass.CAR) == 0

    def test_render_cache_returns_identical_payload(self):
        a = render_frame(352, 240, {VehicleClass.BUS: 7})
        b = render_frame(352, 240, {VehicleClass.BUS: 7})
        assert a is b

    def test_small_frame_still_carries_counts(self):
        payload = render_frame(160, 120, {VehicleClass.TRUCK: 9})
        image = np.asarray(Image.open(io.BytesIO(payload)).convert("RGB"))
        assert codec.decode_counts(image)[VehicleClass.TRUCK] == 9

    def test_undersized_spec_rejected(self):
        with pytest.raises(ConfigurationError):
            SimCameraSpec("tiny", _flat_script, width=100, height=120)


class TestServer:
    def test_healthz_and_unknown_paths(self):
        with serve([SimCameraSpec("cam-000", _flat_script)]) as server:
            with httpx.Client() as client:
                health = client.get(server.base_url + "/healthz")
                assert (health.status_code, health.text) == (200, "ok")
                assert client.get(server.base_url + "/nope").status_code == 404
                assert client.get(server.base_url + "/cam/ghost").status_code == 404

    def test_frame_endpoint_serves_decodable_jpeg(self):
        with serve([SimCameraSpec("cam-000", _flat_script)]) as server:
            with httpx.Client() as client:
                response = client.get(server.url_for("cam-000"))
        assert response.status_code == 200
        assert response.headers["content-type"] == "image/jpeg"
        image = Image.open(io.BytesIO(response.content))
        assert image.size == (352, 240)
        counts = codec.decode_counts(np.asarray(image.convert("RGB")))
        assert counts[VehicleClass.CAR] == 5

    def test_constant_latency_is_observed(self):
        spec = SimCameraSpec("cam-000", _flat_script, latency_model=ConstantLatency(20.0))
        with serve([spec]) as server:
            with httpx.Client() as client:
                client.get(server.base_url + "/healthz")  # warm the connection
                samples = []
                for _ in range(5):
                    t0 = time.perf_counter()
                    client.get(server.url_for("cam-000"))
                    samples.append((time.perf_counter() - t0) * 1000.0)
        assert min(samples) >= 20.0
        assert min(samples) <= 80.0  # constant 20ms plus modest overhead

    def test_bimodal_latency_fraction_over_thousand_requests(self):
        spec = SimCameraSpec(
            "cam-000", _flat_script, latency_model=BimodalLatency(20.0, 200.0, 0.1)
        )
        with serve([spec], seed=42) as server:
            url = server.url_for("cam-000")

            def timed_fetch(_):
                with httpx.Client() as client:
                    t0 = time.perf_counter()
                    client.get(url)
                    return (time.perf_counter() - t0) * 1000.0

            with ThreadPoolExecutor(max_workers=16) as pool:
                timings = list(pool.map(timed_fetch, range(1000)))
            logged = server.request_log()
        slow_logged = sum(1 for e in logged if e.latency_ms > 100.0) / len(logged)
        assert len(logged) == 1000
        assert 0.08 <= slow_logged <= 0.12
        # Wall time includes queueing, so it only bounds latency from below.
        assert min(timings) >= 20.0
        assert max(timings) >= 200.0

    def test_request_log_records_clock_and_latency(self):
        t_fixed = datetime(2024, 12, 23, 7, 0, tzinfo=UTC)
        spec = SimCameraSpec("cam-000", _flat_script, latency_model=ConstantLatency(3.0))
        with serve([spec], clock=lambda: t_fixed) as server:
            with httpx.Client() as client:
                client.get(server.url_for("cam-000"))
                client.get(server.url_for("cam-000"))
            log = server.request_log()
            server.clear_log()
            assert server.request_log() == []
        assert len(log) == 2
        for entry in log:
            assert entry.source == "cam-000"
            assert entry.started_at == t_fixed
            assert entry.latency_ms == 3.0

    def test_camera_file_round_trips_into_collector_endpoints(self, tmp_path):
        from peakflow.ingest import load_camera_file

        specs = [SimCameraSpec(f"cam-{i:03d}", _flat_script) for i in range(3)]
        with serve(specs) as server:
            path = tmp_path / "cams.json"
            server.write_camera_file(path, poll_interval_ms=125.0)
            cams = load_camera_file(path)
            assert [c.source for c in cams] == ["cam-000", "cam-001", "cam-002"]
            assert all(c.url == server.url_for(c.source) for c in cams)
            assert all(c.poll_interval_ms == 125.0 for c in cams)

    def test_serve_validates_specs(self):
        with pytest.raises(ConfigurationError):
            serve([])
        with pytest.raises(ConfigurationError):
            serve([SimCameraSpec("dup", _flat_script), SimCameraSpec("dup", _flat_script)])

    def test_stop_is_idempotent(self):
        server = serve([SimCameraSpec("cam-000", _flat_script)])
        server.stop()
        server.stop()


class TestScenarioFiles:
    def test_defaults(self):
        scenario = scenario_from_config({"scenario": "step-change"})
        assert isinstance(scenario, Scenario)
        assert len(scenario.specs) == 10
        assert scenario.start == SCENARIO_START
        assert scenario.split_at == SCENARIO_SPLIT
        assert scenario.rate == SCENARIO_RATE
        assert scenario.timezone == "America/New_York"
        assert scenario.clock().rate == SCENARIO_RATE

    def test_explicit_values(self):
        scenario = scenario_from_config(
            {
                "scenario": "flat",
                "cameras": 3,
                "rate": 100.0,
                "start": "2025-02-03T00:00:00",
                "split": "2025-02-10T00:00:00",
                "timezone": "UTC",
                "latency": {"model": "bimodal", "fast_ms": 20, "slow_ms": 200, "slow_fraction": 0.1},
            }
        )
        assert len(scenario.specs) == 3
        assert scenario.start == datetime(2025, 2, 3, tzinfo=UTC)
        assert scenario.specs[0].latency_model == BimodalLatency(20.0, 200.0, 0.1)

    def test_fractional_delta_rejected(self):
        with pytest.raises(ConfigurationError):
            scenario_from_config({"scenario": "step-change", "delta": 2.5})

    def test_unknown_scenario_name_rejected(self):
        with pytest.raises(ConfigurationError):
            scenario_from_config({"scenario": "gridlock"})
        assert SCENARIO_NAMES == ("step-change", "flat", "weekend-only-shift")

    def test_unknown_latency_model_rejected(self):
        with pytest.raises(ConfigurationError):
            scenario_from_config({"scenario": "flat", "latency": {"model": "pareto"}})

    def test_missing_scenario_key_rejected(self):
        with pytest.raises(ConfigurationError):
            scenario_from_config({})

    def test_load_scenario_file(self, tmp_path):
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps({"scenario": "flat", "cameras": 2, "rate": 50}))
        scenario = load_scenario(path)
        assert scenario.name == "flat"
        assert len(scenario.specs) == 2
        with pytest.raises(ConfigurationError):
            load_scenario(tmp_path / "missing.json")

    def test_main_reports_config_errors(self, tmp_path, capsys):
        from peakflow.camsim import main

        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"scenario": "gridlock"}))
        assert main([str(path)]) == 2
        assert "error:" in capsys.readouterr().out
