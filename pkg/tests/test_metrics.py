import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from greenlight import metrics
from greenlight.metrics import (
    VehicleMetrics,
    aggregate,
    build_report,
    finalize,
    percent_change,
    record_step,
)


class Counters:
    def __init__(self):
        self.waiting_time = 0.0
        self.time_loss = 0.0


class VehicleStub:
    def __init__(self, vid, scheduled, actual, wt=0.0, tl=0.0, es=0):
        self.vid = vid
        self.scheduled_depart = scheduled
        self.actual_depart = actual
        self.waiting_time = wt
        self.time_loss = tl
        self.emergency_stops = es


def test_record_step_crawling_counts_as_waiting():
    c = Counters()
    record_step(c, speed=0.05, allowed_speed=13.9, dt=1.0)
    assert c.waiting_time == pytest.approx(1.0)
    assert c.time_loss == pytest.approx(1.0 - 0.05 / 13.9)


def test_record_step_at_allowed_speed_loses_nothing():
    c = Counters()
    record_step(c, speed=13.9, allowed_speed=13.9, dt=1.0)
    assert c.waiting_time == 0.0
    assert c.time_loss == 0.0


def test_record_step_half_speed_loses_half():
    c = Counters()
    record_step(c, speed=6.95, allowed_speed=13.9, dt=1.0)
    assert c.waiting_time == 0.0
    assert c.time_loss == pytest.approx(0.5)


def test_finalize_delay_zero():
    m = finalize(VehicleStub(1, scheduled=10.0, actual=10.0), duration=1000.0)
    assert m.depart_delay == 0.0 and not m.never_departed


def test_finalize_delay_subtraction():
    m = finalize(VehicleStub(1, scheduled=10.0, actual=14.0), duration=1000.0)
    assert m.depart_delay == pytest.approx(4.0)


def test_finalize_never_inserted_flagged():
    m = finalize(VehicleStub(1, scheduled=900.0, actual=None), duration=1000.0)
    assert m.never_departed
    assert m.depart_delay == pytest.approx(100.0)
    assert m.waiting_time == 0.0 and m.time_loss == 0.0 and m.emergency_stops == 0


def test_aggregate_small_example():
    s = aggregate([1.0, 2.0, 3.0])
    assert (s.mean, s.sd, s.vmin, s.vmax, s.n) == (2.0, 1.0, 1.0, 3.0, 3)


def test_aggregate_single_element():
    s = aggregate([74.0688])
    assert s.mean == 74.0688 and s.sd == 0.0 and s.vmin == s.vmax == 74.0688 and s.n == 1


def test_aggregate_empty_errors():
    with pytest.raises(ValueError):
        aggregate([])


def test_aggregate_matches_naive_oracle_on_random_input():
    rng = np.random.default_rng(0)
    values = list(rng.normal(50.0, 20.0, size=1000))
    s = aggregate(values)
    mean, sd, lo, hi = oracles.naive_stats(values)
    assert s.mean == pytest.approx(mean, rel=1e-9)
    assert s.sd == pytest.approx(sd, rel=1e-9)
    assert s.vmin == lo and s.vmax == hi


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200))
def test_aggregate_matches_oracle_property(values):
    s = aggregate(values)
    mean, sd, lo, hi = oracles.naive_stats(values)
    assert s.mean == pytest.approx(mean, rel=1e-9, abs=1e-9)
    assert s.sd == pytest.approx(sd, rel=1e-9, abs=1e-6)
    assert s.vmin == lo and s.vmax == hi
    assert s.vmin <= s.mean <= s.vmax
    assert s.sd >= 0.0


def test_percent_change_reference_value():
    assert percent_change(165.5, 92.4091) == pytest.approx(44.1637, abs=1e-4)


def test_percent_change_identity_and_increase():
    assert percent_change(5.0, 5.0) == 0.0
    assert percent_change(100.0, 150.0) == pytest.approx(-50.0)


def test_percent_change_zero_baseline_errors():
    with pytest.raises(ValueError):
        percent_change(0.0, 1.0)


def _vm(vid, wt, tl, es, dd, never=False):
    return VehicleMetrics(vid, wt, tl, es, dd, never)


def test_build_report_pools_departed_only():
    episodes = [
        metrics.EpisodeTotals(seed=1, episode=0, spawned=2, departed=2, arrived=2, never_departed=0, emergency_stops=3),
        metrics.EpisodeTotals(seed=2, episode=1, spawned=2, departed=1, arrived=1, never_departed=1, emergency_stops=1),
    ]
    vehicles = [
        _vm(0, 10.0, 12.0, 2, 0.0),
        _vm(1, 20.0, 22.0, 1, 2.0),
        _vm(0, 30.0, 32.0, 1, 4.0),
        _vm(1, 0.0, 0.0, 0, 50.0, never=True),
    ]
    report = build_report("fixed", "abc", [1, 2], episodes, vehicles)
    assert report.summaries["wt"].n == 3
    assert report.summaries["wt"].mean == pytest.approx(20.0)
    assert report.summaries["dd"].mean == pytest.approx(2.0)
    assert report.es_per_episode.mean == pytest.approx(2.0)
    assert report.es_per_episode.n == 2


def test_report_json_round_trip():
    episodes = [
        metrics.EpisodeTotals(seed=1, episode=0, spawned=1, departed=1, arrived=1, never_departed=0, emergency_stops=2)
    ]
    report = build_report("dqn", "abc", [1], episodes, [_vm(0, 1.5, 2.5, 2, 0.5)])
    again = metrics.report_from_json(metrics.report_to_json(report))
    assert again == report
    assert metrics.report_to_json(again) == metrics.report_to_json(report)


def test_report_csv_shape():
    episodes = [
        metrics.EpisodeTotals(seed=7, episode=0, spawned=2, departed=2, arrived=2, never_departed=0, emergency_stops=0)
    ]
    report = build_report("fixed", "abc", [7], episodes, [_vm(0, 1.0, 2.0, 0, 0.0), _vm(1, 3.0, 4.0, 0, 1.0)])
    lines = metrics.report_csv(report).strip().split("\n")
    assert lines[0] == "vehicle_id,waiting_time,time_loss,emergency_stops,depart_delay,seed,episode"
    assert len(lines) == 3
    assert lines[1].split(",")[-2:] == ["7", "0"]


def test_summary_csv_two_controllers():
    episodes = [
        metrics.EpisodeTotals(seed=1, episode=0, spawned=1, departed=1, arrived=1, never_departed=0, emergency_stops=1)
    ]
    a = build_report("fixed", "x", [1], episodes, [_vm(0, 1.0, 2.0, 1, 0.0)])
    b = build_report("dqn", "x", [1], episodes, [_vm(0, 2.0, 1.0, 0, 0.5)])
    lines = metrics.summary_csv([a, b]).strip().split("\n")
    header = lines[0].split(",")
    assert header == [
        "statistic",
        "fixed_wt", "fixed_tl", "fixed_es", "fixed_dd",
        "dqn_wt", "dqn_tl", "dqn_es", "dqn_dd",
    ]
    assert [row.split(",")[0] for row in lines[1:]] == ["mean", "sd", "min", "max"]
