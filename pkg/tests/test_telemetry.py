"""Breakdown math, percentiles, instability detection, utilization."""

import math

import pytest

from brokersim.kernel import NS_PER_S, RateResource, ns
from brokersim.telemetry import (
    EPOCHS,
    Collector,
    TelemetryError,
    breakdown_from_rows,
    detect_instability,
    nearest_rank_p99,
    utilization_rows,
    waiting_fraction_series,
)

MS = 1_000_000


def synthetic_frame(start_ms, stages_ms=(10, 20, 30, 40), fanout=1):
    """Frame with the given (ingest, detect, wait, identify) components."""
    t0 = start_ms * MS
    ing, det, wait, ident = (v * MS for v in stages_ms)
    return [t0, t0, t0 + ing, t0 + ing + det, t0 + ing + det,
            t0 + ing + det + wait, t0 + ing + det + wait,
            t0 + ing + det + wait + ident, fanout, 1000, 0, 0, 0]


def test_constructed_breakdown_means():
    rows = [synthetic_frame(i * 200) for i in range(50)]
    rep = breakdown_from_rows(rows)
    assert rep.stages["ingest"].mean == pytest.approx(0.010)
    assert rep.stages["detect"].mean == pytest.approx(0.020)
    assert rep.stages["wait"].mean == pytest.approx(0.030)
    assert rep.stages["identify"].mean == pytest.approx(0.040)
    assert rep.end_to_end.mean == pytest.approx(0.100)
    assert rep.wait_fraction == pytest.approx(0.30)


def test_decomposition_sums_exactly_to_end_to_end():
    rows = [synthetic_frame(i * 100, stages_ms=(7, 13, 29, 41)) for i in range(200)]
    rep = breakdown_from_rows(rows)
    total = sum(st.mean for st in rep.stages.values())
    assert total == pytest.approx(rep.end_to_end.mean, rel=1e-12)


def test_breakdown_rejects_empty_and_unordered_logs():
    with pytest.raises(TelemetryError):
        breakdown_from_rows([])
    bad = synthetic_frame(0)
    bad[3], bad[2] = bad[2], bad[3]  # detect ends before ingest ends
    with pytest.raises(TelemetryError):
        breakdown_from_rows([bad])


def test_nearest_rank_p99_matches_analytic_quantile():
    # uniform grid 1..n: nearest-rank p99 = value at ceil(0.99 n)
    for n in (100, 250, 1000):
        values = list(range(1, n + 1))
        assert nearest_rank_p99(values) == math.ceil(0.99 * n)
    assert nearest_rank_p99(list(range(99))) is None


def test_stage_p99_reported_from_rows():
    rows = [synthetic_frame(i * 200, stages_ms=(10, 20, 30, 40 + (i % 2)))
            for i in range(200)]
    rep = breakdown_from_rows(rows)
    assert rep.stages["identify"].p99 == pytest.approx(0.041)


def test_detector_constant_latency_is_stable():
    verdict = detect_instability([0.1] * EPOCHS, {"r": [0] * (EPOCHS + 1)})
    assert verdict.stable
    assert verdict.binding_resource is None


def test_detector_flags_linear_growth():
    means = [0.1 + 0.01 * k for k in range(EPOCHS)]
    verdict = detect_instability(means, {"r": [0] * (EPOCHS + 1)})
    assert not verdict.stable
    assert verdict.growth_ratio == pytest.approx(1.9)


def test_detector_flags_monotone_queue_growth():
    samples = {"broker-0-storage": [k * ns(1.0) for k in range(EPOCHS + 1)],
               "idle": [0] * (EPOCHS + 1)}
    verdict = detect_instability([0.1] * EPOCHS, samples)
    assert not verdict.stable
    assert verdict.binding_resource == "broker-0-storage"


def test_detector_ignores_sub_floor_queue_noise():
    # grows 100 ms total: well under a diverging queue's signature
    samples = {"r": [k * 10_000_000 for k in range(EPOCHS + 1)]}
    verdict = detect_instability([0.1] * EPOCHS, samples)
    assert verdict.stable


def test_detector_tolerates_one_sampling_wobble():
    samples = [k * ns(1.0) for k in range(EPOCHS + 1)]
    samples[5] = samples[4] - 1  # single dip
    verdict = detect_instability([0.1] * EPOCHS, {"q": samples})
    assert not verdict.stable


def test_detector_requires_both_rise_count_and_ratio():
    # rising but shallow growth stays stable
    means = [0.1 + 0.001 * k for k in range(EPOCHS)]
    assert detect_instability(means, {}).stable
    # steep but non-monotone growth stays stable
    means = [0.1, 0.5, 0.1, 0.5, 0.1, 0.5, 0.1, 0.5, 0.1, 0.5]
    assert detect_instability(means, {}).stable


def test_collector_rejects_too_short_horizon():
    with pytest.raises(TelemetryError):
        Collector(horizon_ns=ns(65.0), warmup_ns=ns(60.0))


def test_utilization_idle_resource_is_all_zero():
    r = RateResource("idle", 1000.0)
    rows = utilization_rows([r], 60 * NS_PER_S)
    assert len(rows) == 6
    assert all(row[2] == 0.0 and row[3] == 0.0 for row in rows)


def test_utilization_busy_fraction_accounts_served_volume():
    r = RateResource("srv", 1000.0)
    r.acquire_at(0, 5000.0)  # five seconds of work in window 0
    rows = utilization_rows([r], 20 * NS_PER_S)
    assert rows[0][2] == pytest.approx(0.5)
    assert rows[0][3] == pytest.approx(5000.0)
    assert rows[1][2] == 0.0


def test_waiting_fraction_series_rejects_unstable_runs():
    class FakeVerdict:
        stable = False
        binding_resource = "broker-storage"

    class FakeRun:
        accel = 8
        verdict = FakeVerdict()
        collector = None

    with pytest.raises(TelemetryError):
        waiting_fraction_series([FakeRun()])
