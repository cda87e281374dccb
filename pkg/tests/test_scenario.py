"""Scenario loading, validation, builtins, and scaling."""

import math

import pytest

from brokersim.scenario import (
    BUILTIN_NAMES,
    ComputeProfile,
    ScenarioError,
    ValidationError,
    builtin_document,
    builtin_scenario,
    dump_scenario,
    load_scenario,
    scaled,
)

MINIMAL = """
name: minimal
producers: 1
consumers: 1
brokers: 1
replication_factor: 1
"""


def test_minimal_document_gets_defaults():
    spec = load_scenario(MINIMAL)
    assert spec.producers == 1
    assert spec.effective_partitions() == 1
    assert spec.storage_effective_ceiling == 0.8
    assert spec.batching.producer_linger == 0.010
    assert "ingest" in spec.stage_profiles


def test_replication_beyond_brokers_names_the_field():
    doc = MINIMAL.replace("replication_factor: 1", "replication_factor: 3") \
                 .replace("brokers: 1", "brokers: 2")
    with pytest.raises(ValidationError) as err:
        load_scenario(doc)
    assert "replication_factor" in str(err.value)


def test_validation_reports_every_violation():
    doc = """
name: broken
producers: 0
consumers: 1
brokers: 2
replication_factor: 3
acceleration: 0.5
"""
    with pytest.raises(ValidationError) as err:
        load_scenario(doc)
    msg = str(err.value)
    assert "producers" in msg and "replication_factor" in msg and "acceleration" in msg


def test_unknown_keys_fail_closed():
    with pytest.raises(ScenarioError) as err:
        load_scenario(MINIMAL + "\nretention_hours: 24\n")
    assert "retention_hours" in str(err.value)


def test_malformed_document_is_a_parse_error():
    with pytest.raises(ScenarioError):
        load_scenario("name: [unclosed")


def test_partitions_below_consumers_rejected():
    doc = MINIMAL.replace("consumers: 1", "consumers: 4") + "partitions: 2\n"
    with pytest.raises(ValidationError) as err:
        load_scenario(doc)
    assert "partitions" in str(err.value)


def test_round_trip_all_builtins():
    for name in BUILTIN_NAMES:
        spec = builtin_scenario(name)
        assert load_scenario(dump_scenario(spec)) == spec


def test_shipped_documents_match_builtins():
    for name in BUILTIN_NAMES:
        assert load_scenario(builtin_document(name)) == builtin_scenario(name)


def test_native_builtin_populations():
    spec = builtin_scenario("face-recognition-native")
    assert (spec.producers, spec.consumers, spec.brokers) == (840, 1680, 3)
    assert spec.replication_factor == 3
    assert spec.message_size.mean_bytes == 37300.0
    assert abs(spec.fanout.mean() - 0.64) < 1e-9
    counts = [k for k, _ in spec.fanout.categorical]
    assert counts == [0, 1, 2, 3, 4, 5]


def test_native_stage_means():
    spec = builtin_scenario("face-recognition-native")
    assert spec.stage_profiles["ingest"].mean == 0.0188
    assert spec.stage_profiles["detect"].mean == 0.0748
    assert spec.stage_profiles["identify"].mean == 0.1315


def test_accel_builtin_constant_fanout_and_demand_anchor():
    spec = builtin_scenario("face-recognition-accel")
    assert spec.fanout.kind == "constant"
    assert spec.fanout.constant_value == 1
    # per-broker write demand at 1x calibrates to 10% of nominal bandwidth
    demand = (spec.producers / spec.frame_interval * spec.message_size.mean_bytes
              * spec.replication_factor / spec.brokers)
    assert demand == pytest.approx(0.10 * spec.storage_write_capacity, rel=1e-12)


def test_object_detection_builtin():
    spec = builtin_scenario("object-detection-accel")
    assert spec.producers == 21
    assert spec.consumers == 2016  # 36 nodes x 56 processes
    assert spec.frame_interval == pytest.approx(1.0 / 30.0)
    assert spec.pacing == "scheduled"
    assert spec.stage_profiles["identify"].mean == 0.687


def test_unknown_builtin_name():
    with pytest.raises(KeyError):
        builtin_scenario("no-such-pipeline")


def test_every_builtin_passes_validation():
    for name in BUILTIN_NAMES:
        builtin_scenario(name)  # would raise on violation


def test_lognormal_fit_reproduces_mean_and_p99():
    prof = ComputeProfile(mean=0.1315, p99=0.380)
    mu, sigma = prof.lognormal_params()
    assert math.exp(mu + sigma * sigma / 2) == pytest.approx(0.1315, rel=1e-12)
    z99 = 2.3263478740408408
    assert math.exp(mu + z99 * sigma) == pytest.approx(0.380, rel=1e-9)


def test_lognormal_infeasible_ratio_rejected():
    doc = MINIMAL + """
stage_profiles:
  ingest: {mean: 0.01, p99: 0.9}
  identify: {mean: 0.1, p99: 0.2}
"""
    with pytest.raises(ValidationError) as err:
        load_scenario(doc)
    assert "lognormal" in str(err.value)


def test_categorical_probabilities_must_sum_to_one():
    doc = MINIMAL + """
fanout:
  kind: categorical
  categorical: [[0, 0.5], [1, 0.4]]
"""
    with pytest.raises(ValidationError):
        load_scenario(doc)


def test_scaled_preserves_utilization_ratios():
    from brokersim.analytic import predict_stability

    spec = builtin_scenario("face-recognition-accel")
    small = scaled(spec, 20)
    assert small.producers == 42
    assert small.brokers == spec.brokers
    for a in (1, 4, 8):
        big_rho = predict_stability(spec, a).utilizations
        small_rho = predict_stability(small, a).utilizations
        for key in big_rho:
            assert small_rho[key] == pytest.approx(big_rho[key], rel=1e-9)


def test_scaled_rejects_indivisible_populations():
    with pytest.raises(ValueError):
        scaled(builtin_scenario("object-detection-accel"), 2)  # 21 producers
