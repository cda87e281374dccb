"""Declarative description of a pipeline deployment and experiment.

A scenario names every knob the simulator and the analytic models consume:
stage populations, compute-time profiles, fan-out and message-size models,
broker topology, resource capacities, and batching parameters.  Scenarios
load from YAML documents (one scenario per document, unknown keys rejected)
and three builtins ship with the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from importlib import resources

import yaml

Z99 = 2.3263478740408408  # standard normal 99th-percentile quantile

# Largest p99/mean ratio a lognormal can express (at sigma == Z99).
LOGNORMAL_MAX_P99_RATIO = math.exp(Z99 * Z99 / 2.0)

BUILTIN_NAMES = (
    "face-recognition-native",
    "face-recognition-accel",
    "object-detection-accel",
)


class ScenarioError(ValueError):
    """Malformed scenario document (parse failure or unknown key)."""


class ValidationError(ValueError):
    """One or more scenario invariants violated; message lists all of them."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass(frozen=True)
class ComputeProfile:
    """Per-stage compute time model.

    mean/p99 in seconds.  `lognormal` profiles are fitted from (mean, p99);
    the fit exists only when p99/mean <= exp(z99^2 / 2) ~ 14.96.
    """

    mean: float
    p99: float
    distribution: str = "lognormal"  # deterministic | lognormal | empirical
    per_item: bool = False
    samples: tuple[float, ...] = ()

    def lognormal_params(self) -> tuple[float, float]:
        ratio = self.p99 / self.mean
        disc = Z99 * Z99 - 2.0 * math.log(ratio)
        if disc < 0:
            raise ValidationError(
                [f"stage profile: p99/mean ratio {ratio:.2f} exceeds lognormal bound "
                 f"{LOGNORMAL_MAX_P99_RATIO:.2f}"]
            )
        sigma = Z99 - math.sqrt(disc)
        mu = math.log(self.mean) - sigma * sigma / 2.0
        return mu, sigma

    def sampler(self, rng):
        """Returns a zero-arg callable producing one duration in seconds."""
        if self.distribution == "deterministic":
            mean = self.mean
            return lambda: mean
        if self.distribution == "empirical":
            samples = self.samples
            n = len(samples)
            rnd = rng.random
            return lambda: samples[int(rnd() * n)]
        mu, sigma = self.lognormal_params()

        def draw(exp=math.exp, gauss=rng.gauss, mu=mu, sigma=sigma):
            return exp(gauss(mu, sigma))

        return draw


@dataclass(frozen=True)
class FanoutModel:
    """Items produced per frame: a constant or a categorical distribution."""

    kind: str = "constant"  # constant | categorical
    constant_value: int = 1
    categorical: tuple[tuple[int, float], ...] = ()

    def mean(self) -> float:
        if self.kind == "constant":
            return float(self.constant_value)
        return sum(k * p for k, p in self.categorical)

    def sampler(self, rng):
        if self.kind == "constant":
            k = self.constant_value
            return lambda: k
        counts = [k for k, _ in self.categorical]
        cum = []
        acc = 0.0
        for _, p in self.categorical:
            acc += p
            cum.append(acc)
        rnd = rng.random

        def draw() -> int:
            u = rnd()
            for i, c in enumerate(cum):
                if u < c:
                    return counts[i]
            return counts[-1]

        return draw


@dataclass(frozen=True)
class SizeModel:
    mean_bytes: float = 37300.0
    scale_factor: float = 1.0  # mitigation knob: 1, 1/2, 1/4, 1/8

    def message_bytes(self) -> int:
        return max(1, int(round(self.mean_bytes * self.scale_factor)))


@dataclass(frozen=True)
class BatchingParams:
    producer_linger: float = 0.010
    producer_max_batch: float = 1_000_000.0
    fetch_min_bytes: float = 64_000.0
    fetch_max_wait: float = 0.100


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    producers: int = 1
    consumers: int = 1
    brokers: int = 1
    drives_per_broker: int = 1
    replication_factor: int = 1
    partitions: int = 0  # 0 -> defaults to `consumers`
    stage_profiles: dict = field(default_factory=dict)
    fanout: FanoutModel = FanoutModel()
    message_size: SizeModel = SizeModel()
    frame_interval: float = 0.1
    pacing: str = "closed"  # closed (self-paced) | scheduled (fixed wall clock)
    network_capacity: float = 100e9  # bits/s per node
    storage_write_capacity: float = 1.1e9  # bytes/s per drive
    storage_effective_ceiling: float = 0.8
    batching: BatchingParams = BatchingParams()
    producer_send_capacity: float = 12.5e6  # bytes/s per producer
    broker_proc_capacity: float = 400_000.0  # requests/s per broker
    partition_strategy: str = "uniform"  # uniform | round-robin
    acceleration: float = 1.0

    def effective_partitions(self) -> int:
        return self.partitions if self.partitions > 0 else self.consumers


_DEFAULT_PROFILES = {
    "ingest": ComputeProfile(mean=0.0188, p99=0.027),
    "detect": ComputeProfile(mean=0.0748, p99=1.0),
    "identify": ComputeProfile(mean=0.1315, p99=0.380, per_item=True),
}


def _validate(spec: ScenarioSpec) -> ScenarioSpec:
    problems: list[str] = []
    if spec.producers < 1:
        problems.append(f"producers: must be >= 1, got {spec.producers}")
    if spec.consumers < 1:
        problems.append(f"consumers: must be >= 1, got {spec.consumers}")
    if spec.brokers < 1:
        problems.append(f"brokers: must be >= 1, got {spec.brokers}")
    if spec.drives_per_broker < 1:
        problems.append(f"drives_per_broker: must be >= 1, got {spec.drives_per_broker}")
    if spec.replication_factor < 1:
        problems.append(f"replication_factor: must be >= 1, got {spec.replication_factor}")
    if spec.replication_factor > spec.brokers:
        problems.append(
            f"replication_factor: {spec.replication_factor} exceeds brokers "
            f"{spec.brokers} (a replica set cannot exceed available brokers)"
        )
    if spec.effective_partitions() < spec.consumers:
        problems.append(
            f"partitions: {spec.effective_partitions()} < consumers {spec.consumers} "
            "(a partition feeds at most one consumer; fewer partitions would idle consumers)"
        )
    for cap_name in (
        "network_capacity",
        "storage_write_capacity",
        "producer_send_capacity",
        "broker_proc_capacity",
        "frame_interval",
    ):
        if getattr(spec, cap_name) <= 0:
            problems.append(f"{cap_name}: must be > 0")
    if not 0 < spec.storage_effective_ceiling <= 1:
        problems.append(
            f"storage_effective_ceiling: must be in (0, 1], got {spec.storage_effective_ceiling}"
        )
    if spec.acceleration < 1:
        problems.append(f"acceleration: must be >= 1, got {spec.acceleration}")
    if spec.pacing not in ("closed", "scheduled"):
        problems.append(f"pacing: must be 'closed' or 'scheduled', got {spec.pacing!r}")
    if spec.partition_strategy not in ("uniform", "round-robin"):
        problems.append(f"partition_strategy: unknown strategy {spec.partition_strategy!r}")

    for stage, prof in spec.stage_profiles.items():
        path = f"stage_profiles.{stage}"
        if prof.mean <= 0:
            problems.append(f"{path}.mean: must be > 0")
        if prof.p99 < prof.mean:
            problems.append(f"{path}.p99: must be >= mean")
        if prof.distribution not in ("deterministic", "lognormal", "empirical"):
            problems.append(f"{path}.distribution: unknown family {prof.distribution!r}")
        if prof.distribution == "lognormal" and prof.mean > 0:
            ratio = prof.p99 / prof.mean
            if ratio <= 1:
                problems.append(
                    f"{path}: lognormal requires p99/mean > 1 (got {ratio:.4f}); "
                    "use the deterministic family instead"
                )
            elif ratio > LOGNORMAL_MAX_P99_RATIO:
                problems.append(
                    f"{path}: p99/mean ratio {ratio:.2f} exceeds the lognormal bound "
                    f"{LOGNORMAL_MAX_P99_RATIO:.2f}"
                )
        if prof.distribution == "empirical" and not prof.samples:
            problems.append(f"{path}: empirical family needs a nonempty samples list")

    if spec.fanout.kind == "categorical":
        total = sum(p for _, p in spec.fanout.categorical)
        if abs(total - 1.0) > 1e-9:
            problems.append(f"fanout.categorical: probabilities sum to {total}, not 1")
        if any(k < 0 for k, _ in spec.fanout.categorical):
            problems.append("fanout.categorical: counts must be >= 0")
        if any(p < 0 for _, p in spec.fanout.categorical):
            problems.append("fanout.categorical: probabilities must be >= 0")
    elif spec.fanout.kind == "constant":
        if spec.fanout.constant_value < 0:
            problems.append("fanout.constant_value: must be >= 0")
    else:
        problems.append(f"fanout.kind: unknown kind {spec.fanout.kind!r}")

    if spec.message_size.mean_bytes <= 0:
        problems.append("message_size.mean_bytes: must be > 0")
    if not 0 < spec.message_size.scale_factor <= 1:
        problems.append("message_size.scale_factor: must be in (0, 1]")

    b = spec.batching
    for fname in ("producer_linger", "producer_max_batch", "fetch_min_bytes", "fetch_max_wait"):
        if getattr(b, fname) <= 0:
            problems.append(f"batching.{fname}: must be > 0")

    if problems:
        raise ValidationError(problems)
    return spec


# ---------------------------------------------------------------------------
# Document parsing
# ---------------------------------------------------------------------------

_PROFILE_KEYS = {"mean", "p99", "distribution", "per_item", "samples"}
_FANOUT_KEYS = {"kind", "constant_value", "categorical"}
_SIZE_KEYS = {"mean_bytes", "scale_factor"}
_BATCH_KEYS = {"producer_linger", "producer_max_batch", "fetch_min_bytes", "fetch_max_wait"}
_TOP_KEYS = {
    "name", "producers", "consumers", "brokers", "drives_per_broker",
    "replication_factor", "partitions", "stage_profiles", "fanout",
    "message_size", "frame_interval", "pacing", "network_capacity",
    "storage_write_capacity", "storage_effective_ceiling", "batching",
    "producer_send_capacity", "broker_proc_capacity", "partition_strategy",
    "acceleration",
}


def _reject_unknown(mapping: dict, allowed: set, where: str) -> None:
    unknown = [k for k in mapping if k not in allowed]
    if unknown:
        raise ScenarioError(f"{where}: unknown keys {sorted(unknown)}")


def _parse_profile(stage: str, raw: dict) -> ComputeProfile:
    _reject_unknown(raw, _PROFILE_KEYS, f"stage_profiles.{stage}")
    return ComputeProfile(
        mean=float(raw["mean"]),
        p99=float(raw.get("p99", raw["mean"])),
        distribution=raw.get("distribution", "lognormal"),
        per_item=bool(raw.get("per_item", stage == "identify")),
        samples=tuple(float(s) for s in raw.get("samples", ())),
    )


def load_scenario(document: str) -> ScenarioSpec:
    """Parse and validate one scenario document (YAML key/value tree)."""
    try:
        raw = yaml.safe_load(document)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"scenario document does not parse: {exc}") from exc
    if not isinstance(raw, dict):
        raise ScenarioError("scenario document must be a key/value mapping")
    _reject_unknown(raw, _TOP_KEYS, "scenario")
    if "name" not in raw:
        raise ScenarioError("scenario: missing required key 'name'")

    profiles = dict(_DEFAULT_PROFILES)
    if "stage_profiles" in raw:
        profiles = {}
        for stage, p in raw["stage_profiles"].items():
            profiles[stage] = _parse_profile(stage, p)

    fanout = FanoutModel()
    if "fanout" in raw:
        f = raw["fanout"]
        _reject_unknown(f, _FANOUT_KEYS, "fanout")
        fanout = FanoutModel(
            kind=f.get("kind", "constant"),
            constant_value=int(f.get("constant_value", 1)),
            categorical=tuple((int(k), float(p)) for k, p in f.get("categorical", ())),
        )

    size = SizeModel()
    if "message_size" in raw:
        s = raw["message_size"]
        _reject_unknown(s, _SIZE_KEYS, "message_size")
        size = SizeModel(
            mean_bytes=float(s.get("mean_bytes", 37300.0)),
            scale_factor=float(s.get("scale_factor", 1.0)),
        )

    batching = BatchingParams()
    if "batching" in raw:
        bt = raw["batching"]
        _reject_unknown(bt, _BATCH_KEYS, "batching")
        batching = BatchingParams(
            producer_linger=float(bt.get("producer_linger", 0.010)),
            producer_max_batch=float(bt.get("producer_max_batch", 1_000_000.0)),
            fetch_min_bytes=float(bt.get("fetch_min_bytes", 64_000.0)),
            fetch_max_wait=float(bt.get("fetch_max_wait", 0.100)),
        )

    defaults = ScenarioSpec(name="")
    spec = ScenarioSpec(
        name=str(raw["name"]),
        producers=int(raw.get("producers", defaults.producers)),
        consumers=int(raw.get("consumers", defaults.consumers)),
        brokers=int(raw.get("brokers", defaults.brokers)),
        drives_per_broker=int(raw.get("drives_per_broker", defaults.drives_per_broker)),
        replication_factor=int(raw.get("replication_factor", defaults.replication_factor)),
        partitions=int(raw.get("partitions", 0)),
        stage_profiles=profiles,
        fanout=fanout,
        message_size=size,
        frame_interval=float(raw.get("frame_interval", defaults.frame_interval)),
        pacing=raw.get("pacing", defaults.pacing),
        network_capacity=float(raw.get("network_capacity", defaults.network_capacity)),
        storage_write_capacity=float(
            raw.get("storage_write_capacity", defaults.storage_write_capacity)
        ),
        storage_effective_ceiling=float(
            raw.get("storage_effective_ceiling", defaults.storage_effective_ceiling)
        ),
        batching=batching,
        producer_send_capacity=float(
            raw.get("producer_send_capacity", defaults.producer_send_capacity)
        ),
        broker_proc_capacity=float(
            raw.get("broker_proc_capacity", defaults.broker_proc_capacity)
        ),
        partition_strategy=raw.get("partition_strategy", defaults.partition_strategy),
        acceleration=float(raw.get("acceleration", defaults.acceleration)),
    )
    return _validate(spec)


def dump_scenario(spec: ScenarioSpec) -> str:
    """Serialize a spec back to the document form accepted by load_scenario."""
    doc = {
        "name": spec.name,
        "producers": spec.producers,
        "consumers": spec.consumers,
        "brokers": spec.brokers,
        "drives_per_broker": spec.drives_per_broker,
        "replication_factor": spec.replication_factor,
        "partitions": spec.effective_partitions(),
        "frame_interval": spec.frame_interval,
        "pacing": spec.pacing,
        "network_capacity": spec.network_capacity,
        "storage_write_capacity": spec.storage_write_capacity,
        "storage_effective_ceiling": spec.storage_effective_ceiling,
        "producer_send_capacity": spec.producer_send_capacity,
        "broker_proc_capacity": spec.broker_proc_capacity,
        "partition_strategy": spec.partition_strategy,
        "acceleration": spec.acceleration,
        "stage_profiles": {
            stage: {
                "mean": p.mean,
                "p99": p.p99,
                "distribution": p.distribution,
                "per_item": p.per_item,
                **({"samples": list(p.samples)} if p.samples else {}),
            }
            for stage, p in spec.stage_profiles.items()
        },
        "fanout": {
            "kind": spec.fanout.kind,
            "constant_value": spec.fanout.constant_value,
            "categorical": [[k, p] for k, p in spec.fanout.categorical],
        },
        "message_size": {
            "mean_bytes": spec.message_size.mean_bytes,
            "scale_factor": spec.message_size.scale_factor,
        },
        "batching": {
            "producer_linger": spec.batching.producer_linger,
            "producer_max_batch": spec.batching.producer_max_batch,
            "fetch_min_bytes": spec.batching.fetch_min_bytes,
            "fetch_max_wait": spec.batching.fetch_max_wait,
        },
    }
    return yaml.safe_dump(doc, sort_keys=False)


# ---------------------------------------------------------------------------
# Builtins
# ---------------------------------------------------------------------------

# Face counts per frame for the native video: support {0..5}, mean exactly
# 0.64.  The source histogram is unpublished; only the mean is asserted.
_NATIVE_FANOUT = (
    (0, 0.595), (1, 0.265), (2, 0.08), (3, 0.035), (4, 0.015), (5, 0.01),
)

# Accelerated-FR calibration anchor: per-broker storage write demand at 1x
# equals 10% of nominal drive bandwidth (0.10 * 1.1 GB/s = 110 MB/s).  With
# 840 self-paced producers cycling every 94.6 ms (93.6 ms compute + 1.0 ms
# message serialization), that pins the emulated message size below.
_ACCEL_FRAME_INTERVAL = 0.0946
_ACCEL_MESSAGE_BYTES = 110e6 * _ACCEL_FRAME_INTERVAL / 840.0  # ~12388.1 B
_ACCEL_SEND_CAPACITY = _ACCEL_MESSAGE_BYTES * 1000.0  # 1.0 ms per message


def builtin_scenario(name: str) -> ScenarioSpec:
    """One of the three reference deployments shipped with the package."""
    if name == "face-recognition-native":
        spec = ScenarioSpec(
            name=name,
            producers=840,
            consumers=1680,
            brokers=3,
            replication_factor=3,
            partitions=1680,
            stage_profiles=dict(_DEFAULT_PROFILES),
            fanout=FanoutModel(kind="categorical", categorical=_NATIVE_FANOUT),
            message_size=SizeModel(mean_bytes=37300.0),
            frame_interval=0.1,
            pacing="closed",
            batching=BatchingParams(
                producer_linger=0.065,
                producer_max_batch=1_000_000.0,
                fetch_min_bytes=37_300.0,
                fetch_max_wait=0.100,
            ),
            producer_send_capacity=12.5e6,
        )
    elif name == "face-recognition-accel":
        spec = ScenarioSpec(
            name=name,
            producers=840,
            consumers=1680,
            brokers=3,
            replication_factor=3,
            partitions=1680,
            stage_profiles=dict(_DEFAULT_PROFILES),
            fanout=FanoutModel(kind="constant", constant_value=1),
            message_size=SizeModel(mean_bytes=_ACCEL_MESSAGE_BYTES),
            frame_interval=_ACCEL_FRAME_INTERVAL,
            pacing="closed",
            batching=BatchingParams(
                producer_linger=0.030,
                producer_max_batch=1_000_000.0,
                fetch_min_bytes=36_000.0,
                fetch_max_wait=0.800,
            ),
            producer_send_capacity=_ACCEL_SEND_CAPACITY,
        )
    elif name == "object-detection-accel":
        spec = ScenarioSpec(
            name=name,
            producers=21,
            consumers=2016,  # 36 nodes x 56 consumer processes
            brokers=3,
            replication_factor=3,
            partitions=2016,
            stage_profiles={
                "ingest": ComputeProfile(mean=0.0045, p99=0.006),
                "identify": ComputeProfile(mean=0.687, p99=0.900, per_item=True),
            },
            fanout=FanoutModel(kind="constant", constant_value=1),
            message_size=SizeModel(mean_bytes=100_000.0),
            frame_interval=1.0 / 30.0,
            pacing="scheduled",
            batching=BatchingParams(
                producer_linger=0.010,
                producer_max_batch=1_000_000.0,
                fetch_min_bytes=500_000.0,
                fetch_max_wait=0.67,
            ),
            producer_send_capacity=40e6,
        )
    else:
        raise KeyError(f"unknown builtin scenario {name!r}; choose from {BUILTIN_NAMES}")
    return _validate(spec)


def scaled(spec: ScenarioSpec, divisor: int) -> ScenarioSpec:
    """Shrink a deployment by `divisor` while preserving every utilization ratio.

    Populations and shared capacities divide together, so per-entity rates,
    per-consumer load, and per-broker utilization are unchanged; only the
    statistical sample size shrinks.  Broker count and per-producer send
    capacity are left alone (they set ratios, not scale).
    """
    if divisor < 1:
        raise ValueError("divisor must be >= 1")
    if spec.producers % divisor or spec.consumers % divisor:
        raise ValueError(
            f"populations ({spec.producers}/{spec.consumers}) not divisible by {divisor}"
        )
    out = replace(
        spec,
        name=f"{spec.name}-x{divisor}",
        producers=spec.producers // divisor,
        consumers=spec.consumers // divisor,
        partitions=spec.effective_partitions() // divisor,
        network_capacity=spec.network_capacity / divisor,
        storage_write_capacity=spec.storage_write_capacity / divisor,
        broker_proc_capacity=spec.broker_proc_capacity / divisor,
    )
    return _validate(out)


def builtin_document(name: str) -> str:
    """The shipped YAML document for a builtin (configs double as schema docs)."""
    return resources.files("brokersim.data").joinpath(f"{name}.yaml").read_text()
