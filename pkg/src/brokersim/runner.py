"""One simulation run, end to end: build, execute, verdict."""

from __future__ import annotations

from dataclasses import dataclass, replace

from . import analytic, telemetry
from .broker import Cluster
from .kernel import NS_PER_S, Simulator, ns
from .scenario import ScenarioSpec
from .stages import build_pipeline

DEFAULT_SIM_TIME = 600.0
DEFAULT_WARMUP = 60.0
UTIL_WINDOW_NS = 10 * NS_PER_S


@dataclass
class RunResult:
    spec: ScenarioSpec
    accel: float
    seed: int
    horizon_ns: int
    warmup_ns: int
    collector: telemetry.Collector
    cluster: Cluster
    verdict: telemetry.InstabilityVerdict
    report: telemetry.BreakdownReport | None
    analytic_verdict: analytic.StabilityVerdict
    producers: list
    consumers: list

    def storage_busy_fraction(self) -> float:
        """Mean broker storage busy fraction over the measurement window."""
        fr = [b.storage.busy_fraction(self.warmup_ns, self.horizon_ns)
              for b in self.cluster.brokers]
        return sum(fr) / len(fr)

    def network_busy_fraction(self) -> float:
        fr = []
        for b in self.cluster.brokers:
            fr.append(max(b.net_in.busy_fraction(self.warmup_ns, self.horizon_ns),
                          b.net_out.busy_fraction(self.warmup_ns, self.horizon_ns)))
        return max(fr)

    def frameset_delays(self) -> list[float]:
        """Per-set start delays; only meaningful under scheduled pacing."""
        from .stages import frameset_delays as _delays

        if self.spec.pacing != "scheduled":
            raise ValueError(
                f"{self.spec.name} is self-paced; set delays need scheduled pacing"
            )
        if self.collector.rows is None:
            raise ValueError("set delays need a full-log run")
        return _delays(self.collector.rows, self.spec.frame_interval)

    def conservation(self) -> dict:
        """Frame and message accounting at end of run."""
        c = self.cluster
        col = self.collector
        frames_in_flight = col.emitted - col.completed - col.zero_fanout
        identified = c.messages_fetched  # every fetched message is identified
        return {
            "frames_emitted": col.emitted,
            "frames_completed": col.completed,
            "frames_fanout_zero": col.zero_fanout,
            "frames_in_flight": frames_in_flight,
            "messages_enqueued": c.messages_enqueued,
            "messages_fetched": identified,
            "messages_resident": c.resident_messages(),
            "bytes_produced": c.bytes_produced,
            "bytes_written_cluster": c.bytes_written_cluster,
            "storage_read_bytes": c.storage_read_bytes,
        }


def run_scenario(spec: ScenarioSpec, accel: float | None = None, seed: int = 0,
                 sim_time: float = DEFAULT_SIM_TIME, warmup: float = DEFAULT_WARMUP,
                 full_log: bool = False) -> RunResult:
    """Simulate `spec` for `sim_time` virtual seconds and report.

    `accel` overrides the scenario's acceleration field.  Runs with equal
    (spec, accel, seed) are bit-identical.
    """
    a = spec.acceleration if accel is None else float(accel)
    if a < 1.0:
        raise ValueError(f"acceleration must be >= 1, got {a}")
    run_spec = replace(spec, acceleration=a)
    horizon_ns = ns(sim_time)
    warmup_ns = ns(warmup)
    consumer_label = "identify" if run_spec.pacing == "closed" else "detect"

    sim = Simulator()
    collector = telemetry.Collector(horizon_ns, warmup_ns, full_log=full_log,
                                    consumer_stage_label=consumer_label)
    cluster = Cluster(sim, run_spec, UTIL_WINDOW_NS)
    producers, consumers = build_pipeline(
        sim, cluster, run_spec, a, seed, collector, UTIL_WINDOW_NS
    )
    sampled = cluster.all_resources() + [p.pipe for p in producers]
    collector.sample_queues(sim, sampled)
    sim.run_until(horizon_ns)

    verdict = telemetry.detect_instability(collector.epoch_means(),
                                           collector.queue_samples)
    try:
        report = telemetry.breakdown(collector)
    except telemetry.TelemetryError:
        report = None  # nothing traversed the broker (e.g. all-zero fanout)
    return RunResult(
        spec=run_spec,
        accel=a,
        seed=seed,
        horizon_ns=horizon_ns,
        warmup_ns=warmup_ns,
        collector=collector,
        cluster=cluster,
        verdict=verdict,
        report=report,
        analytic_verdict=analytic.predict_stability(run_spec, a),
        producers=producers,
        consumers=consumers,
    )
