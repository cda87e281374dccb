"""Frame-lifecycle collection and the derived reports.

The collector receives completed frame records from the stage actors and
maintains streaming accumulators (component sums, per-epoch latency means,
end-to-end latency samples).  In full-log mode it additionally keeps every
timestamp column, which is what frames.csv and the stage percentiles are
built from.  Sweeps run in aggregate mode to stay lean.

Stage decomposition per frame (telescoping, so components sum to the
end-to-end latency exactly):

    delay   = ingest_start - scheduled        (scheduled pacing only)
    ingest  = ingest_end - ingest_start
    detect  = detect_end - ingest_end         (producer-side AI, if any)
    wait    = identify_start - detect_end     (broker residence, first item)
    consume = identify_end - identify_start   (labelled identify or detect)

Frames with fanout 0 never traverse the broker; they count toward ingest
and detect statistics and throughput but not toward wait or the consumer
stage.
"""

from __future__ import annotations

from array import array
from dataclasses import dataclass

from .kernel import NS_PER_S, RateResource, Simulator
from .stages import (
    BYTES, DELIVER, DET_END, ENQ, FANOUT, ID_END, ID_START, ING_END,
    ING_START, PRODUCER, SCHED, SEQ,
)

EPOCHS = 10
MIN_EPOCH_NS = NS_PER_S  # horizon must leave >= 1 s per epoch after warmup
# A diverging queue accumulates whole seconds of backlog over the run;
# hot-but-stable queues excurse by tens of milliseconds at most.
QUEUE_GROWTH_FLOOR_NS = 500_000_000

CSV_COLUMNS = (
    "producer", "frame", "scheduled_ns", "ingest_start_ns", "ingest_end_ns",
    "detect_end_ns", "enqueue_ns", "deliver_ns", "identify_start_ns",
    "identify_end_ns", "fanout", "bytes",
)


class TelemetryError(ValueError):
    pass


class Collector:
    """Accumulates frame records and resource samples for one run."""

    def __init__(self, horizon_ns: int, warmup_ns: int, full_log: bool = False,
                 consumer_stage_label: str = "identify"):
        if horizon_ns - warmup_ns < EPOCHS * MIN_EPOCH_NS:
            raise TelemetryError(
                f"horizon {horizon_ns / 1e9:.0f}s leaves less than "
                f"{EPOCHS} x {MIN_EPOCH_NS / 1e9:.0f}s epochs after "
                f"{warmup_ns / 1e9:.0f}s warmup"
            )
        self.horizon_ns = horizon_ns
        self.warmup_ns = warmup_ns
        self.full_log = full_log
        self.consumer_stage_label = consumer_stage_label
        self.epoch_ns = (horizon_ns - warmup_ns) // EPOCHS
        self.emitted = 0
        self.completed = 0
        self.zero_fanout = 0
        self.in_window = 0
        self.zero_in_window = 0
        # component sums (ns) over frames completing inside the window
        self.sum_delay = 0
        self.sum_ingest = 0
        self.sum_detect = 0
        self.sum_wait = 0
        self.sum_consume = 0
        self.sum_e2e = 0
        self.zero_sum_ingest = 0
        self.zero_sum_detect = 0
        self.latencies = array("q")
        self.waits = array("q")
        self.epoch_lat_sum = [0] * EPOCHS
        self.epoch_lat_n = [0] * EPOCHS
        self.rows: list = [] if full_log else None
        self.queue_samples: dict[str, list[int]] = {}
        self._sampled_resources: list[RateResource] = []

    # ------------------------------------------------------------- frames

    def frame_emitted(self, frame) -> None:
        self.emitted += 1

    def frame_zero(self, producer: int, seq: int, t_start: int,
                   t_ing_end: int, t_det_end: int) -> None:
        self.emitted += 1
        if t_det_end > self.horizon_ns:
            return
        self.zero_fanout += 1
        if t_det_end >= self.warmup_ns:
            self.zero_in_window += 1
            self.zero_sum_ingest += t_ing_end - t_start
            self.zero_sum_detect += t_det_end - t_ing_end
        if self.rows is not None:
            self.rows.append([t_start, t_start, t_ing_end, t_det_end,
                              -1, -1, -1, -1, 0, 0, 0, producer, seq])

    def frame_done(self, frame) -> None:
        end = frame[ID_END]
        if end > self.horizon_ns:
            return
        self.completed += 1
        if self.rows is not None:
            self.rows.append(frame)
        if end < self.warmup_ns:
            return
        self.in_window += 1
        e2e = end - frame[SCHED]
        self.sum_delay += frame[ING_START] - frame[SCHED]
        self.sum_ingest += frame[ING_END] - frame[ING_START]
        self.sum_detect += frame[DET_END] - frame[ING_END]
        wait = frame[ID_START] - frame[DET_END]
        self.sum_wait += wait
        self.sum_consume += end - frame[ID_START]
        self.sum_e2e += e2e
        self.latencies.append(e2e)
        self.waits.append(wait)
        epoch = (end - self.warmup_ns) // self.epoch_ns
        if epoch >= EPOCHS:
            epoch = EPOCHS - 1
        self.epoch_lat_sum[epoch] += e2e
        self.epoch_lat_n[epoch] += 1

    # ---------------------------------------------------------- resources

    def sample_queues(self, sim: Simulator, resources: list[RateResource]) -> None:
        """Schedule backlog sampling of `resources` at every epoch boundary."""
        self._sampled_resources = resources
        for r in resources:
            self.queue_samples[r.name] = []

        def take_sample():
            now = sim.now
            for r in self._sampled_resources:
                self.queue_samples[r.name].append(r.backlog_ns(now))

        for k in range(EPOCHS + 1):
            sim.schedule(self.warmup_ns + k * self.epoch_ns, take_sample)

    # ------------------------------------------------------------- reports

    def epoch_means(self) -> list[float]:
        out = []
        for s, n in zip(self.epoch_lat_sum, self.epoch_lat_n):
            out.append((s / n / NS_PER_S) if n else float("inf"))
        return out

    def throughput(self) -> float:
        window_s = (self.horizon_ns - self.warmup_ns) / NS_PER_S
        return (self.in_window + self.zero_in_window) / window_s

    def wait_fraction(self) -> float:
        return self.sum_wait / self.sum_e2e if self.sum_e2e else 0.0


@dataclass(frozen=True)
class StageStat:
    mean: float  # seconds
    p99: float | None  # seconds; None when under the nearest-rank floor


@dataclass(frozen=True)
class BreakdownReport:
    stages: dict  # label -> StageStat, insertion order = pipeline order
    end_to_end: StageStat
    wait_fraction: float
    throughput: float
    samples: int
    zero_fanout_frames: int

    def stage_mean(self, label: str) -> float:
        return self.stages[label].mean


def nearest_rank_p99(values) -> float | None:
    """Nearest-rank 99th percentile; None below 100 samples."""
    n = len(values)
    if n < 100:
        return None
    ordered = sorted(values)
    rank = -(-99 * n // 100)  # ceil(0.99 n)
    return ordered[rank - 1]


def breakdown_from_rows(rows, consumer_stage_label: str = "identify",
                        throughput: float | None = None) -> BreakdownReport:
    """Latency breakdown over explicit frame records (fanout-0 rows allowed)."""
    live = [f for f in rows if f[FANOUT] > 0]
    zero = len(rows) - len(live)
    if not live:
        raise TelemetryError("no broker-traversing frames in log")
    comp = {"delay": [], "ingest": [], "detect": [], "wait": [],
            consumer_stage_label: []}
    e2e = []
    for f in live:
        ts = (f[SCHED], f[ING_START], f[ING_END], f[DET_END], f[ID_START], f[ID_END])
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise TelemetryError(f"unordered timestamps in frame record {f}")
        comp["delay"].append(f[ING_START] - f[SCHED])
        comp["ingest"].append(f[ING_END] - f[ING_START])
        comp["detect"].append(f[DET_END] - f[ING_END])
        comp["wait"].append(f[ID_START] - f[DET_END])
        comp[consumer_stage_label].append(f[ID_END] - f[ID_START])
        e2e.append(f[ID_END] - f[SCHED])
    n = len(live)
    stages = {}
    for label, vals in comp.items():
        p99 = nearest_rank_p99(vals)
        stages[label] = StageStat(sum(vals) / n / NS_PER_S,
                                  p99 / NS_PER_S if p99 is not None else None)
    e2e_mean = sum(e2e) / n / NS_PER_S
    e2e_p99 = nearest_rank_p99(e2e)
    return BreakdownReport(
        stages=stages,
        end_to_end=StageStat(e2e_mean,
                             e2e_p99 / NS_PER_S if e2e_p99 is not None else None),
        wait_fraction=(sum(comp["wait"]) / sum(e2e)) if sum(e2e) else 0.0,
        throughput=throughput if throughput is not None else 0.0,
        samples=n,
        zero_fanout_frames=zero,
    )


def breakdown(collector: Collector) -> BreakdownReport:
    """Latency breakdown from a run's streaming accumulators."""
    n = collector.in_window
    if n == 0:
        raise TelemetryError("no broker-traversing frames completed in the window")
    label = collector.consumer_stage_label
    means = {
        "delay": collector.sum_delay,
        "ingest": collector.sum_ingest,
        "detect": collector.sum_detect,
        "wait": collector.sum_wait,
        label: collector.sum_consume,
    }
    if collector.rows is not None:
        full = breakdown_from_rows(
            [f for f in collector.rows
             if f[FANOUT] > 0 and collector.warmup_ns <= f[ID_END] <= collector.horizon_ns],
            consumer_stage_label=label,
            throughput=collector.throughput(),
        )
        return full
    p99 = nearest_rank_p99(collector.latencies)
    stages = {k: StageStat(v / n / NS_PER_S, None) for k, v in means.items()}
    stages["wait"] = StageStat(means["wait"] / n / NS_PER_S,
                               (lambda p: p / NS_PER_S if p is not None else None)(
                                   nearest_rank_p99(collector.waits)))
    return BreakdownReport(
        stages=stages,
        end_to_end=StageStat(collector.sum_e2e / n / NS_PER_S,
                             p99 / NS_PER_S if p99 is not None else None),
        wait_fraction=collector.wait_fraction(),
        throughput=collector.throughput(),
        samples=n,
        zero_fanout_frames=collector.zero_in_window,
    )


@dataclass(frozen=True)
class InstabilityVerdict:
    stable: bool
    epoch_means: list
    growth_ratio: float
    queue_grew: bool
    binding_resource: str | None


def detect_instability(epoch_means: list[float],
                       queue_samples: dict[str, list[int]]) -> InstabilityVerdict:
    """Unstable when epoch latencies keep climbing or some queue only grows.

    Rule: epoch means strictly increase across >= 8 of the 9 steps AND the
    last/first ratio exceeds 1.5; or any sampled resource backlog grows
    monotonically across the epoch samples (one sampling wobble allowed)
    by more than the noise floor.
    """
    if len(epoch_means) != EPOCHS:
        raise TelemetryError(f"expected {EPOCHS} epoch means, got {len(epoch_means)}")
    rising = sum(1 for a, b in zip(epoch_means, epoch_means[1:]) if b > a)
    first, last = epoch_means[0], epoch_means[-1]
    if first <= 0 or first == float("inf"):
        ratio = float("inf") if last > first or last == float("inf") else 1.0
    else:
        ratio = last / first
    latency_unstable = rising >= 8 and ratio > 1.5

    grew = None
    grew_amount = 0
    for name, samples in queue_samples.items():
        if len(samples) < 2:
            continue
        increments = [b - a for a, b in zip(samples, samples[1:])]
        positive = sum(1 for d in increments if d > 0)
        monotone = positive >= len(increments) - 1
        growth = samples[-1] - samples[0]
        if monotone and growth > QUEUE_GROWTH_FLOOR_NS and growth > grew_amount:
            grew = name
            grew_amount = growth
    unstable = latency_unstable or grew is not None
    binding = grew
    if unstable and binding is None:
        # latency diverged without a single monotone queue: blame the
        # largest end-of-run backlog
        backlogs = {n: (s[-1] if s else 0) for n, s in queue_samples.items()}
        if backlogs:
            binding = max(backlogs, key=backlogs.get)
    return InstabilityVerdict(
        stable=not unstable,
        epoch_means=epoch_means,
        growth_ratio=ratio,
        queue_grew=grew is not None,
        binding_resource=binding if unstable else None,
    )


def waiting_fraction_series(results) -> list[float]:
    """Wait fractions from a list of stable runs (RunResult-like objects)."""
    for r in results:
        if not r.verdict.stable:
            raise TelemetryError(
                f"waiting-fraction series needs stable runs; acceleration "
                f"{r.accel} was unstable ({r.verdict.binding_resource})"
            )
    return [r.collector.wait_fraction() for r in results]


def utilization_rows(resources: list[RateResource], horizon_ns: int) -> list[tuple]:
    """(window_start_s, resource, busy_fraction, units_served) per window."""
    rows = []
    for r in resources:
        w = r.window_ns
        for wi in range(0, horizon_ns // w):
            rows.append((
                wi * w / NS_PER_S,
                r.name,
                min(1.0, r.busy_by_window.get(wi, 0) / w),
                r.units_by_window.get(wi, 0.0),
            ))
    return rows


def write_frames_csv(path: str, rows) -> None:
    """One line per frame, integer nanoseconds, empty cells for fanout-0."""
    ordered = sorted(rows, key=lambda f: (f[SCHED], f[PRODUCER], f[SEQ]))
    with open(path, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for f in ordered:
            if f[FANOUT] == 0:
                fh.write(f"{f[PRODUCER]},{f[SEQ]},{f[SCHED]},{f[ING_START]},"
                         f"{f[ING_END]},{f[DET_END]},,,,,0,0\n")
            else:
                fh.write(f"{f[PRODUCER]},{f[SEQ]},{f[SCHED]},{f[ING_START]},"
                         f"{f[ING_END]},{f[DET_END]},{f[ENQ]},{f[DELIVER]},"
                         f"{f[ID_START]},{f[ID_END]},{f[FANOUT]},{f[BYTES]}\n")
