"""Producer and consumer process models.

Producers run the ingest/detect loop and publish one message per detected
item; consumers run the fetch/identify loop.  Acceleration divides every
sampled compute time by the factor `a` while leaving batching timers,
resource capacities, and transfer sizes untouched.

Closed pacing (the recognition pipeline) is self-paced: a producer starts
its next frame the moment the previous one fully hands off.  Scheduled
pacing (the detection pipeline) fires frame sets on a fixed wall-clock
period; when a set's work overruns the period, the next set starts late and
that gap is the per-set delay.
"""

from __future__ import annotations

from .broker import Cluster
from .kernel import RateResource, Simulator, derive_stream, ns
from .scenario import ScenarioSpec

# frame record slots
SCHED, ING_START, ING_END, DET_END, ENQ, DELIVER, ID_START, ID_END = range(8)
FANOUT, BYTES, REMAINING, PRODUCER, SEQ = 8, 9, 10, 11, 12


class Producer:
    """Self-paced or wall-scheduled frame source feeding the broker."""

    __slots__ = (
        "idx", "sim", "cluster", "collector", "pipe", "ingest", "detect",
        "fanout_draw", "part_draw", "msg_bytes", "scale_ns", "set_size",
        "interval_ns", "offset_ns", "tick", "nparts", "frames",
    )

    def __init__(self, idx: int, sim: Simulator, cluster: Cluster,
                 spec: ScenarioSpec, accel: float, seed: int, collector,
                 window_ns: int):
        self.idx = idx
        self.sim = sim
        self.cluster = cluster
        self.collector = collector
        self.pipe = RateResource(
            f"producer-{idx}-send", spec.producer_send_capacity, window_ns,
            track_windows=False,
        )
        stage_rng = derive_stream(seed, f"producer.{idx}.stages")
        self.ingest = spec.stage_profiles["ingest"].sampler(stage_rng)
        detect_profile = spec.stage_profiles.get("detect")
        self.detect = detect_profile.sampler(stage_rng) if detect_profile else None
        self.fanout_draw = spec.fanout.sampler(derive_stream(seed, f"producer.{idx}.fanout"))
        part_rng = derive_stream(seed, f"producer.{idx}.partition")
        nparts = spec.effective_partitions()
        self.nparts = nparts
        if spec.partition_strategy == "round-robin":
            state = [idx % nparts]

            def draw() -> int:
                p = state[0]
                state[0] = (p + 1) % nparts
                return p

            self.part_draw = draw
        else:
            rnd = part_rng.random
            self.part_draw = lambda: int(rnd() * nparts)
        self.msg_bytes = spec.message_size.message_bytes()
        self.scale_ns = 1e9 / accel
        self.set_size = int(round(accel)) if spec.pacing == "scheduled" else 1
        self.interval_ns = ns(spec.frame_interval)
        self.offset_ns = (idx * self.interval_ns) // spec.producers
        self.tick = 0
        self.frames = 0

    # -- closed (self-paced) ------------------------------------------------

    def run_closed_frame(self) -> None:
        sim = self.sim
        t = sim.now
        ing = int(self.ingest() * self.scale_ns)
        t_ie = t + ing
        det = int(self.detect() * self.scale_ns) if self.detect else 0
        t_de = t_ie + det
        k = self.fanout_draw()
        self.frames += 1
        if k == 0:
            self.collector.frame_zero(self.idx, self.frames, t, t_ie, t_de)
            sim.schedule(t_de, self.run_closed_frame)
            return
        nbytes = self.msg_bytes
        frame = [t, t, t_ie, t_de, 0, 0, 0, 0, k, k * nbytes, k, self.idx, self.frames]
        pipe = self.pipe
        schedule = sim.schedule
        publish = self._publish
        cursor = t_de
        for i in range(k):
            cursor = pipe.acquire_at(cursor, nbytes)
            if i == 0:
                frame[ENQ] = cursor
            # hand-off to the broker happens when serialization finishes
            schedule(cursor, publish, (self.part_draw(), nbytes, frame))
        self.collector.frame_emitted(frame)
        sim.schedule(cursor, self.run_closed_frame)

    def _publish(self, msg) -> None:
        pidx, nbytes, frame = msg
        self.cluster.enqueue(self.idx, pidx, nbytes, self.sim.now, frame)

    # -- scheduled (fixed wall clock) ----------------------------------------

    def run_scheduled_set(self) -> None:
        sim = self.sim
        t = sim.now
        sched = self.offset_ns + self.tick * self.interval_ns
        pipe = self.pipe
        nbytes = self.msg_bytes
        schedule = sim.schedule
        publish = self._publish
        cursor = t
        for _ in range(self.set_size):
            ing = int(self.ingest() * self.scale_ns)
            i_start = cursor
            i_end = cursor + ing
            self.frames += 1
            frame = [sched, i_start, i_end, i_end, 0, 0, 0, 0, 1, nbytes, 1,
                     self.idx, self.frames]
            cursor = pipe.acquire_at(i_end, nbytes)
            frame[ENQ] = cursor
            schedule(cursor, publish, (self.part_draw(), nbytes, frame))
            self.collector.frame_emitted(frame)
        self.tick += 1
        next_sched = self.offset_ns + self.tick * self.interval_ns
        sim.schedule(next_sched if next_sched > cursor else cursor,
                     self.run_scheduled_set)


class Consumer:
    """Fetch/identify loop over the consumer's assigned partitions."""

    __slots__ = (
        "idx", "sim", "cluster", "collector", "net_in", "sampler", "per_item",
        "scale_ns", "parts", "rr", "fetch_min", "max_wait_ns", "fetch_seq",
        "waiting_on", "stage_key",
    )

    def __init__(self, idx: int, sim: Simulator, cluster: Cluster,
                 spec: ScenarioSpec, accel: float, seed: int, collector,
                 assigned: list[int], window_ns: int):
        if not assigned:
            raise ValueError(f"consumer {idx} has no assigned partition")
        self.idx = idx
        self.sim = sim
        self.cluster = cluster
        self.collector = collector
        self.net_in = RateResource(
            f"consumer-{idx}-net-in", spec.network_capacity / 8.0, window_ns,
            track_windows=False,
        )
        self.stage_key = "identify" if "identify" in spec.stage_profiles else "detect"
        profile = spec.stage_profiles[self.stage_key]
        self.sampler = profile.sampler(derive_stream(seed, f"consumer.{idx}.compute"))
        self.per_item = profile.per_item
        self.scale_ns = 1e9 / accel
        self.parts = [cluster.partitions[p] for p in assigned]
        for p in self.parts:
            if p.consumer is not None:
                raise ValueError(f"partition {p.pid} already has a consumer")
            p.consumer = self
        self.rr = 0
        self.fetch_min = spec.batching.fetch_min_bytes
        self.max_wait_ns = ns(spec.batching.fetch_max_wait)
        self.fetch_seq = 0
        self.waiting_on = None

    def start(self) -> None:
        self.sim.schedule(0, self.start_fetch)

    def start_fetch(self) -> None:
        t = self.sim.now
        part = self.parts[self.rr % len(self.parts)]
        self.rr += 1
        avail = self.cluster.available_bytes(part, t)
        if avail >= self.fetch_min:
            self._deliver(part, t)
            return
        self.waiting_on = part
        part.notify_deficit = self.fetch_min - avail
        self.sim.schedule(t + self.max_wait_ns, self._on_timeout,
                          (self.fetch_seq, part))

    def _on_timeout(self, token) -> None:
        seq, part = token
        if self.fetch_seq == seq:
            self._deliver(part, self.sim.now)

    def notify_data_at(self, t_ns: int) -> None:
        now = self.sim.now
        self.sim.schedule(t_ns if t_ns > now else now, self._on_data,
                          (self.fetch_seq, self.waiting_on))

    def _on_data(self, token) -> None:
        seq, part = token
        if self.fetch_seq != seq or self.waiting_on is not part:
            return
        avail = self.cluster.available_bytes(part, self.sim.now)
        if avail >= self.fetch_min:
            self._deliver(part, self.sim.now)
        else:
            # fetchable prefix still short (entries land in timestamp
            # order); re-arm the deficit and keep waiting
            part.notify_deficit = self.fetch_min - avail

    def _deliver(self, part, t: int) -> None:
        self.fetch_seq += 1
        self.waiting_on = None
        part.notify_deficit = float("inf")
        batch, nbytes = self.cluster.take_available(part, t)
        if not batch:
            self.sim.schedule(t, self.start_fetch)
            return
        leader = self.cluster.brokers[part.leader]
        d1 = leader.net_out.acquire_at(t, nbytes)
        d2 = self.net_in.acquire_at(d1, nbytes)
        cursor = d2
        sampler = self.sampler
        scale = self.scale_ns
        per_item = self.per_item
        done_cb = self.collector.frame_done
        for _, _, _, frame in batch:
            dur = sampler() * scale
            if not per_item:
                dur /= frame[FANOUT] or 1
            start = cursor
            cursor += int(dur)
            if frame[DELIVER] == 0:
                # the frame's breakdown tracks its first item: wait ends at
                # that item's delivery and the identify interval is that
                # item's service (remaining items only gate completion)
                frame[DELIVER] = d2
                frame[ID_START] = start
                frame[ID_END] = cursor
            frame[REMAINING] -= 1
            if frame[REMAINING] == 0:
                done_cb(frame)
        self.sim.schedule(cursor, self.start_fetch)


def frameset_delays(rows, frame_interval: float) -> list[float]:
    """Per-set start delay for a scheduled run: actual start minus schedule.

    `rows` are frame records (lists using this module's slot layout); frames
    sharing a scheduled timestamp form one set, whose delay is the gap from
    the schedule to the first actual ingest start.
    """
    starts: dict[tuple[int, int], int] = {}
    for f in rows:
        key = (f[PRODUCER], f[SCHED])
        cur = starts.get(key)
        if cur is None or f[ING_START] < cur:
            starts[key] = f[ING_START]
    return [max(0, actual - sched) / 1e9 for (_, sched), actual in sorted(starts.items())]


def build_pipeline(sim: Simulator, cluster: Cluster, spec: ScenarioSpec,
                   accel: float, seed: int, collector, window_ns: int
                   ) -> tuple[list[Producer], list[Consumer]]:
    """Instantiate and start every producer and consumer for one run."""
    if spec.pacing == "scheduled" and abs(accel - round(accel)) > 1e-9:
        raise ValueError(
            f"scheduled pacing needs an integer acceleration factor, got {accel}"
        )
    producers = [
        Producer(i, sim, cluster, spec, accel, seed, collector, window_ns)
        for i in range(spec.producers)
    ]
    assignment = cluster.assign_partitions(spec.consumers)
    consumers = [
        Consumer(i, sim, cluster, spec, accel, seed, collector, assignment[i], window_ns)
        for i in range(spec.consumers)
    ]
    for p in producers:
        handler = p.run_scheduled_set if spec.pacing == "scheduled" else p.run_closed_frame
        sim.schedule(p.offset_ns, handler)
    for c in consumers:
        c.start()
    return producers, consumers
