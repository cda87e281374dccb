"""Closed-form counterparts to the simulator.

Fixed-workload speedup under partial acceleration, broker bandwidth-demand
estimation, queueing-stability prediction from utilizations, and the
minimal-mitigation solver.  Everything here is a pure function of the
scenario; waiting-time magnitudes come only from simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .scenario import ScenarioSpec

# AI fractions of the two accelerable pipeline stages.  The profiled values
# are 42% and 88%; the asymptotic speedups those stages actually reach
# (1.74x and 8x) imply the slightly different fitted fractions below, which
# are the ones the speedup table reproduces.
DETECT_AI_FRACTION = 0.425
IDENTIFY_AI_FRACTION = 0.875
DETECT_AI_FRACTION_PROFILED = 0.42
IDENTIFY_AI_FRACTION_PROFILED = 0.88

# Utilization at or above this is treated as saturated: a queue offered
# exactly its capacity still diverges.
_RHO_STABLE_BOUND = 1.0 - 1e-9

STORAGE = "broker-storage"
NETWORK = "broker-network"
SEND = "producer-send"

MITIGATION_SCALE_STEPS = (1.0, 0.5, 0.25, 0.125)


def amdahl_speedup(f: float, a: float) -> float:
    """Overall speedup when a fraction `f` of the work is accelerated by `a`.

    `a` may be math.inf to query the asymptote 1 / (1 - f).
    """
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"accelerated fraction must be in [0, 1], got {f}")
    if a < 1.0:
        raise ValueError(f"acceleration factor must be >= 1, got {a}")
    if math.isinf(a):
        if f == 1.0:
            return math.inf
        return 1.0 / (1.0 - f)
    return 1.0 / ((1.0 - f) + f / a)


@dataclass(frozen=True)
class DemandEstimate:
    """Offered load under acceleration `a`, before any queueing effects."""

    per_broker_write: float  # bytes/s, replication included
    aggregate_write: float  # bytes/s, cluster-wide
    per_broker_network_in: float  # bits/s
    per_broker_network_out: float  # bits/s
    per_producer_send: float  # bytes/s


def estimate_demand(spec: ScenarioSpec, a: float) -> DemandEstimate:
    """Linear flow model: every stage keeps up, so demand scales with `a`."""
    if a < 1.0:
        raise ValueError(f"acceleration factor must be >= 1, got {a}")
    rate = 1.0 / spec.frame_interval
    per_producer_bytes = (
        rate * spec.fanout.mean() * spec.message_size.mean_bytes
        * spec.message_size.scale_factor * a
    ) if spec.producers else 0.0
    produced = spec.producers * per_producer_bytes  # bytes/s, pre-replication
    per_broker_write = produced * spec.replication_factor / spec.brokers
    # producer ingress has no replication multiplier; replica copies move
    # broker-to-broker and appear on both in and out sides
    replica = produced * (spec.replication_factor - 1) / spec.brokers
    ingress = produced / spec.brokers
    egress = produced / spec.brokers  # consumers fetch everything once
    return DemandEstimate(
        per_broker_write=per_broker_write,
        aggregate_write=per_broker_write * spec.brokers,
        per_broker_network_in=(ingress + replica) * 8.0,
        per_broker_network_out=(egress + replica) * 8.0,
        per_producer_send=per_producer_bytes,
    )


@dataclass(frozen=True)
class StabilityVerdict:
    utilizations: dict
    stable: bool
    binding_resource: str | None

    def rho(self, name: str) -> float:
        return self.utilizations[name]


def predict_stability(spec: ScenarioSpec, a: float) -> StabilityVerdict:
    """Stable iff every resource utilization is strictly below 1."""
    demand = estimate_demand(spec, a)
    storage_capacity = (
        spec.drives_per_broker * spec.storage_write_capacity
        * spec.storage_effective_ceiling
    )
    rho = {
        STORAGE: demand.per_broker_write / storage_capacity,
        NETWORK: max(demand.per_broker_network_in, demand.per_broker_network_out)
        / spec.network_capacity,
        SEND: demand.per_producer_send / spec.producer_send_capacity,
    }
    worst = max(rho, key=rho.get)
    stable = rho[worst] < _RHO_STABLE_BOUND
    return StabilityVerdict(
        utilizations=rho,
        stable=stable,
        binding_resource=None if stable else worst,
    )


@dataclass(frozen=True)
class AxisOption:
    """One mitigation axis: the smallest (or largest, for size) setting that
    restores stability at the target acceleration."""

    axis: str
    analytic: float | None  # None when infeasible on this axis
    simulated: float | None = None  # filled in when a sim verdict is supplied
    binding_when_infeasible: str | None = None


@dataclass(frozen=True)
class MitigationPlan:
    target_acceleration: float
    drives: AxisOption
    brokers: AxisOption
    scale_factor: AxisOption


_MAX_UNITS = 4096


def _with_drives(spec: ScenarioSpec, d: int) -> ScenarioSpec:
    return replace(spec, drives_per_broker=d)


def _with_brokers(spec: ScenarioSpec, b: int) -> ScenarioSpec:
    return replace(spec, brokers=b)


def _with_scale(spec: ScenarioSpec, s: float) -> ScenarioSpec:
    return replace(spec, message_size=replace(spec.message_size, scale_factor=s))


def min_mitigation(
    spec: ScenarioSpec,
    target_a: float,
    sim_verdict=None,
) -> MitigationPlan:
    """Smallest drives / brokers and largest message scale restoring stability.

    Each axis is searched independently with the closed-form utilizations
    (monotone in the knob).  When `sim_verdict` is given (a callable
    ``spec -> bool``, True meaning the simulator finds the modified spec
    stable at target_a), each feasible axis also reports the simulator-backed
    minimum, found by bisecting below the analytic answer; the simulator can
    be more permissive than the pure-storage model near saturation.
    """
    if target_a < 1.0:
        raise ValueError(f"target acceleration must be >= 1, got {target_a}")

    def axis_search(make, lo: int) -> tuple[int | None, str | None]:
        for v in range(lo, _MAX_UNITS + 1):
            verdict = predict_stability(make(spec, v), target_a)
            if verdict.stable:
                return v, None
            if verdict.binding_resource not in (STORAGE, NETWORK):
                # the knob cannot relieve this resource; report and stop
                return None, verdict.binding_resource
        return None, predict_stability(make(spec, _MAX_UNITS), target_a).binding_resource

    def sim_min(make, analytic_v: int, lo: int) -> int:
        # monotone bisection: smallest v in [lo, analytic_v] the sim accepts
        hi = analytic_v
        best = analytic_v
        lo_search = lo
        while lo_search <= hi:
            mid = (lo_search + hi) // 2
            if sim_verdict(make(spec, mid)):
                best = mid
                hi = mid - 1
            else:
                lo_search = mid + 1
        return best

    drives_v, drives_bind = axis_search(_with_drives, 1)
    brokers_lo = max(spec.replication_factor, 1)
    brokers_v, brokers_bind = axis_search(_with_brokers, brokers_lo)

    scale_v = None
    scale_bind = None
    for s in MITIGATION_SCALE_STEPS:
        verdict = predict_stability(_with_scale(spec, s), target_a)
        if verdict.stable:
            scale_v = s
            break
        scale_bind = verdict.binding_resource

    drives_sim = brokers_sim = scale_sim = None
    if sim_verdict is not None:
        if drives_v is not None:
            drives_sim = sim_min(_with_drives, drives_v, 1)
        if brokers_v is not None:
            brokers_sim = sim_min(_with_brokers, brokers_v, brokers_lo)
        if scale_v is not None:
            # try larger (less aggressive) scales than the analytic answer
            scale_sim = scale_v
            for s in MITIGATION_SCALE_STEPS:
                if s <= scale_v:
                    break
                if sim_verdict(_with_scale(spec, s)):
                    scale_sim = s
                    break

    return MitigationPlan(
        target_acceleration=target_a,
        drives=AxisOption(
            "drives_per_broker",
            float(drives_v) if drives_v is not None else None,
            float(drives_sim) if drives_sim is not None else None,
            drives_bind,
        ),
        brokers=AxisOption(
            "brokers",
            float(brokers_v) if brokers_v is not None else None,
            float(brokers_sim) if brokers_sim is not None else None,
            brokers_bind,
        ),
        scale_factor=AxisOption("scale_factor", scale_v, scale_sim, scale_bind),
    )
