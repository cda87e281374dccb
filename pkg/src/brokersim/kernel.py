"""Deterministic discrete-event simulation kernel.

Virtual time is an integer count of nanoseconds.  Using integers (rather
than floats) keeps event ordering independent of summation order, which is
what makes runs bit-reproducible.  Events that share a timestamp dispatch
in scheduling order (a monotone sequence number breaks ties).

Randomness is centralised here: every stochastic draw site asks for its own
named stream, derived from the master seed by hashing.  Adding a new draw
site therefore never perturbs the draws seen by existing sites.
"""

from __future__ import annotations

import hashlib
import heapq
import random

NS_PER_S = 1_000_000_000


def ns(seconds: float) -> int:
    """Convert seconds to integer nanoseconds."""
    return int(round(seconds * NS_PER_S))


def seconds(t_ns: int) -> float:
    return t_ns / NS_PER_S


def derive_stream(master_seed: int, site: str) -> random.Random:
    """Independent, reproducible RNG stream for one named draw site.

    The stream seed is the first 8 bytes of sha256(master_seed ':' site),
    so streams are stable across runs and platforms and independent of the
    order in which sites are created.
    """
    digest = hashlib.sha256(f"{master_seed}:{site}".encode("ascii")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


class SchedulingError(ValueError):
    """Raised when an event is scheduled before the current virtual time."""


class Simulator:
    """Ordered event queue plus a virtual clock.

    Attributes:
        now: current virtual time in ns.  Never decreases.
    """

    __slots__ = ("now", "_seq", "_heap")

    def __init__(self) -> None:
        self.now = 0
        self._seq = 0
        self._heap: list = []

    def schedule(self, t_ns: int, action, arg=None) -> tuple[int, int]:
        """Schedule `action` at time `t_ns`; it runs as action(arg) or action().

        Returns an opaque (time, sequence) handle.
        """
        if t_ns < self.now:
            raise SchedulingError(
                f"cannot schedule at t={t_ns} ns before now={self.now} ns"
            )
        self._seq += 1
        heapq.heappush(self._heap, (t_ns, self._seq, action, arg))
        return (t_ns, self._seq)

    def run_until(self, t_end_ns: int) -> int:
        """Dispatch every event with time <= t_end_ns; returns the final clock."""
        if t_end_ns < self.now:
            raise SchedulingError(
                f"cannot run to t={t_end_ns} ns before now={self.now} ns"
            )
        heap = self._heap
        pop = heapq.heappop
        while heap and heap[0][0] <= t_end_ns:
            t, _, action, arg = pop(heap)
            self.now = t
            if arg is None:
                action()
            else:
                action(arg)
        self.now = t_end_ns
        return self.now

    def pending(self) -> int:
        return len(self._heap)


class RateResource:
    """A capacity-limited FIFO server (bytes/s, requests/s, ...).

    A demand of `units` arriving at time t completes at
    ``max(t, busy_until) + units / capacity``; the resource is work
    conserving and serves strictly in arrival order.  `acquire_at` is pure
    arithmetic (no event is created), so callers chain service legs cheaply
    and schedule a single event at the final completion time.

    With `track_windows`, busy time is attributed to the wall-clock windows
    in which the service actually happens (even when the queue runs ahead of
    the clock), feeding the utilization reports.
    """

    __slots__ = (
        "name",
        "capacity",
        "ns_per_unit",
        "busy_until",
        "served_units",
        "requests",
        "window_ns",
        "track_windows",
        "busy_by_window",
        "units_by_window",
    )

    def __init__(self, name: str, capacity: float,
                 window_ns: int = 10 * NS_PER_S, track_windows: bool = True):
        if capacity <= 0:
            raise ValueError(f"resource {name}: capacity must be > 0")
        self.name = name
        self.capacity = capacity
        self.ns_per_unit = NS_PER_S / capacity
        self.busy_until = 0
        self.served_units = 0.0
        self.requests = 0
        self.window_ns = window_ns
        self.track_windows = track_windows
        self.busy_by_window: dict[int, int] = {}
        self.units_by_window: dict[int, float] = {}

    def acquire_at(self, t_ns: int, units: float) -> int:
        """Queue `units` of demand arriving at t_ns; returns completion time."""
        if units <= 0:
            raise ValueError(f"resource {self.name}: demand must be > 0")
        start = self.busy_until
        if t_ns > start:
            start = t_ns
        done = start + int(units * self.ns_per_unit + 0.5)
        self.busy_until = done
        self.served_units += units
        self.requests += 1
        if self.track_windows:
            w = self.window_ns
            w0 = start // w
            w1 = done // w
            busy = self.busy_by_window
            if w0 == w1:
                if w0 in busy:
                    busy[w0] += done - start
                else:
                    busy[w0] = done - start
            else:
                for wi in range(w0, w1 + 1):
                    lo = wi * w
                    if start > lo:
                        lo = start
                    hi = (wi + 1) * w
                    if done < hi:
                        hi = done
                    if hi > lo:
                        if wi in busy:
                            busy[wi] += hi - lo
                        else:
                            busy[wi] = hi - lo
            ub = self.units_by_window
            if w1 in ub:
                ub[w1] += units
            else:
                ub[w1] = units
        return done

    def backlog_ns(self, now_ns: int) -> int:
        """Unfinished committed work, in ns of service time."""
        b = self.busy_until - now_ns
        return b if b > 0 else 0

    def busy_fraction(self, t0_ns: int, t1_ns: int) -> float:
        """Fraction of [t0, t1) this resource spent serving.

        Callers align t0/t1 to window boundaries; partial edge windows are
        counted whole.
        """
        if t1_ns <= t0_ns:
            return 0.0
        w = self.window_ns
        total = 0
        for wi in range(t0_ns // w, (t1_ns - 1) // w + 1):
            total += self.busy_by_window.get(wi, 0)
        return min(1.0, total / (t1_ns - t0_ns))
