"""Trajectory simulation of a net as a generalized semi-Markov process.

Timing policy: enabling memory with reset.  A timed instance gets its clock
when it becomes enabled and loses it as soon as it is disabled.  Immediate
instances fire before time advances, highest priority first, ties broken by
weight.  Timers expiring at the same instant fire in uniformly random order.
"""
from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field

import numpy as np

from .kernel import TransitionInstance, compiled
from .net import Deterministic, Exponential, Net

# scheduled times are snapped to this many decimals so that equal delays
# accumulated along different paths still collide exactly
TIME_DECIMALS = 9

COMPLETED = "completed"
DEADLOCK = "deadlock"
TRUNCATED = "truncated"


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    horizon: float = 5000.0
    max_events: int = None

    def __post_init__(self):
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")
        if self.max_events is not None and self.max_events < 0:
            raise ValueError("max_events must be non-negative")


def trajectory_rng(seed: int, *stream) -> random.Random:
    """Independent generator for stream ``(seed, *stream)``."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), *[int(s) & (2**64 - 1) for s in stream]])
    return random.Random(int.from_bytes(ss.generate_state(4, dtype=np.uint64).tobytes(), "little"))


@dataclass
class Event:
    """One firing.  ``marking`` is the live simulator marking right after the
    firing; observers must not mutate it and must copy it if they keep it."""

    time: float
    transition: str
    binding: tuple          # values, in the transition's variable order
    transition_index: int
    marking: object = field(default=None, repr=False)
    var_names: tuple = field(default=(), repr=False)

    @property
    def instance(self) -> TransitionInstance:
        return TransitionInstance(self.transition, tuple(zip(self.var_names, self.binding)))

    def get(self, var):
        return self.binding[self.var_names.index(var)]


class Simulator:
    """Mutable state of one trajectory: marking, pending clocks, RNG."""

    def __init__(self, net: Net, rng: random.Random, marking=None):
        self.net = net
        self.cn = compiled(net)
        self.rng = rng
        self.marking = net.initial_marking() if marking is None else marking.copy()
        self.bags = self.marking.bags
        self.time = 0.0
        self.n_events = 0
        cts = self.cn.transitions
        self.enabled = [[] for _ in cts]
        self._sets = [set() for _ in cts]
        self.timers = {}       # (t index, binding) -> expiry
        self._heap = []
        self._seq = 0
        prios = sorted({ct.priority for ct in cts if ct.immediate}, reverse=True)
        self._imm_groups = [[ct.index for ct in cts if ct.immediate and ct.priority == p] for p in prios]
        self._timed = [not ct.immediate for ct in cts]
        for ct in cts:
            self._refresh(ct.index)

    def _schedule(self, ti, b):
        kind = self.cn.transitions[ti].kind
        if isinstance(kind, Exponential):
            at = self.time + self.rng.expovariate(kind.rate)
        else:
            at = self.time + kind.delay
        at = round(at, TIME_DECIMALS)
        self.timers[(ti, b)] = at
        heapq.heappush(self._heap, (at, self._seq, ti, b))
        self._seq += 1

    def _refresh(self, ti):
        ct = self.cn.transitions[ti]
        new = ct.enumerate(self.bags)
        if self._timed[ti]:
            old = self._sets[ti]
            newset = set(new)
            timers = self.timers
            for b in old - newset:
                del timers[(ti, b)]
            for b in new:
                if b not in old:
                    self._schedule(ti, b)
            self._sets[ti] = newset
        self.enabled[ti] = new

    def _apply(self, ti, b):
        ct = self.cn.transitions[ti]
        if self._timed[ti]:
            # the firing instance restarts its clock if it stays enabled
            self._sets[ti].discard(b)
            del self.timers[(ti, b)]
        ct.fire(self.bags, b)
        for tj in self.cn.affected[ti]:
            self._refresh(tj)
        if self._timed[ti] and ti not in self.cn.affected[ti] and b in self.enabled[ti]:
            self._sets[ti].add(b)
            self._schedule(ti, b)
        self.n_events += 1

    def pick_immediate(self):
        enabled = self.enabled
        for group in self._imm_groups:
            live = [ti for ti in group if enabled[ti]]
            if not live:
                continue
            if len(live) == 1 and len(enabled[live[0]]) == 1:
                return live[0], enabled[live[0]][0]
            cts = self.cn.transitions
            total = sum(cts[ti].weight * len(enabled[ti]) for ti in live)
            u = self.rng.random() * total
            for ti in live:
                w = cts[ti].weight
                span = w * len(enabled[ti])
                if u < span:
                    k = min(int(u / w), len(enabled[ti]) - 1)
                    return ti, enabled[ti][k]
                u -= span
            ti = live[-1]
            return ti, enabled[ti][-1]
        return None

    def next_timer(self):
        """Earliest live timer (uniform among exact ties), without removing it."""
        heap, timers = self._heap, self.timers
        while heap:
            at, _, ti, b = heap[0]
            if timers.get((ti, b)) == at:
                break
            heapq.heappop(heap)
        if not heap:
            return None
        at = heap[0][0]
        ties = []
        while heap and heap[0][0] == at:
            entry = heapq.heappop(heap)
            if timers.get((entry[2], entry[3])) == at:
                ties.append(entry)
        pick = ties[self.rng.randrange(len(ties))] if len(ties) > 1 else ties[0]
        for e in ties:
            heapq.heappush(heap, e)
        return at, pick[2], pick[3]

    def step(self, horizon: float, on_advance=None):
        """Fire the next event strictly before ``horizon``.

        Returns ``(ti, binding)`` of the fired instance, ``None`` when the next
        event lies at or beyond the horizon, or ``DEADLOCK`` when nothing is
        enabled and no clock is pending.  ``on_advance(new_time)`` is called
        before time moves forward, while the old marking is still in place.
        """
        if self.time >= horizon:
            return None
        imm = self.pick_immediate()
        if imm is not None:
            self._apply(*imm)
            return imm
        nxt = self.next_timer()
        if nxt is None:
            return DEADLOCK
        at, ti, b = nxt
        if at >= horizon:
            return None
        if on_advance is not None and at > self.time:
            on_advance(at)
        self.time = at
        self._apply(ti, b)
        return ti, b

    def immediate_enabled(self) -> bool:
        return any(self.enabled[ti] for g in self._imm_groups for ti in g)


@dataclass
class TrajectoryResult:
    outcome: str
    end_time: float
    n_events: int
    results: list
    digest: str = ""


def simulate(net: Net, config: SimConfig, observers=(), rng=None, record_digest=False) -> TrajectoryResult:
    """Generate one trajectory up to ``config.horizon`` feeding every observer.

    Observers implement ``advance(dt, marking)``, ``on_event(event)`` and
    ``finalize(end_time, outcome)``; objects exposing ``start()`` (observer
    definitions) are instantiated first.  Returns the finalized values in
    observer order.
    """
    runs = [o.start() if hasattr(o, "start") else o for o in observers]
    sim = Simulator(net, rng if rng is not None else trajectory_rng(config.seed))
    cts = sim.cn.transitions
    horizon = config.horizon
    limit = config.max_events
    h = hashlib.blake2b(digest_size=16) if record_digest else None
    outcome = COMPLETED
    marking = sim.marking

    def advance(until):
        # observers integrate over the interval under the marking still in force
        dt = until - sim.time
        for r in runs:
            r.advance(dt, marking, sim.time)

    while True:
        if limit is not None and sim.n_events >= limit:
            outcome = TRUNCATED
            break
        res = sim.step(horizon, advance)
        if res is None:
            break
        if res == DEADLOCK:
            outcome = DEADLOCK
            break
        ti, b = res
        now = sim.time
        ct = cts[ti]
        ev = Event(now, ct.name, b, ti, marking, ct.var_names)
        for r in runs:
            r.on_event(ev)
        if h is not None:
            h.update(f"{now!r}|{ct.name}|{b}\n".encode())
    end = horizon if outcome == COMPLETED else sim.time
    if end > sim.time:
        advance(end)
    results = [r.finalize(end, outcome) for r in runs]
    return TrajectoryResult(outcome, end, sim.n_events, results, h.hexdigest() if h else "")


def run_trace(net: Net, config: SimConfig, rng=None, copy_markings=False):
    """Full event log of one trajectory as a list of :class:`Event` (for tests and debugging)."""
    sim = Simulator(net, rng if rng is not None else trajectory_rng(config.seed))
    cts = sim.cn.transitions
    out = []
    outcome = COMPLETED
    while True:
        if config.max_events is not None and sim.n_events >= config.max_events:
            outcome = TRUNCATED
            break
        res = sim.step(config.horizon)
        if res is None:
            break
        if res == DEADLOCK:
            outcome = DEADLOCK
            break
        ti, b = res
        ct = cts[ti]
        m = sim.marking.copy() if copy_markings else None
        out.append(Event(sim.time, ct.name, b, ti, m, ct.var_names))
    return out, outcome
