"""Linear hybrid automata that observe a trajectory and produce one KPI value.

An :class:`Lha` is an immutable definition.  ``start()`` gives a fresh
:class:`LhaRun` holding the per-trajectory state; the simulator drives it
with ``advance``/``on_event``/``finalize``.

Data variables evolve with piecewise-constant flows between events.  A flow is
either a clock (rate 1) or a marking indicator, re-evaluated at each event.
Synchronized edges react to transition firings, autonomous edges to a clock
reaching a bound.
"""
from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass

from .ssn.simulator import DEADLOCK, TRUNCATED

TIME_TO_SECONDS = 1e5   # one time unit is 10 us


class LhaDefinitionError(ValueError):
    pass


@dataclass(frozen=True)
class ObserverResult:
    accepted: bool
    value: float = None
    deadlocked: bool = False


# -- flows ---------------------------------------------------------------------

@dataclass(frozen=True)
class Flow:
    """``var`` grows at ``rate`` while the indicator holds.

    Without ``place`` the indicator is always true (a clock).  With ``place``
    it holds while the token total of that place lies in ``[at_least, at_most]``.
    """

    var: str
    place: str = None
    at_least: int = 1
    at_most: int = None
    rate: float = 1.0

    def active(self, marking, cache) -> bool:
        if self.place is None:
            return True
        k = cache.get(self.place)
        if k is None:
            k = cache[self.place] = marking.index(self.place)
        n = marking.bags[k].total()
        return n >= self.at_least and (self.at_most is None or n <= self.at_most)


# -- updates -------------------------------------------------------------------

@dataclass(frozen=True)
class Increment:
    var: str
    by: float = 1.0

    def apply(self, run, ev):
        run.vars[self.var] += self.by


@dataclass(frozen=True)
class StampArrival:
    """Queue the current time under the key formed by the event's ``keys`` variables."""

    keys: tuple

    def apply(self, run, ev):
        run.queues.setdefault(tuple(ev.get(k) for k in self.keys), deque()).append(ev.time)


@dataclass(frozen=True)
class PopArrival:
    """Match the oldest queued arrival with this event (FIFO per key).

    Adds the elapsed time to ``total`` and bumps ``count`` when those are set;
    with neither it simply discards the arrival (dropped packet).
    """

    keys: tuple
    total: str = None
    count: str = None

    def apply(self, run, ev):
        q = run.queues.get(tuple(ev.get(k) for k in self.keys))
        if not q:
            return
        t0 = q.popleft()
        if self.total is not None:
            run.vars[self.total] += ev.time - t0
            run.vars[self.count] += 1


@dataclass(frozen=True)
class AddTokenComponent:
    """Add ``component + offset`` of the token of ``place`` whose fields
    ``match`` (position -> event variable) agree with the event, or 0 if
    there is none."""

    var: str
    place: str
    match: tuple       # ((position, event var), ...)
    component: int
    offset: int = 1

    def apply(self, run, ev):
        want = [(i, ev.get(v)) for i, v in self.match]
        for tok in ev.marking[self.place]:
            if all(tok[i] == x for i, x in want):
                run.vars[self.var] += tok[self.component] + self.offset
                return


# -- edges ---------------------------------------------------------------------

@dataclass(frozen=True)
class Synchronized:
    source: str
    target: str
    transitions: frozenset
    where: tuple = ()          # ((var, value), ...) constraints on the binding
    updates: tuple = ()

    def matches(self, ev) -> bool:
        if ev.transition not in self.transitions:
            return False
        for var, value in self.where:
            if var not in ev.var_names or ev.get(var) != value:
                return False
        return True


@dataclass(frozen=True)
class Autonomous:
    """Taken as soon as clock ``var`` reaches ``bound``."""

    source: str
    target: str
    var: str
    bound: float
    updates: tuple = ()


# -- outputs -------------------------------------------------------------------

@dataclass(frozen=True)
class Ratio:
    """``scale * var / clock``."""

    var: str
    clock: str = "t"
    scale: float = 1.0

    def evaluate(self, vars):
        if vars[self.clock] <= 0:
            return None
        return self.scale * vars[self.var] / vars[self.clock]


@dataclass(frozen=True)
class MeanOf:
    total: str
    count: str

    def evaluate(self, vars):
        if vars[self.count] == 0:
            return None
        return vars[self.total] / vars[self.count]


@dataclass(frozen=True)
class Value:
    var: str

    def evaluate(self, vars):
        return vars[self.var]


@dataclass(frozen=True)
class Indicator:
    """1 if ``var`` is positive else 0."""

    var: str

    def evaluate(self, vars):
        return 1.0 if vars[self.var] > 0 else 0.0


# -- automaton -----------------------------------------------------------------

def _constraints_overlap(a: tuple, b: tuple) -> bool:
    da, db = dict(a), dict(b)
    return all(da[k] == db[k] for k in da.keys() & db.keys())


@dataclass(frozen=True)
class Lha:
    name: str
    variables: tuple
    flows: tuple
    edges: tuple
    output: object
    initial: str = "l1"
    final: str = "l2"

    def __post_init__(self):
        names = set(self.variables)
        for f in self.flows:
            if f.var not in names:
                raise LhaDefinitionError(f"flow on undeclared variable {f.var!r}")
        sync = [e for e in self.edges if isinstance(e, Synchronized)]
        for i, a in enumerate(sync):
            for b in sync[i + 1:]:
                if a.source == b.source and a.transitions & b.transitions and _constraints_overlap(a.where, b.where):
                    raise LhaDefinitionError(
                        f"{self.name}: two edges from {a.source!r} can match the same event"
                    )
        for e in self.edges:
            if isinstance(e, Autonomous) and e.var not in names:
                raise LhaDefinitionError(f"autonomous edge on undeclared clock {e.var!r}")

    def start(self) -> "LhaRun":
        return LhaRun(self)


class LhaRun:
    """State of one automaton along one trajectory."""

    def __init__(self, lha: Lha):
        self.lha = lha
        self.location = lha.initial
        self.vars = {v: 0.0 for v in lha.variables}
        self.queues = {}
        self._places = {}
        self._sync = {}
        self._auto = {}
        for e in lha.edges:
            bucket = self._sync if isinstance(e, Synchronized) else self._auto
            bucket.setdefault(e.source, []).append(e)

    def _take(self, edge, ev):
        for u in edge.updates:
            u.apply(self, ev)
        self.location = edge.target

    def _autonomous_deadline(self):
        """Earliest ``(delta, edge)`` before an autonomous edge fires under the current flows."""
        best = None
        for e in self._auto.get(self.location, ()):
            rate = sum(f.rate for f in self.lha.flows if f.var == e.var and f.place is None)
            if rate <= 0:
                continue
            delta = (e.bound - self.vars[e.var]) / rate
            if best is None or delta < best[0]:
                best = (max(delta, 0.0), e)
        return best

    def advance(self, dt: float, marking, start_time: float = 0.0):
        if dt < 0:
            raise ValueError("dt must be non-negative")
        while dt > 0 and self.location != self.lha.final:
            nxt = self._autonomous_deadline()
            step = dt if nxt is None or nxt[0] >= dt else nxt[0]
            for f in self.lha.flows:
                if f.active(marking, self._places):
                    self.vars[f.var] += f.rate * step
            dt -= step
            if nxt is not None and nxt[0] <= step:
                e = nxt[1]
                self.vars[e.var] = e.bound
                self._take(e, None)
        self._fire_due_autonomous()

    def _fire_due_autonomous(self):
        for e in self._auto.get(self.location, ()):
            if self.vars[e.var] >= e.bound:
                self._take(e, None)
                return

    def on_event(self, ev):
        for e in self._sync.get(self.location, ()):
            if e.matches(ev):
                self._take(e, ev)
                return

    def finalize(self, end_time: float, outcome: str) -> ObserverResult:
        self._fire_due_autonomous()
        if outcome == TRUNCATED:
            return ObserverResult(False)
        deadlocked = outcome == DEADLOCK
        if self.location != self.lha.final and not deadlocked:
            return ObserverResult(False)
        value = self.lha.output.evaluate(self.vars)
        if value is None:
            return ObserverResult(False, deadlocked=deadlocked)
        return ObserverResult(True, float(value), deadlocked)


# -- ready-made observers ------------------------------------------------------

DELIVERY_TRANSITIONS = ("CorrectPacketAck", "CorrectPacketButAck")
_PT_DATA = 2


def _delivery_where(priority, delivery):
    where = []
    if priority is not None:
        where.append(("p", priority - 1))
    if delivery == "CorrectPacketButAck":
        # the responder's reaction to a correct DATA packet
        where.append(("pt", _PT_DATA))
    elif delivery != "CorrectPacketAck":
        raise ValueError(f"delivery transition must be one of {DELIVERY_TRANSITIONS}")
    return tuple(where)


def _timed(name, T, variables, flows, sync_edges, output):
    if not T > 0:
        raise ValueError("observation horizon must be positive")
    edges = tuple(sync_edges) + (Autonomous("l1", "l2", "t", float(T)),)
    return Lha(name, ("t",) + tuple(variables), (Flow("t"),) + tuple(flows), edges, output)


def throughput_lha(priority=None, T=5000.0, delivery="CorrectPacketAck") -> Lha:
    """Deliveries per second for one priority (1-based) or, with None, all."""
    edge = Synchronized("l1", "l1", frozenset({delivery}), _delivery_where(priority, delivery),
                        (Increment("count"),))
    name = "throughput" if priority is None else f"throughput[pr{priority}]"
    return _timed(name, T, ("count",), (), (edge,), Ratio("count", scale=TIME_TO_SECONDS))


def _occupancy(name, T, place, at_least, at_most=None):
    return _timed(name, T, ("busy",), (Flow("busy", place, at_least, at_most),), (), Ratio("busy"))


def btr_lha(T=5000.0) -> Lha:
    """Fraction of time the medium holds at least one transmission (garbled included)."""
    return _occupancy("btr", T, "Medium", 1)


def idle_ratio_lha(T=5000.0) -> Lha:
    return _occupancy("idle", T, "Medium", 0, 0)


def garbled_ratio_lha(T=5000.0) -> Lha:
    return _occupancy("garbled", T, "Garbled", 1)


def turnaround_lha(priority=None, T=5000.0, delivery="CorrectPacketAck") -> Lha:
    """Mean time from PacketArrival to delivery, arrivals matched FIFO per (station, priority)."""
    where = () if priority is None else (("p", priority - 1),)
    key = ("sa", "p")
    edges = (
        Synchronized("l1", "l1", frozenset({"PacketArrival"}), where, (StampArrival(key),)),
        Synchronized("l1", "l1", frozenset({delivery}), _delivery_where(priority, delivery),
                     (PopArrival(key, "total", "count"),)),
        Synchronized("l1", "l1", frozenset({"DropPacket"}), where, (PopArrival(key),)),
    )
    name = "turnaround" if priority is None else f"turnaround[pr{priority}]"
    return _timed(name, T, ("total", "count"), (), edges, MeanOf("total", "count"))


def backoff_rounds_lha(priority=None, T=5000.0) -> Lha:
    """Mean number of backoff rounds a packet went through before delivery."""
    where = () if priority is None else (("p", priority - 1),)
    upd = (AddTokenComponent("total", "TxAttemptsCounter", ((0, "sa"), (2, "p")), 3), Increment("count"))
    edge = Synchronized("l1", "l1", frozenset({"CorrectPacketAck"}), where, upd)
    name = "backoff_rounds" if priority is None else f"backoff_rounds[pr{priority}]"
    return _timed(name, T, ("total", "count"), (), (edge,), MeanOf("total", "count"))


def firing_count_lha(transitions, T) -> Lha:
    edge = Synchronized("l1", "l1", frozenset(transitions), (), (Increment("count"),))
    return _timed("count", T, ("count",), (), (edge,), Value("count"))


def fired_by_lha(transition: str, T) -> Lha:
    """1 if ``transition`` fires before time ``T``, else 0."""
    edge = Synchronized("l1", "l1", frozenset({transition}), (), (Increment("count"),))
    return _timed(f"fired[{transition}]", T, ("count",), (), (edge,), Indicator("count"))


# -- registry ------------------------------------------------------------------

_FACTORIES = {
    "throughput": (throughput_lha, True),
    "btr": (btr_lha, False),
    "idle": (idle_ratio_lha, False),
    "garbled": (garbled_ratio_lha, False),
    "turnaround": (turnaround_lha, True),
    "backoff_rounds": (backoff_rounds_lha, True),
}
KPI_NAMES = tuple(_FACTORIES)
_KPI_RE = re.compile(r"^([a-z_]+)(?:\[pr([1-4])\])?$")


def parse_kpi(name: str):
    """``'throughput[pr2]'`` -> ``('throughput', 2)``; priority None when absent."""
    m = _KPI_RE.match(name.strip())
    if not m or m.group(1) not in _FACTORIES:
        raise ValueError(f"unknown KPI {name!r}; expected one of {', '.join(KPI_NAMES)} (optionally [prN])")
    base, pr = m.group(1), m.group(2)
    if pr is not None and not _FACTORIES[base][1]:
        raise ValueError(f"KPI {base!r} takes no priority")
    return base, None if pr is None else int(pr)


def observer(name: str, T: float, delivery: str = "CorrectPacketAck") -> Lha:
    base, pr = parse_kpi(name)
    factory, per_priority = _FACTORIES[base]
    if not per_priority:
        return factory(T)
    if base == "backoff_rounds":
        return factory(pr, T)
    return factory(pr, T, delivery)
