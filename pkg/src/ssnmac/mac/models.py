"""SSN models of 802.11 and 802.11p (EDCA) RTS/CTS networks.

Both variants share one construction.  The legacy model is the EDCA model
with a single priority, DIFS sensing and a contention window that doubles
per failed attempt.

Station tokens ``<sa,sb,p,pt>`` travel through the core places
Sense -> Vulnerable -> Sending -> PacketSent -> WaitForResponse ->
Receiving -> ReadingPacket.  Every station also owns one listener token
``<sa,s1,pr1,rts>`` that answers incoming requests.  Failed attempts go
through GoingToBackoff -> ChoosingBackoff -> BackoffCounter.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from ..ssn import (
    AllOf, ColorClass, ColorDomain, Const, Deterministic, Eq, Exponential, Immediate,
    InSubclass, Lt, NEUTRAL, Neq, Net, Place, Pred, Succ, T, Transition, guard,
)
from ..ssn.expr import ArcExpr
from .params import (
    MAX_BACKOFF, MAX_TX, N_STAGES, BackoffMapping, MacParams, backoff_stage_bounds,
    default_bm0, legacy_mapping,
)

# per-second arrival rate -> per-10us kernel rate
RATE_UNIT = 1e5


class Variant(str, Enum):
    LEGACY = "80211"
    EDCA = "80211p"


@dataclass(frozen=True)
class Saturated:
    pass


@dataclass(frozen=True)
class Poisson:
    lam: float   # packets per second per (station, priority) flow

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("Poisson arrival rate must be positive")


@dataclass(frozen=True)
class Ideal:
    pass


@dataclass(frozen=True)
class BurstNoise:
    spike_enter_rate: float   # per 10 us
    spike_exit_rate: float    # per 10 us

    def __post_init__(self):
        if not (self.spike_enter_rate > 0 and self.spike_exit_rate > 0):
            raise ValueError("error-spike rates must be positive")


# Immediate-transition priority levels.  Higher fires first at the same instant.
IMMEDIATE_PRIORITIES = {
    "GettingGarbled": 9,
    "InternalCollision": 8,
    "SenderSenseCollision": 7,
    "ReceiverSenseCollision": 7,
    "PauseBackoff": 7,
    "BeginWaitingForResponse": 6,
    "StartReceiving": 5,
    "ReceiverGarbled": 5,
    "SenderGarbled": 5,
    "FinishReceiving": 4,
    "EndingGarbled": 4,
    "CorrectPacketButAck": 3,
    "CorrectPacketAck": 3,
    "ReceiverWrongPacket": 2,
    "SenderWrongPacket": 2,
    "GoToBackoff": 2,
    "ReturnToBackoff": 2,
    "DropPacket": 2,
    "ChooseBackoff": 2,
    "ExitBackoff": 2,
    "ResetTxCounter": 2,
    "ClearSentPacket": 1,
    "PacketArrival": 0,
}

# places holding exactly one token per (station, priority) flow plus one listener per station
STATION_PLACES = (
    "Idle", "Sense", "Vulnerable", "Sending", "PacketSent", "WaitForResponse", "Receiving",
    "ReadingPacket", "GoingToBackoff", "ChoosingBackoff", "BackoffCounter", "PausingBackoff",
)


@dataclass(frozen=True)
class NetworkSpec:
    variant: Variant = Variant.EDCA
    n_stations: int = 2
    traffic: object = field(default_factory=Saturated)
    channel: object = field(default_factory=Ideal)
    params: MacParams = field(default_factory=MacParams)
    mapping: BackoffMapping = None
    senders: tuple = None           # stations (1-based) that generate traffic; None = all
    immediate_priorities: tuple = ()  # ((transition, level), ...) overrides

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.n_stations < 2:
            raise ValueError("a clique needs at least 2 stations")
        if not isinstance(self.traffic, (Saturated, Poisson)):
            raise ValueError(f"unknown traffic model {self.traffic!r}")
        if not isinstance(self.channel, (Ideal, BurstNoise)):
            raise ValueError(f"unknown channel model {self.channel!r}")
        if self.mapping is None:
            m = default_bm0() if self.variant is Variant.EDCA else legacy_mapping(self.params)
            object.__setattr__(self, "mapping", m)
        if self.mapping.priorities != tuple(range(1, self.n_priorities + 1)):
            raise ValueError(f"backoff mapping must cover priorities 1..{self.n_priorities}")
        if self.senders is not None:
            s = tuple(sorted(set(self.senders)))
            if not s or s[0] < 1 or s[-1] > self.n_stations:
                raise ValueError("senders must be station numbers in 1..n_stations")
            object.__setattr__(self, "senders", s)
        unknown = {k for k, _ in self.immediate_priorities} - set(IMMEDIATE_PRIORITIES)
        if unknown:
            raise ValueError(f"unknown immediate transitions {sorted(unknown)}")

    @property
    def n_priorities(self) -> int:
        return 4 if self.variant is Variant.EDCA else 1

    def target(self, station: int) -> int:
        """1-based receiver of ``station``'s traffic."""
        return station % self.n_stations + 1


class ModelClasses:
    """Color classes of one model instance."""

    def __init__(self, n_stations: int, n_priorities: int):
        self.St = ColorClass("St", n_stations, ordered=True, prefix="s")
        self.Pr = ColorClass("Pr", n_priorities, prefix="pr")
        self.PT = ColorClass("PT", 4, ordered=True, labels=("rts", "cts", "data", "ack"))
        self.TxCount = ColorClass("TxCount", MAX_TX, ordered=True, prefix="tx")
        subs = tuple((f"bs{k}", lo - 1, hi - 1) for k, (lo, hi) in
                     ((k, backoff_stage_bounds(k)) for k in range(1, N_STAGES + 1)))
        self.B = ColorClass("BackoffStage", MAX_BACKOFF, ordered=True, subclasses=subs, prefix="b")
        self.all = (self.St, self.Pr, self.PT, self.TxCount, self.B)

    def pt(self, name):
        return Const(self.PT, name)


def _build(spec: NetworkSpec) -> Net:
    C = ModelClasses(spec.n_stations, spec.n_priorities)
    St, Pr, PT, Tx, B = C.St, C.Pr, C.PT, C.TxCount, C.B
    P = spec.params
    prio = dict(IMMEDIATE_PRIORITIES)
    prio.update(dict(spec.immediate_priorities))

    SP = ColorDomain((St, Pr))
    PKT = ColorDomain((St, St, Pr, PT))
    BP = ColorDomain((St, St, Pr))
    CNT = ColorDomain((St, St, Pr, Tx))
    BC = ColorDomain((St, St, Pr, B))
    MAP = ColorDomain((Pr, Tx, B))
    places = [
        Place("Idle", SP), Place("Sense", PKT), Place("Vulnerable", PKT), Place("Sending", PKT),
        Place("PacketSent", PKT), Place("WaitForResponse", PKT), Place("Receiving", PKT),
        Place("ReadingPacket", PKT), Place("SentPacket", PKT),
        Place("GoingToBackoff", BP), Place("ChoosingBackoff", BP), Place("TxAttemptsCounter", CNT),
        Place("BackoffCounter", BC), Place("PausingBackoff", BC), Place("BackoffMappings", MAP),
        Place("Medium", NEUTRAL), Place("Garbled", NEUTRAL),
        Place("NotErrorSpike", NEUTRAL), Place("ErrorSpike", NEUTRAL),
    ]

    sa, sb, p = ("sa", St), ("sb", St), ("p", Pr)
    pt, tx, b = ("pt", PT), ("tx", Tx), ("b", B)
    sx, p2 = ("sx", St), ("p2", Pr)
    rts, cts, data, ack = (C.pt(x) for x in ("rts", "cts", "data", "ack"))
    one = ArcExpr.const(1)
    listener = T("sa", Const(St, 0), Const(Pr, 0), rts)
    pkt = T("sa", "sb", "p", "pt")
    bp = T("sa", "sb", "p")
    is_listener_type = guard(Neq("pt", cts), Neq("pt", ack))   # rts or data
    is_sender_type = guard(Neq("pt", rts), Neq("pt", data))    # cts or ack

    def imm(name):
        return Immediate(priority=prio[name])

    trs = []
    add = trs.append

    # -- traffic ----------------------------------------------------------------
    arrival = imm("PacketArrival") if isinstance(spec.traffic, Saturated) else Exponential(spec.traffic.lam / RATE_UNIT)
    add(Transition("PacketArrival", (sa, p),
                   inputs=(("Idle", T("sa", "p")),),
                   outputs=(("Sense", T("sa", Succ("sa"), "p", rts)),), kind=arrival))

    # -- carrier sensing --------------------------------------------------------
    if spec.variant is Variant.EDCA:
        for i in range(spec.n_priorities):
            add(Transition(f"WaitAIFS{i + 1}", (sa, sb, p), guard(Eq("p", Const(Pr, i))),
                           inputs=(("Sense", T("sa", "sb", "p", rts)),),
                           inhibitors=(("Medium", one),),
                           outputs=(("Vulnerable", T("sa", "sb", "p", rts)),),
                           kind=Deterministic(P.aifs[i])))
    else:
        add(Transition("WaitDIFS", (sa, sb, p),
                       inputs=(("Sense", T("sa", "sb", "p", rts)),),
                       inhibitors=(("Medium", one),),
                       outputs=(("Vulnerable", T("sa", "sb", "p", rts)),),
                       kind=Deterministic(P.difs)))
    add(Transition("WaitSIFS", (sa, sb, p, pt), guard(Neq("pt", rts)),
                   inputs=(("Sense", pkt),), inhibitors=(("Medium", one),),
                   outputs=(("Vulnerable", pkt),), kind=Deterministic(P.sifs)))
    add(Transition("SenderSenseCollision", (sa, sb, p, pt), is_listener_type,
                   inputs=(("Sense", pkt),), tests=(("Medium", one),),
                   outputs=(("GoingToBackoff", bp),), kind=imm("SenderSenseCollision")))
    add(Transition("ReceiverSenseCollision", (sa, sb, p, pt), is_sender_type,
                   inputs=(("Sense", pkt),), tests=(("Medium", one),),
                   outputs=(("WaitForResponse", listener),), kind=imm("ReceiverSenseCollision")))

    # -- transmission -----------------------------------------------------------
    if spec.n_priorities > 1:
        # a station's higher-priority request overtakes its lower-priority ones
        add(Transition("InternalCollision", (sa, sb, p, sx, p2), guard(Lt("p2", "p")),
                       inputs=(("Vulnerable", T("sa", "sb", "p", rts)),),
                       tests=(("Vulnerable", T("sa", "sx", "p2", rts)),),
                       outputs=(("GoingToBackoff", bp),), kind=imm("InternalCollision")))
    add(Transition("BeingSending", (sa, sb, p, pt),
                   inputs=(("Vulnerable", pkt),),
                   outputs=(("Sending", pkt), ("Medium", one)), kind=Deterministic(P.vuln)))
    for name, ptc, dur in (("sendRTS", rts, P.rts), ("sendCTS", cts, P.cts), ("sendDATA", data, P.data)):
        add(Transition(name, (sa, sb, p),
                       inputs=(("Sending", T("sa", "sb", "p", ptc)), ("Medium", one)),
                       outputs=(("PacketSent", T("sa", "sb", "p", ptc)),), kind=Deterministic(dur)))
    add(Transition("sendACK", (sa, sb, p),
                   inputs=(("Sending", T("sa", "sb", "p", ack)), ("Medium", one)),
                   outputs=(("SentPacket", T("sa", "sb", "p", ack)), ("WaitForResponse", listener)),
                   kind=Deterministic(P.ack)))
    add(Transition("BeginWaitingForResponse", (sa, sb, p, pt),
                   inputs=(("PacketSent", pkt),),
                   outputs=(("SentPacket", pkt), ("WaitForResponse", T("sa", "sb", "p", Succ("pt")))),
                   kind=imm("BeginWaitingForResponse")))

    # -- reception --------------------------------------------------------------
    add(Transition("StartReceiving", (sa, sb, p, pt),
                   inputs=(("WaitForResponse", pkt),), tests=(("Medium", one),),
                   inhibitors=(("Garbled", one),),
                   outputs=(("Receiving", pkt),), kind=imm("StartReceiving")))
    add(Transition("FinishReceiving", (sa, sb, p, pt),
                   inputs=(("Receiving", pkt),), inhibitors=(("Medium", one), ("Garbled", one)),
                   outputs=(("ReadingPacket", pkt),), kind=imm("FinishReceiving")))
    add(Transition("ReceiverGarbled", (sa, sb, p, pt), is_listener_type,
                   inputs=(("Receiving", pkt),), tests=(("Garbled", one),),
                   inhibitors=(("Medium", one),),
                   outputs=(("WaitForResponse", listener),), kind=imm("ReceiverGarbled")))
    add(Transition("SenderGarbled", (sa, sb, p, pt), is_sender_type,
                   inputs=(("Receiving", pkt),), tests=(("Garbled", one),),
                   inhibitors=(("Medium", one),),
                   outputs=(("GoingToBackoff", bp),), kind=imm("SenderGarbled")))
    add(Transition("CorrectPacketButAck", (sa, sb, p, pt, sx, p2), guard(Neq("pt", ack)),
                   inputs=(("SentPacket", T("sb", "sa", "p", "pt")), ("ReadingPacket", T("sa", "sx", "p2", "pt"))),
                   outputs=(("Sense", T("sa", "sb", "p", Succ("pt"))),), kind=imm("CorrectPacketButAck")))
    add(Transition("CorrectPacketAck", (sa, sb, p, sx, p2),
                   inputs=(("SentPacket", T("sb", "sa", "p", ack)), ("ReadingPacket", T("sa", "sx", "p2", ack))),
                   outputs=(("Idle", T("sa", "p")),), kind=imm("CorrectPacketAck")))
    add(Transition("ReceiverWrongPacket", (sa, sb, p, pt), is_listener_type,
                   inputs=(("ReadingPacket", pkt),),
                   outputs=(("WaitForResponse", listener),), kind=imm("ReceiverWrongPacket")))
    add(Transition("SenderWrongPacket", (sa, sb, p, pt), is_sender_type,
                   inputs=(("ReadingPacket", pkt),),
                   outputs=(("GoingToBackoff", bp),), kind=imm("SenderWrongPacket")))
    add(Transition("ClearSentPacket", (sa, sb, p, pt),
                   inputs=(("SentPacket", pkt),), kind=imm("ClearSentPacket")))
    add(Transition("ResponseTimeout", (sa, sb, p, pt), is_sender_type,
                   inputs=(("WaitForResponse", pkt),), inhibitors=(("Medium", one),),
                   outputs=(("GoingToBackoff", bp),), kind=Deterministic(P.timeout)))
    add(Transition("ListenerTimeout", (sa, sb, p),
                   inputs=(("WaitForResponse", T("sa", "sb", "p", data)),), inhibitors=(("Medium", one),),
                   outputs=(("WaitForResponse", listener),), kind=Deterministic(P.timeout)))

    # -- backoff ----------------------------------------------------------------
    tx1 = Const(Tx, 0)
    b1 = Const(B, 0)
    add(Transition("GoToBackoff", (sa, sb, p),
                   inputs=(("GoingToBackoff", bp),),
                   inhibitors=(("TxAttemptsCounter", T("sa", "sb", "p", AllOf(Tx))),),
                   outputs=(("ChoosingBackoff", bp), ("TxAttemptsCounter", T("sa", "sb", "p", tx1))),
                   kind=imm("GoToBackoff")))
    add(Transition("ReturnToBackoff", (sa, sb, p, tx),
                   inputs=(("GoingToBackoff", bp), ("TxAttemptsCounter", T("sa", "sb", "p", "tx"))),
                   tests=(("BackoffMappings", T("p", Succ("tx"), b1)),),
                   outputs=(("ChoosingBackoff", bp), ("TxAttemptsCounter", T("sa", "sb", "p", Succ("tx")))),
                   kind=imm("ReturnToBackoff")))
    add(Transition("DropPacket", (sa, sb, p, tx),
                   inputs=(("GoingToBackoff", bp), ("TxAttemptsCounter", T("sa", "sb", "p", "tx"))),
                   inhibitors=(("BackoffMappings", T("p", Succ("tx"), b1)),),
                   outputs=(("Idle", T("sa", "p")),), kind=imm("DropPacket")))
    add(Transition("ChooseBackoff", (sa, sb, p, tx, b),
                   inputs=(("ChoosingBackoff", bp),),
                   tests=(("TxAttemptsCounter", T("sa", "sb", "p", "tx")), ("BackoffMappings", T("p", "tx", "b"))),
                   outputs=(("BackoffCounter", T("sa", "sb", "p", "b")),), kind=imm("ChooseBackoff")))
    add(Transition("DecrementBackoff", (sa, sb, p, b), guard(Neq("b", b1)),
                   inputs=(("BackoffCounter", T("sa", "sb", "p", "b")),), inhibitors=(("Medium", one),),
                   outputs=(("BackoffCounter", T("sa", "sb", "p", Pred("b"))),), kind=Deterministic(P.aslot)))
    add(Transition("ExitBackoff", (sa, sb, p),
                   inputs=(("BackoffCounter", T("sa", "sb", "p", b1)),),
                   outputs=(("Sense", T("sa", "sb", "p", rts)),), kind=imm("ExitBackoff")))
    add(Transition("PauseBackoff", (sa, sb, p, b),
                   inputs=(("BackoffCounter", T("sa", "sb", "p", "b")),), tests=(("Medium", one),),
                   outputs=(("PausingBackoff", T("sa", "sb", "p", "b")),), kind=imm("PauseBackoff")))
    if spec.variant is Variant.EDCA:
        resumes = [(f"ResumeAfterAIFS{i + 1}", guard(Eq("p", Const(Pr, i))), P.aifs[i]) for i in range(spec.n_priorities)]
    else:
        resumes = [("ResumeAfterDIFS", guard(), P.difs)]
    for name, g, delay in resumes:
        add(Transition(name, (sa, sb, p, b), g,
                       inputs=(("PausingBackoff", T("sa", "sb", "p", "b")),), inhibitors=(("Medium", one),),
                       outputs=(("BackoffCounter", T("sa", "sb", "p", "b")),), kind=Deterministic(delay)))
    add(Transition("ResetTxCounter", (sa, sb, p, tx),
                   inputs=(("TxAttemptsCounter", T("sa", "sb", "p", "tx")),), tests=(("Idle", T("sa", "p")),),
                   kind=imm("ResetTxCounter")))

    # -- medium -----------------------------------------------------------------
    add(Transition("GettingGarbled", tests=(("Medium", ArcExpr.const(2)),), inhibitors=(("Garbled", one),),
                   outputs=(("Garbled", one),), kind=imm("GettingGarbled")))
    add(Transition("EndingGarbled", inputs=(("Garbled", one),), inhibitors=(("Medium", one),),
                   kind=imm("EndingGarbled")))
    if isinstance(spec.channel, BurstNoise):
        add(Transition("EnteringErrorSpike", inputs=(("NotErrorSpike", one),),
                       outputs=(("ErrorSpike", one), ("Medium", one)),
                       kind=Exponential(spec.channel.spike_enter_rate)))
        add(Transition("ExitingErrorSpike", inputs=(("ErrorSpike", one), ("Medium", one)),
                       outputs=(("NotErrorSpike", one),),
                       kind=Exponential(spec.channel.spike_exit_rate)))

    # -- initial marking --------------------------------------------------------
    senders = spec.senders or tuple(range(1, spec.n_stations + 1))
    initial = {
        "Idle": {(s - 1, q): 1 for s in senders for q in range(spec.n_priorities)},
        "WaitForResponse": {(s, 0, 0, 0): 1 for s in range(spec.n_stations)},
        "BackoffMappings": {
            (q - 1, t - 1, v): 1
            for (q, t), k in spec.mapping.table
            for v in range(backoff_stage_bounds(k)[1])
        },
    }
    if isinstance(spec.channel, BurstNoise):
        initial["NotErrorSpike"] = {(): 1}
    return Net(C.all, places, trs, initial, name=f"{spec.variant.value}-N{spec.n_stations}")


def build_80211p(spec: NetworkSpec) -> Net:
    if spec.variant is not Variant.EDCA:
        raise ValueError("build_80211p needs an 80211p network spec")
    return _build(spec)


def build_80211(spec: NetworkSpec) -> Net:
    if spec.variant is not Variant.LEGACY:
        raise ValueError("build_80211 needs an 80211 network spec")
    return _build(spec)


def build(spec: NetworkSpec) -> Net:
    return build_80211p(spec) if spec.variant is Variant.EDCA else build_80211(spec)
