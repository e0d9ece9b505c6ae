import pytest

from oracles import ProtocolInvariants
from ssnmac.mac import (
    BurstNoise, Ideal, MacParams, NetworkSpec, Poisson, Saturated, Variant, build, build_80211,
    build_80211p, cw_window, default_bm0,
)
from ssnmac.ssn import SimConfig, enabled_instances, run_trace, simulate


def edca(**kw):
    return NetworkSpec(variant=Variant.EDCA, **kw)


def legacy(**kw):
    return NetworkSpec(variant=Variant.LEGACY, **kw)


def test_edca_initial_marking():
    m = build_80211p(edca()).initial_marking()
    assert m["Idle"].total() == 8
    assert m["WaitForResponse"].total() == 2
    assert m["NotErrorSpike"].total() == 0


def test_legacy_initial_marking():
    net = build_80211(legacy())
    m = net.initial_marking()
    assert m["Idle"].total() == 2
    names = {t.name for t in net.transitions}
    assert "WaitDIFS" in names and "InternalCollision" not in names
    assert not any(n.startswith("WaitAIFS") for n in names)


def test_builders_reject_wrong_variant():
    with pytest.raises(ValueError):
        build_80211p(legacy())
    with pytest.raises(ValueError):
        build_80211(edca())


def test_spec_validation():
    with pytest.raises(ValueError):
        NetworkSpec(n_stations=1)
    with pytest.raises(ValueError):
        Poisson(0)
    with pytest.raises(ValueError):
        BurstNoise(0.01, 0)
    with pytest.raises(ValueError):
        NetworkSpec(variant=Variant.LEGACY, mapping=default_bm0())
    with pytest.raises(ValueError):
        NetworkSpec(senders=(3,))


def test_traffic_targets_next_station():
    s = edca(n_stations=3)
    assert [s.target(i) for i in (1, 2, 3)] == [2, 3, 1]


def test_ideal_channel_has_no_spike_transition():
    net = build(edca())
    names = {t.name for t in net.transitions}
    assert "EnteringErrorSpike" not in names
    en = enabled_instances(net, net.initial_marking())
    assert all(i.transition != "EnteringErrorSpike" for i in en)


def test_noisy_channel_starts_outside_spike():
    net = build(legacy(channel=BurstNoise(0.01, 0.1)))
    m = net.initial_marking()
    assert m["NotErrorSpike"].total() == 1
    assert any(i.transition == "EnteringErrorSpike" for i in enabled_instances(net, m))


def test_bm0_marking_size():
    m = build(edca()).initial_marking()
    expected = sum(cw_window(p, t)[1] for (p, t), _ in default_bm0().table)
    assert m["BackoffMappings"].total() == expected


def test_poisson_rate_in_kernel_units():
    net = build(legacy(traffic=Poisson(100.0)))
    assert net.transition("PacketArrival").kind.rate == pytest.approx(1e-3)


# the place a packet token must occupy right before each step of the transmit path
_PHASE_BEFORE = {"WaitAIFS": "Sense", "WaitDIFS": "Sense", "WaitSIFS": "Sense",
                 "BeingSending": "Vulnerable", "send": "Sending"}
_PHASE_AFTER = {"WaitAIFS": "Vulnerable", "WaitDIFS": "Vulnerable", "WaitSIFS": "Vulnerable",
                "BeingSending": "Sending", "send": "PacketSent"}


def _phase_key(name):
    for k in _PHASE_BEFORE:
        if name.startswith(k):
            return k
    return None


@pytest.mark.parametrize("variant", list(Variant))
def test_transmit_phase_order(variant):
    net = build(NetworkSpec(variant=variant))
    events, _ = run_trace(net, SimConfig(seed=0, horizon=5000, max_events=20), copy_markings=True)
    assert len(events) == 20
    before = net.initial_marking()
    checked = 0
    for ev in events:
        k = _phase_key(ev.transition)
        if k is not None:
            b = dict(zip(ev.var_names, ev.binding))
            pt = b.get("pt", {"sendRTS": 0, "sendCTS": 1, "sendDATA": 2, "sendACK": 3}.get(ev.transition, 0))
            tok = (b["sa"], b["sb"], b["p"], pt)
            assert before[_PHASE_BEFORE[k]].count(tok) >= 1, (ev.transition, tok)
            if ev.transition != "sendACK":
                assert ev.marking[_PHASE_AFTER[k]].count(tok) >= 1
            checked += 1
        before = ev.marking
    assert checked >= 3


def test_single_sender_never_garbles():
    net = build(legacy(senders=(1,)))
    events, _ = run_trace(net, SimConfig(seed=3, horizon=20000))
    names = [e.transition for e in events]
    assert "CorrectPacketAck" in names
    assert "GettingGarbled" not in names


class BackoffBounds:
    """Checks backoff counters against the window of the current attempt."""

    def __init__(self, mapping):
        self.mapping = mapping
        self.bad = []
        self.max_seen = 0

    def advance(self, dt, marking, start_time):
        pass

    def on_event(self, ev):
        m = ev.marking
        counts = {}
        for (sa, sb, p, tx), c in m["TxAttemptsCounter"].items():
            counts[(sa, sb, p)] = counts.get((sa, sb, p), 0) + c
            if c != 1 or tx + 1 > self.mapping.max_attempts(p + 1):
                self.bad.append(("counter", ev.time, sa, p, tx))
        if any(c > 1 for c in counts.values()):
            self.bad.append(("duplicate counter", ev.time))
        txs = {(sa, sb, p): tx for (sa, sb, p, tx) in m["TxAttemptsCounter"]}
        for place in ("BackoffCounter", "PausingBackoff"):
            for (sa, sb, p, b) in m[place]:
                hi = cw_window(p + 1, txs[(sa, sb, p)] + 1, self.mapping)[1]
                self.max_seen = max(self.max_seen, b + 1)
                if b + 1 > hi:
                    self.bad.append(("backoff", ev.time, b + 1, hi))

    def finalize(self, end, outcome):
        return self.bad


@pytest.mark.parametrize("variant", list(Variant))
def test_backoff_values_stay_in_window(variant):
    spec = NetworkSpec(variant=variant, n_stations=3)
    obs = BackoffBounds(spec.mapping)
    r = simulate(build(spec), SimConfig(seed=11, horizon=20000), [obs])
    assert r.results[0] == []
    assert obs.max_seen > 4


@pytest.mark.parametrize("variant", list(Variant))
@pytest.mark.parametrize("channel", [Ideal(), BurstNoise(0.01, 0.1)])
def test_protocol_invariants(variant, channel):
    spec = NetworkSpec(variant=variant, n_stations=3, channel=channel)
    inv = ProtocolInvariants(3, spec.n_priorities, not isinstance(channel, Ideal))
    simulate(build(spec), SimConfig(seed=1, horizon=5000), [inv])
    assert inv.events > 100
    assert inv.violations == []


def test_longer_data_changes_send_delay():
    net = build(legacy(params=MacParams(data=84)))
    assert net.transition("sendDATA").kind.delay == 84


def test_immediate_priority_override():
    net = build(edca(immediate_priorities=(("InternalCollision", 1),)))
    assert net.transition("InternalCollision").kind.priority == 1
    with pytest.raises(ValueError):
        edca(immediate_priorities=(("NoSuchTransition", 1),))


def test_saturated_arrival_is_immediate():
    assert build(edca(traffic=Saturated())).transition("PacketArrival").is_immediate
