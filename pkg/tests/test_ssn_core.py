import math
import random

import pytest

from nets import ONE, arrival_net, exp_net
from oracles import brute_force_enabled, random_net
from ssnmac.ssn import (
    AllOf, ArcExpr, ColorClass, ColorDomain, Complement, Const, Deterministic, Eq, Exponential,
    Immediate, InSubclass, Marking, Multiset, NEUTRAL, Neq, Net, NetDefinitionError, NotEnabledError,
    Place, Pred, SameSubclass, SimConfig, Simulator, Succ, T, Transition, TransitionInstance,
    enabled_instances, eval_arc, fire, guard, guard_satisfied, run_trace, simulate, trajectory_rng,
)
from ssnmac.ssn.simulator import COMPLETED, DEADLOCK, TRUNCATED

St2 = ColorClass("St", 2, labels=("st1", "st2"))
PT = ColorClass("PT", 4, ordered=True, labels=("rts", "cts", "data", "ack"))
B = ColorClass("B", 8, ordered=True, subclasses=(("bs1", 0, 3), ("bs2", 4, 7)), prefix="b")


# -- colors --------------------------------------------------------------------

def test_class_labels_and_lookup():
    assert B.labels[:2] == ("b1", "b2")
    assert B.index("b5") == 4
    assert PT.index(2) == 2
    with pytest.raises(ValueError):
        PT.index("nack")


def test_successor_is_circular():
    assert [PT.succ(i) for i in range(4)] == [1, 2, 3, 0]
    assert PT.pred(0) == 3


def test_successor_needs_ordered_class():
    with pytest.raises(TypeError):
        St2.succ(0)


@pytest.mark.parametrize("subs", [
    (("a", 0, 2), ("b", 4, 7)),      # gap
    (("a", 0, 4), ("b", 4, 7)),      # overlap
    (("a", 0, 3),),                  # short
])
def test_subclasses_must_tile(subs):
    with pytest.raises(ValueError):
        ColorClass("X", 8, subclasses=subs)


def test_subclass_queries():
    assert B.subclass_of(3) == 0 and B.subclass_of(4) == 1
    assert list(B.subclass_range("bs2")) == [4, 5, 6, 7]


def test_domain_tokens():
    d = ColorDomain((St2, PT))
    assert d.is_token((1, 3))
    assert not d.is_token((2, 0))
    assert not d.is_token((0,))
    assert d.format((0, 3)) == "<st1,ack>"
    assert str(NEUTRAL) == "neutral"


# -- multisets -----------------------------------------------------------------

def test_multiset_add_remove_inverse():
    m = Multiset({("a",): 2})
    m.add(("b",), 3)
    m.remove(("b",), 3)
    assert m == {("a",): 2}
    assert ("b",) not in m


def test_multiset_remove_too_many():
    m = Multiset({("a",): 1})
    with pytest.raises(ValueError):
        m.remove(("a",), 2)


def test_multiset_arithmetic():
    a = Multiset({(0,): 1, (1,): 2})
    b = Multiset({(1,): 1})
    assert (a + b) == {(0,): 1, (1,): 3}
    assert (a - b) == {(0,): 1, (1,): 1}
    assert b <= a and not a <= b
    assert a.total() == 3 and len(a) == 2


def test_marking_by_name_and_index():
    m = Marking(["P", "Q"])
    m["Q"].add((), 2)
    assert m[1].total() == 2
    c = m.copy()
    c["Q"].add(())
    assert m["Q"].total() == 2


# -- arc expressions -----------------------------------------------------------

def test_eval_tuple_from_binding():
    e = T("sa", "sb", "p", Const(PT, "rts"))
    assert eval_arc(e, {"sa": 0, "sb": 1, "p": 0}) == {(0, 1, 0, 0): 1}


def test_eval_all_of_class():
    assert eval_arc(T(AllOf(St2)), {}) == {(0,): 1, (1,): 1}


def test_eval_successor_wraps():
    e = T(Succ("pt"))
    assert eval_arc(e, {"pt": PT.index("ack")}, {"pt": PT}) == {(PT.index("rts"),): 1}


def test_eval_predecessor_and_complement():
    assert eval_arc(T(Pred("b")), {"b": 0}, {"b": B}) == {(7,): 1}
    assert eval_arc(T(Complement(St2, "x")), {"x": 0}) == {(1,): 1}


def test_eval_subclass_and_coefficients():
    e = 2 * T(AllOf(B, "bs1")) + T(Const(B, "b1"))
    got = eval_arc(e, {})
    assert got.count((0,)) == 3
    assert got.count((3,)) == 2
    assert got.count((4,)) == 0


def test_eval_unbound_variable():
    with pytest.raises(KeyError):
        eval_arc(T("sa"), {})


def test_successor_on_unordered_class_rejected_at_definition():
    t = Transition("t", (("x", St2),), inputs=(("P", T(Succ("x"))),))
    with pytest.raises(NetDefinitionError):
        Net((St2,), (Place("P", ColorDomain((St2,))),), (t,))


# -- guards --------------------------------------------------------------------

def test_guard_neq_false_on_equal():
    assert not guard_satisfied(guard(Neq("sa", "sb")), {"sa": 0, "sb": 0})


def test_empty_guard_true():
    assert guard_satisfied(guard(), {})


def test_in_subclass():
    assert not guard_satisfied(guard(InSubclass("b", "bs1")), {"b": B.index("b5")}, {"b": B})
    assert guard_satisfied(guard(InSubclass("b", "bs1")), {"b": B.index("b4")}, {"b": B})


def test_same_subclass_and_constants():
    vc = {"x": B, "y": B}
    assert guard_satisfied(guard(SameSubclass("x", "y")), {"x": 0, "y": 3}, vc)
    assert not guard_satisfied(guard(SameSubclass("x", "y")), {"x": 0, "y": 4}, vc)
    assert guard_satisfied(guard(Eq("x", Const(B, "b2"))), {"x": 1})


def test_guard_class_mismatch_rejected():
    t = Transition("t", (("x", St2), ("y", PT)), guard(Eq("x", "y")), inputs=(("P", T("x")),))
    with pytest.raises(NetDefinitionError):
        Net((St2, PT), (Place("P", ColorDomain((St2,))),), (t,))


# -- enabling and firing -------------------------------------------------------

def test_packet_arrival_two_instances():
    net = arrival_net()
    got = {str(i) for i in enabled_instances(net, net.initial_marking())}
    assert got == {"PacketArrival[sa=0,sb=1,p=0]", "PacketArrival[sa=1,sb=0,p=0]"}


def test_empty_marking_enables_nothing():
    net = arrival_net()
    assert enabled_instances(net, Marking([p.name for p in net.places])) == []


def test_enabled_matches_brute_force_on_random_nets():
    for seed in range(30):
        net = random_net(random.Random(seed))
        m = net.initial_marking()
        assert {(i.transition, i.values) for i in enabled_instances(net, m)} == brute_force_enabled(net, m)


def test_fire_packet_arrival():
    net = arrival_net()
    m0 = net.initial_marking()
    inst = TransitionInstance.of(net.transition("PacketArrival"), (0, 1, 0))
    m1 = fire(net, m0, inst)
    assert m1["Idle"] == {(1, 0): 1}
    assert m1["Sense"] == {(0, 1, 0, 0): 1}
    assert m0["Idle"].total() == 2    # input marking untouched


def test_fire_self_loop_is_identity():
    t = Transition("loop", (("x", St2),), inputs=(("P", T("x")),), outputs=(("P", T("x")),))
    net = Net((St2,), (Place("P", ColorDomain((St2,))),), (t,), {"P": {(0,): 1}})
    m = net.initial_marking()
    assert fire(net, m, TransitionInstance.of(t, (0,))) == m


def test_fire_not_enabled_is_an_error():
    net = arrival_net()
    with pytest.raises(NotEnabledError):
        fire(net, net.initial_marking(), TransitionInstance.of(net.transition("PacketArrival"), (0, 0, 0)))


def test_test_and_inhibitor_arcs():
    t = Transition("t", inputs=(("A", ONE),), tests=(("G", ONE),), inhibitors=(("H", 2 * ONE),),
                   outputs=(("C", ONE),))
    places = tuple(Place(n, NEUTRAL) for n in "AGHC")
    net = Net((), places, (t,), {"A": {(): 1}, "G": {(): 1}, "H": {(): 1}})
    m = net.initial_marking()
    assert len(enabled_instances(net, m)) == 1
    m2 = fire(net, m, enabled_instances(net, m)[0])
    assert m2["G"].total() == 1 and m2["H"].total() == 1   # read arcs leave tokens alone
    m["H"].add(())
    assert enabled_instances(net, m) == []                  # 2 tokens reach the inhibitor weight
    m["H"]._d.clear()
    m["G"]._d.clear()
    assert enabled_instances(net, m) == []                  # test arc unsatisfied


def test_dump_is_stable():
    net = arrival_net()
    assert net.dump() == arrival_net().dump()
    assert "transition PacketArrival" in net.dump()


def test_net_pickles_without_compiled_code():
    import pickle
    net = arrival_net()
    enabled_instances(net, net.initial_marking())
    clone = pickle.loads(pickle.dumps(net))
    assert clone.dump() == net.dump()


# -- simulation ----------------------------------------------------------------

def test_exponential_mean_time_to_fire():
    net = exp_net(1.0)
    rng = trajectory_rng(123)
    total = 0.0
    n = 100_000
    for _ in range(n):
        sim = Simulator(net, rng)
        sim.step(math.inf)
        total += sim.time
    assert abs(total / n - 1.0) < 0.01


def test_immediate_fires_without_time_advance():
    t = Transition("now", inputs=(("P", ONE),), kind=Immediate())
    net = Net((), (Place("P", NEUTRAL),), (t,), {"P": {(): 1}})
    events, outcome = run_trace(net, SimConfig(horizon=10))
    assert [e.time for e in events] == [0.0]
    assert outcome == DEADLOCK


def test_higher_priority_immediate_fires_first():
    hi = Transition("hi", inputs=(("P", ONE),), kind=Immediate(priority=2))
    lo = Transition("lo", inputs=(("P", ONE),), kind=Immediate(priority=1, weight=100.0))
    net = Net((), (Place("P", NEUTRAL),), (hi, lo), {"P": {(): 1}})
    for seed in range(50):
        events, _ = run_trace(net, SimConfig(seed=seed, horizon=1))
        assert [e.transition for e in events] == ["hi"]


def test_immediate_weights_split_choices():
    a = Transition("a", inputs=(("P", ONE),), kind=Immediate(weight=3.0))
    b = Transition("b", inputs=(("P", ONE),), kind=Immediate(weight=1.0))
    net = Net((), (Place("P", NEUTRAL),), (a, b), {"P": {(): 1}})
    hits = sum(run_trace(net, SimConfig(seed=s, horizon=1))[0][0].transition == "a" for s in range(4000))
    # 0.75 +- 4 sigma
    assert abs(hits / 4000 - 0.75) < 4 * math.sqrt(0.75 * 0.25 / 4000)


def test_horizon_zero_gives_no_events():
    r = simulate(exp_net(), SimConfig(horizon=0.0))
    assert r.n_events == 0 and r.outcome == COMPLETED


def test_same_seed_same_trajectory():
    from ssnmac.mac import NetworkSpec, build
    net = build(NetworkSpec(n_stations=2))
    a = simulate(net, SimConfig(seed=5, horizon=500), record_digest=True)
    b = simulate(net, SimConfig(seed=5, horizon=500), record_digest=True)
    c = simulate(net, SimConfig(seed=6, horizon=500), record_digest=True)
    assert a.digest == b.digest != c.digest


def test_max_events_truncates():
    t = Transition("tick", inputs=(("P", ONE),), outputs=(("P", ONE),), kind=Deterministic(1.0))
    net = Net((), (Place("P", NEUTRAL),), (t,), {"P": {(): 1}})
    r = simulate(net, SimConfig(horizon=100, max_events=5))
    assert r.outcome == TRUNCATED and r.n_events == 5


def test_deterministic_clock_restarts_after_disabling():
    # 'sense' needs 3 idle time units; 'busy' occupies the place at t=2 for 1 unit
    sense = Transition("sense", inputs=(("S", ONE),), inhibitors=(("M", ONE),), outputs=(("D", ONE),),
                       kind=Deterministic(3.0))
    occupy = Transition("occupy", inputs=(("K", ONE),), outputs=(("M", ONE),), kind=Deterministic(2.0))
    free = Transition("free", inputs=(("M", ONE),), kind=Deterministic(1.0))
    places = tuple(Place(n, NEUTRAL) for n in ("S", "M", "D", "K"))
    net = Net((), places, (sense, occupy, free), {"S": {(): 1}, "K": {(): 1}})
    events, _ = run_trace(net, SimConfig(horizon=20))
    assert [(e.time, e.transition) for e in events] == [(2.0, "occupy"), (3.0, "free"), (6.0, "sense")]


def test_simultaneous_deadlines_fire_in_random_order():
    a = Transition("a", inputs=(("A", ONE),), kind=Deterministic(1.0))
    b = Transition("b", inputs=(("B", ONE),), kind=Deterministic(1.0))
    net = Net((), (Place("A", NEUTRAL), Place("B", NEUTRAL)), (a, b), {"A": {(): 1}, "B": {(): 1}})
    firsts = {run_trace(net, SimConfig(seed=s, horizon=5))[0][0].transition for s in range(40)}
    assert firsts == {"a", "b"}


def test_event_times_nondecreasing_and_no_pending_immediates():
    from ssnmac.mac import NetworkSpec, build
    net = build(NetworkSpec(variant="80211", n_stations=3))
    sim = Simulator(net, trajectory_rng(9))
    last = 0.0
    for _ in range(3000):
        pending = sim.immediate_enabled()
        before = sim.time
        if sim.step(5000) is None:
            break
        assert sim.time >= last
        if pending:
            assert sim.time == before      # an enabled immediate always fires first
        else:
            imm = [i for i in enabled_instances(net, sim.marking) if net.transition(i.transition).is_immediate]
            assert sim.immediate_enabled() == bool(imm)
        last = sim.time
