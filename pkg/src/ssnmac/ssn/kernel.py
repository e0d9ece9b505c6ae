"""Compiled enabling and firing.

Each transition is turned into two generated functions: one that enumerates
every enabled binding for a marking and one that fires a binding in place.
Enumeration unifies input/test tuples against the tokens actually present
instead of walking the full cross product of variable classes, so cost
tracks the size of the marking rather than the size of the color domains.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

from .expr import AllOf, Complement, Const, Eq, InSubclass, Lt, Neq, Pred, SameSubclass, Succ, Var
from .multiset import Marking, Multiset
from .net import Immediate, Net, Transition


@dataclass(frozen=True)
class TransitionInstance:
    """A transition paired with one binding of its variables."""

    transition: str
    binding: tuple  # ((var, element index), ...) in declaration order

    @classmethod
    def of(cls, t: Transition, values) -> "TransitionInstance":
        return cls(t.name, tuple(zip(t.var_names, values)))

    def as_dict(self) -> dict:
        return dict(self.binding)

    @property
    def values(self) -> tuple:
        return tuple(v for _, v in self.binding)

    def __getitem__(self, var):
        for k, v in self.binding:
            if k == var:
                return v
        raise KeyError(var)

    def __str__(self):
        inner = ",".join(f"{k}={v}" for k, v in self.binding)
        return f"{self.transition}[{inner}]"


class NotEnabledError(RuntimeError):
    """Firing was attempted for an instance that is not enabled."""


_SIMPLE = (Var, Succ, Pred, Const)


def _simple(atoms) -> bool:
    return all(isinstance(a, _SIMPLE) for a in atoms)


class CompiledTransition:
    def __init__(self, net: Net, index: int, t: Transition, static_places: frozenset):
        self.index = index
        self.t = t
        self.name = t.name
        self.var_names = t.var_names
        self.vpos = {v: i for i, v in enumerate(self.var_names)}
        self.vcls = [c for _, c in t.variables]
        self.immediate = isinstance(t.kind, Immediate)
        self.priority = t.kind.priority if self.immediate else -1
        self.weight = t.kind.weight if self.immediate else 0.0
        self.kind = t.kind
        pidx = net.place_index
        self.reads = frozenset(pidx[p] for role in ("inputs", "tests", "inhibitors") for p, _ in getattr(t, role))
        self.writes = frozenset(pidx[p] for role in ("inputs", "outputs") for p, _ in getattr(t, role))
        self._net_places = pidx
        self._static = static_places
        ns = {"Multiset": Multiset, "product": product}
        src_enum = self._gen_enumerate(ns)
        src_fire = self._gen_fire(ns)
        self.source = src_enum + "\n" + src_fire
        exec(compile(self.source, f"<ssn:{t.name}>", "exec"), ns)
        self.enumerate = ns["_enum"]
        self.fire = ns["_fire"]

    # -- helpers for generated code -----------------------------------------

    def _tok_expr(self, atoms) -> str:
        parts = []
        for a in atoms:
            if isinstance(a, Var):
                parts.append(f"v{self.vpos[a.name]}")
            elif isinstance(a, Const):
                parts.append(str(a.value))
            elif isinstance(a, Succ):
                i = self.vpos[a.name]
                parts.append(f"(v{i}+1)%{self.vcls[i].size}")
            elif isinstance(a, Pred):
                i = self.vpos[a.name]
                parts.append(f"(v{i}-1)%{self.vcls[i].size}")
            else:
                raise AssertionError(a)
        return "(" + "".join(p + "," for p in parts) + ")"

    def _values_expr(self, a) -> str:
        """Python expression for the iterable of values of one atom."""
        if isinstance(a, AllOf):
            r = range(a.cls.size) if a.subclass is None else a.cls.subclass_range(a.subclass)
            return f"range({r.start},{r.stop})"
        if isinstance(a, Complement):
            i = self.vpos[a.name]
            return f"[_c for _c in range({a.cls.size}) if _c != v{i}]"
        return self._tok_expr((a,))

    def _term_tokens_expr(self, atoms) -> str:
        if _simple(atoms):
            return "(" + self._tok_expr(atoms) + ",)"
        return "product(" + "".join(self._values_expr(a) + "," for a in atoms) + ")"

    def _guard_expr(self, a) -> str:
        x = f"v{self.vpos[a.x]}"
        y = getattr(a, "y", None)
        if isinstance(y, Const):
            ys = str(y.value)
        elif isinstance(y, str):
            ys = f"v{self.vpos[y]}"
        if isinstance(a, Eq):
            return f"{x} == {ys}"
        if isinstance(a, Neq):
            return f"{x} != {ys}"
        if isinstance(a, Lt):
            return f"{x} < {ys}"
        if isinstance(a, InSubclass):
            cls = self.vcls[self.vpos[a.x]]
            r = cls.subclass_range(a.subclass)
            return f"{r.start} <= {x} < {r.stop}"
        if isinstance(a, SameSubclass):
            cls = self.vcls[self.vpos[a.x]]
            name = f"_sub_{cls.name}"
            self._ns[name] = cls._sub_of
            return f"{name}[{x}] == {name}[{ys}]"
        raise AssertionError(a)

    @staticmethod
    def _guard_vars(a):
        out = {a.x}
        if isinstance(getattr(a, "y", None), str):
            out.add(a.y)
        return out

    # -- enumeration ----------------------------------------------------------

    def _gen_enumerate(self, ns) -> str:
        self._ns = ns
        t = self.t
        pidx = self._net_places
        L = ["def _enum(bags):", "    out = []"]
        depth = [1]
        bound = set()

        def emit(s):
            L.append("    " * depth[0] + s)

        def fail():
            return "continue" if depth[0] > 1 else "return out"

        pending = list(t.guard.atoms)

        def flush_guards():
            keep = []
            for a in pending:
                if self._guard_vars(a) <= bound:
                    emit(f"if not ({self._guard_expr(a)}): {fail()}")
                else:
                    keep.append(a)
            pending[:] = keep

        # variables pinned to a constant by the guard
        for a in list(pending):
            if isinstance(a, Eq) and isinstance(a.y, Const) and a.x not in bound:
                emit(f"v{self.vpos[a.x]} = {a.y.value}")
                bound.add(a.x)
                pending.remove(a)
        flush_guards()

        patterns = []
        for role in ("inputs", "tests"):
            for pname, expr in getattr(t, role):
                for coef, atoms in expr.terms:
                    if _simple(atoms) and atoms:
                        patterns.append((pidx[pname], coef, atoms, role))
                    elif not atoms:
                        patterns.append((pidx[pname], coef, atoms, role))

        def atom_vars(atoms):
            return {a.name for a in atoms if not isinstance(a, Const)}

        while patterns:
            def score(p):
                k, coef, atoms, role = p
                vs = atom_vars(atoms)
                return (vs <= bound, k not in self._static, role == "inputs", len(vs & bound), len(vs))
            patterns.sort(key=score, reverse=True)
            k, coef, atoms, role = patterns.pop(0)
            vs = atom_vars(atoms)
            if vs <= bound:
                emit(f"if bags[{k}]._d.get({self._tok_expr(atoms)}, 0) < {coef}: {fail()}")
            elif k in self._static:
                for v in sorted(vs - bound, key=self.vpos.get):
                    i = self.vpos[v]
                    emit(f"for v{i} in range({self.vcls[i].size}):")
                    depth[0] += 1
                    bound.add(v)
                emit(f"if bags[{k}]._d.get({self._tok_expr(atoms)}, 0) < {coef}: continue")
            else:
                emit(f"for _tok, _n in bags[{k}]._d.items():")
                depth[0] += 1
                if coef > 1:
                    emit(f"if _n < {coef}: continue")
                for pos, a in enumerate(atoms):
                    if isinstance(a, Const):
                        emit(f"if _tok[{pos}] != {a.value}: continue")
                        continue
                    i = self.vpos[a.name]
                    n = self.vcls[i].size
                    if a.name in bound:
                        if isinstance(a, Var):
                            emit(f"if _tok[{pos}] != v{i}: continue")
                        elif isinstance(a, Succ):
                            emit(f"if _tok[{pos}] != (v{i}+1)%{n}: continue")
                        else:
                            emit(f"if _tok[{pos}] != (v{i}-1)%{n}: continue")
                    else:
                        if isinstance(a, Var):
                            emit(f"v{i} = _tok[{pos}]")
                        elif isinstance(a, Succ):
                            emit(f"v{i} = (_tok[{pos}]-1)%{n}")
                        else:
                            emit(f"v{i} = (_tok[{pos}]+1)%{n}")
                        bound.add(a.name)
            flush_guards()

        for v in self.var_names:
            if v not in bound:
                i = self.vpos[v]
                emit(f"for v{i} in range({self.vcls[i].size}):")
                depth[0] += 1
                bound.add(v)
                flush_guards()
        assert not pending

        # full coverage checks where one-token-per-term matching is not enough
        for role in ("inputs", "tests"):
            per_place = {}
            for pname, expr in getattr(t, role):
                per_place.setdefault(pidx[pname], []).extend(expr.terms)
            for k, terms in per_place.items():
                if len(terms) == 1 and _simple(terms[0][1]):
                    continue
                emit("_dem = {}")
                for coef, atoms in terms:
                    emit(f"for _t in {self._term_tokens_expr(atoms)}: _dem[_t] = _dem.get(_t, 0) + {coef}")
                emit(f"_d = bags[{k}]._d")
                emit(f"if any(_d.get(_t, 0) < _m for _t, _m in _dem.items()): {fail()}")

        for pname, expr in t.inhibitors:
            k = pidx[pname]
            if len(expr.terms) == 1:
                coef, atoms = expr.terms[0]
                if _simple(atoms):
                    emit(f"if bags[{k}]._d.get({self._tok_expr(atoms)}, 0) >= {coef}: {fail()}")
                else:
                    emit(f"_d = bags[{k}]._d")
                    emit(f"if any(_d.get(_t, 0) >= {coef} for _t in {self._term_tokens_expr(atoms)}): {fail()}")
            else:
                emit("_dem = {}")
                for coef, atoms in expr.terms:
                    emit(f"for _t in {self._term_tokens_expr(atoms)}: _dem[_t] = _dem.get(_t, 0) + {coef}")
                emit(f"_d = bags[{k}]._d")
                emit(f"if any(_d.get(_t, 0) >= _m for _t, _m in _dem.items()): {fail()}")

        emit("out.append((" + "".join(f"v{i}," for i in range(len(self.var_names))) + "))")
        L.append("    return out")
        return "\n".join(L) + "\n"

    # -- firing -----------------------------------------------------------------

    def _gen_fire(self, ns) -> str:
        pidx = self._net_places
        args = "".join(f"v{i}, " for i in range(len(self.var_names)))
        L = [f"def _fire(bags, _b):", f"    ({args}) = _b" if self.var_names else "    pass"]
        for pname, expr in self.t.inputs:
            k = pidx[pname]
            L.append(f"    _d = bags[{k}]._d")
            for coef, atoms in expr.terms:
                L.append(f"    for _t in {self._term_tokens_expr(atoms)}:")
                L.append(f"        _n = _d[_t] - {coef}")
                L.append("        if _n: _d[_t] = _n")
                L.append("        else: del _d[_t]")
        for pname, expr in self.t.outputs:
            k = pidx[pname]
            L.append(f"    _d = bags[{k}]._d")
            for coef, atoms in expr.terms:
                L.append(f"    for _t in {self._term_tokens_expr(atoms)}: _d[_t] = _d.get(_t, 0) + {coef}")
        return "\n".join(L) + "\n"


class CompiledNet:
    def __init__(self, net: Net):
        written = set()
        for t in net.transitions:
            for role in ("inputs", "outputs"):
                written.update(net.place_index[p] for p, _ in getattr(t, role))
        static = frozenset(set(range(len(net.places))) - written)
        self.static_places = static
        self.transitions = [CompiledTransition(net, i, t, static) for i, t in enumerate(net.transitions)]
        self.readers = [[] for _ in net.places]
        for ct in self.transitions:
            for k in ct.reads:
                self.readers[k].append(ct.index)
        # transitions to re-examine after each transition fires
        self.affected = []
        for ct in self.transitions:
            aff = sorted({j for k in ct.writes for j in self.readers[k]})
            self.affected.append(aff)


def compiled(net: Net) -> CompiledNet:
    if net._compiled is None:
        net._compiled = CompiledNet(net)
    return net._compiled


def enabled_instances(net: Net, marking: Marking) -> list:
    """Every enabled (transition, binding) pair, in transition order."""
    cn = compiled(net)
    out = []
    for ct in cn.transitions:
        for b in ct.enumerate(marking.bags):
            out.append(TransitionInstance.of(ct.t, b))
    return out


def _binding_values(ct: CompiledTransition, instance: TransitionInstance) -> tuple:
    d = instance.as_dict()
    if set(d) != set(ct.var_names):
        raise NotEnabledError(f"binding of {instance} does not match the variables of {ct.name}")
    return tuple(d[v] for v in ct.var_names)


def is_enabled(net: Net, marking: Marking, instance: TransitionInstance) -> bool:
    ct = compiled(net).transitions[net.transition_index[instance.transition]]
    return _binding_values(ct, instance) in ct.enumerate(marking.bags)


def fire(net: Net, marking: Marking, instance: TransitionInstance) -> Marking:
    """Return the marking reached by firing ``instance``; the input is not modified."""
    ct = compiled(net).transitions[net.transition_index[instance.transition]]
    values = _binding_values(ct, instance)
    if values not in ct.enumerate(marking.bags):
        raise NotEnabledError(f"{instance} is not enabled")
    out = marking.copy()
    ct.fire(out.bags, values)
    return out
