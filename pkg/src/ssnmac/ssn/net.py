"""Net structure: places, transitions, timing kinds and the text dump."""
from __future__ import annotations

from dataclasses import dataclass, field

from .colors import ColorClass, ColorDomain
from .expr import (
    AllOf, ArcExpr, Complement, Const, Eq, Guard, InSubclass, Lt, Neq, Pred,
    SameSubclass, Succ, TRUE, Var,
)
from .multiset import Marking, Multiset


class NetDefinitionError(ValueError):
    """Raised when a net is structurally ill-formed."""


@dataclass(frozen=True)
class Immediate:
    priority: int = 1
    weight: float = 1.0

    def __post_init__(self):
        if self.priority < 0 or not self.weight > 0:
            raise NetDefinitionError("immediate transitions need priority >= 0 and weight > 0")


@dataclass(frozen=True)
class Exponential:
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise NetDefinitionError(f"exponential rate must be positive, got {self.rate}")


@dataclass(frozen=True)
class Deterministic:
    delay: float

    def __post_init__(self):
        if not self.delay > 0:
            raise NetDefinitionError(f"deterministic delay must be positive, got {self.delay}")


@dataclass(frozen=True)
class Place:
    name: str
    domain: ColorDomain


@dataclass(frozen=True)
class Transition:
    name: str
    variables: tuple = ()          # ((name, ColorClass), ...)
    guard: Guard = TRUE
    inputs: tuple = ()             # ((place name, ArcExpr), ...)
    outputs: tuple = ()
    tests: tuple = ()
    inhibitors: tuple = ()
    kind: object = field(default_factory=Immediate)

    @property
    def var_classes(self) -> dict:
        return dict(self.variables)

    @property
    def var_names(self) -> tuple:
        return tuple(v for v, _ in self.variables)

    @property
    def is_immediate(self) -> bool:
        return isinstance(self.kind, Immediate)


class Net:
    """An immutable stochastic symmetric net.

    ``initial`` maps place names to a :class:`Multiset` or to a plain
    ``{token: count}`` dict.  Everything is validated here so the simulator can
    assume well-formed input.
    """

    def __init__(self, classes, places, transitions, initial=None, name="net"):
        self.name = name
        self.classes = tuple(classes)
        self.places = tuple(places)
        self.transitions = tuple(transitions)
        self.place_index = {p.name: i for i, p in enumerate(self.places)}
        self.transition_index = {t.name: i for i, t in enumerate(self.transitions)}
        if len(self.place_index) != len(self.places):
            raise NetDefinitionError("duplicate place names")
        if len(self.transition_index) != len(self.transitions):
            raise NetDefinitionError("duplicate transition names")
        if len({c.name for c in self.classes}) != len(self.classes):
            raise NetDefinitionError("duplicate color class names")
        for t in self.transitions:
            _validate_transition(self, t)
        self._initial = self._make_marking(initial or {})
        self._compiled = None

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_compiled"] = None
        return state

    def place(self, name) -> Place:
        return self.places[self.place_index[name]]

    def transition(self, name) -> Transition:
        return self.transitions[self.transition_index[name]]

    def initial_marking(self) -> Marking:
        return self._initial.copy()

    def _make_marking(self, initial) -> Marking:
        m = Marking([p.name for p in self.places])
        for pname, bag in initial.items():
            if pname not in self.place_index:
                raise NetDefinitionError(f"initial marking names unknown place {pname!r}")
            dom = self.place(pname).domain
            bag = bag if isinstance(bag, Multiset) else Multiset(bag)
            for tok, n in bag.items():
                if not dom.is_token(tok):
                    raise NetDefinitionError(f"token {tok!r} does not belong to {pname}'s domain {dom}")
                m[pname].add(tok, n)
        return m

    def dump(self) -> str:
        return dump_net(self)


def _atom_class(atom, tvars, t, where):
    if isinstance(atom, Var):
        return _lookup(tvars, atom.name, t, where)
    if isinstance(atom, (Succ, Pred)):
        cls = _lookup(tvars, atom.name, t, where)
        if not cls.ordered:
            raise NetDefinitionError(f"{t.name}: {where}: successor/predecessor of {atom.name} on unordered class {cls.name}")
        return cls
    if isinstance(atom, AllOf):
        if atom.subclass is not None:
            try:
                atom.cls.subclass_index(atom.subclass)
            except ValueError as exc:
                raise NetDefinitionError(f"{t.name}: {where}: {exc}") from None
        return atom.cls
    if isinstance(atom, Complement):
        cls = _lookup(tvars, atom.name, t, where)
        if cls != atom.cls:
            raise NetDefinitionError(f"{t.name}: {where}: {atom.cls.name}.All - {atom.name} mixes classes")
        return cls
    if isinstance(atom, Const):
        try:
            atom.value
        except ValueError as exc:
            raise NetDefinitionError(f"{t.name}: {where}: {exc}") from None
        return atom.cls
    raise NetDefinitionError(f"{t.name}: {where}: unknown atom {atom!r}")


def _lookup(tvars, name, t, where):
    if name not in tvars:
        raise NetDefinitionError(f"{t.name}: {where}: undeclared variable {name!r}")
    return tvars[name]


def _validate_transition(net, t):
    tvars = dict(t.variables)
    if len(tvars) != len(t.variables):
        raise NetDefinitionError(f"{t.name}: duplicate variable names")
    if not isinstance(t.kind, (Immediate, Exponential, Deterministic)):
        raise NetDefinitionError(f"{t.name}: unknown transition kind {t.kind!r}")
    for role in ("inputs", "outputs", "tests", "inhibitors"):
        for pname, expr in getattr(t, role):
            where = f"{role[:-1]} arc {pname}"
            if pname not in net.place_index:
                raise NetDefinitionError(f"{t.name}: {where}: unknown place")
            if not isinstance(expr, ArcExpr) or not expr.terms:
                raise NetDefinitionError(f"{t.name}: {where}: empty arc expression")
            comps = net.place(pname).domain.components
            for coef, atoms in expr.terms:
                if coef < 1:
                    raise NetDefinitionError(f"{t.name}: {where}: non-positive coefficient")
                if len(atoms) != len(comps):
                    raise NetDefinitionError(f"{t.name}: {where}: tuple arity {len(atoms)} != domain arity {len(comps)}")
                for a, c in zip(atoms, comps):
                    if _atom_class(a, tvars, t, where) != c:
                        raise NetDefinitionError(f"{t.name}: {where}: atom {a} is not of class {c.name}")
    for a in t.guard.atoms:
        cx = _lookup(tvars, a.x, t, "guard")
        if isinstance(a, (Eq, Neq)):
            cy = a.y.cls if isinstance(a.y, Const) else _lookup(tvars, a.y, t, "guard")
            if isinstance(a.y, Const):
                _atom_class(a.y, tvars, t, "guard")
        elif isinstance(a, (SameSubclass, Lt)):
            cy = _lookup(tvars, a.y, t, "guard")
        elif isinstance(a, InSubclass):
            cy = cx
            try:
                cx.subclass_index(a.subclass)
            except ValueError as exc:
                raise NetDefinitionError(f"{t.name}: guard: {exc}") from None
        else:
            raise NetDefinitionError(f"{t.name}: unknown guard atom {a!r}")
        if cx != cy:
            raise NetDefinitionError(f"{t.name}: guard {a} compares different classes")


# --- text dump -------------------------------------------------------------

def _fmt_atom(a) -> str:
    if isinstance(a, Var):
        return a.name
    if isinstance(a, Succ):
        return f"{a.name}++"
    if isinstance(a, Pred):
        return f"{a.name}--"
    if isinstance(a, AllOf):
        return f"{a.cls.name}.All" if a.subclass is None else f"{a.cls.name}.{a.cls.subclasses[a.cls.subclass_index(a.subclass)][0]}"
    if isinstance(a, Complement):
        return f"{a.cls.name}.All-{a.name}"
    if isinstance(a, Const):
        return a.cls.label(a.value)
    return repr(a)


def format_expr(expr: ArcExpr) -> str:
    parts = []
    for coef, atoms in expr.terms:
        body = "<" + ",".join(_fmt_atom(a) for a in atoms) + ">"
        parts.append(body if coef == 1 else f"{coef}{body}")
    return " + ".join(parts)


def _fmt_guard_atom(a) -> str:
    y = getattr(a, "y", None)
    ys = _fmt_atom(y) if isinstance(y, Const) else y
    if isinstance(a, Eq):
        return f"{a.x}={ys}"
    if isinstance(a, Neq):
        return f"{a.x}!={ys}"
    if isinstance(a, Lt):
        return f"{a.x}<{ys}"
    if isinstance(a, InSubclass):
        return f"{a.x} in {a.subclass}"
    return f"d({a.x})=d({a.y})"


def _fmt_kind(k) -> str:
    if isinstance(k, Immediate):
        return f"immediate(priority={k.priority}, weight={k.weight:g})"
    if isinstance(k, Exponential):
        return f"exponential(rate={k.rate:.12g})"
    return f"deterministic(delay={k.delay:.12g})"


def dump_net(net: Net) -> str:
    """Line-oriented, diff-friendly description of a net."""
    lines = [f"net {net.name}"]
    for c in net.classes:
        subs = " ".join(f"{n}=[{c.label(lo)}..{c.label(hi)}]" for n, lo, hi in c.subclasses)
        lines.append(f"class {c.name} size={c.size} ordered={'yes' if c.ordered else 'no'} {subs}")
    init = net.initial_marking()
    for p in net.places:
        bag = init[p.name]
        toks = " + ".join(
            (f"{n}" if n > 1 else "") + p.domain.format(tok) for tok, n in sorted(bag.items())
        )
        lines.append(f"place {p.name} : {p.domain}" + (f" = {toks}" if toks else ""))
    for t in net.transitions:
        vs = ",".join(f"{v}:{c.name}" for v, c in t.variables)
        lines.append(f"transition {t.name} [{vs}] {_fmt_kind(t.kind)}")
        if t.guard.atoms:
            lines.append("  guard " + " and ".join(_fmt_guard_atom(a) for a in t.guard.atoms))
        for role in ("inputs", "tests", "inhibitors", "outputs"):
            for pname, expr in getattr(t, role):
                lines.append(f"  {role[:-1]:<9} {pname} {format_expr(expr)}")
    return "\n".join(lines) + "\n"
