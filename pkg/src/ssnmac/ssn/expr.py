"""Arc expressions and guards.

An arc expression is a linear combination of function tuples; each tuple
position is one of the atoms below.  Guards are conjunctions of atomic
predicates over the transition variables.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

from .colors import ColorClass
from .multiset import Multiset


# --- tuple atoms -----------------------------------------------------------

@dataclass(frozen=True)
class Var:
    """Projection: the value bound to a variable."""
    name: str


@dataclass(frozen=True)
class Succ:
    """Circular successor ``x++`` of an ordered-class variable."""
    name: str


@dataclass(frozen=True)
class Pred:
    """Circular predecessor ``x--`` of an ordered-class variable."""
    name: str


@dataclass(frozen=True)
class AllOf:
    """``C.All`` (or one static subclass of C when ``subclass`` is given)."""
    cls: ColorClass
    subclass: object = None


@dataclass(frozen=True)
class Complement:
    """``C.All - x``."""
    cls: ColorClass
    name: str


@dataclass(frozen=True)
class Const:
    """A single fixed element of a class, by label or index."""
    cls: ColorClass
    element: object

    @property
    def value(self) -> int:
        return self.cls.index(self.element)


def _atom(a):
    return Var(a) if isinstance(a, str) else a


def atom_vars(a) -> tuple:
    if isinstance(a, (Var, Succ, Pred, Complement)):
        return (a.name,)
    return ()


@dataclass(frozen=True)
class ArcExpr:
    """Sum of ``coef * <atom, ..., atom>`` terms."""

    terms: tuple = ()

    @classmethod
    def tuple(cls, *atoms, coef: int = 1) -> "ArcExpr":
        if coef < 1:
            raise ValueError("arc coefficients must be positive")
        return cls(((coef, tuple(_atom(a) for a in atoms)),))

    @classmethod
    def const(cls, n: int = 1) -> "ArcExpr":
        """``n`` uncolored tokens."""
        return cls.tuple(coef=n)

    def __add__(self, other: "ArcExpr") -> "ArcExpr":
        return ArcExpr(self.terms + other.terms)

    def __rmul__(self, k: int) -> "ArcExpr":
        if k < 1:
            raise ValueError("arc coefficients must be positive")
        return ArcExpr(tuple((k * c, t) for c, t in self.terms))

    def variables(self) -> set:
        return {v for _, atoms in self.terms for a in atoms for v in atom_vars(a)}


def T(*atoms, coef: int = 1) -> ArcExpr:
    """Shorthand for a single-tuple expression; bare strings are variables."""
    return ArcExpr.tuple(*atoms, coef=coef)


def _atom_values(a, binding, var_classes):
    if isinstance(a, Var):
        return (binding[a.name],)
    if isinstance(a, Const):
        return (a.value,)
    if isinstance(a, (Succ, Pred)):
        cls = _var_class(a.name, var_classes)
        v = binding[a.name]
        return (cls.succ(v),) if isinstance(a, Succ) else (cls.pred(v),)
    if isinstance(a, AllOf):
        if a.subclass is None:
            return range(a.cls.size)
        return a.cls.subclass_range(a.subclass)
    if isinstance(a, Complement):
        x = binding[a.name]
        return [i for i in range(a.cls.size) if i != x]
    raise TypeError(f"unknown arc atom {a!r}")


def _var_class(name, var_classes) -> ColorClass:
    if var_classes is None or name not in var_classes:
        raise KeyError(f"class of variable {name!r} is needed to evaluate successor/predecessor")
    return var_classes[name]


def eval_arc(expr: ArcExpr, binding: dict, var_classes: dict = None) -> Multiset:
    """Multiset denoted by ``expr`` under ``binding`` (variable name -> element index).

    ``var_classes`` maps variable names to their classes; only successor and
    predecessor atoms need it.
    """
    missing = expr.variables() - set(binding)
    if missing:
        raise KeyError(f"unbound variable(s) {sorted(missing)}")
    out = Multiset()
    for coef, atoms in expr.terms:
        for tok in product(*(_atom_values(a, binding, var_classes) for a in atoms)):
            out.add(tok, coef)
    return out


# --- guards ----------------------------------------------------------------

@dataclass(frozen=True)
class Eq:
    """``x = y``; ``y`` may be another variable or a :class:`Const`."""
    x: str
    y: object


@dataclass(frozen=True)
class Neq:
    x: str
    y: object


@dataclass(frozen=True)
class InSubclass:
    x: str
    subclass: object


@dataclass(frozen=True)
class SameSubclass:
    """``d(x) = d(y)``."""
    x: str
    y: str


@dataclass(frozen=True)
class Lt:
    """``x`` precedes ``y`` in the element order of their class."""
    x: str
    y: str


@dataclass(frozen=True)
class Guard:
    atoms: tuple = ()

    def __and__(self, other: "Guard") -> "Guard":
        return Guard(self.atoms + other.atoms)

    def variables(self) -> set:
        out = set()
        for a in self.atoms:
            out.add(a.x)
            y = getattr(a, "y", None)
            if isinstance(y, str):
                out.add(y)
        return out


TRUE = Guard(())


def guard(*atoms) -> Guard:
    return Guard(tuple(atoms))


def _side(y, binding):
    return y.value if isinstance(y, Const) else binding[y]


def guard_satisfied(g: Guard, binding: dict, var_classes: dict = None) -> bool:
    for a in g.atoms:
        if isinstance(a, Eq):
            ok = binding[a.x] == _side(a.y, binding)
        elif isinstance(a, Neq):
            ok = binding[a.x] != _side(a.y, binding)
        elif isinstance(a, Lt):
            ok = binding[a.x] < binding[a.y]
        elif isinstance(a, InSubclass):
            cls = _var_class(a.x, var_classes)
            ok = binding[a.x] in cls.subclass_range(a.subclass)
        elif isinstance(a, SameSubclass):
            cls = _var_class(a.x, var_classes)
            ok = cls.subclass_of(binding[a.x]) == cls.subclass_of(binding[a.y])
        else:
            raise TypeError(f"unknown guard atom {a!r}")
        if not ok:
            return False
    return True
