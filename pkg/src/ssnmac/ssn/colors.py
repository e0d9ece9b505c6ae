"""Color classes and color domains."""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class ColorClass:
    """A finite set of colors, optionally ordered and split into static subclasses.

    Elements are addressed by their 0-based index; ``labels`` only matter for
    printing and for resolving constants written by name.  ``subclasses`` holds
    ``(name, lo, hi)`` triples of inclusive index ranges.  When left empty the
    whole class forms a single subclass named after the class.
    """

    name: str
    size: int
    ordered: bool = False
    subclasses: tuple = ()
    labels: tuple = ()
    prefix: str = ""

    def __post_init__(self):
        if self.size < 1:
            raise ValueError(f"color class {self.name!r} must be non-empty")
        if not self.labels:
            prefix = self.prefix or self.name.lower()
            object.__setattr__(self, "labels", tuple(f"{prefix}{i + 1}" for i in range(self.size)))
        if len(self.labels) != self.size or len(set(self.labels)) != self.size:
            raise ValueError(f"color class {self.name!r}: labels must be {self.size} distinct names")
        if not self.subclasses:
            object.__setattr__(self, "subclasses", ((self.name, 0, self.size - 1),))
        expect = 0
        for sub_name, lo, hi in self.subclasses:
            if lo != expect or hi < lo:
                raise ValueError(f"color class {self.name!r}: subclass {sub_name!r} breaks the 0..{self.size - 1} tiling")
            expect = hi + 1
        if expect != self.size:
            raise ValueError(f"color class {self.name!r}: subclasses do not cover 0..{self.size - 1}")
        # index -> subclass position, used by SameSubclass guards
        sub_of = []
        for k, (_, lo, hi) in enumerate(self.subclasses):
            sub_of.extend([k] * (hi - lo + 1))
        object.__setattr__(self, "_sub_of", tuple(sub_of))
        object.__setattr__(self, "_index", {lab: i for i, lab in enumerate(self.labels)})

    def index(self, element) -> int:
        """Resolve an element given as label or index."""
        if isinstance(element, int):
            if not 0 <= element < self.size:
                raise ValueError(f"{element} is not an element index of {self.name}")
            return element
        try:
            return self._index[element]
        except KeyError:
            raise ValueError(f"{element!r} is not an element of {self.name}") from None

    def label(self, i: int) -> str:
        return self.labels[i]

    def succ(self, i: int) -> int:
        if not self.ordered:
            raise TypeError(f"successor is undefined on unordered class {self.name}")
        return (i + 1) % self.size

    def pred(self, i: int) -> int:
        if not self.ordered:
            raise TypeError(f"predecessor is undefined on unordered class {self.name}")
        return (i - 1) % self.size

    def subclass_index(self, sub) -> int:
        if isinstance(sub, int):
            if not 0 <= sub < len(self.subclasses):
                raise ValueError(f"{self.name} has no subclass #{sub}")
            return sub
        for k, (sub_name, _, _) in enumerate(self.subclasses):
            if sub_name == sub:
                return k
        raise ValueError(f"{self.name} has no subclass {sub!r}")

    def subclass_range(self, sub) -> range:
        _, lo, hi = self.subclasses[self.subclass_index(sub)]
        return range(lo, hi + 1)

    def subclass_of(self, i: int) -> int:
        return self._sub_of[i]


@dataclass(frozen=True)
class ColorDomain:
    """Cartesian product of color classes; the empty product is the neutral domain."""

    components: tuple = field(default_factory=tuple)

    @property
    def arity(self) -> int:
        return len(self.components)

    def is_token(self, token) -> bool:
        return (
            isinstance(token, tuple)
            and len(token) == len(self.components)
            and all(isinstance(v, int) and 0 <= v < c.size for v, c in zip(token, self.components))
        )

    def format(self, token) -> str:
        if not self.components:
            return "<>"
        return "<" + ",".join(c.label(v) for v, c in zip(token, self.components)) + ">"

    def __str__(self):
        return "x".join(c.name for c in self.components) or "neutral"


NEUTRAL = ColorDomain(())
