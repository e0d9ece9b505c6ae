"""Multisets of tokens and net markings."""
from __future__ import annotations


class Multiset:
    """Finite bag of hashable tokens; never stores a zero multiplicity."""

    __slots__ = ("_d",)

    def __init__(self, entries=None):
        self._d = {}
        if entries is None:
            return
        items = entries.items() if isinstance(entries, (dict, Multiset)) else ((t, 1) for t in entries)
        for tok, n in items:
            self.add(tok, n)

    def add(self, token, n: int = 1):
        if n < 0:
            raise ValueError("negative multiplicity")
        if n:
            self._d[token] = self._d.get(token, 0) + n

    def remove(self, token, n: int = 1):
        have = self._d.get(token, 0)
        if n > have:
            raise ValueError(f"cannot remove {n} x {token!r}: only {have} present")
        if n == have:
            self._d.pop(token, None)
        else:
            self._d[token] = have - n

    def __iadd__(self, other):
        for tok, n in other.items():
            self.add(tok, n)
        return self

    def __isub__(self, other):
        for tok, n in other.items():
            self.remove(tok, n)
        return self

    def __add__(self, other):
        out = self.copy()
        out += other
        return out

    def __sub__(self, other):
        out = self.copy()
        out -= other
        return out

    def __le__(self, other):
        return all(other.count(t) >= n for t, n in self._d.items())

    def count(self, token) -> int:
        return self._d.get(token, 0)

    __getitem__ = count

    def items(self):
        return self._d.items()

    def __iter__(self):
        return iter(self._d)

    def __contains__(self, token):
        return token in self._d

    def __len__(self):
        """Number of distinct tokens."""
        return len(self._d)

    def total(self) -> int:
        return sum(self._d.values())

    def copy(self):
        out = Multiset()
        out._d = dict(self._d)
        return out

    def __eq__(self, other):
        if isinstance(other, Multiset):
            return self._d == other._d
        if isinstance(other, dict):
            return self._d == {k: v for k, v in other.items() if v}
        return NotImplemented

    def __repr__(self):
        return f"Multiset({self._d!r})"


class Marking:
    """One multiset per place, addressable by place name or index."""

    __slots__ = ("names", "_pos", "bags")

    def __init__(self, names, bags=None):
        self.names = tuple(names)
        self._pos = {n: i for i, n in enumerate(self.names)}
        self.bags = [Multiset() for _ in self.names] if bags is None else list(bags)

    def __getitem__(self, place) -> Multiset:
        if isinstance(place, int):
            return self.bags[place]
        return self.bags[self._pos[place]]

    def index(self, place: str) -> int:
        return self._pos[place]

    def copy(self):
        return Marking(self.names, [b.copy() for b in self.bags])

    def __eq__(self, other):
        return isinstance(other, Marking) and self.names == other.names and self.bags == other.bags

    def items(self):
        return zip(self.names, self.bags)

    def total(self) -> int:
        return sum(b.total() for b in self.bags)

    def __repr__(self):
        inner = ", ".join(f"{n}: {dict(b.items())}" for n, b in self.items() if len(b))
        return f"Marking({{{inner}}})"
