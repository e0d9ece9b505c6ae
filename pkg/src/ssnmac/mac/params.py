"""Protocol constants, contention windows and the backoff mapping.

All times are integers in units of 10 us.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntEnum

N_STAGES = 9
# inclusive backoff-value ranges of stages bs1..bs9
_STAGE_BOUNDS = ((1, 4), (5, 8), (9, 16), (17, 32), (33, 64), (65, 128), (129, 256), (257, 512), (513, 1024))
MAX_BACKOFF = 1024
MAX_TX = 20


class Priority(IntEnum):
    """EDCA access categories; PR1 is the highest priority."""

    PR1 = 1   # AC_VO
    PR2 = 2   # AC_VI
    PR3 = 3   # AC_BE
    PR4 = 4   # AC_BK

    @property
    def access_category(self) -> str:
        return ("AC_VO", "AC_VI", "AC_BE", "AC_BK")[self - 1]

    @property
    def label(self) -> str:
        return f"pr{int(self)}"


@dataclass(frozen=True)
class MacParams:
    aslot: int = 2
    difs: int = 5
    sifs: int = 1
    vuln: int = 2
    rts: int = 16
    cts: int = 11
    ack: int = 11
    timeout: int = 5
    cw_min: int = 15
    backoff_max: int = 6
    deadline: int = 5000
    data: int = 42
    aifs: tuple = None

    def __post_init__(self):
        if self.aifs is None:
            object.__setattr__(self, "aifs", tuple(self.sifs + i * self.aslot for i in range(1, 5)))
        else:
            object.__setattr__(self, "aifs", tuple(self.aifs))
        for name in ("aslot", "difs", "sifs", "vuln", "rts", "cts", "ack", "timeout", "cw_min", "deadline", "data"):
            if not getattr(self, name) > 0:
                raise ValueError(f"MacParams.{name} must be positive")
        if self.backoff_max < 0:
            raise ValueError("MacParams.backoff_max must be non-negative")
        if not self.sifs < self.difs:
            raise ValueError("SIFS must be shorter than DIFS")
        if len(self.aifs) != 4 or any(a <= 0 for a in self.aifs):
            raise ValueError("aifs needs four positive durations")
        if list(self.aifs) != sorted(self.aifs):
            raise ValueError("aifs must be non-decreasing from pr1 to pr4")
        if (self.cw_min + 1) * 2 ** self.backoff_max > MAX_BACKOFF:
            raise ValueError(f"largest contention window exceeds {MAX_BACKOFF} backoff values")
        if self.backoff_max + 1 > MAX_TX:
            raise ValueError(f"at most {MAX_TX} transmission attempts are representable")

    def with_overrides(self, **kw) -> "MacParams":
        return replace(self, **kw)

    @property
    def tx_time(self) -> int:
        return self.rts + self.cts + self.data + self.ack

    @property
    def sense_time(self) -> int:
        return self.difs + 3 * self.sifs


def backoff_stage_bounds(k: int) -> tuple:
    """Inclusive backoff-value range ``(lo, hi)`` of stage ``bs_k``."""
    if not 1 <= k <= N_STAGES:
        raise ValueError(f"backoff stage must be in 1..{N_STAGES}, got {k}")
    return _STAGE_BOUNDS[k - 1]


def stages_for_window(size: int) -> int:
    """Number of leading stages whose union is ``{1..size}``."""
    for k in range(1, N_STAGES + 1):
        if _STAGE_BOUNDS[k - 1][1] == size:
            return k
    raise ValueError(f"no stage prefix covers exactly 1..{size}")


@dataclass(frozen=True)
class BackoffMapping:
    """``(priority, attempt) -> k`` meaning the window ``bs1 + ... + bsk``.

    Attempts are numbered from 1 per priority; an attempt missing from the
    table means the packet is dropped.
    """

    table: tuple = field(default_factory=tuple)   # (((p, tx), k), ...), sorted

    @classmethod
    def from_dict(cls, d: dict) -> "BackoffMapping":
        for (p, tx), k in d.items():
            if not (1 <= tx <= MAX_TX and 1 <= k <= N_STAGES and p >= 1):
                raise ValueError(f"invalid mapping entry ({p}, {tx}) -> {k}")
        by_p = {}
        for (p, tx) in d:
            by_p.setdefault(p, []).append(tx)
        for p, txs in by_p.items():
            if sorted(txs) != list(range(1, len(txs) + 1)):
                raise ValueError(f"attempts of priority {p} must be 1..n without gaps")
        return cls(tuple(sorted(d.items())))

    def as_dict(self) -> dict:
        return dict(self.table)

    @property
    def priorities(self) -> tuple:
        return tuple(sorted({p for (p, _), _ in self.table}))

    def max_attempts(self, p: int) -> int:
        return max((tx for (q, tx), _ in self.table if q == p), default=0)

    def stages(self, p: int, tx: int):
        return self.as_dict().get((int(p), tx))

    def to_tokens(self) -> str:
        """Serialise as the ``<prI,txJ,bs1+...+bsK>`` token sum."""
        parts = []
        for (p, tx), k in self.table:
            stages = "+".join(f"bs{i}" for i in range(1, k + 1))
            parts.append(f"<pr{p},tx{tx},{stages}>")
        return "+".join(parts)


_BM0_PREFIX = {
    1: (1, 2, 2, 2),
    2: (1, 2, 3, 3, 3),
    3: (2, 3, 4, 5, 6, 7, 8, 9, 9, 9),
    4: (3, 4, 5, 6, 7, 8, 9, 9, 9),
}


def default_bm0() -> BackoffMapping:
    """The invariant marking BM0 of the 802.11p backoff mapping."""
    return BackoffMapping.from_dict(
        {(p, tx): k for p, ks in _BM0_PREFIX.items() for tx, k in enumerate(ks, start=1)}
    )


def cw_window(priority: int, tx: int, mapping: BackoffMapping = None):
    """Inclusive range ``(1, hi)`` the backoff counter is drawn from, or
    ``None`` when attempt ``tx`` exceeds the priority's attempts (drop)."""
    mapping = mapping or default_bm0()
    k = mapping.stages(priority, tx)
    if k is None:
        return None
    return (1, backoff_stage_bounds(k)[1])


def legacy_cw(bc: int, params: MacParams = None) -> tuple:
    """802.11 window after ``bc`` failed attempts: ``{1..(CWmin+1)*2^bc}``, capped."""
    if bc < 0:
        raise ValueError("backoff round must be non-negative")
    params = params or MacParams()
    return (1, (params.cw_min + 1) * 2 ** min(bc, params.backoff_max))


def legacy_mapping(params: MacParams = None) -> BackoffMapping:
    """Single-priority mapping: attempt ``t`` uses ``legacy_cw(t - 1)``, up to backoff_max + 1 attempts."""
    params = params or MacParams()
    return BackoffMapping.from_dict(
        {(1, t): stages_for_window(legacy_cw(t - 1, params)[1]) for t in range(1, params.backoff_max + 2)}
    )


def nominal_max_btr(params: MacParams = None) -> float:
    params = params or MacParams()
    return params.tx_time / (params.sense_time + params.tx_time)
