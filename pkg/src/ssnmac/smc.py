"""Monte-Carlo estimation of observer values with normal confidence intervals.

Trajectory ``i`` of a run draws its randomness from the stream
``(root seed, value key, i)``, where the value key identifies the sweep
point.  Results are reduced in trajectory-index order, so estimates are
bit-identical whatever the number of worker processes.
"""
from __future__ import annotations

import hashlib
import math
import multiprocessing as mp
from dataclasses import dataclass, field, replace
from statistics import NormalDist

from . import hasl
from .mac.models import BurstNoise, NetworkSpec, Poisson, build
from .ssn.simulator import DEADLOCK, SimConfig, simulate, trajectory_rng

DEFAULT_SPIKE_EXIT_RATE = 0.1


class NoDataError(RuntimeError):
    """No trajectory produced an accepted observer value."""


@dataclass(frozen=True)
class FixedSamples:
    n: int = 1000

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least 2 samples")


@dataclass(frozen=True)
class TargetHalfwidth:
    epsilon: float
    max_samples: int = 100_000
    batch: int = 100

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("target halfwidth must be positive")
        if self.max_samples < 2 or self.batch < 2:
            raise ValueError("max_samples and batch must be at least 2")


@dataclass(frozen=True)
class EstimationConfig:
    confidence: float = 0.99
    mode: object = field(default_factory=FixedSamples)
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie in (0, 1)")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass(frozen=True)
class Estimate:
    mean: float
    variance: float
    halfwidth: float
    n: int
    deadlocks: int = 0
    confidence: float = 0.99

    @property
    def low(self):
        return self.mean - self.halfwidth

    @property
    def high(self):
        return self.mean + self.halfwidth

    def contains(self, x) -> bool:
        return self.low <= x <= self.high


def z_quantile(confidence: float) -> float:
    """Two-sided standard-normal quantile, e.g. 2.5758 for 0.99."""
    return NormalDist().inv_cdf(0.5 + confidence / 2)


def summarize(values, confidence=0.99, deadlocks=0) -> Estimate:
    n = len(values)
    if n == 0:
        raise NoDataError("no accepted trajectory")
    mean = math.fsum(values) / n
    if n < 2:
        return Estimate(mean, math.nan, math.inf, n, deadlocks, confidence)
    var = math.fsum((x - mean) ** 2 for x in values) / (n - 1)
    return Estimate(mean, var, z_quantile(confidence) * math.sqrt(var / n), n, deadlocks, confidence)


def value_key(parameter, value) -> int:
    """Stable 64-bit identity of a sweep point, independent of its position."""
    text = "" if parameter is None else f"{parameter}={value!r}"
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")


# -- trajectory batches --------------------------------------------------------

_worker_state = {}


def _init_worker(net, observers, horizon, seed, key):
    _worker_state.update(net=net, observers=observers, horizon=horizon, seed=seed, key=key)


def _run_range(bounds):
    lo, hi = bounds
    s = _worker_state
    out = []
    for i in range(lo, hi):
        rng = trajectory_rng(s["seed"], s["key"], i)
        r = simulate(s["net"], SimConfig(seed=s["seed"], horizon=s["horizon"]), s["observers"], rng=rng)
        dl = r.outcome == DEADLOCK
        out.append(tuple((o.accepted, o.value, dl) for o in r.results))
    return out


def run_trajectories(net, observers, horizon, start, stop, seed=0, key=0, workers=1):
    """Per-trajectory observer results for indices ``start..stop-1``, in index order."""
    args = (net, tuple(observers), horizon, seed, key)
    if workers <= 1 or stop - start < 2:
        _init_worker(*args)
        try:
            return _run_range((start, stop))
        finally:
            _worker_state.clear()
    n = stop - start
    chunk = max(1, math.ceil(n / (workers * 4)))
    ranges = [(lo, min(lo + chunk, stop)) for lo in range(start, stop, chunk)]
    ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else mp.get_context()
    with ctx.Pool(workers, initializer=_init_worker, initargs=args) as pool:
        parts = pool.map(_run_range, ranges)
    return [row for part in parts for row in part]


def _reduce(rows, k, confidence):
    vals = [r[k][1] for r in rows if r[k][0]]
    dl = sum(1 for r in rows if r[k][0] and r[k][2])
    return summarize(vals, confidence, dl)


def estimate_many(net, observers, horizon, config: EstimationConfig = EstimationConfig(), key=0):
    """One :class:`Estimate` per observer, all computed from the same trajectories."""
    observers = tuple(observers)
    mode = config.mode
    if isinstance(mode, FixedSamples):
        rows = run_trajectories(net, observers, horizon, 0, mode.n, config.seed, key, config.workers)
        return [_reduce(rows, k, config.confidence) for k in range(len(observers))]
    rows = []
    while True:
        stop = min(len(rows) + mode.batch, mode.max_samples)
        rows += run_trajectories(net, observers, horizon, len(rows), stop, config.seed, key, config.workers)
        ests = []
        for k in range(len(observers)):
            try:
                ests.append(_reduce(rows, k, config.confidence))
            except NoDataError:
                ests.append(None)
        done = all(e is not None and e.halfwidth <= mode.epsilon for e in ests)
        if done or len(rows) >= mode.max_samples:
            break
    for e in ests:
        if e is None:
            raise NoDataError("no accepted trajectory")
    return ests


def estimate(net, observer, horizon, config: EstimationConfig = EstimationConfig(), key=0) -> Estimate:
    return estimate_many(net, (observer,), horizon, config, key)[0]


# -- sweeps --------------------------------------------------------------------

SWEEPABLE = ("lambda", "n_stations", "spike_enter_rate", "data", "horizon")


def apply_parameter(spec: NetworkSpec, horizon, parameter, value):
    """``(spec, horizon)`` with one sweepable parameter set to ``value``."""
    if parameter == "lambda":
        return replace(spec, traffic=Poisson(float(value))), horizon
    if parameter == "n_stations":
        return replace(spec, n_stations=int(value), senders=None), horizon
    if parameter == "spike_enter_rate":
        exit_rate = spec.channel.spike_exit_rate if isinstance(spec.channel, BurstNoise) else DEFAULT_SPIKE_EXIT_RATE
        return replace(spec, channel=BurstNoise(float(value), exit_rate)), horizon
    if parameter == "data":
        return replace(spec, params=spec.params.with_overrides(data=int(value))), horizon
    if parameter == "horizon":
        return spec, float(value)
    raise ValueError(f"unknown sweep parameter {parameter!r}; expected one of {', '.join(SWEEPABLE)}")


@dataclass(frozen=True)
class SweepRow:
    parameter: str
    value: object
    kpi: str
    estimate: Estimate
    seed: int


def _observer_for(kpi, horizon, delivery):
    if isinstance(kpi, str):
        return hasl.observer(kpi, horizon, delivery)
    return kpi(horizon)


def sweep(spec: NetworkSpec, parameter, values, kpis, config: EstimationConfig = EstimationConfig(),
          horizon=5000.0, delivery="CorrectPacketAck"):
    """One row per (value, KPI), rows in the order of ``values`` then ``kpis``.

    ``kpis`` are registry names or callables ``horizon -> Lha``.  Each value
    gets its own trajectory streams keyed by the value itself.
    """
    if parameter is not None and parameter not in SWEEPABLE:
        raise ValueError(f"unknown sweep parameter {parameter!r}; expected one of {', '.join(SWEEPABLE)}")
    values = list(values) if parameter is not None else [None]
    rows = []
    for v in values:
        s, T = (spec, horizon) if parameter is None else apply_parameter(spec, horizon, parameter, v)
        net = build(s)
        observers = [_observer_for(k, T, delivery) for k in kpis]
        ests = estimate_many(net, observers, T, config, value_key(parameter, v))
        for k, o, e in zip(kpis, observers, ests):
            rows.append(SweepRow(parameter, v, k if isinstance(k, str) else o.name, e, config.seed))
    return rows
