"""Experiment runner: config file and/or flags -> estimates -> CSV.

Exit codes: 0 ok, 1 usage or invalid configuration, 2 no data or malformed
CSV, 3 I/O failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import os
import re
import sys
from dataclasses import dataclass, field, fields

import yaml

from . import hasl
from .mac.models import BurstNoise, Ideal, NetworkSpec, Poisson, Saturated, Variant, build
from .mac.params import BackoffMapping, MacParams
from .smc import (
    SWEEPABLE, EstimationConfig, FixedSamples, NoDataError, TargetHalfwidth, apply_parameter, sweep,
)

CSV_HEADER = ("sweep_param", "sweep_value", "kpi", "mean", "halfwidth", "n", "deadlocks", "seed")

EXIT_OK, EXIT_USAGE, EXIT_NODATA, EXIT_IO = 0, 1, 2, 3


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending line or flag."""


class MalformedCsv(ValueError):
    pass


# -- document loading ----------------------------------------------------------

def _node_value(node, path, lines):
    """Plain Python value of a composed YAML node, recording each path's line."""
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = k.value
            if key in out:
                raise ConfigError(f"line {k.start_mark.line + 1}: duplicate key {key!r}")
            out[key] = _node_value(v, path + (key,), lines)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_node_value(v, path + (i,), lines) for i, v in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node))


def load_document(text: str):
    """``(document, lines)`` where ``lines`` maps key paths to source lines."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"malformed config: {e}") from None
    lines = {}
    if node is None:
        return {}, lines
    doc = _node_value(node, (), lines)
    if not isinstance(doc, dict):
        raise ConfigError("line 1: config document must be a mapping")
    return doc, lines


# -- schema --------------------------------------------------------------------

_PARAM_KEYS = tuple(f.name for f in fields(MacParams))
SCHEMA = {
    "model": None, "stations": None, "senders": None, "kpis": None, "delivery": None,
    "horizon": None, "seed": None, "out": None, "plot_data": None,
    "traffic": {"saturated", "lambda"},
    "channel": {"ideal", "spike_enter", "spike_exit"},
    "params": set(_PARAM_KEYS),
    "mapping": {"pr1", "pr2", "pr3", "pr4"},
    "estimation": {"samples", "halfwidth", "max_samples", "batch", "confidence", "workers"},
    "sweep": {"param", "values"},
}


@dataclass(frozen=True)
class ExperimentConfig:
    spec: NetworkSpec
    kpis: tuple = ("throughput",)
    horizon: float = 5000.0
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    sweep_param: str = None
    sweep_values: tuple = ()
    seed: int = 0
    out: str = None
    plot_data: str = None
    delivery: str = "CorrectPacketAck"


class _Origin:
    """Where a value came from, for error messages."""

    def __init__(self, lines, flags):
        self.lines, self.flags = lines, flags

    def __call__(self, *path):
        for p in (path, path[:1]):
            if p in self.flags:
                return self.flags[p]
            if p in self.lines:
                return f"line {self.lines[p]}"
        return "default"


def _num(v, kind, where, what, positive=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: {what} must be a number, got {v!r}")
    if kind is int and not float(v).is_integer():
        raise ConfigError(f"{where}: {what} must be an integer, got {v!r}")
    v = kind(v)
    if positive and not v > 0:
        raise ConfigError(f"{where}: {what} must be positive, got {v!r}")
    return v


def canonical_sweep_value(param, v):
    where = "sweep"
    if param in ("n_stations", "data"):
        return _num(v, int, where, param, positive=True)
    return _num(v, float, where, param, positive=True)


def validate(doc: dict, lines=None, flags=None) -> ExperimentConfig:
    """Build a fully validated :class:`ExperimentConfig` from a document dict."""
    at = _Origin(lines or {}, flags or {})
    for key, val in doc.items():
        if key not in SCHEMA:
            raise ConfigError(f"{at(key)}: unknown key {key!r}")
        sub = SCHEMA[key]
        if sub is not None:
            if not isinstance(val, dict):
                raise ConfigError(f"{at(key)}: {key!r} must be a mapping")
            for k in val:
                if k not in sub:
                    raise ConfigError(f"{at(key, k)}: unknown key {key}.{k}")

    try:
        variant = Variant(str(doc.get("model", "80211p")))
    except ValueError:
        raise ConfigError(f"{at('model')}: model must be 80211 or 80211p") from None
    n = doc.get("stations", 2)
    n = _num(n, int, at("stations"), "stations")
    if n < 2:
        raise ConfigError(f"{at('stations')}: a clique needs at least 2 stations, got {n}")

    traffic_doc = doc.get("traffic", {"saturated": True})
    if "lambda" in traffic_doc and traffic_doc.get("saturated"):
        raise ConfigError(f"{at('traffic')}: traffic is either saturated or lambda, not both")
    if "lambda" in traffic_doc:
        traffic = Poisson(_num(traffic_doc["lambda"], float, at("traffic", "lambda"), "lambda", True))
    else:
        traffic = Saturated()

    ch = doc.get("channel", {"ideal": True})
    noisy = "spike_enter" in ch or "spike_exit" in ch
    if noisy and ch.get("ideal"):
        raise ConfigError(f"{at('channel')}: channel is either ideal or noisy, not both")
    if noisy:
        if not ("spike_enter" in ch and "spike_exit" in ch):
            raise ConfigError(f"{at('channel')}: a noisy channel needs both spike_enter and spike_exit")
        channel = BurstNoise(_num(ch["spike_enter"], float, at("channel", "spike_enter"), "spike_enter", True),
                             _num(ch["spike_exit"], float, at("channel", "spike_exit"), "spike_exit", True))
    else:
        channel = Ideal()

    pdoc = dict(doc.get("params", {}))
    for k, v in pdoc.items():
        if k == "aifs":
            if not (isinstance(v, list) and len(v) == 4):
                raise ConfigError(f"{at('params', 'aifs')}: aifs must be a list of 4 durations")
            pdoc[k] = tuple(_num(x, int, at("params", "aifs"), "aifs") for x in v)
        else:
            pdoc[k] = _num(v, int, at("params", k), k)
    try:
        params = MacParams(**pdoc)
    except ValueError as e:
        raise ConfigError(f"{at('params')}: {e}") from None

    mapping = None
    if "mapping" in doc:
        table = {}
        for pr, ks in doc["mapping"].items():
            if not isinstance(ks, list) or not ks:
                raise ConfigError(f"{at('mapping', pr)}: mapping.{pr} must be a list of stage counts")
            for tx, k in enumerate(ks, start=1):
                table[(int(pr[2:]), tx)] = _num(k, int, at("mapping", pr), "stage count")
        try:
            mapping = BackoffMapping.from_dict(table)
        except ValueError as e:
            raise ConfigError(f"{at('mapping')}: {e}") from None

    senders = doc.get("senders")
    if senders is not None:
        if not isinstance(senders, list):
            raise ConfigError(f"{at('senders')}: senders must be a list of station numbers")
        senders = tuple(_num(s, int, at("senders"), "sender") for s in senders)
    try:
        spec = NetworkSpec(variant, n, traffic, channel, params, mapping, senders)
    except ValueError as e:
        raise ConfigError(f"{at('model')}: {e}") from None

    kpis = doc.get("kpis", ["throughput"])
    if isinstance(kpis, str):
        kpis = [kpis]
    if not kpis:
        raise ConfigError(f"{at('kpis')}: at least one KPI is required")
    for k in kpis:
        try:
            _, pr = hasl.parse_kpi(str(k))
        except ValueError as e:
            raise ConfigError(f"{at('kpis')}: {e}") from None
        if pr is not None and pr > spec.n_priorities:
            raise ConfigError(f"{at('kpis')}: {k} does not exist in the {variant.value} model")
    delivery = doc.get("delivery", "CorrectPacketAck")
    if delivery not in hasl.DELIVERY_TRANSITIONS:
        raise ConfigError(f"{at('delivery')}: delivery must be one of {', '.join(hasl.DELIVERY_TRANSITIONS)}")

    horizon = _num(doc.get("horizon", 5000), float, at("horizon"), "horizon", True)
    seed = _num(doc.get("seed", 0), int, at("seed"), "seed")

    est = doc.get("estimation", {})
    try:
        if "samples" in est and "halfwidth" in est:
            raise ConfigError(f"{at('estimation')}: give samples or halfwidth, not both")
        if "halfwidth" in est:
            mode = TargetHalfwidth(_num(est["halfwidth"], float, at("estimation", "halfwidth"), "halfwidth", True),
                                   _num(est.get("max_samples", 100_000), int, at("estimation", "max_samples"), "max_samples"),
                                   _num(est.get("batch", 100), int, at("estimation", "batch"), "batch"))
        else:
            mode = FixedSamples(_num(est.get("samples", 1000), int, at("estimation", "samples"), "samples"))
        estimation = EstimationConfig(
            _num(est.get("confidence", 0.99), float, at("estimation", "confidence"), "confidence"),
            mode, seed, _num(est.get("workers", 1), int, at("estimation", "workers"), "workers"))
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"{at('estimation')}: {e}") from None

    sweep_param, values = None, ()
    if "sweep" in doc:
        sw = doc["sweep"]
        sweep_param = sw.get("param")
        if sweep_param not in SWEEPABLE:
            raise ConfigError(f"{at('sweep', 'param')}: sweep parameter must be one of {', '.join(SWEEPABLE)}")
        raw = sw.get("values")
        if not isinstance(raw, list) or not raw:
            raise ConfigError(f"{at('sweep', 'values')}: sweep needs a non-empty list of values")
        try:
            values = tuple(canonical_sweep_value(sweep_param, v) for v in raw)
        except ConfigError as e:
            raise ConfigError(f"{at('sweep', 'values')}: {str(e).split(': ', 1)[1]}") from None
        if len(set(values)) != len(values):
            raise ConfigError(f"{at('sweep', 'values')}: sweep values must be distinct")
        if sweep_param == "n_stations" and min(values) < 2:
            raise ConfigError(f"{at('sweep', 'values')}: a clique needs at least 2 stations")
        if sweep_param == "n_stations" and senders is not None:
            raise ConfigError(f"{at('sweep')}: cannot sweep n_stations with an explicit senders list")

    out = doc.get("out")
    plot_data = doc.get("plot_data")
    return ExperimentConfig(spec, tuple(str(k) for k in kpis), horizon, estimation, sweep_param, values,
                            seed, None if out is None else str(out),
                            None if plot_data is None else str(plot_data), delivery)


# -- flags ---------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ssnmac", description="Estimate 802.11 / 802.11p KPIs by statistical model checking.")
    p.add_argument("--config", metavar="PATH", help="YAML experiment document; flags override its fields")
    p.add_argument("--model", choices=[v.value for v in Variant])
    p.add_argument("--stations", type=int, metavar="N")
    t = p.add_mutually_exclusive_group()
    t.add_argument("--saturated", action="store_true", help="a packet is always waiting")
    t.add_argument("--lambda", dest="lam", type=float, metavar="R", help="Poisson arrivals per second per flow")
    c = p.add_mutually_exclusive_group()
    c.add_argument("--ideal", action="store_true", help="error-free channel")
    c.add_argument("--spike-enter", type=float, metavar="R", help="error-spike entry rate per 10 us")
    p.add_argument("--spike-exit", type=float, metavar="R", help="error-spike exit rate per 10 us")
    p.add_argument("--data", type=int, metavar="K", help="DATA duration in 10 us units")
    p.add_argument("--kpi", action="append", metavar="NAME",
                   help=f"repeatable; one of {', '.join(hasl.KPI_NAMES)}, optionally suffixed [prN]")
    p.add_argument("--delivery", choices=hasl.DELIVERY_TRANSITIONS, help="transition counted as a delivery")
    p.add_argument("--horizon", type=float, metavar="T", help="observation time in 10 us units")
    s = p.add_mutually_exclusive_group()
    s.add_argument("--samples", type=int, metavar="N")
    s.add_argument("--halfwidth", type=float, metavar="E", help="sample until the CI halfwidth is at most E")
    p.add_argument("--max-samples", type=int, metavar="N")
    p.add_argument("--confidence", type=float, metavar="G")
    p.add_argument("--sweep", metavar="KEY=V1,V2,...", help=f"KEY in {', '.join(SWEEPABLE)}")
    p.add_argument("--seed", type=int, metavar="S")
    p.add_argument("--workers", type=int, metavar="W")
    p.add_argument("--out", metavar="PATH", help="CSV output (default: stdout)")
    p.add_argument("--plot-data", metavar="DIR", help="also write one gnuplot series file per KPI into DIR")
    p.add_argument("--from-csv", metavar="PATH", help="only convert an existing CSV into series files")
    p.add_argument("--set", action="append", default=[], metavar="PATH=VALUE",
                   help="override any document leaf, e.g. params.sifs=1 or mapping.pr1=[1,2,2,2]")
    p.add_argument("--dump-net", action="store_true", help="print the constructed net and exit")
    return p


def _put(doc, path, value):
    d = doc
    for k in path[:-1]:
        if not isinstance(d.get(k), dict):
            d[k] = {}
        d = d[k]
    d[path[-1]] = value


def _drop(doc, path):
    d = doc
    for k in path[:-1]:
        d = d.get(k)
        if not isinstance(d, dict):
            return
    d.pop(path[-1], None)


def apply_flags(doc: dict, ns) -> dict:
    """Overlay parsed flags on a document; returns the flag origin map."""
    origin = {}

    def put(path, value, flag):
        _put(doc, path, value)
        origin[path] = flag

    if ns.model is not None:
        put(("model",), ns.model, "--model")
    if ns.stations is not None:
        put(("stations",), ns.stations, "--stations")
    if ns.saturated:
        doc["traffic"] = {}
        put(("traffic", "saturated"), True, "--saturated")
    if ns.lam is not None:
        doc["traffic"] = {}
        put(("traffic", "lambda"), ns.lam, "--lambda")
    if ns.ideal:
        doc["channel"] = {}
        put(("channel", "ideal"), True, "--ideal")
    if ns.spike_enter is not None:
        _drop(doc, ("channel", "ideal"))
        put(("channel", "spike_enter"), ns.spike_enter, "--spike-enter")
    if ns.spike_exit is not None:
        _drop(doc, ("channel", "ideal"))
        put(("channel", "spike_exit"), ns.spike_exit, "--spike-exit")
    if ns.data is not None:
        put(("params", "data"), ns.data, "--data")
    if ns.kpi:
        put(("kpis",), list(ns.kpi), "--kpi")
    if ns.delivery is not None:
        put(("delivery",), ns.delivery, "--delivery")
    if ns.horizon is not None:
        put(("horizon",), ns.horizon, "--horizon")
    if ns.samples is not None:
        _drop(doc, ("estimation", "halfwidth"))
        put(("estimation", "samples"), ns.samples, "--samples")
    if ns.halfwidth is not None:
        _drop(doc, ("estimation", "samples"))
        put(("estimation", "halfwidth"), ns.halfwidth, "--halfwidth")
    if ns.max_samples is not None:
        put(("estimation", "max_samples"), ns.max_samples, "--max-samples")
    if ns.confidence is not None:
        put(("estimation", "confidence"), ns.confidence, "--confidence")
    if ns.workers is not None:
        put(("estimation", "workers"), ns.workers, "--workers")
    if ns.seed is not None:
        put(("seed",), ns.seed, "--seed")
    if ns.out is not None:
        put(("out",), ns.out, "--out")
    if ns.plot_data is not None:
        put(("plot_data",), ns.plot_data, "--plot-data")
    if ns.sweep is not None:
        key, sep, vals = ns.sweep.partition("=")
        if not sep or not vals:
            raise ConfigError("--sweep: expected KEY=V1,V2,...")
        try:
            values = [yaml.safe_load(v) for v in vals.split(",")]
        except yaml.YAMLError:
            raise ConfigError(f"--sweep: cannot parse values {vals!r}") from None
        doc["sweep"] = {}
        put(("sweep", "param"), key.strip(), "--sweep")
        put(("sweep", "values"), values, "--sweep")
    for item in ns.set:
        path, sep, raw = item.partition("=")
        if not sep or not path:
            raise ConfigError(f"--set {item}: expected PATH=VALUE")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            raise ConfigError(f"--set {item}: cannot parse value") from None
        put(tuple(path.split(".")), value, f"--set {path}")
    return origin


def parse_config(argv=None) -> tuple:
    """``(ExperimentConfig, namespace)`` from command-line arguments."""
    ns = build_parser().parse_args(argv)
    doc, lines = {}, {}
    if ns.config:
        try:
            with open(ns.config) as fh:
                text = fh.read()
        except OSError as e:
            raise OSError(f"cannot read config {ns.config}: {e.strerror}") from None
        doc, lines = load_document(text)
    origin = apply_flags(doc, ns)
    return validate(doc, lines, origin), ns


# -- output --------------------------------------------------------------------

def format_number(x) -> str:
    if isinstance(x, float):
        if math.isfinite(x) and x.is_integer() and abs(x) < 1e15:
            return str(int(x))
        return repr(x)
    return str(x)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        e = r.estimate
        w.writerow((r.parameter or "", "" if r.value is None else format_number(r.value), r.kpi,
                    format_number(e.mean), format_number(e.halfwidth), e.n, e.deadlocks, r.seed))
    return buf.getvalue()


def summary_table(rows) -> str:
    lines = [f"{'sweep':>18}  {'kpi':<20} {'mean':>14} {'halfwidth':>12} {'n':>6} {'deadlocks':>9}"]
    for r in rows:
        e = r.estimate
        point = "" if r.parameter is None else f"{r.parameter}={format_number(r.value)}"
        lines.append(f"{point:>18}  {r.kpi:<20} {e.mean:>14.6g} {e.halfwidth:>12.4g} {e.n:>6} {e.deadlocks:>9}")
    return "\n".join(lines)


def read_csv(text: str):
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedCsv("empty CSV") from None
    if tuple(header) != CSV_HEADER:
        raise MalformedCsv(f"unexpected header {','.join(header)}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            raise MalformedCsv(f"line {lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
        rec = dict(zip(CSV_HEADER, row))
        try:
            for k in ("mean", "halfwidth"):
                rec[k] = float(rec[k])
            for k in ("n", "deadlocks", "seed"):
                rec[k] = int(rec[k])
        except ValueError:
            raise MalformedCsv(f"line {lineno}: non-numeric field") from None
        out.append(rec)
    return out


def series_name(kpi: str) -> str:
    return re.sub(r"[^A-Za-z0-9_]+", "_", kpi).strip("_")


def emit_plot_data(csv_text: str, out_dir: str) -> list:
    """Write ``<kpi>.dat`` per KPI with columns value, mean, low, high.  Returns the paths."""
    rows = read_csv(csv_text)
    by_kpi = {}
    for r in rows:
        by_kpi.setdefault(r["kpi"], []).append(r)
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for kpi, rs in by_kpi.items():
        path = os.path.join(out_dir, f"{series_name(kpi)}.dat")
        with open(path, "w") as fh:
            fh.write(f"# {kpi}: sweep_value mean low high\n")
            for r in rs:
                m, h = r["mean"], r["halfwidth"]
                fh.write(f"{r['sweep_value'] or '-'} {format_number(m)} {format_number(m - h)} {format_number(m + h)}\n")
        paths.append(path)
    return paths


def run(config: ExperimentConfig, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        rows = sweep(config.spec, config.sweep_param, config.sweep_values, list(config.kpis),
                     config.estimation, config.horizon, config.delivery)
    except NoDataError as e:
        print(f"error: {e}: no trajectory was accepted by the observers", file=stderr)
        return EXIT_NODATA
    text = rows_to_csv(rows)
    try:
        if config.out:
            with open(config.out, "w", newline="") as fh:
                fh.write(text)
            print(summary_table(rows), file=stdout)
        else:
            stdout.write(text)
            print(summary_table(rows), file=stderr)
        if config.plot_data:
            emit_plot_data(text, config.plot_data)
    except OSError as e:
        print(f"error: cannot write output: {e}", file=stderr)
        return EXIT_IO
    return EXIT_OK


def main(argv=None) -> int:
    try:
        config, ns = parse_config(argv)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    if ns.from_csv:
        try:
            with open(ns.from_csv) as fh:
                text = fh.read()
            emit_plot_data(text, config.plot_data or ".")
        except MalformedCsv as e:
            print(f"error: malformed CSV {ns.from_csv}: {e}", file=sys.stderr)
            return EXIT_NODATA
        except OSError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_IO
        return EXIT_OK
    if ns.dump_net:
        spec = config.spec
        if config.sweep_param is not None:
            spec, _ = apply_parameter(spec, config.horizon, config.sweep_param, config.sweep_values[0])
        sys.stdout.write(build(spec).dump())
        return EXIT_OK
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
