"""Per-station delivery split of the saturated legacy model.

Shows how often the station that just delivered also wins the next exchange,
the channel capture behind the saturated throughput figure.
"""
import argparse
from collections import Counter

from ssnmac.mac import NetworkSpec, Variant, build
from ssnmac.ssn import SimConfig, run_trace

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--stations", type=int, default=2)
    p.add_argument("--trajectories", type=int, default=20)
    p.add_argument("--horizon", type=float, default=5000.0)
    args = p.parse_args()

    net = build(NetworkSpec(variant=Variant.LEGACY, n_stations=args.stations))
    per_station, repeats, pairs = Counter(), 0, 0
    for seed in range(args.trajectories):
        events, _ = run_trace(net, SimConfig(seed=seed, horizon=args.horizon))
        winners = [e.get("sa") for e in events if e.transition == "CorrectPacketAck"]
        per_station.update(winners)
        repeats += sum(a == b for a, b in zip(winners, winners[1:]))
        pairs += max(len(winners) - 1, 0)
    total = sum(per_station.values())
    scale = 1e5 / (args.horizon * args.trajectories)
    print(f"throughput: {total * scale:.1f} pkt/s")
    for s in sorted(per_station):
        print(f"  station s{s + 1}: {per_station[s] * scale:.1f} pkt/s")
    if pairs:
        print(f"same station delivers twice in a row: {repeats / pairs:.1%}")
