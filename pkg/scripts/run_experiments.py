"""Run the bundled experiment configs, writing CSV and plot series under results/.

    python3 scripts/run_experiments.py                 # all configs
    python3 scripts/run_experiments.py --only edca_priorities --samples 100

Unrecognised options are passed through to the ssnmac CLI.
"""
import argparse
import pathlib
import sys

from ssnmac.cli import main

ROOT = pathlib.Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"


def run_one(name, out_dir, extra):
    cfg = CONFIGS / f"{name}.yaml"
    dest = out_dir / name
    dest.mkdir(parents=True, exist_ok=True)
    argv = ["--config", str(cfg), "--out", str(dest / "results.csv"), "--plot-data", str(dest)] + extra
    print(f"== {name}", flush=True)
    return main(argv)


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--only", action="append", metavar="NAME", help="config name (repeatable; default: all)")
    p.add_argument("--results", default=str(ROOT / "results"))
    args, extra = p.parse_known_args()
    names = args.only or sorted(c.stem for c in CONFIGS.glob("*.yaml"))
    status = 0
    for name in names:
        status = max(status, run_one(name, pathlib.Path(args.results), extra))
    sys.exit(status)
