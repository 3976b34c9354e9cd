"""Baseline vs AutoProg on the desk config, several seeds.

    python3 scripts/speedup.py --config configs/desk.toml --seeds 0 1 2 --out runs/speedup

Writes one run directory per (mode, seed) and a summary.json with per-seed
accuracy, cumulative FLOPs and the realized schedules.
"""
from __future__ import annotations

import argparse
import logging

from progvit.config import load_config
from progvit.experiment import speedup_experiment


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", default="configs/desk.toml")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--out", default="runs/speedup")
    p.add_argument("-v", "--verbose", action="store_true", help="log every epoch")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")
    s = speedup_experiment(load_config(args.config), args.seeds, args.out,
                           log=lambda msg: print(msg, flush=True))
    print(f"mean gap {s['mean_gap_points']:+.2f} pts, max gap {s['max_gap_points']:+.2f} pts, "
          f"max FLOPs ratio {s['max_flops_ratio']:.3f}, wall ratio {s['mean_wall_ratio']:.3f}")


if __name__ == "__main__":
    main()
