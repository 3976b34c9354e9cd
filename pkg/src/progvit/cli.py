"""Command line: ``progvit train | eval | plot``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import tomli

from .config import MODES, from_dict
from .loop import read_metrics
from .schedule import GrowthSchedule
from .train import evaluate, run


def _train(args) -> int:
    with open(args.config, "rb") as f:
        raw = tomli.load(f)
    raw["mode"] = args.mode
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["out"] = args.out
    cfg = from_dict(raw)
    schedule = GrowthSchedule.load(args.schedule) if args.schedule else None
    result = run(cfg, schedule)
    print(f"final eval accuracy {result.final_accuracy:.4f}  "
          f"cumulative FLOPs {result.cumulative_flops:.4e}  "
          f"schedule {' '.join(str(s) for s in result.schedule.specs)}  -> {result.out}")
    return 0


def _eval(args) -> int:
    acc = evaluate(args.checkpoint, args.split, args.grid)
    print(f"accuracy {acc:.4f}")
    return 0


def plot_metrics(metrics: str | Path, out: str | Path | None = None) -> Path:
    """Accuracy and loss against cumulative FLOPs, written as SVG."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    recs = read_metrics(metrics)
    out = Path(out) if out else Path(metrics).with_suffix(".svg")
    flops = [r.cumulative_flops for r in recs]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(flops, [100 * r.eval_accuracy for r in recs], marker=".")
    ax1.set_xlabel("cumulative training FLOPs")
    ax1.set_ylabel("eval accuracy (%)")
    ax2.plot([r.epoch for r in recs], [r.train_loss for r in recs], marker=".")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("train loss")
    for r0, r1 in zip(recs, recs[1:]):
        if r1.stage != r0.stage:
            ax2.axvline(r0.epoch + 0.5, color="grey", lw=0.5, ls="--")
    fig.tight_layout()
    fig.savefig(out, format="svg")
    plt.close(fig)
    return out


def _plot(args) -> int:
    print(plot_metrics(args.metrics, args.out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="progvit", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run baseline, manual progressive or automated progressive training")
    t.add_argument("--mode", choices=MODES, required=True)
    t.add_argument("--config", required=True, help="TOML run config")
    t.add_argument("--schedule", help="growth schedule JSONL; retrains it without search")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", help="output directory")
    t.set_defaults(func=_train)

    e = sub.add_parser("eval", help="top-1 accuracy of a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--grid", type=int, help="patch grid side (default: the training grid)")
    e.add_argument("--split", choices=("eval", "train"), default="eval")
    e.set_defaults(func=_eval)

    pl = sub.add_parser("plot", help="learning curve SVG from a metrics file")
    pl.add_argument("--metrics", required=True)
    pl.add_argument("--out")
    pl.set_defaults(func=_plot)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
