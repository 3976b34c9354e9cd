"""Paired baseline vs AutoProg runs for the speedup comparison."""
from __future__ import annotations

import json
import statistics
from pathlib import Path

from .config import RunConfig
from .data import Dataset
from .train import CHECKPOINT, load_data, run


def run_pair(cfg: RunConfig, seed: int, out: str | Path, data: Dataset | None = None) -> dict:
    """Train baseline and AutoProg with the same seed; return a summary row."""
    data = data or load_data(cfg)
    out = Path(out)
    row: dict = {"seed": seed}
    for mode in ("baseline", "autoprog"):
        run_dir = out / f"{mode}_s{seed}"
        r = run(cfg.replace(mode=mode, seed=seed, out=str(run_dir)), data=data)
        row[mode] = {
            "accuracy": r.final_accuracy,
            "flops": r.cumulative_flops,
            "epochs": len(r.records),
            "wall": r.records[-1].wall_seconds if r.records else 0.0,
            "schedule": [[s.depth, s.grid] for s in r.schedule.specs],
            "checkpoint": str(run_dir / CHECKPOINT),
        }
    row["gap_points"] = 100 * (row["baseline"]["accuracy"] - row["autoprog"]["accuracy"])
    row["flops_ratio"] = row["autoprog"]["flops"] / row["baseline"]["flops"]
    return row


def summarize(rows: list[dict]) -> dict:
    return {
        "rows": rows,
        "mean_gap_points": statistics.mean(r["gap_points"] for r in rows),
        "max_gap_points": max(r["gap_points"] for r in rows),
        "mean_flops_ratio": statistics.mean(r["flops_ratio"] for r in rows),
        "max_flops_ratio": max(r["flops_ratio"] for r in rows),
        "mean_wall_ratio": statistics.mean(r["autoprog"]["wall"] / r["baseline"]["wall"] for r in rows),
    }


def speedup_experiment(cfg: RunConfig, seeds, out: str | Path, log=print) -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    data = load_data(cfg)
    rows = []
    for seed in seeds:
        r = run_pair(cfg, seed, out, data)
        rows.append(r)
        log(f"seed {seed}: baseline {r['baseline']['accuracy']:.4f} autoprog {r['autoprog']['accuracy']:.4f} "
            f"gap {r['gap_points']:+.2f} pts  FLOPs ratio {r['flops_ratio']:.3f}  "
            f"schedule {r['autoprog']['schedule']}")
    summary = summarize(rows)
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary
