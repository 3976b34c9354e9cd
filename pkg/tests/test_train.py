import json

import pytest
import torch

from progvit.cli import main
from progvit.config import DataConfig, OptimConfig, RunConfig
from progvit.cost import estimate_cost
from progvit.data import synthetic
from progvit.loop import read_metrics
from progvit.model import ModelConfig, build_model
from progvit.schedule import GrowthSchedule, StagePlan
from progvit.train import CHECKPOINT, METRICS, SCHEDULE, SEARCH, evaluate, run

TINY = ModelConfig(max_depth=4, max_grid=4, patch_size=4, embed_dim=16, heads=2)
LADDER = ModelConfig(max_depth=8, max_grid=8, patch_size=2, embed_dim=16, heads=2)


@pytest.fixture(scope="module")
def data16():
    return synthetic(10, 256, 16, seed=7, eval_count=100)


def cfg_for(tmp_path, mode="baseline", model=TINY, epochs=8, **kw):
    return RunConfig(mode=mode, out=str(tmp_path / mode), model=model, momentum=0.9,
                     plan=StagePlan(epochs, 4, kw.pop("supernet_epochs", 1 if epochs >= 8 else 0)),
                     optim=OptimConfig(batch_size=64, warmup_epochs=1),
                     data=DataConfig(count=256, eval_count=100, side=16), **kw)


def same_weights(a, b):
    return a.keys() == b.keys() and all(torch.equal(a[k], b[k]) for k in a)


def test_baseline_zero_epochs(tmp_path, data16):
    r = run(cfg_for(tmp_path, epochs=0), data=data16)
    assert r.records == []
    assert (tmp_path / "baseline" / CHECKPOINT).exists()
    assert (tmp_path / "baseline" / METRICS).read_text() == ""


def test_baseline_flops_accounting(tmp_path, data16):
    cfg = cfg_for(tmp_path)
    r = run(cfg, data=data16)
    steps = 256 // 64
    expect = cfg.plan.total_epochs * steps * estimate_cost(TINY, TINY.full_spec) * 64
    assert abs(r.cumulative_flops - expect) / expect < 0.01
    recs = read_metrics(tmp_path / "baseline" / METRICS)
    assert [x.epoch for x in recs] == list(range(1, 9))
    assert all(a.cumulative_flops <= b.cumulative_flops for a, b in zip(recs, recs[1:]))


def test_baseline_deterministic(tmp_path, data16):
    cfg = cfg_for(tmp_path, epochs=4)
    a = run(cfg, data=data16, write=False)
    b = run(cfg, data=data16, write=False)
    assert same_weights(a.params, b.params)


def test_prog_with_s1_one_equals_baseline(tmp_path, data16):
    base = run(cfg_for(tmp_path, epochs=4), data=data16, write=False)
    prog = run(cfg_for(tmp_path, "prog", epochs=4, s1=1.0), data=data16, write=False)
    assert prog.growth_events == []
    assert same_weights(base.params, prog.params)


@pytest.mark.parametrize("growth", ["mogrow", "interpolation", "stacking", "randinit", "identity"])
def test_prog_three_growth_events(tmp_path, data16, growth):
    r = run(cfg_for(tmp_path, "prog", model=LADDER, epochs=4, growth=growth), data=data16, write=False)
    assert len(r.growth_events) == 3
    assert r.schedule[-1] == LADDER.full_spec
    base_cost = estimate_cost(LADDER, LADDER.full_spec)
    avg_step = sum(x.step_flops for x in r.records) / len(r.records) / 64
    assert avg_step / base_cost < 0.55


def test_autoprog_s1_one_equals_baseline(tmp_path, data16):
    base = run(cfg_for(tmp_path, epochs=4), data=data16, write=False)
    auto = run(cfg_for(tmp_path, "autoprog", epochs=4, s1=1.0), data=data16, write=False)
    assert auto.schedule.specs == (TINY.full_spec,) * 4
    assert same_weights(base.params, auto.params)


def autoprog_accounting(result, plan: StagePlan) -> list[str]:
    """Problems with epoch accounting and the realized schedule (empty when sound)."""
    problems = []
    recs = result.records
    if len(recs) != plan.total_epochs:
        problems.append(f"{len(recs)} epochs, expected {plan.total_epochs}")
    if [r.epoch for r in recs] != list(range(1, len(recs) + 1)):
        problems.append("epoch numbers not consecutive")
    tau = plan.epochs_per_stage
    for k in range(1, plan.stages + 1):
        stage = [r for r in recs if r.stage == k]
        if len(stage) != tau:
            problems.append(f"stage {k} has {len(stage)} epochs")
    specs = result.schedule.specs
    if any(not a <= b for a, b in zip(specs, specs[1:])):
        problems.append("schedule shrinks")
    return problems


@pytest.mark.parametrize("seed", range(5))
def test_autoprog_accounting_and_schedule(tmp_path, data16, seed):
    cfg = cfg_for(tmp_path, "autoprog", model=LADDER, epochs=8, seed=seed)
    r = run(cfg, data=data16, write=False)
    assert autoprog_accounting(r, cfg.plan) == []
    assert r.schedule[-1] == LADDER.full_spec
    assert sum(x.phase == "supernet" for x in r.records) <= 3


def test_autoprog_outputs_and_retraining(tmp_path, data16):
    cfg = cfg_for(tmp_path, "autoprog", model=LADDER, epochs=8)
    r = run(cfg, data=data16)
    out = tmp_path / "autoprog"
    sched = GrowthSchedule.load(out / SCHEDULE)
    assert sched == r.schedule
    reports = [json.loads(x) for x in (out / SEARCH).read_text().splitlines()]
    assert reports and {x["stage"] for x in reports} <= {1, 2, 3}
    for k in {x["stage"] for x in reports}:
        assert sum(x["chosen"] for x in reports if x["stage"] == k) == 1
    again = run(cfg.replace(out=str(tmp_path / "retrain")), schedule=sched, data=data16)
    assert all(x.phase == "train" for x in again.records)
    assert len(again.records) == cfg.plan.total_epochs
    assert [(x.depth, x.grid) for x in again.records[::2]] == [(s.depth, s.grid) for s in sched.specs]


def test_autoprog_reproducible(data16, tmp_path):
    cfg = cfg_for(tmp_path, "autoprog", model=LADDER, epochs=8, seed=4)
    a = run(cfg, data=data16, write=False)
    b = run(cfg, data=data16, write=False)
    assert a.schedule == b.schedule
    assert same_weights(a.params, b.params)


def test_evaluate_random_model_near_chance(tmp_path):
    from progvit.checkpoint import save_checkpoint
    cfg = cfg_for(tmp_path)
    cfg = cfg.replace(data=DataConfig(count=100, eval_count=1000, side=16))
    save_checkpoint(tmp_path / "r.pvck", build_model(TINY, TINY.full_spec, 0), cfg.to_dict())
    acc = evaluate(tmp_path / "r.pvck")
    assert 0.05 <= acc <= 0.15


def test_evaluate_native_and_larger_grid(tmp_path, data16):
    cfg = cfg_for(tmp_path, epochs=12)
    r = run(cfg, data=data16)
    ckpt = tmp_path / "baseline" / CHECKPOINT
    assert evaluate(ckpt, data=data16) == r.final_accuracy
    bigger = evaluate(ckpt, grid=TINY.max_grid + 2, data=data16)
    assert 0.0 <= bigger <= 1.0


def test_cli_train_eval_plot(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text(
        'growth = "mogrow"\nmomentum = 0.9\n'
        "[model]\nmax_depth = 4\nmax_grid = 4\nembed_dim = 16\nheads = 2\n"
        "[plan]\ntotal_epochs = 4\nsupernet_epochs = 0\n"
        "[optim]\nbatch_size = 64\nwarmup_epochs = 1\n"
        "[data]\ncount = 128\neval_count = 50\nside = 16\n")
    out = tmp_path / "run"
    assert main(["train", "--mode", "autoprog", "--config", str(cfg), "--out", str(out), "--seed", "2"]) == 0
    assert (out / METRICS).exists() and (out / SCHEDULE).exists()
    assert main(["eval", "--checkpoint", str(out / CHECKPOINT), "--grid", "5"]) == 0
    assert "accuracy" in capsys.readouterr().out
    assert main(["plot", "--metrics", str(out / METRICS)]) == 0
    assert (out / "metrics.svg").read_text().lstrip().startswith("<?xml")
    retrain = tmp_path / "re"
    assert main(["train", "--mode", "prog", "--config", str(cfg), "--schedule", str(out / SCHEDULE),
                 "--out", str(retrain)]) == 0
    assert GrowthSchedule.load(retrain / SCHEDULE) == GrowthSchedule.load(out / SCHEDULE)


def test_cli_reports_config_errors(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[model]\nwidth = 3\n")
    assert main(["train", "--mode", "baseline", "--config", str(cfg)]) == 2
    assert "width" in capsys.readouterr().err
