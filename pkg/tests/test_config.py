from pathlib import Path

import pytest

from progvit.config import RunConfig, from_dict, load_config

ROOT = Path(__file__).resolve().parents[1]


@pytest.mark.parametrize("name", ["desk.toml", "tiny.toml"])
def test_shipped_configs_load(name):
    cfg = load_config(ROOT / "configs" / name)
    assert cfg.plan.total_epochs % cfg.plan.stages == 0


def test_desk_config_matches_experiment_setup():
    cfg = load_config(ROOT / "configs" / "desk.toml")
    m = cfg.model
    assert (m.embed_dim, m.max_depth, m.max_grid, m.max_grid * m.patch_size) == (64, 8, 8, 32)
    assert cfg.data.count >= 5000 and cfg.data.classes == 10
    assert (cfg.s1, cfg.plan.stages) == (0.5, 4)


def test_unknown_keys_rejected():
    with pytest.raises(ValueError, match="bogus"):
        from_dict({"bogus": 1})
    with pytest.raises(ValueError, match="depth"):
        from_dict({"model": {"depth": 3}})


def test_prog_requires_growth_kind():
    with pytest.raises(ValueError, match="growth"):
        from_dict({"mode": "prog"})
    assert from_dict({"mode": "prog", "growth": "stacking"}).growth_kind.value == "stacking"
    assert from_dict({"mode": "autoprog"}).growth_kind.value == "mogrow"


def test_bad_values():
    with pytest.raises(ValueError):
        from_dict({"mode": "fast"})
    with pytest.raises(ValueError):
        from_dict({"growth": "magic"})
    with pytest.raises(ValueError):
        from_dict({"s1": 0.0})
    with pytest.raises(ValueError):
        from_dict({"search": {"eval_subset_size": 0}})


def test_to_dict_round_trip():
    cfg = from_dict({"mode": "autoprog", "seed": 3, "model": {"embed_dim": 32}, "plan": {"total_epochs": 12}})
    again = from_dict(cfg.to_dict())
    assert again == cfg
    assert isinstance(again, RunConfig)
