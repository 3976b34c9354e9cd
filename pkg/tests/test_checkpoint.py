import struct

import pytest
import torch

from progvit.checkpoint import MAGIC, CheckpointError, load_checkpoint, save_checkpoint
from progvit.config import RunConfig
from progvit.growth import grow
from progvit.model import ModelConfig, SubNetSpec, build_model, forward

CFG = ModelConfig(max_depth=4, max_grid=4, patch_size=2, embed_dim=16, heads=2)


def test_round_trip_bit_identical(tmp_path):
    params = grow("identity", build_model(CFG, SubNetSpec(2, 3), 1), CFG, SubNetSpec(4, 4))
    x = torch.randn(3, 3, 8, 8)
    before = forward(params, CFG, CFG.full_spec, x)
    cfg = RunConfig(model=CFG).to_dict()
    save_checkpoint(tmp_path / "c.pvck", params, cfg, step_count=17, meta={"grid": 4})
    loaded, config, steps, meta = load_checkpoint(tmp_path / "c.pvck")
    assert list(loaded) == list(params)
    assert steps == 17 and meta == {"grid": 4} and config["model"]["embed_dim"] == 16
    assert torch.equal(forward(loaded, CFG, CFG.full_spec, x), before)


def test_header_layout(tmp_path):
    save_checkpoint(tmp_path / "c.pvck", {"w": torch.ones(2, 3)}, {})
    raw = (tmp_path / "c.pvck").read_bytes()
    magic, version, hlen = struct.unpack_from("<4sIQ", raw)
    assert magic == MAGIC and version == 1
    assert len(raw) == 16 + hlen + 6 * 4
    assert struct.unpack_from("<f", raw, 16 + hlen)[0] == 1.0


def test_corrupt_files(tmp_path):
    path = tmp_path / "c.pvck"
    save_checkpoint(path, {"w": torch.ones(4)}, {})
    raw = path.read_bytes()
    path.write_bytes(raw[:-4])
    with pytest.raises(CheckpointError, match="past end"):
        load_checkpoint(path)
    path.write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)
    path.write_bytes(raw[:4] + struct.pack("<I", 9) + raw[8:])
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)
