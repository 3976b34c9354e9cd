import itertools

import pytest

from progvit.cost import CostModel, average_cost_ratio, estimate_cost, forward_flops
from progvit.model import ModelConfig, SubNetSpec
from progvit.schedule import build_growth_space, uniform_linear_schedule

DEIT_S = ModelConfig(max_depth=12, max_grid=14, patch_size=16, embed_dim=384, heads=6, mlp_ratio=4.0,
                     classes=1000)
DESK = ModelConfig()


def test_deit_s_forward_flops():
    g = forward_flops(DEIT_S, DEIT_S.full_spec) / 1e9
    assert abs(g - 4.6) / 4.6 < 0.10


def test_hand_count_single_block():
    cfg = ModelConfig(max_depth=1, max_grid=1, patch_size=1, embed_dim=2, heads=1, mlp_ratio=1.0, classes=1)
    # 1 patch: stem 3*2, two tokens: qkv 2*12, scores 8, mix 8, proj 2*4, ffn 2*2*4, head 2
    assert forward_flops(cfg, cfg.full_spec) == 6 + 24 + 8 + 8 + 8 + 16 + 2


def test_backward_factor():
    assert estimate_cost(DESK, DESK.full_spec) == 3 * forward_flops(DESK, DESK.full_spec)


def test_depth_linearity():
    a = forward_flops(DESK, SubNetSpec(4, 8)) - forward_flops(DESK, SubNetSpec(0 + 1, 8))
    b = forward_flops(DESK, SubNetSpec(7, 8)) - forward_flops(DESK, SubNetSpec(4, 8))
    assert a == b  # three blocks each
    stem_head = forward_flops(DESK, SubNetSpec(1, 8)) - (forward_flops(DESK, SubNetSpec(2, 8))
                                                          - forward_flops(DESK, SubNetSpec(1, 8)))
    half = forward_flops(DESK, SubNetSpec(4, 8)) - stem_head
    full = forward_flops(DESK, SubNetSpec(8, 8)) - stem_head
    assert full == 2 * half


def test_monotone():
    specs = [SubNetSpec(d, n) for d in range(1, 9) for n in range(1, 9)]
    for a, b in itertools.product(specs, repeat=2):
        if a <= b:
            assert estimate_cost(DESK, a) <= estimate_cost(DESK, b)


@pytest.mark.parametrize("cfg", [DEIT_S, DESK])
def test_uniform_schedule_cost_ratio(cfg):
    sched = uniform_linear_schedule(build_growth_space(cfg, 0.5, 4))
    assert average_cost_ratio(cfg, sched.specs) < 0.55


def test_calibration():
    cm = CostModel(DESK)
    big, small = DESK.full_spec, SubNetSpec(4, 4)
    cm.calibrate({big: 2.0, small: 0.5})
    assert cm(big) == pytest.approx(estimate_cost(DESK, big))
    assert cm(small) / cm(big) == pytest.approx(0.25)
