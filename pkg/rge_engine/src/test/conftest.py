import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "../"))
sys.path.insert(0, os.path.dirname(__file__))

from engine.rasterizer import Rasterizer
from models.enums import ReductionMode
from schemas.run_config import RunConfig


@pytest.fixture
def rasterizer():
    """단일 스레드, 결정적 리덕션"""
    return Rasterizer(tile_size=8, threads=1, mode=ReductionMode.DETERMINISTIC)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config() -> RunConfig:
    """수 초 안에 끝나는 축소 설정 (32×32, 짧은 궤적, 수십 회 반복)"""
    return RunConfig.default(
        seed=0,
        desk_scale=0.01,
        scene={"width": 32, "height": 32, "focal": 28.0, "splat_budget": 400, "num_boxes": 2, "num_blobs": 2},
        trajectory={"num_poses": 8, "lane_offsets": [3.5], "holdout_every": 4, "holdout_offset": 2},
        priors={"pointcloud_stride": 4, "pointcloud_cap": 2000, "prior_stride": 2},
        reward={"widths": [4, 8, 8], "joint_iters": 400, "linear_iters": 100},
        train={
            "phase1_iters": 1500,
            "phase2_iters": 800,
            "init_points": 20000,
            "densify_start": 0,
            "densify_end": 1000,
            "densify_interval": 5,
            "log_interval": 1000,
            "missing_spawn_cap": 200,
        },
        eval={"sweep_offsets": [1.0], "ablation_seeds": [0]},
    )
