"""테스트용 객체 팩토리"""
from typing import Optional

import numpy as np

from models.camera import CameraView
from models.enums import Maturity
from models.gaussian import GaussianSet
from models.scene import ColoredPointCloud, CorruptionRecipe, PriorSample, Reprojection


def create_camera(
    width: int = 16,
    height: int = 16,
    focal: float = 16.0,
    center=(0.0, 0.0, 0.0),
    rotation: Optional[np.ndarray] = None,
    view_id: str = "orig_000",
    lane_tag: str = "orig",
) -> CameraView:
    """기본: 원점에서 +z를 바라보는 카메라"""
    return CameraView.from_pose(
        center=np.asarray(center, dtype=np.float64),
        cam_to_world_rotation=np.eye(3) if rotation is None else rotation,
        fx=focal,
        fy=focal,
        width=width,
        height=height,
        view_id=view_id,
        lane_tag=lane_tag,
    )


def create_gaussians(
    count: int = 10,
    seed: int = 0,
    depth=(2.5, 4.0),
    spread: float = 0.6,
    scale=(-2.6, -1.8),
    maturity: Maturity = Maturity.IMMATURE,
    sh_degree: int = 0,
) -> GaussianSet:
    """카메라 앞쪽 (z ∈ depth) 무작위 이방성 Gaussian"""
    rng = np.random.default_rng(seed)
    z = rng.uniform(*depth, size=count)
    positions = np.stack([rng.uniform(-spread, spread, count) * z / 3.0, rng.uniform(-spread, spread, count) * z / 3.0, z], axis=1)
    rotations = rng.normal(size=(count, 4))
    rotations /= np.linalg.norm(rotations, axis=1, keepdims=True)
    width = 3 if sh_degree == 0 else 12
    colors = rng.uniform(0.1, 0.9, size=(count, width)) if sh_degree == 0 else rng.normal(scale=0.3, size=(count, width))
    return GaussianSet.create(
        positions=positions,
        rotations=rotations,
        log_scales=rng.uniform(*scale, size=(count, 3)),
        opacity_logits=rng.uniform(-0.5, 1.5, size=count),
        colors=colors,
        maturity=maturity,
        sh_degree=sh_degree,
    )


def create_image(height: int = 16, width: int = 16, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=(height, width, 3))


def create_pointcloud(count: int = 100, seed: int = 0) -> ColoredPointCloud:
    rng = np.random.default_rng(seed)
    positions = np.stack([rng.uniform(-1, 1, count), rng.uniform(-1, 1, count), rng.uniform(2, 4, count)], axis=1)
    return ColoredPointCloud(positions=positions, colors=rng.uniform(0, 1, size=(count, 3)), source_views=["orig_000"])


def create_prior(view_id: str = "shift3.5_000", height: int = 16, width: int = 16, seed: int = 0) -> PriorSample:
    image = create_image(height, width, seed)
    mask = np.zeros((height, width), dtype=bool)
    mask[: height // 2] = True
    reprojection = Reprojection(
        image=np.zeros_like(image),
        valid=np.zeros((height, width), dtype=bool),
        point_index=np.full((height, width), -1, dtype=np.int64),
        depth=np.zeros((height, width)),
    )
    return PriorSample(
        view_id=view_id,
        image=image,
        artifact_mask=mask,
        reprojection=reprojection,
        recipe=CorruptionRecipe(seed=seed, severity=0.25),
    )
