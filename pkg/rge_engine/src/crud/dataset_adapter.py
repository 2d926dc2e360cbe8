"""
데이터셋 어댑터 인터페이스
실제 주행 데이터셋 로더가 구현해야 할 최소 표면: 원래 차선 뷰, 뷰별 GT 이미지, 색상 점군
"""
from typing import Dict, List, Protocol, runtime_checkable

import numpy as np

from crud.synthetic_world import SyntheticWorldService, split_views
from models.camera import CameraView
from models.scene import ColoredPointCloud, SyntheticScene, TrajectorySet
from schemas.run_config import RunConfig


@runtime_checkable
class DatasetAdapter(Protocol):
    def original_views(self) -> List[CameraView]:
        """원래 차선 포즈 (학습 + held-out)"""
        ...

    def image(self, view_id: str) -> np.ndarray:
        """(H, W, 3) [0, 1] GT 이미지"""
        ...

    def point_cloud(self) -> ColoredPointCloud:
        ...


class SyntheticDatasetAdapter:
    """합성 장면을 데이터셋처럼 노출 (GT 렌더는 캐시)"""

    def __init__(self, world: SyntheticWorldService, scene: SyntheticScene, trajectory: TrajectorySet, config: RunConfig):
        self.world = world
        self.scene = scene
        self.trajectory = trajectory
        self.config = config
        self._images: Dict[str, np.ndarray] = {}
        self._cloud = None

    def original_views(self) -> List[CameraView]:
        return list(self.trajectory.original)

    def training_views(self) -> List[CameraView]:
        return split_views(self.trajectory.original, self.config.trajectory)[0]

    def image(self, view_id: str) -> np.ndarray:
        if view_id not in self._images:
            self._images[view_id] = self.world.render_gt(self.scene, self.trajectory.view(view_id))
        return self._images[view_id]

    def point_cloud(self) -> ColoredPointCloud:
        if self._cloud is None:
            priors = self.config.priors
            self._cloud = self.world.sample_pointcloud(
                self.scene, self.training_views(), priors.pointcloud_stride, priors.pointcloud_cap
            )
        return self._cloud
