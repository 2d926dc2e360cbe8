from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from models.camera import CameraView
from models.gaussian import GaussianSet


@dataclass
class SyntheticScene:
    """절차적으로 생성된 GT 장면"""
    gaussians: GaussianSet
    bounds_min: np.ndarray
    bounds_max: np.ndarray
    seed: int

    @property
    def extent(self) -> float:
        """장면 크기 (대각선 길이의 절반)"""
        return float(0.5 * np.linalg.norm(self.bounds_max - self.bounds_min))


@dataclass
class TrajectorySet:
    """차선 태그 → 포즈 목록. 'orig'가 원래 차선"""
    lanes: Dict[str, List[CameraView]]
    offsets: Dict[str, float] = field(default_factory=dict)

    @property
    def original(self) -> List[CameraView]:
        return self.lanes["orig"]

    def shifted_tags(self) -> List[str]:
        return [tag for tag in self.lanes if tag != "orig"]

    def all_views(self) -> List[CameraView]:
        return [cam for tag in self.lanes for cam in self.lanes[tag]]

    def view(self, view_id: str) -> CameraView:
        for cam in self.all_views():
            if cam.view_id == view_id:
                return cam
        raise KeyError(view_id)


@dataclass
class ColoredPointCloud:
    positions: np.ndarray           # (M, 3)
    colors: np.ndarray              # (M, 3) [0, 1]
    source_views: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return int(self.positions.shape[0])

    @classmethod
    def empty(cls) -> "ColoredPointCloud":
        return cls(positions=np.zeros((0, 3)), colors=np.zeros((0, 3)))


@dataclass
class Reprojection:
    """점군 재투영 결과 (z-buffer, 1px 스플랫)"""
    image: np.ndarray               # (H, W, 3)
    valid: np.ndarray               # (H, W) bool
    point_index: np.ndarray         # (H, W) 가장 가까운 점 인덱스, 무효 픽셀은 -1
    depth: np.ndarray               # (H, W) camera-z, 무효 픽셀은 0


@dataclass
class CorruptionOp:
    kind: str
    center: Tuple[float, float]
    radius: float
    magnitude: float
    params: Dict[str, float] = field(default_factory=dict)


@dataclass
class CorruptionRecipe:
    seed: int
    severity: float
    ops: List[CorruptionOp] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "severity": self.severity,
            "ops": [
                {"kind": op.kind, "center": list(op.center), "radius": op.radius, "magnitude": op.magnitude, "params": op.params}
                for op in self.ops
            ],
        }


@dataclass
class PriorSample:
    view_id: str
    image: np.ndarray               # I_e (H, W, 3)
    artifact_mask: np.ndarray       # (H, W) bool
    reprojection: Reprojection
    recipe: CorruptionRecipe
    reward: Optional["RewardMap"] = None


@dataclass
class RewardMap:
    values: np.ndarray              # C_e (H, W) ∈ [0, 1]
    source_view: str
    frozen: bool = False

    def freeze(self) -> "RewardMap":
        self.values = np.array(self.values, copy=True)
        self.values.flags.writeable = False
        self.frozen = True
        return self
