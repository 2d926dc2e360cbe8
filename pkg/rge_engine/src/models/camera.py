from dataclasses import dataclass, field

import numpy as np

from exception.pipeline_exceptions import InvalidConfig

DEFAULT_NEAR_CLIP = 0.05


@dataclass
class CameraView:
    """
    핀홀 카메라 뷰
    - world_to_cam: 4×4 강체 변환 (회전 + 이동), 카메라 좌표계는 x 오른쪽, y 아래, z 전방
    - 픽셀 (u, v)는 연속 좌표 (u, v)에서 평가하며 (cx, cy)는 광축 위에 있다
    """
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_to_cam: np.ndarray = field(default_factory=lambda: np.eye(4))
    near_clip: float = DEFAULT_NEAR_CLIP
    lane_tag: str = "orig"
    view_id: str = ""

    def __post_init__(self):
        self.world_to_cam = np.asarray(self.world_to_cam, dtype=np.float64)

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_cam[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_cam[:3, 3]

    @property
    def center(self) -> np.ndarray:
        """월드 좌표계 기준 카메라 중심"""
        return -self.rotation.T @ self.translation

    @property
    def shape(self) -> tuple:
        return (self.height, self.width)

    def validate(self, tol: float = 1e-6) -> "CameraView":
        """불변식 검사: 회전 블록 정규직교 / det=+1, 내부 파라미터 범위"""
        r = self.rotation
        if not np.allclose(r @ r.T, np.eye(3), atol=tol) or abs(np.linalg.det(r) - 1.0) > tol:
            raise InvalidConfig("world_to_cam 회전 블록이 정규직교가 아닙니다.", field=f"camera[{self.view_id}]")
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidConfig(f"초점거리는 양수여야 합니다. fx={self.fx}, fy={self.fy}", field=f"camera[{self.view_id}]")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidConfig(f"주점이 이미지 밖에 있습니다. cx={self.cx}, cy={self.cy}", field=f"camera[{self.view_id}]")
        if self.near_clip <= 0:
            raise InvalidConfig(f"near_clip은 양수여야 합니다. near_clip={self.near_clip}", field=f"camera[{self.view_id}]")
        return self

    @classmethod
    def from_pose(
        cls,
        center: np.ndarray,
        cam_to_world_rotation: np.ndarray,
        fx: float,
        fy: float,
        width: int,
        height: int,
        cx: float = None,
        cy: float = None,
        **kwargs,
    ) -> "CameraView":
        """카메라 중심과 카메라→월드 회전(열: 오른쪽, 아래, 전방)으로 생성"""
        r_w2c = np.asarray(cam_to_world_rotation, dtype=np.float64).T
        w2c = np.eye(4)
        w2c[:3, :3] = r_w2c
        w2c[:3, 3] = -r_w2c @ np.asarray(center, dtype=np.float64)
        return cls(
            fx=fx,
            fy=fy,
            cx=(width - 1) / 2.0 if cx is None else cx,
            cy=(height - 1) / 2.0 if cy is None else cy,
            width=width,
            height=height,
            world_to_cam=w2c,
            **kwargs,
        )
