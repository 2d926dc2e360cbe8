from dataclasses import dataclass, replace
from typing import Dict, Optional

import numpy as np

from models.enums import Maturity

# 옵티마이저가 갱신하는 파라미터 그룹 (체크포인트 레코드 순서와 동일)
PARAM_GROUPS = ("positions", "rotations", "log_scales", "opacity_logits", "colors")

LOG_SCALE_MIN = float(np.log(1e-6))
LOG_SCALE_MAX = float(np.log(1e3))


def color_width(sh_degree: int) -> int:
    """색상 블록 길이: 3·(degree+1)²"""
    return 3 * (sh_degree + 1) ** 2


@dataclass
class GaussianPrimitive:
    """단일 이방성 스플랫 (μ, q, s, o, z)"""
    position: np.ndarray
    rotation: np.ndarray
    log_scale: np.ndarray
    opacity_logit: float
    color: np.ndarray
    maturity: Maturity = Maturity.IMMATURE
    grad_accum: float = 0.0
    grad_count: int = 0

    @property
    def opacity(self) -> float:
        return float(1.0 / (1.0 + np.exp(-self.opacity_logit)))

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)


@dataclass
class GaussianSet:
    """
    Gaussian 집합 (structure-of-arrays)
    - 모든 배열의 첫 번째 축이 Gaussian 인덱스
    - colors: sh_degree=0이면 RGB, 아니면 계수 우선(coefficient-major) SH 블록
    """
    positions: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray
    opacity_logits: np.ndarray
    colors: np.ndarray
    maturity: np.ndarray
    grad_accum: np.ndarray
    grad_count: np.ndarray
    sh_degree: int = 0

    def __post_init__(self):
        n = self.positions.shape[0]
        expected = {
            "positions": (n, 3),
            "rotations": (n, 4),
            "log_scales": (n, 3),
            "opacity_logits": (n,),
            "colors": (n, color_width(self.sh_degree)),
            "maturity": (n,),
            "grad_accum": (n,),
            "grad_count": (n,),
        }
        for name, shape in expected.items():
            actual = getattr(self, name).shape
            if actual != shape:
                raise ValueError(f"GaussianSet.{name} shape 불일치. 기대값: {shape}, 실제값: {actual}")

    def __len__(self) -> int:
        return int(self.positions.shape[0])

    # ============================
    # 생성
    # ============================
    @classmethod
    def empty(cls, sh_degree: int = 0) -> "GaussianSet":
        return cls(
            positions=np.zeros((0, 3)),
            rotations=np.zeros((0, 4)),
            log_scales=np.zeros((0, 3)),
            opacity_logits=np.zeros(0),
            colors=np.zeros((0, color_width(sh_degree))),
            maturity=np.zeros(0, dtype=np.uint8),
            grad_accum=np.zeros(0),
            grad_count=np.zeros(0, dtype=np.int64),
            sh_degree=sh_degree,
        )

    @classmethod
    def create(
        cls,
        positions,
        rotations=None,
        log_scales=None,
        opacity_logits=None,
        colors=None,
        maturity: Maturity = Maturity.IMMATURE,
        sh_degree: int = 0,
    ) -> "GaussianSet":
        """기본값을 채워 새 집합 생성 (회전=항등, 스케일=1, 불투명도=0.5, 색상=회색)"""
        positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        n = positions.shape[0]
        if rotations is None:
            rotations = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
        if log_scales is None:
            log_scales = np.zeros((n, 3))
        if opacity_logits is None:
            opacity_logits = np.zeros(n)
        if colors is None:
            colors = np.full((n, color_width(sh_degree)), 0.5 if sh_degree == 0 else 0.0)
        return cls(
            positions=positions.copy(),
            rotations=np.asarray(rotations, dtype=np.float64).reshape(n, 4).copy(),
            log_scales=np.asarray(log_scales, dtype=np.float64).reshape(n, 3).copy(),
            opacity_logits=np.asarray(opacity_logits, dtype=np.float64).reshape(n).copy(),
            colors=np.asarray(colors, dtype=np.float64).reshape(n, color_width(sh_degree)).copy(),
            maturity=np.full(n, int(maturity), dtype=np.uint8),
            grad_accum=np.zeros(n),
            grad_count=np.zeros(n, dtype=np.int64),
            sh_degree=sh_degree,
        )

    def primitive(self, index: int) -> GaussianPrimitive:
        return GaussianPrimitive(
            position=self.positions[index].copy(),
            rotation=self.rotations[index].copy(),
            log_scale=self.log_scales[index].copy(),
            opacity_logit=float(self.opacity_logits[index]),
            color=self.colors[index].copy(),
            maturity=Maturity(int(self.maturity[index])),
            grad_accum=float(self.grad_accum[index]),
            grad_count=int(self.grad_count[index]),
        )

    # ============================
    # 조작
    # ============================
    def copy(self) -> "GaussianSet":
        return replace(self, **{name: getattr(self, name).copy() for name in self._array_fields()})

    def select(self, mask_or_index) -> "GaussianSet":
        return replace(self, **{name: getattr(self, name)[mask_or_index].copy() for name in self._array_fields()})

    def concat(self, other: "GaussianSet") -> "GaussianSet":
        if other.sh_degree != self.sh_degree:
            raise ValueError(f"sh_degree 불일치: {self.sh_degree} vs {other.sh_degree}")
        return replace(
            self,
            **{name: np.concatenate([getattr(self, name), getattr(other, name)]) for name in self._array_fields()},
        )

    def params(self) -> Dict[str, np.ndarray]:
        """옵티마이저가 in-place로 갱신할 파라미터 배열 (참조)"""
        return {name: getattr(self, name) for name in PARAM_GROUPS}

    def reset_grad_stats(self, mask: Optional[np.ndarray] = None):
        if mask is None:
            self.grad_accum[:] = 0.0
            self.grad_count[:] = 0
        else:
            self.grad_accum[mask] = 0.0
            self.grad_count[mask] = 0

    # ============================
    # 파생 값
    # ============================
    @property
    def opacities(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.opacity_logits))

    @property
    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales)

    def count_by_maturity(self) -> Dict[str, int]:
        return {m.name.lower(): int(np.count_nonzero(self.maturity == m)) for m in Maturity}

    def mask_of(self, *levels: Maturity) -> np.ndarray:
        return np.isin(self.maturity, [int(m) for m in levels])

    @staticmethod
    def _array_fields() -> tuple:
        return PARAM_GROUPS + ("maturity", "grad_accum", "grad_count")


@dataclass
class GaussianGradients:
    """파라미터 그룹별 그래디언트 (GaussianSet과 동일한 shape)"""
    positions: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray
    opacity_logits: np.ndarray
    colors: np.ndarray

    @classmethod
    def zeros_like(cls, gaussians: GaussianSet) -> "GaussianGradients":
        return cls(**{name: np.zeros_like(getattr(gaussians, name)) for name in PARAM_GROUPS})

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_GROUPS}

    def add_(self, other: "GaussianGradients") -> "GaussianGradients":
        for name in PARAM_GROUPS:
            getattr(self, name)[...] += getattr(other, name)
        return self
