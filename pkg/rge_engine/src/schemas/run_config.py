from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from exception.config_exceptions import ConfigError
from models.enums import AblationVariant, GradSpace

REQUIRED_SECTIONS = ("scene", "trajectory", "priors", "reward", "train", "eval")


class ConfigSection(BaseModel):
    model_config = ConfigDict(extra="forbid")


###### [scene] #######
class SceneConfig(ConfigSection):
    width: int = Field(64, ge=8, description="이미지 너비(px)")
    height: int = Field(64, ge=8, description="이미지 높이(px)")
    focal: float = Field(56.0, gt=0, description="초점거리(px), fx = fy")
    splat_budget: int = Field(5000, ge=100, description="GT Gaussian 개수 상한")
    num_boxes: int = Field(6, ge=0, description="도로 옆 박스 개수")
    num_blobs: int = Field(10, ge=0, description="식생 블롭 개수")
    left_wall: float = Field(-6.0, lt=0, description="왼쪽 벽 x 좌표")
    right_wall: float = Field(13.0, gt=0, description="오른쪽 벽 x 좌표")
    sky_height: float = Field(10.0, gt=0, description="하늘 평면 높이 (y = -sky_height)")
    backdrop_distance: float = Field(45.0, gt=0, description="배경 벽 z 좌표")
    start_z: float = Field(-5.0, description="장면 시작 z 좌표")
    surface_thickness: float = Field(0.1, gt=0, le=1, description="면 스플랫 두께 비율")


###### [trajectory] #######
class TrajectoryConfig(ConfigSection):
    num_poses: int = Field(40, ge=1, description="차선당 포즈 수")
    lane_offsets: List[float] = Field(default_factory=lambda: [3.5, 7.0], description="측방 이동 거리 목록")
    step: float = Field(0.5, gt=0, description="포즈 간 전진 거리")
    camera_height: float = Field(1.5, gt=0, description="지면 위 카메라 높이")
    yaw_sway_deg: float = Field(2.0, ge=0, lt=10, description="요 흔들림 진폭(도)")
    near_clip: float = Field(0.05, gt=0)
    holdout_every: int = Field(8, ge=2, description="held-out 뷰 간격")
    holdout_offset: int = Field(4, ge=0, description="held-out 뷰 위치 (i % every == offset)")

    @field_validator("lane_offsets")
    @classmethod
    def validate_offsets(cls, offsets: List[float]) -> List[float]:
        if any(o < 0 for o in offsets):
            raise ValueError("lane_offsets는 0 이상이어야 합니다.")
        return offsets


###### [priors] #######
class PriorsConfig(ConfigSection):
    severity_by_offset: Dict[float, float] = Field(
        default_factory=lambda: {3.5: 0.15, 7.0: 0.3}, description="측방 이동 거리별 손상 강도 (선형 보간)"
    )
    severity_override: Optional[float] = Field(None, description="설정 시 모든 prior에 같은 강도 적용")
    mask_epsilon: float = Field(2.0 / 255.0, gt=0, description="아티팩트 마스크 임계값")
    max_ops: int = Field(6, ge=1, description="강도 1에서의 손상 연산 추가 개수")
    area_bias: float = Field(0.05, ge=0, le=0.5, description="손상 원반 면적 합 목표 = severity + area_bias (이미지 비율)")
    max_area: float = Field(0.9, gt=0, le=1, description="손상 원반 면적 합 상한 (이미지 비율)")
    kinds: List[str] = Field(default_factory=lambda: ["ghost", "hue_shift", "blur", "warp"])
    depth_noise: Tuple[float, float] = Field((0.9, 1.1), description="깊이 오라클 픽셀별 곱셈 노이즈 범위")
    depth_scale_range: Tuple[float, float] = Field((0.8, 1.25), description="깊이 오라클 뷰별 전역 스케일 범위")
    pointcloud_stride: int = Field(4, ge=1, description="점군 샘플링 격자 간격(px)")
    pointcloud_cap: int = Field(20000, ge=0, description="점군 점 개수 상한")
    prior_stride: int = Field(1, ge=1, description="shifted 차선에서 prior로 쓸 뷰 간격")

    @field_validator("severity_override")
    @classmethod
    def validate_override(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and not 0.0 <= value <= 1.0:
            raise ValueError("severity_override는 [0, 1] 범위여야 합니다.")
        return value

    def severity_for(self, offset: float) -> float:
        if self.severity_override is not None:
            return self.severity_override
        xs = [0.0] + sorted(self.severity_by_offset)
        ys = [0.0] + [self.severity_by_offset[x] for x in sorted(self.severity_by_offset)]
        return float(np.clip(np.interp(offset, xs, ys), 0.0, 1.0))


###### [reward] #######
class AntiCollapseConfig(ConfigSection):
    enabled: bool = False
    tau: float = Field(0.5, ge=0, le=1)
    weight: float = Field(0.1, ge=0)


class RewardConfig(ConfigSection):
    enabled: bool = Field(True, description="False면 C_e ≡ 1 (리워드 네트워크 미사용)")
    lambda_reproj: float = Field(0.5, ge=0)
    lambda_reg: float = Field(0.3, ge=0)
    joint_iters: int = Field(5000, ge=0, description="결합 학습 반복 수 (desk_scale 적용 전)")
    widths: Tuple[int, int, int] = Field((16, 32, 64), description="U-Net 채널 폭")
    head_bias: float = Field(2.0, description="예측 헤드 bias 초기값")
    lr_init: float = Field(5e-4, gt=0)
    lr_linear_end: float = Field(5e-5, gt=0)
    lr_final: float = Field(1e-6, gt=0)
    linear_iters: int = Field(1000, ge=0, description="선형 감쇠 구간 길이 (desk_scale 적용 전)")
    weight_decay: float = Field(0.01, ge=0)
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = Field(1e-8, gt=0)
    couple_gs: bool = Field(True, description="L_GS 그래디언트를 C_e를 통해 네트워크로 전달")
    collapse_warning: float = Field(0.3, ge=0, le=1, description="평균 신뢰도가 이 값 미만이면 경고")
    anti_collapse: AntiCollapseConfig = Field(default_factory=AntiCollapseConfig)

    @model_validator(mode="after")
    def validate_schedule(self):
        if not self.lr_init >= self.lr_linear_end >= self.lr_final:
            raise ValueError("학습률 스케줄은 lr_init ≥ lr_linear_end ≥ lr_final 이어야 합니다.")
        if self.linear_iters > self.joint_iters:
            raise ValueError("linear_iters는 joint_iters 이하여야 합니다.")
        return self


###### [train] #######
class LearningRates(ConfigSection):
    position_init: float = Field(1.6e-4, gt=0, description="× scene extent")
    position_final: float = Field(1.6e-6, gt=0, description="× scene extent")
    rotation: float = Field(1e-3, gt=0)
    scale: float = Field(5e-3, gt=0)
    opacity: float = Field(5e-2, gt=0)
    color: float = Field(2.5e-3, gt=0)


class TrainConfig(ConfigSection):
    lambda_rgb: float = Field(0.8, ge=0, le=1)
    lambda_ie: float = Field(0.01, ge=0, le=1)
    lambda_io: float = Field(0.8, ge=0, le=1)
    phase1_iters: int = Field(30000, ge=0)
    phase2_iters: int = Field(10000, ge=0)
    densify_start: int = Field(500, ge=0)
    densify_end: int = Field(15000, ge=0)
    densify_interval: int = Field(100, ge=1)
    densify_grad_threshold: float = Field(2e-4, gt=0)
    maturity_threshold: float = Field(5e-4, gt=0, description="Immature/Mature 판정 임계값")
    maturity_threshold_alt: float = Field(4e-4, gt=0, description="대체 성숙도 임계값 (use_alt_maturity_threshold)")
    use_alt_maturity_threshold: bool = False
    percent_dense: float = Field(0.01, gt=0, description="split/clone 경계 (× scene extent)")
    prune_opacity: float = Field(0.005, gt=0, lt=1)
    max_gaussians: int = Field(30000, ge=1)
    init_points: int = Field(50000, ge=1, description="초기 점 개수 (desk_scale 적용 전)")
    init_opacity: float = Field(0.1, gt=0, lt=1)
    sh_degree: int = Field(0, ge=0, le=1)
    grad_space: GradSpace = GradSpace.NDC
    differentiated: bool = Field(True, description="False면 기존 Gaussian을 모두 Immature로 둔다")
    missing_init_opacity: float = Field(0.1, gt=0, lt=1)
    missing_alpha_threshold: float = Field(0.5, gt=0, le=1)
    missing_spawn_stride: int = Field(2, ge=1)
    missing_spawn_cap: int = Field(4000, ge=0)
    calibration_min_overlap: int = Field(50, ge=1)
    lr: LearningRates = Field(default_factory=LearningRates)
    log_interval: int = Field(100, ge=1)

    @model_validator(mode="after")
    def validate_window(self):
        if self.densify_start >= self.densify_end:
            raise ValueError("densify_start < densify_end 이어야 합니다.")
        return self

    @property
    def effective_maturity_threshold(self) -> float:
        return self.maturity_threshold_alt if self.use_alt_maturity_threshold else self.maturity_threshold


###### [eval] #######
class EvalConfig(ConfigSection):
    conf_threshold: float = Field(0.5, ge=0, le=1, description="masked MAE 수용 임계값")
    sweep_offsets: List[float] = Field(default_factory=lambda: [1.0, 2.0, 3.0, 4.0, 5.0])
    ablation_seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    ablation_variants: List[AblationVariant] = Field(default_factory=lambda: list(AblationVariant))


class RunConfig(ConfigSection):
    seed: int = Field(0, ge=0)
    desk_scale: float = Field(0.1, gt=0, le=1.0)
    output_dir: str = Field("default", description="--out 미지정 시 출력 디렉토리 (상대 경로면 RGE_OUTPUT_ROOT 기준)")
    scene: SceneConfig
    trajectory: TrajectoryConfig
    priors: PriorsConfig
    reward: RewardConfig
    train: TrainConfig
    eval: EvalConfig

    @classmethod
    def default(cls, **overrides) -> "RunConfig":
        data = {name: {} for name in REQUIRED_SECTIONS}
        data.update(overrides)
        return cls.model_validate(data)

    def scaled(self, value: int) -> int:
        """원 규모 기준 반복/점 개수에 desk_scale 적용"""
        return max(0, int(round(value * self.desk_scale)))

    def with_updates(self, **changes) -> "RunConfig":
        """섹션 단위 부분 갱신 (예: with_updates(train={"differentiated": False}))"""
        data = self.model_dump(mode="json")
        for key, value in changes.items():
            if isinstance(value, dict) and isinstance(data.get(key), dict):
                data[key].update(value)
            else:
                data[key] = value
        return RunConfig.model_validate(data)


# ============================
# YAML 로딩 / 저장
# ============================
def parse_run_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("설정 문서는 매핑이어야 합니다.")
    for section in REQUIRED_SECTIONS:
        if section not in data:
            raise ConfigError("필수 섹션이 없습니다.", section=section)
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        loc = [str(p) for p in first.get("loc", ())]
        section = loc[0] if loc and loc[0] in REQUIRED_SECTIONS else None
        field = ".".join(loc[1:] if section else loc) or None
        raise ConfigError(first.get("msg", "잘못된 설정입니다."), section=section, field=field) from e


def load_run_config(path: str, desk_scale: Optional[float] = None) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"설정 파일을 찾을 수 없습니다: {path}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"YAML 파싱 실패: {e}") from e
    config = parse_run_config(data)
    if desk_scale is not None:
        config = config.with_updates(desk_scale=desk_scale)
    return config


def dump_run_config(config: RunConfig, path: str):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(config.model_dump(mode="json"), f, sort_keys=False, allow_unicode=True)
