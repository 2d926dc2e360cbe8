from enum import Enum, IntEnum


class Maturity(IntEnum):
    """Gaussian 수렴 상태. 체크포인트에는 u8로 저장된다."""
    MISSING = 0     # 확장 뷰에서 새로 생성됨 (항상 학습 대상)
    IMMATURE = 1    # 기존 Gaussian 중 view-space 그래디언트가 임계값 초과
    MATURE = 2      # 수렴 완료, 속성 고정


class LayerKind(str, Enum):
    """리워드 네트워크 레이어 종류"""
    INPUT = "input"
    CONV3X3 = "conv3x3"
    CONV_TRANSPOSE3X3 = "conv_transpose3x3"
    RELU = "relu"
    SIGMOID = "sigmoid"
    CONCAT = "concat"


class ReductionMode(str, Enum):
    """타일별 그래디언트 리덕션 방식"""
    DETERMINISTIC = "deterministic"  # 타일 순서 고정
    ATOMIC = "atomic"                # 완료 순서 (1e-6 수준 비결정성)


class CorruptionKind(str, Enum):
    """prior 합성기가 주입하는 아티팩트 종류"""
    GHOST = "ghost"
    HUE_SHIFT = "hue_shift"
    BLUR = "blur"
    WARP = "warp"


class GradSpace(str, Enum):
    """grad_accum에 누적할 view-space 그래디언트 단위"""
    PIXEL = "pixel"
    NDC = "ndc"


class AblationVariant(str, Enum):
    FULL = "full"
    NO_REWARD = "no_reward"
    NO_DIFF_TRAIN = "no_diff_train"
    BASELINE = "baseline"


class Stage(str, Enum):
    """파이프라인 단계 (산출물 디렉토리 이름)"""
    SCENE = "scene"
    PHASE1 = "phase1"
    PRIORS = "priors"
    REWARD = "reward"
    EXPAND = "expand"
    EVAL = "eval"
    ABLATION = "ablation"
