from enum import Enum


class CLI(Enum):
    # 설정
    INIT_CONFIG = "기본 설정 파일 생성"

    # 단계
    GEN_SCENE = "합성 장면 / 궤적 / GT 렌더 생성"
    TRAIN = "Gaussian 학습 (--phase 1: 재구성, --phase 2: 확장)"
    SYNTH_PRIORS = "shifted 차선 prior 이미지 합성"
    TRAIN_REWARD = "리워드 네트워크 결합 학습 및 리워드 맵 캐시"
    EXPAND = "성숙도 분류 → 누락 Gaussian 초기화 → phase 2 학습"
    EVAL = "held-out 뷰 평가 리포트 생성"

    # 묶음 실행
    RUN_ALL = "전체 파이프라인 실행"
    ABLATE = "변형별 ablation 비교"
