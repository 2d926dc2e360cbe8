from typing import Optional


class PipelineError(Exception):
    """학습 파이프라인 관련 도메인 예외"""
    pass


class InvalidConfig(PipelineError):
    def __init__(self, message: str, field: Optional[str] = None):
        self.message = message
        self.field = field
        super().__init__(f"{field + ': ' if field else ''}{message}")


class NothingToClassify(PipelineError):
    def __init__(self):
        super().__init__("분류에 사용할 prior 뷰가 없습니다.")


class InsufficientOverlap(PipelineError):
    def __init__(self, overlap: int, required: int):
        self.overlap = overlap
        self.required = required
        super().__init__(f"스케일 보정에 필요한 겹치는 픽셀이 부족합니다. 필요: {required}, 실제: {overlap}")


class DegenerateDepths(PipelineError):
    def __init__(self, energy: float):
        super().__init__(f"추정 깊이가 퇴화되었습니다. sum(d_est^2)={energy:.3e}")


class NoValidPixels(PipelineError):
    def __init__(self, threshold: float):
        super().__init__(f"신뢰도 임계값 {threshold} 이상인 픽셀이 없습니다.")


class DegenerateLabels(PipelineError):
    def __init__(self, positives: int, negatives: int):
        super().__init__(f"AUROC 계산 불가: positive={positives}, negative={negatives}")


class NumericalDivergence(PipelineError):
    def __init__(self, stage: str, iteration: int, detail: str, dump_path: Optional[str] = None):
        """
        Args:
            stage: 발산이 발생한 단계 (예: "phase1", "joint")
            iteration: 발산 시점의 반복 번호
            detail: 진단 메시지 (손실 구성 요소 등)
            dump_path: 덤프된 체크포인트 경로
        """
        self.stage = stage
        self.iteration = iteration
        self.dump_path = dump_path
        message = f"❌ {stage} 단계 {iteration}번째 반복에서 수치 발산: {detail}"
        if dump_path:
            message += f" (체크포인트 덤프: {dump_path})"
        super().__init__(message)


class MissingArtifact(PipelineError):
    def __init__(self, path: str, produced_by: str):
        self.path = path
        self.produced_by = produced_by
        super().__init__(f"선행 산출물이 없습니다: {path} ('{produced_by}' 명령을 먼저 실행하세요)")


class CheckpointFormatError(PipelineError):
    def __init__(self, path: str, reason: str):
        super().__init__(f"체크포인트 형식 오류 ({path}): {reason}")


class MatureBlockModified(PipelineError):
    def __init__(self, before: int, after: int):
        self.before = before
        self.after = after
        super().__init__(f"phase 2 학습이 고정된 Mature 블록을 바꿨습니다. Mature 행: {before} → {after}")
