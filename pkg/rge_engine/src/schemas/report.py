from typing import Dict, List, Optional

from pydantic import Field, model_validator

from schemas.format import BaseSchema, Provenance


###### 학습 #######
class LossRecord(BaseSchema):
    iteration: int
    loss: float
    kind: str = Field("io", description="io | ie | reward")


class MaturityCounts(BaseSchema):
    missing: int = 0
    immature: int = 0
    mature: int = 0

    @property
    def total(self) -> int:
        return self.missing + self.immature + self.mature


class TrainReport(BaseSchema):
    provenance: Provenance
    phase: str
    iterations: int
    losses: List[LossRecord] = Field(default_factory=list)
    initial_loss: Optional[float] = None
    final_loss: Optional[float] = None
    gaussian_count: int
    maturity: MaturityCounts = Field(default_factory=MaturityCounts)
    classified_total: Optional[int] = Field(None, description="분류 시점의 기존 + 신규 Gaussian 수")
    update_count: int = Field(0, description="(행, 파라미터 그룹) 단위 갱신 횟수")
    densify_events: int = 0
    spawned: int = 0
    calibration_scale: Optional[float] = None
    mean_confidence: Optional[float] = None
    wall_clock_s: Optional[float] = Field(None, description="결정적 모드에서는 timing.json으로 분리")
    metrics: Dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_counts(self):
        if self.classified_total is not None and self.maturity.total != self.classified_total:
            raise ValueError(
                f"성숙도 개수 합({self.maturity.total})이 분류 시점 Gaussian 수({self.classified_total})와 다릅니다."
            )
        return self


###### 평가 #######
class ViewMetrics(BaseSchema):
    view_id: str
    lane: str
    psnr: float
    ssim: float
    auroc: Optional[float] = None
    mae_accepted: Optional[float] = None
    mae_rejected: Optional[float] = None
    accepted_fraction: Optional[float] = None


class AggregateMetrics(BaseSchema):
    views: int
    psnr: float
    ssim: float
    auroc: Optional[float] = None
    mae_accepted: Optional[float] = None
    mae_rejected: Optional[float] = None


class SweepPoint(BaseSchema):
    offset: float
    psnr: float
    ssim: float
    views: int


class MetricReport(BaseSchema):
    provenance: Provenance
    per_lane: Dict[str, AggregateMetrics] = Field(default_factory=dict)
    overall: Optional[AggregateMetrics] = None
    reward: Optional[AggregateMetrics] = Field(None, description="prior 뷰 기준 리워드 맵 판별 성능")
    gaussian_counts: MaturityCounts = Field(default_factory=MaturityCounts)
    sweep: List[SweepPoint] = Field(default_factory=list)
    notes: List[str] = Field(default_factory=lambda: ["LPIPS와 FID는 사전학습 네트워크가 필요하여 보고하지 않습니다."])


###### 어블레이션 #######
class AblationRow(BaseSchema):
    variant: str
    seed: int
    shifted_psnr: float
    shifted_ssim: float
    update_count: int
    mature_count: int = 0
    wall_clock_s: Optional[float] = None


class AblationTable(BaseSchema):
    provenance: Provenance
    rows: List[AblationRow] = Field(default_factory=list)

    def by_variant(self, variant: str) -> Dict[int, AblationRow]:
        return {row.seed: row for row in self.rows if row.variant == variant}


###### 단계 매니페스트 #######
class StageManifest(BaseSchema):
    """단계 산출물 목록과 다이제스트"""
    provenance: Provenance
    artifacts: Dict[str, str] = Field(default_factory=dict, description="상대 경로 → SHA-256")
