import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from crud.synthetic_world import quantize, split_views
from engine.metrics import masked_mae, psnr, reward_auroc, ssim
from engine.rasterizer import Rasterizer
from exception.pipeline_exceptions import DegenerateLabels, NoValidPixels
from models.camera import CameraView
from models.gaussian import GaussianSet
from models.scene import PriorSample, RewardMap, SyntheticScene, TrajectorySet
from schemas.format import Provenance
from schemas.report import AggregateMetrics, MaturityCounts, MetricReport, SweepPoint, ViewMetrics
from schemas.run_config import TrajectoryConfig

logger = logging.getLogger(__name__)


def _mean(values: List[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


def aggregate(rows: Sequence[ViewMetrics]) -> AggregateMetrics:
    """뷰별 값의 산술 평균 (None 항목은 제외)"""
    return AggregateMetrics(
        views=len(rows),
        psnr=float(np.mean([r.psnr for r in rows])) if rows else 0.0,
        ssim=float(np.mean([r.ssim for r in rows])) if rows else 0.0,
        auroc=_mean([r.auroc for r in rows]),
        mae_accepted=_mean([r.mae_accepted for r in rows]),
        mae_rejected=_mean([r.mae_rejected for r in rows]),
    )


class EvaluationService:
    def __init__(self, rasterizer: Rasterizer):
        self.rasterizer = rasterizer

    def evaluate_views(
        self, gaussians: GaussianSet, views: Sequence[CameraView], targets: Sequence[np.ndarray]
    ) -> List[ViewMetrics]:
        rows = []
        for cam, target in zip(views, targets):
            render = np.clip(self.rasterizer.render(gaussians, cam).rgb, 0.0, 1.0)
            rows.append(ViewMetrics(view_id=cam.view_id, lane=cam.lane_tag, psnr=psnr(render, target), ssim=ssim(render, target)))
        return rows

    @staticmethod
    def evaluate_rewards(
        priors: Sequence[PriorSample],
        maps: Dict[str, RewardMap],
        gt_images: Dict[str, np.ndarray],
        threshold: float = 0.5,
    ) -> List[ViewMetrics]:
        """prior 뷰별 리워드 맵 판별력: AUROC(1−C_e vs 마스크), 수용/거부 영역 MAE"""
        rows = []
        for prior in priors:
            conf = maps[prior.view_id].values
            gt = gt_images[prior.view_id]
            row = ViewMetrics(
                view_id=prior.view_id,
                lane=prior.view_id.rsplit("_", 1)[0],
                psnr=psnr(prior.image, gt),
                ssim=ssim(prior.image, gt),
            )
            try:
                row.auroc = reward_auroc(conf, prior.artifact_mask)
            except DegenerateLabels as e:
                logger.debug(f"{prior.view_id}: {e}")
            try:
                mae = masked_mae(prior.image, gt, conf, threshold)
                row.mae_accepted, row.mae_rejected, row.accepted_fraction = mae.accepted, mae.rejected, mae.accepted_fraction
            except NoValidPixels as e:
                logger.warning(f"{prior.view_id}: {e}")
            rows.append(row)
        return rows

    def sweep(
        self,
        gaussians: GaussianSet,
        scene: SyntheticScene,
        base_views: Sequence[CameraView],
        offsets: Sequence[float],
    ) -> List[SweepPoint]:
        """원래 차선 포즈를 x 방향으로 offset만큼 옮긴 뷰에서 GT 장면 렌더와 비교"""
        points = []
        for offset in offsets:
            shifted = [_shift(cam, offset) for cam in base_views]
            targets = [quantize(self.rasterizer.render(scene.gaussians, cam).rgb) for cam in shifted]
            rows = self.evaluate_views(gaussians, shifted, targets)
            agg = aggregate(rows)
            points.append(SweepPoint(offset=float(offset), psnr=agg.psnr, ssim=agg.ssim, views=agg.views))
            logger.info(f"sweep offset={offset}: psnr={agg.psnr:.3f}, ssim={agg.ssim:.4f}")
        return points

    @staticmethod
    def visualize(priors: Sequence[PriorSample], maps: Dict[str, RewardMap], threshold: float) -> Dict[str, Tuple[str, np.ndarray]]:
        """파일명 → ("pgm" | "ppm", 배열). 리워드 맵과 C_e ≥ threshold만 남긴 layered prior"""
        out = {}
        for prior in priors:
            conf = maps[prior.view_id].values
            out[f"reward_{prior.view_id}.pgm"] = ("pgm", conf)
            out[f"layered_{prior.view_id}.ppm"] = ("ppm", prior.image * (conf >= threshold)[..., None])
        return out

    @staticmethod
    def build_report(
        provenance: Provenance,
        view_rows: Sequence[ViewMetrics],
        reward_rows: Sequence[ViewMetrics],
        gaussians: GaussianSet,
        sweep: Sequence[SweepPoint] = (),
    ) -> MetricReport:
        lanes: Dict[str, List[ViewMetrics]] = {}
        for row in view_rows:
            lanes.setdefault(row.lane, []).append(row)
        return MetricReport(
            provenance=provenance,
            per_lane={lane: aggregate(rows) for lane, rows in sorted(lanes.items())},
            overall=aggregate(view_rows) if view_rows else None,
            reward=aggregate(reward_rows) if reward_rows else None,
            gaussian_counts=MaturityCounts(**gaussians.count_by_maturity()),
            sweep=list(sweep),
        )


def _shift(cam: CameraView, offset: float) -> CameraView:
    """카메라 중심을 월드 x 방향으로 offset만큼 이동"""
    w2c = cam.world_to_cam.copy()
    w2c[:3, 3] = -cam.rotation @ (cam.center + np.array([offset, 0.0, 0.0]))
    tag = f"sweep+{offset:.1f}"
    suffix = cam.view_id.rsplit("_", 1)[-1]
    return CameraView(
        fx=cam.fx, fy=cam.fy, cx=cam.cx, cy=cam.cy, width=cam.width, height=cam.height,
        world_to_cam=w2c, near_clip=cam.near_clip, lane_tag=tag, view_id=f"{tag}_{suffix}",
    )


def heldout_views(trajectory: TrajectorySet, cfg: TrajectoryConfig, tags: Optional[Sequence[str]] = None) -> List[CameraView]:
    views = []
    for tag in tags if tags is not None else list(trajectory.lanes):
        views += split_views(trajectory.lanes[tag], cfg)[1]
    return views
