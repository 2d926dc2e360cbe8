"""
2단계 학습 파이프라인
- phase 1: 원래 차선 GT로 장면 재구성 (densify/prune 포함)
- expand: 성숙도 분류 → 누락 Gaussian 초기화 → phase 2 (리워드 가중 확장 학습)
"""
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from engine.losses import loss_ie, loss_io
from engine.optim import SplatAdam, position_lr_at
from engine.rasterizer import DepthMap, Rasterizer, accumulate_view_gradients
from engine.splat_core import SH_C0, quaternions_to_rotations, unproject_pixels
from exception.nn_exceptions import NonFiniteGradient
from exception.pipeline_exceptions import (
    DegenerateDepths,
    InsufficientOverlap,
    NothingToClassify,
    NumericalDivergence,
)
from models.camera import CameraView
from models.enums import GradSpace, Maturity
from models.gaussian import GaussianSet, color_width
from models.scene import ColoredPointCloud, PriorSample, RewardMap
from schemas.format import Provenance
from schemas.report import LossRecord, MaturityCounts, TrainReport
from schemas.run_config import RunConfig, TrainConfig
from utils.hashing import derive_seed

logger = logging.getLogger(__name__)

DEGENERATE_DEPTH_ENERGY = 1e-9
SPLIT_SHRINK = 1.6
# 파라미터 그룹 → LearningRates 필드 (위치는 extent 기반 감쇠로 따로 계산)
LR_FIELDS = {"rotations": "rotation", "log_scales": "scale", "opacity_logits": "opacity", "colors": "color"}

DumpFn = Callable[[GaussianSet, str, int], Optional[str]]


def logit(p: float) -> float:
    return float(math.log(p / (1.0 - p)))


def rgb_to_colors(rgb: np.ndarray, sh_degree: int) -> np.ndarray:
    """RGB → GaussianSet.colors (degree 1이면 DC 계수만 채운다)"""
    if sh_degree == 0:
        return np.clip(rgb, 0.0, 1.0)
    coef = np.zeros((rgb.shape[0], 4, 3))
    coef[:, 0] = (rgb - 0.5) / SH_C0
    return coef.reshape(rgb.shape[0], color_width(sh_degree))


def scene_extent(views: Sequence[CameraView]) -> float:
    """카메라 중심들의 중심점에서 가장 먼 카메라까지 거리 × 1.1"""
    centers = np.stack([cam.center for cam in views])
    radius = float(np.linalg.norm(centers - centers.mean(axis=0), axis=1).max())
    return 1.1 * max(radius, 1.0)


def knn_scale(positions: np.ndarray, k: int = 3, fallback: float = 0.1) -> np.ndarray:
    """가장 가까운 이웃 k개까지 평균 거리"""
    n = positions.shape[0]
    if n < 2:
        return np.full(n, fallback)
    k_eff = min(k, n - 1)
    dist, _ = cKDTree(positions).query(positions, k=k_eff + 1)
    mean = dist[:, 1:].mean(axis=1)
    return np.maximum(mean, 1e-4)


def calibrate_scale(d_est: np.ndarray, d_ref: np.ndarray, min_overlap: int = 50) -> float:
    """‖s·d_est − d_ref‖₂를 최소화하는 s* = Σ d_est·d_ref / Σ d_est²"""
    d_est = np.asarray(d_est, dtype=np.float64).ravel()
    d_ref = np.asarray(d_ref, dtype=np.float64).ravel()
    if d_est.size < min_overlap:
        raise InsufficientOverlap(int(d_est.size), min_overlap)
    energy = float(np.dot(d_est, d_est))
    if energy < DEGENERATE_DEPTH_ENERGY:
        raise DegenerateDepths(energy)
    return float(np.dot(d_est, d_ref) / energy)


@dataclass
class PhaseResult:
    gaussians: GaussianSet
    losses: List[LossRecord] = field(default_factory=list)
    update_count: int = 0
    densify_events: int = 0
    wall_clock_s: float = 0.0

    @property
    def initial_loss(self) -> Optional[float]:
        return self.losses[0].loss if self.losses else None

    @property
    def final_loss(self) -> Optional[float]:
        return self.losses[-1].loss if self.losses else None


@dataclass
class Expansion:
    """classify_maturity + init_missing 결과"""
    gaussians: GaussianSet
    classified: MaturityCounts
    spawned: int = 0
    calibration_scale: Optional[float] = None


class TrainerService:
    def __init__(self, rasterizer: Rasterizer, dump_fn: Optional[DumpFn] = None):
        self.rasterizer = rasterizer
        self.dump_fn = dump_fn

    # ============================
    # 초기화
    # ============================
    def init_gaussians(self, cloud: ColoredPointCloud, count: int, cfg: TrainConfig) -> GaussianSet:
        """점군 부분 샘플 → 등방성 Gaussian (스케일 = 3-NN 평균 거리)"""
        if len(cloud) == 0:
            return GaussianSet.empty(cfg.sh_degree)
        idx = np.arange(len(cloud))
        if len(cloud) > count:
            idx = np.linspace(0, len(cloud) - 1, count).round().astype(np.int64)
        positions = cloud.positions[idx]
        scale = knn_scale(positions)
        return GaussianSet.create(
            positions=positions,
            log_scales=np.repeat(np.log(scale)[:, None], 3, axis=1),
            opacity_logits=np.full(idx.size, logit(cfg.init_opacity)),
            colors=rgb_to_colors(cloud.colors[idx], cfg.sh_degree),
            maturity=Maturity.IMMATURE,
            sh_degree=cfg.sh_degree,
        )

    def learning_rates(self, cfg: TrainConfig, extent: float, step: int, total: int) -> Dict[str, float]:
        lrs = {name: getattr(cfg.lr, attr) for name, attr in LR_FIELDS.items()}
        lrs["positions"] = position_lr_at(step, total, cfg.lr.position_init * extent, cfg.lr.position_final * extent)
        return lrs

    # ============================
    # phase 1
    # ============================
    def phase1_train(
        self,
        gaussians: GaussianSet,
        views: Sequence[CameraView],
        targets: Sequence[np.ndarray],
        config: RunConfig,
        iterations: Optional[int] = None,
    ) -> PhaseResult:
        """원래 차선 뷰에 대해 L_Io 최소화. 0회 반복이면 입력을 그대로 돌려준다."""
        cfg = config.train
        total = config.scaled(cfg.phase1_iters) if iterations is None else iterations
        window = (config.scaled(cfg.densify_start), config.scaled(cfg.densify_end))
        gs = gaussians.copy()
        result = PhaseResult(gaussians=gs)
        if total == 0 or not views:
            return result

        extent = scene_extent(views)
        opt = SplatAdam.for_gaussians(gs)
        rng = np.random.default_rng(derive_seed(config.seed, "phase1"))
        order = self._view_order(rng, len(views), total)
        start = time.perf_counter()

        for it in range(total):
            cam, target = views[order[it]], targets[order[it]]
            out = self.rasterizer.render(gs, cam)
            loss = loss_io(out.rgb, target, cfg.lambda_io)
            self.guard(loss.value, gs, "phase1", it)
            grads = self.rasterizer.render_backward(gs, cam, loss.grad, accumulate=True, grad_space=cfg.grad_space)
            self.step_scene(opt, gs, grads.gradients, self.learning_rates(cfg, extent, it, total), None, "phase1", it)
            result.losses.append(LossRecord(iteration=it, loss=loss.value, kind="io"))

            if it > 0 and it % cfg.densify_interval == 0:
                gs, opt, events = self.densify_and_prune(gs, opt, cfg, it, extent, window, rng)
                result.densify_events += events
            if it % cfg.log_interval == 0:
                logger.info(f"[phase1] iter={it}/{total}, loss={loss.value:.5f}, gaussians={len(gs)}")

        result.gaussians = gs
        result.update_count = opt.update_count
        result.wall_clock_s = time.perf_counter() - start
        logger.info(f"[phase1] 완료: loss {result.initial_loss:.5f} → {result.final_loss:.5f}, gaussians={len(gs)}")
        return result

    def mean_loss(self, gaussians: GaussianSet, views: Sequence[CameraView], targets: Sequence[np.ndarray], lambda_io: float) -> float:
        """뷰 전체 평균 L_Io (역전파 없음)"""
        values = [loss_io(self.rasterizer.render(gaussians, cam).rgb, target, lambda_io).value for cam, target in zip(views, targets)]
        return float(np.mean(values)) if values else 0.0

    @staticmethod
    def _view_order(rng: np.random.Generator, count: int, total: int) -> np.ndarray:
        """에폭마다 섞은 뷰 순서를 이어 붙인다."""
        epochs = math.ceil(total / count)
        return np.concatenate([rng.permutation(count) for _ in range(epochs)])[:total]

    # ============================
    # densify / prune
    # ============================
    def densify_and_prune(
        self,
        gaussians: GaussianSet,
        opt: Optional[SplatAdam],
        cfg: TrainConfig,
        iteration: int,
        extent: float,
        window: Tuple[int, int],
        rng: Optional[np.random.Generator] = None,
    ) -> Tuple[GaussianSet, Optional[SplatAdam], int]:
        """
        window = [start, end) 밖에서는 no-op
        grad_accum > 임계값인 Gaussian을 clone(작은 것) / split(큰 것), 불투명도 < prune_opacity 제거
        Mature 행은 대상에서 제외되고 값도 바뀌지 않는다.
        """
        if not window[0] <= iteration < window[1] or len(gaussians) == 0:
            return gaussians, opt, 0
        rng = rng if rng is not None else np.random.default_rng(iteration)
        gs = gaussians
        n = len(gs)
        eligible = ~gs.mask_of(Maturity.MATURE)

        # 1. 후보 선택 (용량 초과 시 그래디언트 큰 순)
        selected = eligible & (gs.grad_accum > cfg.densify_grad_threshold)
        big = gs.scales.max(axis=1) > cfg.percent_dense * extent
        room = max(0, cfg.max_gaussians - n)
        candidates = np.flatnonzero(selected)
        if candidates.size > room:
            ranked = candidates[np.argsort(-gs.grad_accum[candidates], kind="stable")]
            keep = np.zeros(n, dtype=bool)
            keep[ranked[:room]] = True
            selected &= keep
        clone_idx = np.flatnonzero(selected & ~big)
        split_idx = np.flatnonzero(selected & big)

        # 2. clone: 같은 파라미터로 복제
        clones = gs.select(clone_idx)

        # 3. split: 원래 분포에서 위치 2개 샘플, 스케일 1/1.6
        children = gs.select(np.repeat(split_idx, 2))
        if split_idx.size:
            rot = quaternions_to_rotations(children.rotations)
            noise = rng.normal(size=(children.positions.shape[0], 3)) * children.scales
            children.positions += np.einsum("nij,nj->ni", rot, noise)
            children.log_scales -= math.log(SPLIT_SHRINK)

        # 4. prune + 원본 split 제거
        prune = eligible & (gs.opacities < cfg.prune_opacity)
        keep_old = ~prune
        keep_old[split_idx] = False
        merged = gs.concat(clones).concat(children)
        keep = np.concatenate([keep_old, np.ones(len(clones) + len(children), dtype=bool)])
        merged = merged.select(keep)
        if opt is not None:
            opt.append(len(clones) + len(children))
            opt.keep(keep)

        merged.reset_grad_stats(~merged.mask_of(Maturity.MATURE))
        events = int(clone_idx.size + split_idx.size + prune.sum())
        logger.debug(
            f"densify iter={iteration}: clone={clone_idx.size}, split={split_idx.size}, prune={int(prune.sum())}, total={len(merged)}"
        )
        return merged, opt, events

    # ============================
    # 성숙도 분류
    # ============================
    def classify_maturity(
        self,
        gaussians: GaussianSet,
        prior_views: Sequence[CameraView],
        priors: Sequence[PriorSample],
        maps: Optional[Dict[str, RewardMap]],
        config: RunConfig,
    ) -> Tuple[GaussianSet, MaturityCounts]:
        """
        prior 뷰 1 에폭 동안 역전파만 수행해 view-space 그래디언트 평균을 누적
        평균 > maturity 임계값 → Immature, 그 외 → Mature (한 번도 안 보인 Gaussian 포함)
        """
        if not priors:
            raise NothingToClassify()
        cfg = config.train
        gs = gaussians.copy()
        gs.reset_grad_stats()
        for cam, prior in zip(prior_views, priors):
            conf = self.confidence_for(prior, maps)
            out = self.rasterizer.render(gs, cam)
            loss = loss_ie(out.rgb, prior.image, conf, cfg.lambda_rgb, cfg.lambda_ie)
            self.rasterizer.render_backward(gs, cam, loss.grad, accumulate=True, grad_space=cfg.grad_space)

        existing = ~gs.mask_of(Maturity.MISSING)
        if cfg.differentiated:
            threshold = cfg.effective_maturity_threshold
            immature = existing & (gs.grad_accum > threshold)
        else:
            immature = existing
        gs.maturity[existing] = int(Maturity.MATURE)
        gs.maturity[immature] = int(Maturity.IMMATURE)
        gs.reset_grad_stats()

        counts = MaturityCounts(**gs.count_by_maturity())
        logger.info(f"성숙도 분류: {counts.model_dump()}")
        return gs, counts

    @staticmethod
    def confidence_for(prior: PriorSample, maps: Optional[Dict[str, RewardMap]]) -> np.ndarray:
        """리워드 맵이 없으면 C_e ≡ 1"""
        if maps is None or prior.view_id not in maps:
            return np.ones(prior.image.shape[:2])
        return maps[prior.view_id].values

    # ============================
    # 누락 Gaussian 초기화
    # ============================
    def init_missing(
        self,
        gaussians: GaussianSet,
        prior_views: Sequence[CameraView],
        priors: Sequence[PriorSample],
        depth_maps: Sequence[DepthMap],
        cloud: ColoredPointCloud,
        cfg: TrainConfig,
    ) -> Tuple[GaussianSet, int, Optional[float]]:
        """
        G_o 렌더 alpha < 임계값인 prior 픽셀마다 새 Gaussian 생성
        - 재투영 유효 픽셀: 점군 위치
        - 그 외: 깊이 오라클 × 보정 스케일 s*로 역투영
        반환: (확장된 집합, 생성 수, 뷰별 s*의 중앙값)
        """
        stride = cfg.missing_spawn_stride
        positions, colors, depths, focals = [], [], [], []
        scales = self._view_scales(priors, depth_maps, cfg.calibration_min_overlap)
        found = [s for s in scales if s is not None]
        fallback = float(np.median(found)) if found else 1.0

        for cam, prior, depth, scale in zip(prior_views, priors, depth_maps, scales):
            if scale is None:
                logger.warning(f"깊이 스케일 보정 실패, 대체 스케일 {fallback:.4f} 사용: view={prior.view_id}")
                scale = fallback
            alpha = self.rasterizer.render(gaussians, cam).alpha
            vs, us = np.mgrid[stride // 2:cam.height:stride, stride // 2:cam.width:stride]
            vs, us = vs.ravel(), us.ravel()
            unobserved = alpha[vs, us] < cfg.missing_alpha_threshold
            vs, us = vs[unobserved], us[unobserved]

            point_idx = prior.reprojection.point_index[vs, us]
            from_cloud = point_idx >= 0
            from_depth = ~from_cloud & depth.valid[vs, us]
            if np.any(from_cloud):
                positions.append(cloud.positions[point_idx[from_cloud]])
                colors.append(prior.image[vs[from_cloud], us[from_cloud]])
                depths.append(prior.reprojection.depth[vs[from_cloud], us[from_cloud]])
                focals.append(np.full(int(from_cloud.sum()), cam.fx))
            if np.any(from_depth):
                u, v = us[from_depth], vs[from_depth]
                d = depth.values[v, u] * scale
                positions.append(unproject_pixels(cam, u.astype(np.float64), v.astype(np.float64), d))
                colors.append(prior.image[v, u])
                depths.append(d)
                focals.append(np.full(u.size, cam.fx))

        if not positions:
            logger.info("누락 영역이 없어 새 Gaussian을 만들지 않습니다.")
            return gaussians.copy(), 0, (fallback if found else None)

        pos = np.concatenate(positions)
        col = np.concatenate(colors)
        pixel_size = np.concatenate(depths) / np.concatenate(focals)
        if pos.shape[0] > cfg.missing_spawn_cap:
            keep = np.linspace(0, pos.shape[0] - 1, cfg.missing_spawn_cap).round().astype(np.int64)
            pos, col, pixel_size = pos[keep], col[keep], pixel_size[keep]
        if pos.shape[0] == 0:
            return gaussians.copy(), 0, (fallback if found else None)

        scale = knn_scale(pos, fallback=float(np.mean(pixel_size) * stride))
        spawned = GaussianSet.create(
            positions=pos,
            log_scales=np.repeat(np.log(scale)[:, None], 3, axis=1),
            opacity_logits=np.full(pos.shape[0], logit(cfg.missing_init_opacity)),
            colors=rgb_to_colors(col, gaussians.sh_degree),
            maturity=Maturity.MISSING,
            sh_degree=gaussians.sh_degree,
        )
        logger.info(f"누락 Gaussian {len(spawned)}개 생성 (s* 중앙값={fallback:.4f})")
        return gaussians.concat(spawned), len(spawned), (fallback if found else None)

    @staticmethod
    def _view_scales(priors: Sequence[PriorSample], depth_maps: Sequence[DepthMap], min_overlap: int) -> List[Optional[float]]:
        """뷰별로 깊이 오라클과 점군 재투영 깊이가 겹치는 픽셀에서 s* 계산"""
        scales: List[Optional[float]] = []
        for prior, depth in zip(priors, depth_maps):
            overlap = prior.reprojection.valid & depth.valid
            try:
                scales.append(calibrate_scale(depth.values[overlap], prior.reprojection.depth[overlap], min_overlap))
            except (InsufficientOverlap, DegenerateDepths) as e:
                logger.warning(f"view={prior.view_id}: {e}")
                scales.append(None)
        return scales

    # ============================
    # phase 2
    # ============================
    def phase2_train(
        self,
        gaussians: GaussianSet,
        views: Sequence[CameraView],
        targets: Sequence[np.ndarray],
        prior_views: Sequence[CameraView],
        priors: Sequence[PriorSample],
        maps: Optional[Dict[str, RewardMap]],
        config: RunConfig,
        iterations: Optional[int] = None,
    ) -> PhaseResult:
        """
        원래 차선(L_Io)과 prior(L_Ie, 고정 C_e)를 번갈아 학습
        Mature 행은 파라미터와 그래디언트 통계 모두 변경되지 않는다.
        """
        cfg = config.train
        total = config.scaled(cfg.phase2_iters) if iterations is None else iterations
        window = (config.scaled(cfg.densify_start), config.scaled(cfg.densify_end))
        gs = gaussians.copy()
        result = PhaseResult(gaussians=gs)
        if total == 0 or not views:
            return result

        extent = scene_extent(list(views) + list(prior_views))
        opt = SplatAdam.for_gaussians(gs)
        rng = np.random.default_rng(derive_seed(config.seed, "phase2"))
        original_order = self._view_order(rng, len(views), total)
        prior_order = self._view_order(rng, max(len(priors), 1), total)
        scale = 0.5 * max(views[0].width, views[0].height) if GradSpace(cfg.grad_space) == GradSpace.NDC else 1.0
        start = time.perf_counter()

        for it in range(total):
            use_prior = bool(priors) and it % 2 == 1
            if use_prior:
                k = prior_order[it // 2]
                cam, prior = prior_views[k], priors[k]
                out = self.rasterizer.render(gs, cam)
                loss = loss_ie(out.rgb, prior.image, self.confidence_for(prior, maps), cfg.lambda_rgb, cfg.lambda_ie)
            else:
                k = original_order[it // 2 if priors else it]
                cam = views[k]
                out = self.rasterizer.render(gs, cam)
                loss = loss_io(out.rgb, targets[k], cfg.lambda_io)
            self.guard(loss.value, gs, "phase2", it)

            trainable = ~gs.mask_of(Maturity.MATURE)
            grads = self.rasterizer.render_backward(gs, cam, loss.grad, accumulate=False)
            accumulate_view_gradients(gs, replace(grads, visible=grads.visible & trainable), scale)
            self.step_scene(opt, gs, grads.gradients, self.learning_rates(cfg, extent, it, total), trainable, "phase2", it)
            result.losses.append(LossRecord(iteration=it, loss=loss.value, kind="ie" if use_prior else "io"))

            if it > 0 and it % cfg.densify_interval == 0:
                gs, opt, events = self.densify_and_prune(gs, opt, cfg, it, extent, window, rng)
                result.densify_events += events
            if it % cfg.log_interval == 0:
                logger.info(f"[phase2] iter={it}/{total}, loss={loss.value:.5f}, {gs.count_by_maturity()}")

        result.gaussians = gs
        result.update_count = opt.update_count
        result.wall_clock_s = time.perf_counter() - start
        return result

    def expand(
        self,
        gaussians: GaussianSet,
        views: Sequence[CameraView],
        targets: Sequence[np.ndarray],
        prior_views: Sequence[CameraView],
        priors: Sequence[PriorSample],
        maps: Optional[Dict[str, RewardMap]],
        depth_maps: Sequence[DepthMap],
        cloud: ColoredPointCloud,
        config: RunConfig,
    ) -> Tuple[PhaseResult, Expansion]:
        """classify_maturity → init_missing → phase2_train"""
        tagged, _ = self.classify_maturity(gaussians, prior_views, priors, maps, config)
        augmented, spawned, scale = self.init_missing(tagged, prior_views, priors, depth_maps, cloud, config.train)
        expansion = Expansion(
            gaussians=augmented,
            classified=MaturityCounts(**augmented.count_by_maturity()),
            spawned=spawned,
            calibration_scale=scale,
        )
        result = self.phase2_train(augmented, views, targets, prior_views, priors, maps, config)
        return result, expansion

    # ============================
    # 공통
    # ============================
    def step_scene(self, opt: SplatAdam, gs: GaussianSet, grads, lrs, mask, stage: str, iteration: int):
        try:
            opt.step(gs, grads, lrs, update_mask=mask)
        except NonFiniteGradient as e:
            raise NumericalDivergence(stage, iteration, str(e), self._dump(gs, stage, iteration)) from e

    def guard(self, value: float, gs: GaussianSet, stage: str, iteration: int):
        if not math.isfinite(value):
            raise NumericalDivergence(stage, iteration, f"loss={value}", self._dump(gs, stage, iteration))

    def _dump(self, gs: GaussianSet, stage: str, iteration: int) -> Optional[str]:
        if self.dump_fn is None:
            return None
        try:
            return self.dump_fn(gs, stage, iteration)
        except OSError as e:
            logger.error(f"발산 시점 체크포인트 저장 실패: {e}")
            return None


def to_train_report(
    result: PhaseResult,
    phase: str,
    provenance: Provenance,
    deterministic: bool,
    expansion: Optional[Expansion] = None,
    mean_confidence: Optional[float] = None,
) -> TrainReport:
    gs = result.gaussians
    return TrainReport(
        provenance=provenance,
        phase=phase,
        iterations=len(result.losses),
        losses=result.losses,
        initial_loss=result.initial_loss,
        final_loss=result.final_loss,
        gaussian_count=len(gs),
        maturity=MaturityCounts(**gs.count_by_maturity()) if expansion is None else expansion.classified,
        classified_total=None if expansion is None else expansion.classified.total,
        update_count=result.update_count,
        densify_events=result.densify_events,
        spawned=0 if expansion is None else expansion.spawned,
        calibration_scale=None if expansion is None else expansion.calibration_scale,
        mean_confidence=mean_confidence,
        wall_clock_s=None if deterministic else result.wall_clock_s,
    )
