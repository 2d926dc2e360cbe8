"""
리워드 네트워크 F_c: I_e → C_e
장면 Gaussian과 결합 학습한 뒤 고정하고, prior 뷰마다 리워드 맵을 한 번씩 추론해 캐시한다.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from crud.trainer import TrainerService, scene_extent
from engine.image_ops import to_chw
from engine.losses import anti_collapse, loss_ie, loss_io, loss_reg, loss_reproj, loss_reward_total
from engine.nn_engine import FeatureMap, NetGraph, build_unet, crop_to, pad_to_multiple
from engine.optim import OptimizerState, RewardLRSchedule, SplatAdam, adamw_step, reward_lr_at
from models.camera import CameraView
from models.gaussian import GaussianSet
from models.scene import PriorSample, RewardMap
from schemas.report import LossRecord
from schemas.run_config import RewardConfig, RunConfig
from settings import settings
from utils.hashing import derive_seed

logger = logging.getLogger(__name__)


@dataclass
class JointResult:
    gaussians: GaussianSet
    net: NetGraph
    maps: Dict[str, RewardMap]
    losses: List[LossRecord] = field(default_factory=list)
    mean_confidence: float = 0.0
    update_count: int = 0
    wall_clock_s: float = 0.0


class RewardService:
    def __init__(self, trainer: TrainerService, threads: Optional[int] = None):
        self.trainer = trainer
        self.threads = max(1, threads or settings.THREADS)

    @staticmethod
    def build_net(cfg: RewardConfig, seed: int) -> NetGraph:
        rng = np.random.default_rng(derive_seed(seed, "reward-net"))
        return build_unet(in_channels=3, widths=cfg.widths).initialize(rng, head_bias=cfg.head_bias)

    @staticmethod
    def schedule(config: RunConfig) -> RewardLRSchedule:
        cfg = config.reward
        total = config.scaled(cfg.joint_iters)
        return RewardLRSchedule(
            lr_init=cfg.lr_init,
            lr_linear_end=cfg.lr_linear_end,
            lr_final=cfg.lr_final,
            linear_iters=min(config.scaled(cfg.linear_iters), total),
            total_iters=total,
        )

    # ============================
    # 추론
    # ============================
    @staticmethod
    def infer_reward(net: NetGraph, image: np.ndarray, view_id: str = "") -> RewardMap:
        """H, W가 8의 배수가 아니면 가장자리 패딩 후 잘라낸다."""
        padded, size = pad_to_multiple(to_chw(image))
        out = net.infer(FeatureMap(padded))
        return RewardMap(values=crop_to(out.data, size)[0].copy(), source_view=view_id)

    def cache_maps(self, net: NetGraph, priors: Sequence[PriorSample]) -> Dict[str, RewardMap]:
        """고정된 가중치로 prior 뷰별 맵을 추론 (뷰 단위 병렬)"""
        if not net.frozen:
            net.freeze()

        def run(prior: PriorSample) -> RewardMap:
            return self.infer_reward(net, prior.image, prior.view_id).freeze()

        if self.threads == 1 or len(priors) <= 1:
            maps = [run(p) for p in priors]
        else:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                maps = list(pool.map(run, priors))
        return {m.source_view: m for m in maps}

    @staticmethod
    def uniform_maps(priors: Sequence[PriorSample]) -> Dict[str, RewardMap]:
        """리워드 네트워크 미사용: C_e ≡ 1"""
        return {p.view_id: RewardMap(values=np.ones(p.image.shape[:2]), source_view=p.view_id).freeze() for p in priors}

    # ============================
    # 결합 학습
    # ============================
    def joint_train(
        self,
        gaussians: GaussianSet,
        views: Sequence[CameraView],
        targets: Sequence[np.ndarray],
        prior_views: Sequence[CameraView],
        priors: Sequence[PriorSample],
        net: NetGraph,
        config: RunConfig,
    ) -> JointResult:
        """
        매 반복: prior 뷰(라운드 로빈)와 원래 차선 뷰 하나씩
        L_reward = λ_reproj·L_reproj + λ_reg·L_reg + L_GS, L_GS = L_Io + L_Ie(살아있는 C_e)
        네트워크와 장면을 함께 갱신한 뒤 네트워크를 고정하고 맵을 캐시한다.
        """
        if not priors:
            raise ValueError("결합 학습에는 prior가 1개 이상 필요합니다.")
        cfg, tcfg = config.reward, config.train
        schedule = self.schedule(config)
        total = schedule.total_iters
        gs = gaussians.copy()
        result = JointResult(gaussians=gs, net=net, maps={})
        start = time.perf_counter()

        if total > 0:
            extent = scene_extent(list(views) + list(prior_views))
            opt_net = OptimizerState(base_lr=cfg.lr_init, weight_decay=cfg.weight_decay, betas=cfg.betas, eps=cfg.eps)
            opt_gs = SplatAdam.for_gaussians(gs)
            rng = np.random.default_rng(derive_seed(config.seed, "joint"))
            original_order = rng.permutation(len(views))

            for it in range(total):
                # 1. 리워드 맵 추론 (학습 모드)
                prior, cam_e = priors[it % len(priors)], prior_views[it % len(priors)]
                j = original_order[it % len(views)]
                padded, size = pad_to_multiple(to_chw(prior.image))
                conf = crop_to(net.forward(FeatureMap(padded)).data, size)[0]

                # 2. 손실
                out_e = self.trainer.rasterizer.render(gs, cam_e)
                out_o = self.trainer.rasterizer.render(gs, views[j])
                lie = loss_ie(out_e.rgb, prior.image, conf, tcfg.lambda_rgb, tcfg.lambda_ie)
                lio = loss_io(out_o.rgb, targets[j], tcfg.lambda_io)
                rp = loss_reproj(conf, prior.reprojection.image, prior.reprojection.valid, prior.image)
                rg = loss_reg(conf)
                value = loss_reward_total(rp.value, rg.value, lio.value + lie.value, cfg.lambda_reproj, cfg.lambda_reg)
                d_conf = cfg.lambda_reproj * rp.grad + cfg.lambda_reg * rg.grad
                if cfg.couple_gs:
                    d_conf = d_conf + lie.grad_conf
                if cfg.anti_collapse.enabled:
                    ac = anti_collapse(conf, cfg.anti_collapse.tau, cfg.anti_collapse.weight)
                    value += ac.value
                    d_conf = d_conf + ac.grad
                self.trainer.guard(value, gs, "joint", it)

                # 3. 네트워크 갱신
                grad_out = np.zeros((1,) + padded.shape[1:])
                grad_out[0, : size[0], : size[1]] = d_conf
                param_grads, _ = net.backward(grad_out)
                adamw_step(opt_net, net.params, param_grads, lr=reward_lr_at(it, schedule))

                # 4. 장면 갱신
                grads = self.trainer.rasterizer.render_backward(gs, cam_e, lie.grad, accumulate=False).gradients
                grads.add_(self.trainer.rasterizer.render_backward(gs, views[j], lio.grad, accumulate=False).gradients)
                lrs = self.trainer.learning_rates(tcfg, extent, it, total)
                self.trainer.step_scene(opt_gs, gs, grads, lrs, None, "joint", it)

                result.losses.append(LossRecord(iteration=it, loss=value, kind="reward"))
                if it % tcfg.log_interval == 0:
                    logger.info(
                        f"[joint] iter={it}/{total}, loss={value:.5f}, reproj={rp.value:.5f}, reg={rg.value:.5f}, mean_conf={conf.mean():.3f}"
                    )
            result.update_count = opt_gs.update_count

        # 5. 고정 + 캐시
        net.freeze()
        result.maps = self.cache_maps(net, priors)
        result.mean_confidence = float(np.mean([m.values.mean() for m in result.maps.values()]))
        result.wall_clock_s = time.perf_counter() - start
        if result.mean_confidence < cfg.collapse_warning:
            logger.warning(
                f"리워드 맵 붕괴 의심: 평균 신뢰도 {result.mean_confidence:.3f} < {cfg.collapse_warning} "
                f"(reward.anti_collapse.enabled로 하한 페널티를 켤 수 있습니다)"
            )
        logger.info(f"[joint] 완료: maps={len(result.maps)}, mean_conf={result.mean_confidence:.3f}")
        return result
