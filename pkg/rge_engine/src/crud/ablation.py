"""
ablation 비교
시드마다 장면/phase 1/prior/결합 학습을 한 번만 수행하고, 변형별 확장 학습만 따로 돌린다.
- full: 리워드 맵 + 성숙도 고정
- no_reward: C_e ≡ 1 (phase 1 장면에서 바로 확장)
- no_diff_train: 리워드 맵 사용, 기존 Gaussian 모두 Immature
- baseline: phase 1 장면 그대로
"""
import logging
from typing import Dict, List, Optional, Sequence

from crud.dataset_adapter import DatasetAdapter, SyntheticDatasetAdapter
from crud.evaluation import EvaluationService, aggregate, heldout_views
from crud.reward import JointResult, RewardService
from crud.synthetic_world import SyntheticWorldService, prior_views, severity_for_lane, split_views
from crud.trainer import PhaseResult, TrainerService
from models.enums import AblationVariant, Maturity
from models.gaussian import GaussianSet
from schemas.format import Provenance
from schemas.report import AblationRow, AblationTable
from schemas.run_config import RunConfig

logger = logging.getLogger(__name__)


class AblationService:
    def __init__(
        self,
        world: SyntheticWorldService,
        trainer: TrainerService,
        reward: RewardService,
        evaluation: EvaluationService,
        deterministic: bool = True,
    ):
        self.world = world
        self.trainer = trainer
        self.reward = reward
        self.evaluation = evaluation
        self.deterministic = deterministic

    def run(
        self,
        config: RunConfig,
        provenance: Provenance,
        seeds: Optional[Sequence[int]] = None,
        variants: Optional[Sequence[AblationVariant]] = None,
    ) -> AblationTable:
        seeds = list(config.eval.ablation_seeds if seeds is None else seeds)
        variants = [AblationVariant(v) for v in (config.eval.ablation_variants if variants is None else variants)]
        table = AblationTable(provenance=provenance)
        for seed in seeds:
            table.rows.extend(self.run_seed(config.with_updates(seed=seed), variants))
        return table

    def run_seed(self, config: RunConfig, variants: Sequence[AblationVariant]) -> List[AblationRow]:
        # 1. 시드 공통 준비
        scene = self.world.gen_scene(config.seed, config.scene)
        trajectory = self.world.gen_trajectory(config.scene, config.trajectory)
        dataset: DatasetAdapter = SyntheticDatasetAdapter(self.world, scene, trajectory, config)
        views, _ = split_views(dataset.original_views(), config.trajectory)
        targets = [dataset.image(cam.view_id) for cam in views]
        cloud = dataset.point_cloud()

        eval_views = heldout_views(trajectory, config.trajectory, tags=trajectory.shifted_tags())
        eval_targets = [dataset.image(cam.view_id) for cam in eval_views]

        initial = self.trainer.init_gaussians(cloud, config.scaled(config.train.init_points), config.train)
        phase1 = self.trainer.phase1_train(initial, views, targets, config)

        p_views = prior_views(trajectory, config.trajectory, config.priors)
        priors = [
            self.world.synth_prior(scene, cam, severity_for_lane(config.priors, trajectory, cam.lane_tag), config.seed, config.priors, cloud)
            for cam in p_views
        ]
        depth_maps = [self.world.depth_oracle(scene, cam, config.seed, config.priors) for cam in p_views]

        joint: Optional[JointResult] = None
        if {AblationVariant.FULL, AblationVariant.NO_DIFF_TRAIN} & set(variants):
            net = self.reward.build_net(config.reward, config.seed)
            joint = self.reward.joint_train(phase1.gaussians, views, targets, p_views, priors, net, config)

        # 2. 변형별 확장
        rows = []
        for variant in variants:
            if variant == AblationVariant.BASELINE:
                result = phase1
            else:
                if variant == AblationVariant.NO_REWARD:
                    start, maps, run_config = phase1.gaussians, None, config
                else:
                    start, maps = joint.gaussians, joint.maps
                    run_config = config.with_updates(train={"differentiated": variant == AblationVariant.FULL})
                result, _ = self.trainer.expand(start, views, targets, p_views, priors, maps, depth_maps, cloud, run_config)
            rows.append(self._row(variant, config.seed, result, eval_views, eval_targets))
        return rows

    def _row(self, variant: AblationVariant, seed: int, result: PhaseResult, views, targets) -> AblationRow:
        metrics = aggregate(self.evaluation.evaluate_views(result.gaussians, views, targets))
        row = AblationRow(
            variant=variant.value,
            seed=seed,
            shifted_psnr=metrics.psnr,
            shifted_ssim=metrics.ssim,
            update_count=result.update_count,
            mature_count=_mature(result.gaussians),
            wall_clock_s=None if self.deterministic else result.wall_clock_s,
        )
        logger.info(f"[ablate] seed={seed}, {variant.value}: psnr={row.shifted_psnr:.3f}, updates={row.update_count}")
        return row


def _mature(gaussians: GaussianSet) -> int:
    return int(gaussians.mask_of(Maturity.MATURE).sum())


def compare(table: AblationTable, better: AblationVariant, worse: AblationVariant) -> Dict[str, float]:
    """시드별 PSNR 우위 비율과 update 수 비율 (better / worse)"""
    a, b = table.by_variant(better.value), table.by_variant(worse.value)
    seeds = sorted(set(a) & set(b))
    if not seeds:
        return {"seeds": 0, "psnr_wins": 0.0, "mean_psnr_delta": 0.0, "update_ratio": 0.0}
    wins = sum(a[s].shifted_psnr > b[s].shifted_psnr for s in seeds)
    updates = sum(b[s].update_count for s in seeds)
    return {
        "seeds": len(seeds),
        "psnr_wins": wins / len(seeds),
        "mean_psnr_delta": sum(a[s].shifted_psnr - b[s].shifted_psnr for s in seeds) / len(seeds),
        "update_ratio": sum(a[s].update_count for s in seeds) / updates if updates else 0.0,
    }
