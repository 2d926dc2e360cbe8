"""기본 설정(64×64, desk_scale 0.1) 규모의 수렴/판별력 검증. -m slow로 실행"""
import numpy as np
import pytest

from crud.ablation import AblationService, compare
from crud.evaluation import EvaluationService, aggregate
from crud.reward import RewardService
from crud.synthetic_world import SyntheticWorldService, prior_views, split_views
from crud.trainer import TrainerService
from models.enums import AblationVariant
from schemas.format import Provenance
from schemas.run_config import RunConfig

pytestmark = pytest.mark.slow


def _phase1(rasterizer, config: RunConfig):
    world = SyntheticWorldService(rasterizer)
    trainer = TrainerService(rasterizer)
    scene = world.gen_scene(config.seed, config.scene)
    trajectory = world.gen_trajectory(config.scene, config.trajectory)
    train_views, held_views = split_views(trajectory.original, config.trajectory)
    cloud = world.sample_pointcloud(scene, train_views, config.priors.pointcloud_stride, config.priors.pointcloud_cap)
    targets = [world.render_gt(scene, cam) for cam in train_views]
    initial = trainer.init_gaussians(cloud, config.scaled(config.train.init_points), config.train)
    result = trainer.phase1_train(initial, train_views, targets, config)
    return world, trainer, scene, trajectory, train_views, targets, held_views, cloud, result


def test_phase1_학습_뷰와_held_out_뷰_PSNR(rasterizer):
    # Given
    config = RunConfig.default()

    # When
    world, _, scene, _, train_views, targets, held_views, _, result = _phase1(rasterizer, config)

    # Then
    evaluation = EvaluationService(rasterizer)
    train_psnr = aggregate(evaluation.evaluate_views(result.gaussians, train_views, targets)).psnr
    held_targets = [world.render_gt(scene, cam) for cam in held_views]
    held_psnr = aggregate(evaluation.evaluate_views(result.gaussians, held_views, held_targets)).psnr
    assert train_psnr >= 27.0
    assert held_psnr >= 23.0


@pytest.mark.parametrize("seed", range(5))
def test_결합_학습_후_리워드_맵_판별력(rasterizer, seed):
    # Given: 모든 prior에 severity 0.25
    config = RunConfig.default(seed=seed, priors={"severity_override": 0.25})
    world, trainer, scene, trajectory, views, targets, _, cloud, phase1 = _phase1(rasterizer, config)
    p_views = prior_views(trajectory, config.trajectory, config.priors)
    priors = [world.synth_prior(scene, cam, 0.25, seed, config.priors, cloud) for cam in p_views]
    reward = RewardService(trainer)

    # When
    joint = reward.joint_train(phase1.gaussians, views, targets, p_views, priors, reward.build_net(config.reward, seed), config)

    # Then
    gt_images = {cam.view_id: world.render_gt(scene, cam) for cam in p_views}
    rows = EvaluationService.evaluate_rewards(priors, joint.maps, gt_images, config.eval.conf_threshold)
    summary = aggregate(rows)
    assert summary.auroc >= 0.75
    assert summary.mae_accepted < summary.mae_rejected
    assert np.isfinite(joint.mean_confidence)


def test_ablation_5개_시드_추세(rasterizer):
    # Given
    config = RunConfig.default()
    trainer = TrainerService(rasterizer)
    service = AblationService(
        world=SyntheticWorldService(rasterizer),
        trainer=trainer,
        reward=RewardService(trainer),
        evaluation=EvaluationService(rasterizer),
    )

    # When
    table = service.run(config, Provenance(seed=0, config_hash="0123456789abcdef", stage="ablation"), seeds=range(5))

    # Then: 리워드 네트워크 사용 시 shifted 차선 PSNR 우위
    reward_net = compare(table, AblationVariant.FULL, AblationVariant.NO_REWARD)
    assert reward_net["psnr_wins"] >= 0.8

    # Then: 성숙도 고정으로 update 수 감소, 품질은 유지
    differentiated = compare(table, AblationVariant.FULL, AblationVariant.NO_DIFF_TRAIN)
    assert differentiated["update_ratio"] <= 0.7
    assert differentiated["mean_psnr_delta"] >= -0.5
