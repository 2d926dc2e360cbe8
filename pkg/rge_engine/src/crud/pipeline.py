"""
파일 기반 파이프라인 단계
각 단계는 이전 단계 산출물을 경로 규칙으로 읽고, 자신의 산출물과 매니페스트를 쓴다.
"""
import logging
import time
from typing import Dict, List, Tuple

import numpy as np

from crud.evaluation import EvaluationService, heldout_views
from crud.reward import JointResult, RewardService
from crud.synthetic_world import SyntheticWorldService, prior_views, severity_for_lane, split_views
from crud.trainer import PhaseResult, TrainerService, to_train_report
from exception.pipeline_exceptions import MatureBlockModified
from formats.checkpoint import block_bytes
from models.camera import CameraView
from models.enums import Maturity, Stage
from models.gaussian import GaussianSet
from models.scene import PriorSample, SyntheticScene, TrajectorySet
from repositories.artifact_repository import REWARD_INDEX_FILE, ArtifactRepository
from schemas.format import ArtifactEnvelope
from schemas.report import MetricReport

logger = logging.getLogger(__name__)

BOUNDS_FILE = "scene/bounds.json"


class PipelineService:
    def __init__(
        self,
        repository: ArtifactRepository,
        world: SyntheticWorldService,
        trainer: TrainerService,
        reward: RewardService,
        evaluation: EvaluationService,
        deterministic: bool = True,
    ):
        self.repository = repository
        self.world = world
        self.trainer = trainer
        self.reward = reward
        self.evaluation = evaluation
        self.deterministic = deterministic
        self.config = repository.config

    # ============================
    # gen-scene
    # ============================
    def gen_scene(self) -> Dict[str, str]:
        cfg = self.config
        repo = self.repository

        # 1. 장면 / 궤적
        scene = self.world.gen_scene(cfg.seed, cfg.scene)
        trajectory = self.world.gen_trajectory(cfg.scene, cfg.trajectory)
        self.world.check_trajectory(scene, trajectory)

        artifacts = {
            repo.scene_path(Stage.SCENE): repo.save_scene(Stage.SCENE, scene.gaussians),
            "scene/trajectory.txt": repo.save_trajectory(trajectory),
            BOUNDS_FILE: repo.write_json(
                BOUNDS_FILE, {"bounds_min": scene.bounds_min, "bounds_max": scene.bounds_max, "seed": scene.seed}
            ),
        }

        # 2. 모든 차선의 GT 렌더
        for cam in trajectory.all_views():
            artifacts[repo.gt_path(cam.view_id)] = repo.save_image(repo.gt_path(cam.view_id), self.world.render_gt(scene, cam))

        # 3. 원래 차선 학습 뷰에서 색상 점군
        train_views = split_views(trajectory.original, cfg.trajectory)[0]
        cloud = self.world.sample_pointcloud(scene, train_views, cfg.priors.pointcloud_stride, cfg.priors.pointcloud_cap)
        artifacts["scene/pointcloud.ply"] = repo.save_pointcloud(cloud)

        repo.write_manifest(Stage.SCENE, artifacts)
        logger.info(f"gen-scene 완료: splats={len(scene.gaussians)}, views={len(trajectory.all_views())}, points={len(cloud)}")
        return artifacts

    def load_world(self) -> Tuple[SyntheticScene, TrajectorySet]:
        gaussians, _ = self.repository.load_scene(Stage.SCENE)
        bounds = self.repository.read_json(BOUNDS_FILE, Stage.SCENE)
        scene = SyntheticScene(
            gaussians=gaussians,
            bounds_min=np.asarray(bounds["bounds_min"], dtype=np.float64),
            bounds_max=np.asarray(bounds["bounds_max"], dtype=np.float64),
            seed=int(bounds["seed"]),
        )
        return scene, self.repository.load_trajectory()

    def training_set(self, trajectory: TrajectorySet) -> Tuple[List[CameraView], List[np.ndarray]]:
        views = split_views(trajectory.original, self.config.trajectory)[0]
        return views, [self.repository.load_gt(cam.view_id) for cam in views]

    # ============================
    # train --phase 1
    # ============================
    def train_phase1(self) -> Dict[str, str]:
        cfg = self.config
        repo = self.repository
        _, trajectory = self.load_world()
        cloud = repo.load_pointcloud()
        views, targets = self.training_set(trajectory)

        initial = self.trainer.init_gaussians(cloud, cfg.scaled(cfg.train.init_points), cfg.train)
        result = self.trainer.phase1_train(initial, views, targets, cfg)
        report = to_train_report(result, "phase1", repo.provenance(Stage.PHASE1), self.deterministic)
        report.metrics["train_loss_initial"] = self.trainer.mean_loss(initial, views, targets, cfg.train.lambda_io)
        report.metrics["train_loss_final"] = self.trainer.mean_loss(result.gaussians, views, targets, cfg.train.lambda_io)

        artifacts = {
            repo.scene_path(Stage.PHASE1): repo.save_scene(Stage.PHASE1, result.gaussians),
            "phase1/report.json": repo.save_report(Stage.PHASE1, "report.json", report.model_dump(mode="json")),
        }
        repo.write_manifest(Stage.PHASE1, artifacts)
        repo.write_timing(Stage.PHASE1, {"wall_clock_s": result.wall_clock_s})
        return artifacts

    # ============================
    # synth-priors
    # ============================
    def synth_priors(self) -> Dict[str, str]:
        cfg = self.config
        repo = self.repository
        scene, trajectory = self.load_world()
        cloud = repo.load_pointcloud()
        phase1, _ = repo.load_scene(Stage.PHASE1)

        artifacts: Dict[str, str] = {}
        entries = []
        for cam in prior_views(trajectory, cfg.trajectory, cfg.priors):
            severity = severity_for_lane(cfg.priors, trajectory, cam.lane_tag)
            sample = self.world.synth_prior(scene, cam, severity, cfg.seed, cfg.priors, cloud)
            depth = self.world.depth_oracle(scene, cam, cfg.seed, cfg.priors)
            degraded = self.trainer.rasterizer.render(phase1, cam).rgb
            vid = cam.view_id
            artifacts[f"priors/prior_{vid}.ppm"] = repo.save_image(f"priors/prior_{vid}.ppm", sample.image)
            artifacts[f"priors/mask_{vid}.pgm"] = repo.save_gray(f"priors/mask_{vid}.pgm", sample.artifact_mask)
            artifacts[f"priors/degraded_{vid}.ppm"] = repo.save_image(f"priors/degraded_{vid}.ppm", degraded)
            artifacts[f"priors/depth_{vid}.pfm"] = repo.save_depth(vid, depth)
            artifacts[f"priors/recipe_{vid}.json"] = repo.write_json(f"priors/recipe_{vid}.json", sample.recipe.to_dict())
            entries.append(
                {"view_id": vid, "lane": cam.lane_tag, "severity": severity, "mask_fraction": float(sample.artifact_mask.mean())}
            )
        artifacts["priors/index.json"] = repo.save_prior_index(entries)
        repo.write_manifest(Stage.PRIORS, artifacts)
        logger.info(f"synth-priors 완료: {len(entries)}개")
        return artifacts

    def load_priors(self, trajectory: TrajectorySet) -> Tuple[List[CameraView], List[PriorSample]]:
        repo = self.repository
        cloud = repo.load_pointcloud()
        views, samples = [], []
        for entry in repo.load_prior_index():
            vid = entry["view_id"]
            cam = trajectory.view(vid)
            samples.append(
                PriorSample(
                    view_id=vid,
                    image=repo.load_image(f"priors/prior_{vid}.ppm", Stage.PRIORS),
                    artifact_mask=repo.load_image(f"priors/mask_{vid}.pgm", Stage.PRIORS) > 0.5,
                    reprojection=self.world.reproject_pointcloud(cloud, cam),
                    recipe=repo.load_recipe(vid),
                )
            )
            views.append(cam)
        return views, samples

    # ============================
    # train-reward
    # ============================
    def train_reward(self) -> Dict[str, str]:
        cfg = self.config
        repo = self.repository
        _, trajectory = self.load_world()
        phase1, _ = repo.load_scene(Stage.PHASE1)
        p_views, priors = self.load_priors(trajectory)
        views, targets = self.training_set(trajectory)

        if cfg.reward.enabled:
            net = self.reward.build_net(cfg.reward, cfg.seed)
            joint = self.reward.joint_train(phase1, views, targets, p_views, priors, net, cfg)
            scene, maps, mean_conf = joint.gaussians, joint.maps, joint.mean_confidence
            artifacts = {"reward/weights.rgen": repo.save_weights(joint.net)}
            report = to_train_report(joint_as_phase(joint), "reward", repo.provenance(Stage.REWARD), self.deterministic, mean_confidence=mean_conf)
            wall = joint.wall_clock_s
        else:
            logger.info("reward.enabled=false: C_e ≡ 1 맵을 기록합니다.")
            scene, maps = phase1, self.reward.uniform_maps(priors)
            artifacts = {}
            report = None
            wall = 0.0
            mean_conf = 1.0

        for reward_map in maps.values():
            artifacts[repo.reward_path(reward_map.source_view)] = repo.save_reward_map(reward_map)
        artifacts[repo.scene_path(Stage.REWARD)] = repo.save_scene(Stage.REWARD, scene)
        if report is not None:
            artifacts["reward/report.json"] = repo.save_report(Stage.REWARD, "report.json", report.model_dump(mode="json"))
        artifacts[REWARD_INDEX_FILE] = repo.write_json(
            REWARD_INDEX_FILE,
            {"provenance": repo.provenance(Stage.REWARD).model_dump(), "views": sorted(maps), "mean_confidence": mean_conf},
        )
        repo.write_manifest(Stage.REWARD, artifacts)
        repo.write_timing(Stage.REWARD, {"wall_clock_s": wall})
        return artifacts

    # ============================
    # expand (= train --phase 2)
    # ============================
    def expand(self) -> Dict[str, str]:
        cfg = self.config
        repo = self.repository
        _, trajectory = self.load_world()
        gaussians, _ = repo.load_scene(Stage.REWARD)
        p_views, priors = self.load_priors(trajectory)
        maps = repo.load_reward_maps([p.view_id for p in priors])
        depth_maps = [repo.load_depth(p.view_id) for p in priors]
        cloud = repo.load_pointcloud()
        views, targets = self.training_set(trajectory)

        result, expansion = self.trainer.expand(gaussians, views, targets, p_views, priors, maps, depth_maps, cloud, cfg)
        ensure_mature_block_unchanged(expansion.gaussians, result.gaussians)

        report = to_train_report(result, "phase2", repo.provenance(Stage.EXPAND), self.deterministic, expansion=expansion)
        report.metrics["mature_block_unchanged"] = 1.0
        artifacts = {
            repo.scene_path(Stage.EXPAND): repo.save_scene(Stage.EXPAND, result.gaussians),
            "expand/report.json": repo.save_report(Stage.EXPAND, "report.json", report.model_dump(mode="json")),
        }
        repo.write_manifest(Stage.EXPAND, artifacts)
        repo.write_timing(Stage.EXPAND, {"wall_clock_s": result.wall_clock_s})
        return artifacts

    # ============================
    # eval
    # ============================
    def evaluate(self, sweep: bool = False, visualize: bool = False) -> MetricReport:
        cfg = self.config
        repo = self.repository
        scene, trajectory = self.load_world()
        gaussians, _ = repo.load_scene(Stage.EXPAND)

        views = heldout_views(trajectory, cfg.trajectory)
        targets = [repo.load_gt(cam.view_id) for cam in views]
        view_rows = self.evaluation.evaluate_views(gaussians, views, targets)

        p_views, priors = self.load_priors(trajectory)
        maps = repo.load_reward_maps([p.view_id for p in priors])
        gt_images = {p.view_id: repo.load_gt(p.view_id) for p in priors}
        reward_rows = self.evaluation.evaluate_rewards(priors, maps, gt_images, cfg.eval.conf_threshold)

        sweep_points = []
        if sweep:
            base = split_views(trajectory.original, cfg.trajectory)[1]
            sweep_points = self.evaluation.sweep(gaussians, scene, base, cfg.eval.sweep_offsets)

        report = self.evaluation.build_report(repo.provenance(Stage.EVAL), view_rows, reward_rows, gaussians, sweep_points)
        suffix = repo.report_suffix()
        artifacts = {
            f"eval/metrics_{suffix}.jsonl": repo.save_records(
                Stage.EVAL, f"metrics_{suffix}.jsonl", [r.model_dump(mode="json") for r in view_rows + reward_rows]
            ),
            f"eval/summary_{suffix}.json": repo.save_report(
                Stage.EVAL,
                f"summary_{suffix}.json",
                ArtifactEnvelope[MetricReport](provenance=report.provenance, data=report, message="eval").model_dump(mode="json"),
            ),
        }
        if visualize:
            for name, (kind, array) in self.evaluation.visualize(priors, maps, cfg.eval.conf_threshold).items():
                path = f"eval/vis/{name}"
                artifacts[path] = repo.save_gray(path, array) if kind == "pgm" else repo.save_image(path, array)
        repo.write_manifest(Stage.EVAL, artifacts)
        for lane, agg in report.per_lane.items():
            logger.info(f"[eval] {lane}: psnr={agg.psnr:.3f}, ssim={agg.ssim:.4f}, views={agg.views}")
        return report

    # ============================
    # run-all
    # ============================
    def run_all(self, sweep: bool = False, visualize: bool = False) -> MetricReport:
        stages = [
            ("gen-scene", self.gen_scene),
            ("train --phase 1", self.train_phase1),
            ("synth-priors", self.synth_priors),
            ("train-reward", self.train_reward),
            ("expand", self.expand),
        ]
        timing: Dict[str, float] = {}
        for name, stage in stages:
            start = time.perf_counter()
            logger.info(f"===== {name} =====")
            stage()
            timing[name] = time.perf_counter() - start
        report = self.evaluate(sweep=sweep, visualize=visualize)
        self.repository.write_json("timing.json", timing)
        return report


def joint_as_phase(joint: JointResult) -> PhaseResult:
    """리포트 변환용"""
    return PhaseResult(
        gaussians=joint.gaussians,
        losses=joint.losses,
        update_count=joint.update_count,
        wall_clock_s=joint.wall_clock_s,
    )


def ensure_mature_block_unchanged(before: GaussianSet, after: GaussianSet) -> None:
    """phase 2 전후 Mature 행의 레코드 바이트가 같아야 한다"""
    before_mask = before.mask_of(Maturity.MATURE)
    after_mask = after.mask_of(Maturity.MATURE)
    if block_bytes(before, before_mask) != block_bytes(after, after_mask):
        raise MatureBlockModified(int(np.count_nonzero(before_mask)), int(np.count_nonzero(after_mask)))
