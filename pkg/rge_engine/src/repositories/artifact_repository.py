import json
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from exception.pipeline_exceptions import MissingArtifact
from formats.checkpoint import CheckpointMeta, decode_checkpoint, encode_checkpoint
from formats.images import decode_pfm, decode_pnm, encode_pfm, encode_pgm, encode_ppm
from formats.pointcloud import decode_pointcloud, encode_pointcloud
from formats.trajectory import decode_trajectory, encode_trajectory
from formats.weights import decode_weights, encode_weights
from engine.nn_engine import NetGraph
from engine.rasterizer import DepthMap
from models.enums import Stage
from models.gaussian import GaussianSet
from models.scene import ColoredPointCloud, CorruptionOp, CorruptionRecipe, RewardMap, TrajectorySet
from schemas.format import Provenance
from schemas.report import StageManifest
from schemas.run_config import RunConfig
from storage.client import StorageClient
from utils.hashing import config_hash, file_digest
from utils.json_utils import json_lines, pretty_json, remove_none_recursive

logger = logging.getLogger(__name__)

# 단계별 산출물 경로 규칙 (실행 디렉토리 기준)
CONFIG_FILE = "config.yaml"
SCENE_FILE = "scene.rgegs"
TRAJECTORY_FILE = "scene/trajectory.txt"
POINTCLOUD_FILE = "scene/pointcloud.ply"
WEIGHTS_FILE = "reward/weights.rgen"
PRIOR_INDEX_FILE = "priors/index.json"
REWARD_INDEX_FILE = "reward/index.json"
MANIFEST_FILE = "manifest.json"
TIMING_FILE = "timing.json"

# 산출물을 만드는 CLI 명령
PRODUCER = {
    Stage.SCENE: "gen-scene",
    Stage.PHASE1: "train --phase 1",
    Stage.PRIORS: "synth-priors",
    Stage.REWARD: "train-reward",
    Stage.EXPAND: "expand",
    Stage.EVAL: "eval",
    Stage.ABLATION: "ablate",
}


class ArtifactRepository:
    def __init__(self, storage: StorageClient, config: RunConfig):
        """StorageClient 주입, 모든 산출물에 (seed, config hash) 기록"""
        self.storage = storage
        self.config = config
        self.config_hash = config_hash(config)

    def provenance(self, stage: Optional[Stage] = None) -> Provenance:
        return Provenance(seed=self.config.seed, config_hash=self.config_hash, stage=None if stage is None else stage.value)

    def meta(self) -> CheckpointMeta:
        return CheckpointMeta(desk_scale=self.config.desk_scale, seed=self.config.seed, config_hash=self.config_hash)

    # ============================
    # 공통
    # ============================
    def require(self, path: str, stage: Stage):
        if not self.storage.exists(path):
            raise MissingArtifact(self._display(path), PRODUCER[stage])

    def _display(self, path: str) -> str:
        full_path = getattr(self.storage, "full_path", None)
        return full_path(path) if full_path else path

    def write(self, path: str, data: bytes) -> str:
        self.storage.write_bytes(path, data)
        return file_digest(data)

    def write_json(self, path: str, payload) -> str:
        return self.write(path, pretty_json(remove_none_recursive(payload)).encode("utf-8"))

    def read_json(self, path: str, stage: Stage):
        self.require(path, stage)
        return json.loads(self.storage.read_text(path))

    def write_manifest(self, stage: Stage, artifacts: Dict[str, str]):
        manifest = StageManifest(provenance=self.provenance(stage), artifacts=dict(sorted(artifacts.items())))
        self.write_json(f"{stage.value}/{MANIFEST_FILE}", manifest.model_dump(mode="json"))

    def write_timing(self, stage: Stage, timing: Dict[str, float]):
        """벽시계 시간은 결정적 산출물과 분리해서 기록"""
        self.write_json(f"{stage.value}/{TIMING_FILE}", timing)

    # ============================
    # 장면 / 궤적 / 점군
    # ============================
    def scene_path(self, stage: Stage) -> str:
        return f"{stage.value}/{SCENE_FILE}"

    def save_scene(self, stage: Stage, gaussians: GaussianSet) -> str:
        return self.write(self.scene_path(stage), encode_checkpoint(gaussians, self.meta()))

    def load_scene(self, stage: Stage) -> Tuple[GaussianSet, CheckpointMeta]:
        path = self.scene_path(stage)
        self.require(path, stage)
        return decode_checkpoint(self.storage.read_bytes(path), self._display(path))

    def dump_diverged(self, gaussians: GaussianSet, stage: str, iteration: int) -> str:
        path = f"{stage}/diverged_{iteration:06d}.rgegs"
        self.write(path, encode_checkpoint(gaussians, self.meta()))
        return self._display(path)

    def save_trajectory(self, trajectory: TrajectorySet) -> str:
        header = f"seed={self.config.seed} config_hash={self.config_hash}"
        return self.write(TRAJECTORY_FILE, encode_trajectory(trajectory, header).encode("utf-8"))

    def load_trajectory(self) -> TrajectorySet:
        self.require(TRAJECTORY_FILE, Stage.SCENE)
        return decode_trajectory(self.storage.read_text(TRAJECTORY_FILE), self.config.trajectory.near_clip, TRAJECTORY_FILE)

    def save_pointcloud(self, cloud: ColoredPointCloud) -> str:
        header = f"seed={self.config.seed} config_hash={self.config_hash}"
        return self.write(POINTCLOUD_FILE, encode_pointcloud(cloud, header))

    def load_pointcloud(self) -> ColoredPointCloud:
        self.require(POINTCLOUD_FILE, Stage.SCENE)
        return decode_pointcloud(self.storage.read_bytes(POINTCLOUD_FILE))

    # ============================
    # 이미지
    # ============================
    @staticmethod
    def gt_path(view_id: str) -> str:
        return f"scene/gt/{view_id}.ppm"

    def save_image(self, path: str, image: np.ndarray) -> str:
        return self.write(path, encode_ppm(image))

    def save_gray(self, path: str, image: np.ndarray) -> str:
        return self.write(path, encode_pgm(image))

    def load_image(self, path: str, stage: Stage) -> np.ndarray:
        self.require(path, stage)
        return decode_pnm(self.storage.read_bytes(path))

    def load_gt(self, view_id: str) -> np.ndarray:
        return self.load_image(self.gt_path(view_id), Stage.SCENE)

    # ============================
    # prior
    # ============================
    def save_prior_index(self, entries: List[dict]) -> str:
        return self.write_json(PRIOR_INDEX_FILE, {"provenance": self.provenance(Stage.PRIORS).model_dump(), "priors": entries})

    def load_prior_index(self) -> List[dict]:
        return self.read_json(PRIOR_INDEX_FILE, Stage.PRIORS)["priors"]

    def save_depth(self, view_id: str, depth: DepthMap) -> str:
        # 무효 픽셀은 0
        return self.write(f"priors/depth_{view_id}.pfm", encode_pfm(np.where(depth.valid, depth.values, 0.0)))

    def load_depth(self, view_id: str) -> DepthMap:
        path = f"priors/depth_{view_id}.pfm"
        self.require(path, Stage.PRIORS)
        values = decode_pfm(self.storage.read_bytes(path), path)
        return DepthMap(values=values, valid=values > 0)

    def load_recipe(self, view_id: str) -> CorruptionRecipe:
        data = self.read_json(f"priors/recipe_{view_id}.json", Stage.PRIORS)
        ops = [
            CorruptionOp(kind=op["kind"], center=tuple(op["center"]), radius=op["radius"], magnitude=op["magnitude"], params=op.get("params", {}))
            for op in data.get("ops", [])
        ]
        return CorruptionRecipe(seed=data["seed"], severity=data["severity"], ops=ops)

    # ============================
    # 리워드
    # ============================
    def save_weights(self, net: NetGraph) -> str:
        return self.write(WEIGHTS_FILE, encode_weights(net, self.config_hash))

    def load_weights(self) -> NetGraph:
        self.require(WEIGHTS_FILE, Stage.REWARD)
        net, _ = decode_weights(self.storage.read_bytes(WEIGHTS_FILE))
        return net

    @staticmethod
    def reward_path(view_id: str) -> str:
        return f"reward/reward_{view_id}.pfm"

    def save_reward_map(self, reward: RewardMap) -> str:
        return self.write(self.reward_path(reward.source_view), encode_pfm(reward.values))

    def load_reward_maps(self, view_ids: List[str]) -> Dict[str, RewardMap]:
        """고정된 리워드 맵 (expand / train --phase 2의 선행 조건)"""
        self.require(REWARD_INDEX_FILE, Stage.REWARD)
        maps = {}
        for view_id in view_ids:
            path = self.reward_path(view_id)
            self.require(path, Stage.REWARD)
            values = decode_pfm(self.storage.read_bytes(path), path)
            maps[view_id] = RewardMap(values=values, source_view=view_id).freeze()
        return maps

    # ============================
    # 리포트
    # ============================
    def report_suffix(self) -> str:
        return f"s{self.config.seed}_{self.config_hash}"

    def save_report(self, stage: Stage, name: str, payload) -> str:
        return self.write_json(f"{stage.value}/{name}", payload)

    def save_records(self, stage: Stage, name: str, records: List[dict]) -> str:
        return self.write(f"{stage.value}/{name}", json_lines([remove_none_recursive(r) for r in records]).encode("utf-8"))
