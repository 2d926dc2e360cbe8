import json

import numpy as np
import pytest

from crud.reward import RewardService
from exception.pipeline_exceptions import MissingArtifact
from factories import create_gaussians
from models.enums import Stage
from models.scene import RewardMap
from repositories.artifact_repository import ArtifactRepository
from schemas.run_config import RunConfig
from storage.local_client import LocalStorageClient


@pytest.fixture
def config() -> RunConfig:
    return RunConfig.default(seed=7, reward={"widths": [4, 8, 8]})


@pytest.fixture
def repo(tmp_path, config) -> ArtifactRepository:
    return ArtifactRepository(LocalStorageClient(str(tmp_path)), config)


class TestRequire:
    def test_예외_케이스_없는_산출물은_생성_명령을_안내(self, repo):
        # When & Then
        with pytest.raises(MissingArtifact) as exc:
            repo.load_weights()
        assert exc.value.produced_by == "train-reward"
        assert exc.value.path.endswith("reward/weights.rgen")

    def test_예외_케이스_리워드_인덱스_없이_맵_로드(self, repo):
        with pytest.raises(MissingArtifact):
            repo.load_reward_maps(["shift+3.5_000"])


class TestRoundTrip:
    def test_가중치_저장_후_로드하면_같은_추론_결과(self, repo, config):
        # Given
        net = RewardService.build_net(config.reward, config.seed).freeze()
        image = np.random.default_rng(0).uniform(size=(8, 8, 3))

        # When
        repo.save_weights(net)
        loaded = repo.load_weights()

        # Then
        assert loaded.frozen
        np.testing.assert_array_equal(
            RewardService.infer_reward(loaded, image).values, RewardService.infer_reward(net, image).values
        )

    def test_장면_체크포인트와_메타(self, repo, config):
        # Given
        gs = create_gaussians(count=5, seed=3)

        # When
        digest = repo.save_scene(Stage.PHASE1, gs)
        loaded, meta = repo.load_scene(Stage.PHASE1)

        # Then
        assert len(digest) == 64
        assert len(loaded) == 5
        assert meta.seed == config.seed
        assert meta.config_hash == repo.config_hash

    def test_리워드_맵은_고정되어_로드(self, repo):
        # Given
        values = np.linspace(0.0, 1.0, 12, dtype=np.float32).reshape(3, 4).astype(np.float64)
        repo.save_reward_map(RewardMap(values=values, source_view="shift+3.5_000"))
        repo.write_json("reward/index.json", {"views": ["shift+3.5_000"]})

        # When
        maps = repo.load_reward_maps(["shift+3.5_000"])

        # Then
        np.testing.assert_array_equal(maps["shift+3.5_000"].values, values)
        assert not maps["shift+3.5_000"].values.flags.writeable


class TestManifest:
    def test_매니페스트는_경로순_정렬과_재현_정보_포함(self, repo, tmp_path, config):
        # When
        repo.write_manifest(Stage.SCENE, {"scene/b.txt": "2" * 64, "scene/a.txt": "1" * 64})

        # Then
        manifest = json.loads((tmp_path / "scene" / "manifest.json").read_text())
        assert list(manifest["artifacts"]) == ["scene/a.txt", "scene/b.txt"]
        assert manifest["provenance"] == {"seed": config.seed, "config_hash": repo.config_hash, "stage": "scene"}

    def test_발산_덤프_경로(self, repo, tmp_path):
        # When
        path = repo.dump_diverged(create_gaussians(count=2), "phase1", 12)

        # Then
        assert path.endswith("phase1/diverged_000012.rgegs")
        assert (tmp_path / "phase1" / "diverged_000012.rgegs").exists()
