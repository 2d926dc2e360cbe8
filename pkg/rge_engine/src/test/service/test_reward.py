import numpy as np
import pytest

from crud.reward import RewardService
from crud.trainer import TrainerService
from factories import create_camera, create_gaussians, create_image, create_prior
from models.gaussian import PARAM_GROUPS
from schemas.run_config import RewardConfig


@pytest.fixture
def reward_service(rasterizer):
    return RewardService(TrainerService(rasterizer), threads=1)


@pytest.fixture
def small_net():
    return RewardService.build_net(RewardConfig(widths=(4, 8, 8), joint_iters=10, linear_iters=5), seed=0)


class TestRewardMaps:
    def test_uniform_맵은_1이고_고정(self):
        # When
        maps = RewardService.uniform_maps([create_prior("a"), create_prior("b")])

        # Then
        assert set(maps) == {"a", "b"}
        for m in maps.values():
            np.testing.assert_array_equal(m.values, 1.0)
            assert m.frozen
            assert not m.values.flags.writeable

    def test_8의_배수가_아닌_이미지도_원래_크기로_추론(self, small_net):
        # When
        reward = RewardService.infer_reward(small_net, create_image(13, 18), "v")

        # Then
        assert reward.values.shape == (13, 18)
        assert np.all((reward.values > 0) & (reward.values < 1))

    def test_cache_maps는_네트워크를_고정하고_뷰별로_저장(self, reward_service, small_net):
        # Given
        priors = [create_prior("shift+3.5_000", seed=1), create_prior("shift+3.5_002", seed=2)]

        # When
        maps = reward_service.cache_maps(small_net, priors)

        # Then
        assert small_net.frozen
        assert list(maps) == ["shift+3.5_000", "shift+3.5_002"]
        assert all(m.frozen for m in maps.values())

    def test_병렬_캐시는_직렬과_동일(self, rasterizer, small_net):
        # Given
        priors = [create_prior(f"shift+3.5_{i:03d}", seed=i) for i in range(4)]

        # When
        serial = RewardService(TrainerService(rasterizer), threads=1).cache_maps(small_net, priors)
        parallel = RewardService(TrainerService(rasterizer), threads=3).cache_maps(small_net, priors)

        # Then
        for view_id in serial:
            np.testing.assert_array_equal(serial[view_id].values, parallel[view_id].values)


class TestJointTrain:
    def test_예외_케이스_prior_없음(self, reward_service, small_net, tiny_config):
        with pytest.raises(ValueError):
            reward_service.joint_train(create_gaussians(), [create_camera()], [create_image()], [], [], small_net, tiny_config)

    def test_결합_학습_후_맵_캐시와_장면_갱신(self, reward_service, tiny_config):
        # Given: desk_scale 0.01 → 4회 반복
        gs = create_gaussians(count=10, seed=2)
        net = RewardService.build_net(tiny_config.reward, tiny_config.seed)
        prior_cam = create_camera(view_id="shift+3.5_000", lane_tag="shift+3.5", center=(0.3, 0.0, 0.0))
        head_before = net.params["head.bias"].copy()

        # When
        result = reward_service.joint_train(
            gs, [create_camera()], [create_image(seed=1)], [prior_cam], [create_prior()], net, tiny_config
        )

        # Then
        assert len(result.losses) == 4
        assert all(np.isfinite(r.loss) and r.kind == "reward" for r in result.losses)
        assert result.update_count == 4 * 10 * len(PARAM_GROUPS)
        assert net.frozen
        assert not np.array_equal(net.params["head.bias"], head_before)
        assert list(result.maps) == ["shift+3.5_000"]
        assert 0.0 < result.mean_confidence < 1.0
        assert not np.array_equal(result.gaussians.positions, gs.positions)

    def test_학습률_스케줄은_desk_scale_적용(self, tiny_config):
        schedule = RewardService.schedule(tiny_config)
        assert schedule.total_iters == 4
        assert schedule.linear_iters == 1
