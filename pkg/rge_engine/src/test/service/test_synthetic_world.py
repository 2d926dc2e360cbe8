import numpy as np
import pytest

from crud.synthetic_world import (
    SyntheticWorldService,
    is_holdout,
    lane_tag,
    prior_views,
    quantize,
    severity_for_lane,
    split_views,
)
from engine.rasterizer import DEPTH_VALID_ALPHA
from engine.splat_core import project_points, quaternion_to_rotation
from exception.pipeline_exceptions import InvalidConfig
from factories import create_camera
from models.scene import ColoredPointCloud
from schemas.run_config import PriorsConfig, SceneConfig, TrajectoryConfig


@pytest.fixture
def world(rasterizer):
    return SyntheticWorldService(rasterizer)


@pytest.fixture
def scene(world, tiny_config):
    return world.gen_scene(tiny_config.seed, tiny_config.scene)


@pytest.fixture
def trajectory(world, tiny_config):
    return world.gen_trajectory(tiny_config.scene, tiny_config.trajectory)


class TestGenScene:
    def test_같은_시드는_같은_장면(self, world, tiny_config):
        # When
        a = world.gen_scene(3, tiny_config.scene)
        b = world.gen_scene(3, tiny_config.scene)

        # Then
        for name in ("positions", "rotations", "log_scales", "opacity_logits", "colors"):
            np.testing.assert_array_equal(getattr(a.gaussians, name), getattr(b.gaussians, name))

    def test_다른_시드는_다른_장면(self, world, tiny_config):
        a = world.gen_scene(0, tiny_config.scene)
        b = world.gen_scene(1, tiny_config.scene)
        assert not np.array_equal(a.gaussians.positions, b.gaussians.positions)

    def test_스플랫_예산을_넘지_않음(self, scene, tiny_config):
        assert 0 < len(scene.gaussians) <= tiny_config.scene.splat_budget

    def test_예외_케이스_물체가_예산을_모두_차지(self, world):
        with pytest.raises(InvalidConfig):
            world.gen_scene(0, SceneConfig(splat_budget=100, num_blobs=10))

    def test_박스_스플랫은_박스_축에_정렬된_회전을_가짐(self):
        # When
        box = SyntheticWorldService._box(np.random.default_rng(5), SceneConfig(), side=1)

        # Then: 모든 스플랫이 같은 수직축 회전을 갖고, 박스 좌표로 되돌리면 직육면체 면 위에 놓인다
        rot = quaternion_to_rotation(box.rotations[0])
        np.testing.assert_allclose(box.rotations, np.broadcast_to(box.rotations[0], box.rotations.shape), atol=1e-12)
        np.testing.assert_allclose(rot[:, 1], [0.0, 1.0, 0.0], atol=1e-12)
        local = (box.positions - box.positions.mean(axis=0)) @ rot
        half = np.abs(local).max(axis=0)
        assert np.isclose(np.abs(local), half, atol=1e-9).any(axis=1).all()

    def test_모든_차선의_모든_포즈에서_alpha가_가득_참(self, world):
        # Given: 기본 예산, 축소 해상도, 차선마다 세 포즈
        scene_cfg = SceneConfig(width=32, height=32, focal=28.0)
        scene = world.gen_scene(0, scene_cfg)
        trajectory = world.gen_trajectory(scene_cfg, TrajectoryConfig(num_poses=3))

        # When
        coverage = {cam.view_id: float(world.rasterizer.render(scene.gaussians, cam).alpha.min()) for cam in trajectory.all_views()}

        # Then
        assert min(coverage.values()) >= 0.999, coverage


class TestTrajectory:
    def test_원래_차선과_shifted_차선(self, trajectory, tiny_config):
        # Then
        assert list(trajectory.lanes) == ["orig", "shift+3.5"]
        assert trajectory.shifted_tags() == ["shift+3.5"]
        for lane in trajectory.lanes.values():
            assert len(lane) == tiny_config.trajectory.num_poses

    def test_shifted_차선은_x_방향_평행_이동(self, trajectory):
        for orig, shifted in zip(trajectory.original, trajectory.lanes["shift+3.5"]):
            np.testing.assert_allclose(shifted.center - orig.center, [3.5, 0.0, 0.0], atol=1e-12)
            np.testing.assert_allclose(shifted.rotation, orig.rotation)

    def test_기본_설정은_세_차선(self, world):
        trajectory = world.gen_trajectory(SceneConfig(), TrajectoryConfig())
        assert list(trajectory.lanes) == ["orig", "shift+3.5", "shift+7.0"]

    def test_held_out_분할(self):
        # Given
        cfg = TrajectoryConfig(num_poses=8, holdout_every=4, holdout_offset=2)
        views = [create_camera(view_id=f"orig_{i:03d}") for i in range(8)]

        # When
        train, held = split_views(views, cfg)

        # Then
        assert [cam.view_id for cam in held] == ["orig_002", "orig_006"]
        assert len(train) == 6
        assert is_holdout(6, cfg) and not is_holdout(5, cfg)

    def test_prior_뷰는_held_out을_제외하고_stride_간격(self, trajectory, tiny_config):
        views = prior_views(trajectory, tiny_config.trajectory, tiny_config.priors)
        assert [cam.view_id for cam in views] == ["shift+3.5_000", "shift+3.5_004"]

    def test_기본_궤적의_모든_포즈에서_장면이_시야를_덮음(self, world):
        # Given
        scene = world.gen_scene(0, SceneConfig())
        trajectory = world.gen_trajectory(SceneConfig(), TrajectoryConfig())

        # Then
        assert all(world.frustum_check(scene, cam) for cam in trajectory.all_views())
        world.check_trajectory(scene, trajectory)

    def test_뒤를_보는_카메라는_시야를_덮지_못함(self, world, scene):
        # Given: 장면 상자 안에서 열린 면(-z)을 바라보는 카메라
        cam = create_camera(width=32, height=32, focal=28.0, center=(0.0, -1.5, 5.0), rotation=np.diag([-1.0, 1.0, -1.0]))

        # Then
        assert not world.frustum_check(scene, cam)

    def test_예외_케이스_벽_밖의_차선(self, world, scene, tiny_config):
        # Given: 오른쪽 벽(x=13) 너머로 이동한 차선
        trajectory = world.gen_trajectory(tiny_config.scene, TrajectoryConfig(num_poses=2, lane_offsets=[20.0]))

        # When / Then
        with pytest.raises(InvalidConfig):
            world.check_trajectory(scene, trajectory)

    def test_lane_tag(self):
        assert lane_tag(None) == "orig"
        assert lane_tag(7.0) == "shift+7.0"


class TestPointCloud:
    def test_cap_0이면_빈_점군(self, world, scene, trajectory):
        assert len(world.sample_pointcloud(scene, trajectory.original, stride=4, cap=0)) == 0

    def test_점군은_cap_이하이고_출처_뷰를_기록(self, world, scene, trajectory):
        # When
        cloud = world.sample_pointcloud(scene, trajectory.original[:2], stride=4, cap=50)

        # Then
        assert 0 < len(cloud) <= 50
        assert set(cloud.source_views) <= {"orig_000", "orig_001"}
        assert np.all((cloud.colors >= 0) & (cloud.colors <= 1))

    def test_점은_출처_픽셀로_재투영되고_GT_색상을_가짐(self, world, scene, trajectory):
        # Given
        views = trajectory.original[:2]
        stride = 4

        # When
        cloud = world.sample_pointcloud(scene, views, stride=stride, cap=100000)

        # Then
        sources = np.array(cloud.source_views)
        for cam in views:
            mine = sources == cam.view_id
            uv, _ = project_points(cam, cloud.positions[mine])
            pixels = np.round(uv).astype(np.int64)
            assert np.all(np.abs(uv - pixels) < 0.5)
            assert np.all(pixels % stride == stride // 2)
            gt = world.render_gt(scene, cam)
            np.testing.assert_allclose(cloud.colors[mine], gt[pixels[:, 1], pixels[:, 0]], atol=1.0 / 255.0)

    def test_점_개수는_유효한_격자_픽셀_수의_합(self, world, scene, trajectory, rasterizer):
        # Given
        views = trajectory.original[:3]
        stride = 4

        # When
        cloud = world.sample_pointcloud(scene, views, stride=stride, cap=100000)

        # Then
        expected = 0
        for cam in views:
            alpha = rasterizer.render(scene.gaussians, cam).alpha
            expected += int(np.count_nonzero(alpha[stride // 2::stride, stride // 2::stride] >= DEPTH_VALID_ALPHA))
        assert len(cloud) == expected

    def test_재투영은_가까운_점이_이긴다(self):
        # Given: 같은 광선 위의 두 점
        cam = create_camera()
        cloud = ColoredPointCloud(
            positions=np.array([[0.0, 0.0, 5.0], [0.0, 0.0, 2.0]]),
            colors=np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
        )

        # When
        reproj = SyntheticWorldService.reproject_pointcloud(cloud, cam)

        # Then
        v, u = int(round(cam.cy)), int(round(cam.cx))
        assert reproj.valid.sum() == 1
        assert reproj.point_index[v, u] == 1
        assert reproj.depth[v, u] == pytest.approx(2.0)
        np.testing.assert_array_equal(reproj.image[v, u], [0.0, 1.0, 0.0])


class TestPriors:
    def test_severity_0이면_GT와_동일하고_마스크가_비어있음(self, world, scene, trajectory, tiny_config):
        # Given
        cam = trajectory.lanes["shift+3.5"][0]

        # When
        prior = world.synth_prior(scene, cam, 0.0, 0, tiny_config.priors)

        # Then
        np.testing.assert_array_equal(prior.image, world.render_gt(scene, cam))
        assert not prior.artifact_mask.any()
        assert prior.recipe.ops == []

    def test_마스크는_GT와의_차이와_정확히_일치(self, world, scene, trajectory, tiny_config):
        # Given
        cam = trajectory.lanes["shift+3.5"][0]

        # When
        prior = world.synth_prior(scene, cam, 0.6, 0, tiny_config.priors)

        # Then
        gt = world.render_gt(scene, cam)
        expected = np.any(np.abs(prior.image - gt) > tiny_config.priors.mask_epsilon, axis=2)
        np.testing.assert_array_equal(prior.artifact_mask, expected)
        assert prior.artifact_mask.any()
        np.testing.assert_array_equal(prior.image, quantize(prior.image))

    def test_같은_시드는_같은_prior(self, world, scene, trajectory, tiny_config):
        cam = trajectory.lanes["shift+3.5"][4]
        a = world.synth_prior(scene, cam, 0.3, 7, tiny_config.priors)
        b = world.synth_prior(scene, cam, 0.3, 7, tiny_config.priors)
        np.testing.assert_array_equal(a.image, b.image)
        assert a.recipe.to_dict() == b.recipe.to_dict()

    def test_severity_025의_마스크_면적은_15에서_35퍼센트(self, world, scene, trajectory, tiny_config):
        # Given
        cam = trajectory.lanes["shift+3.5"][0]

        # When
        areas = [float(world.synth_prior(scene, cam, 0.25, seed, tiny_config.priors).artifact_mask.mean()) for seed in range(10)]

        # Then
        assert all(0.15 <= area <= 0.35 for area in areas), areas

    def test_손상은_기록된_원반_밖을_바꾸지_않음(self, world, scene, trajectory, tiny_config):
        # Given
        cam = trajectory.lanes["shift+3.5"][4]

        # When
        prior = world.synth_prior(scene, cam, 0.6, 3, tiny_config.priors)

        # Then
        vs, us = np.mgrid[0:cam.height, 0:cam.width]
        inside = np.zeros((cam.height, cam.width), dtype=bool)
        for op in prior.recipe.ops:
            inside |= np.hypot(us - op.center[0], vs - op.center[1]) < op.radius
        assert not (prior.artifact_mask & ~inside).any()

    @pytest.mark.parametrize("severity", [-0.1, 1.5])
    def test_예외_케이스_severity_범위_밖(self, world, scene, trajectory, tiny_config, severity):
        with pytest.raises(InvalidConfig):
            world.synth_prior(scene, trajectory.lanes["shift+3.5"][0], severity, 0, tiny_config.priors)

    def test_차선별_severity는_이동_거리_보간(self, trajectory):
        # Given
        cfg = PriorsConfig()

        # Then
        assert severity_for_lane(cfg, trajectory, "orig") == 0.0
        assert severity_for_lane(cfg, trajectory, "shift+3.5") == pytest.approx(0.15)
        assert cfg.severity_for(5.25) == pytest.approx(0.225)
        assert PriorsConfig(severity_override=0.9).severity_for(3.5) == 0.9


class TestDepthOracle:
    def test_깊이_오라클은_결정적이고_GT_유효_영역을_따른다(self, world, scene, trajectory, tiny_config, rasterizer):
        # Given
        cam = trajectory.lanes["shift+3.5"][0]

        # When
        a = world.depth_oracle(scene, cam, 0, tiny_config.priors)
        b = world.depth_oracle(scene, cam, 0, tiny_config.priors)

        # Then
        gt = rasterizer.render_depth(scene.gaussians, cam)
        np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(a.valid, gt.valid)
        ratio = a.values[gt.valid] / gt.values[gt.valid]
        lo = tiny_config.priors.depth_scale_range[0] * tiny_config.priors.depth_noise[0]
        hi = tiny_config.priors.depth_scale_range[1] * tiny_config.priors.depth_noise[1]
        assert np.all((ratio >= lo - 1e-12) & (ratio <= hi + 1e-12))


@pytest.mark.slow
class TestDefaultWorld:
    def test_기본_설정_전체_궤적에서_alpha가_가득_참(self, world):
        # Given
        scene = world.gen_scene(0, SceneConfig())
        trajectory = world.gen_trajectory(SceneConfig(), TrajectoryConfig())

        # When
        worst = min(float(world.rasterizer.render(scene.gaussians, cam).alpha.min()) for cam in trajectory.all_views())

        # Then
        assert worst >= 0.999

    def test_기본_설정_severity_025의_마스크_면적(self, world):
        # Given
        scene = world.gen_scene(0, SceneConfig())
        trajectory = world.gen_trajectory(SceneConfig(), TrajectoryConfig())
        views = trajectory.lanes["shift+3.5"]

        # When
        areas = [
            float(world.synth_prior(scene, views[seed * 3], 0.25, seed, PriorsConfig()).artifact_mask.mean())
            for seed in range(10)
        ]

        # Then
        assert all(0.15 <= area <= 0.35 for area in areas), areas
