import numpy as np
import pytest

from crud.evaluation import EvaluationService, _shift, aggregate, heldout_views
from crud.synthetic_world import SyntheticWorldService
from factories import create_camera, create_gaussians, create_prior
from models.scene import RewardMap
from schemas.format import Provenance
from schemas.report import ViewMetrics

PROVENANCE = Provenance(seed=0, config_hash="0123456789abcdef", stage="eval")


@pytest.fixture
def evaluation(rasterizer):
    return EvaluationService(rasterizer)


class TestAggregate:
    def test_None은_평균에서_제외(self):
        # Given
        rows = [
            ViewMetrics(view_id="a", lane="orig", psnr=20.0, ssim=0.5, auroc=0.8),
            ViewMetrics(view_id="b", lane="orig", psnr=30.0, ssim=0.7),
        ]

        # When
        agg = aggregate(rows)

        # Then
        assert agg.views == 2
        assert agg.psnr == pytest.approx(25.0)
        assert agg.auroc == pytest.approx(0.8)
        assert agg.mae_accepted is None

    def test_빈_목록(self):
        assert aggregate([]).views == 0


class TestEvaluateViews:
    def test_자기_자신과의_비교는_PSNR_상한(self, evaluation, rasterizer):
        # Given
        cam = create_camera()
        gs = create_gaussians(count=6)
        target = np.clip(rasterizer.render(gs, cam).rgb, 0, 1)

        # When
        rows = evaluation.evaluate_views(gs, [cam], [target])

        # Then
        assert rows[0].psnr == 99.0
        assert rows[0].ssim == pytest.approx(1.0)
        assert rows[0].lane == "orig"

    def test_리워드_판별_지표(self):
        # Given: 아티팩트 영역에만 낮은 신뢰도
        prior = create_prior()
        gt = prior.image.copy()
        gt[prior.artifact_mask] = 0.0
        conf = np.where(prior.artifact_mask, 0.1, 0.9)
        maps = {prior.view_id: RewardMap(values=conf, source_view=prior.view_id)}

        # When
        rows = EvaluationService.evaluate_rewards([prior], maps, {prior.view_id: gt})

        # Then
        assert rows[0].auroc == 1.0
        assert rows[0].mae_accepted == 0.0
        assert rows[0].mae_rejected > 0.0
        assert rows[0].accepted_fraction == 0.5
        assert rows[0].lane == "shift+3.5"

    def test_아티팩트가_없는_prior는_AUROC_생략(self):
        # Given
        prior = create_prior()
        prior.artifact_mask[:] = False
        maps = {prior.view_id: RewardMap(values=np.ones((16, 16)), source_view=prior.view_id)}

        # When
        rows = EvaluationService.evaluate_rewards([prior], maps, {prior.view_id: prior.image})

        # Then
        assert rows[0].auroc is None
        assert rows[0].mae_accepted == 0.0


class TestSweepAndReport:
    def test_shift는_중심을_x_방향으로_이동(self):
        # Given
        cam = create_camera(center=(0.5, -1.0, 2.0), view_id="orig_003")

        # When
        moved = _shift(cam, 2.0)

        # Then
        np.testing.assert_allclose(moved.center, [2.5, -1.0, 2.0])
        np.testing.assert_allclose(moved.rotation, cam.rotation)
        assert moved.view_id == "sweep+2.0_003"

    def test_sweep은_오프셋마다_한_점(self, evaluation, rasterizer, tiny_config):
        """GT 장면 자체를 평가하면 8비트 양자화 오차만 남는다."""
        # Given
        world = SyntheticWorldService(rasterizer)
        scene = world.gen_scene(0, tiny_config.scene)
        trajectory = world.gen_trajectory(tiny_config.scene, tiny_config.trajectory)
        base = heldout_views(trajectory, tiny_config.trajectory, tags=["orig"])

        # When
        points = evaluation.sweep(scene.gaussians, scene, base, [0.0, 1.0])

        # Then
        assert [p.offset for p in points] == [0.0, 1.0]
        assert all(p.psnr > 45.0 for p in points)
        assert all(p.views == 2 for p in points)

    def test_리포트는_차선별로_집계(self):
        # Given
        rows = [
            ViewMetrics(view_id="orig_002", lane="orig", psnr=30.0, ssim=0.9),
            ViewMetrics(view_id="shift+3.5_002", lane="shift+3.5", psnr=20.0, ssim=0.6),
            ViewMetrics(view_id="shift+3.5_006", lane="shift+3.5", psnr=22.0, ssim=0.7),
        ]

        # When
        report = EvaluationService.build_report(PROVENANCE, rows, [], create_gaussians(count=3))

        # Then
        assert list(report.per_lane) == ["orig", "shift+3.5"]
        assert report.per_lane["shift+3.5"].psnr == pytest.approx(21.0)
        assert report.overall.views == 3
        assert report.reward is None
        assert report.gaussian_counts.immature == 3

    def test_시각화_파일_목록(self):
        # Given
        prior = create_prior()
        maps = {prior.view_id: RewardMap(values=np.where(prior.artifact_mask, 0.0, 1.0), source_view=prior.view_id)}

        # When
        files = EvaluationService.visualize([prior], maps, 0.5)

        # Then
        kind, layered = files[f"layered_{prior.view_id}.ppm"]
        assert kind == "ppm"
        np.testing.assert_array_equal(layered[prior.artifact_mask], 0.0)
        assert files[f"reward_{prior.view_id}.pgm"][0] == "pgm"
