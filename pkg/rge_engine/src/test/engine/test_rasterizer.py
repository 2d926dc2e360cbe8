import numpy as np
import pytest

from engine.rasterizer import ALPHA_MIN, DEPTH_VALID_ALPHA, Rasterizer, accumulate_view_gradients
from engine.splat_core import DILATION
from exception.splat_exceptions import ShapeMismatch
from factories import create_camera, create_gaussians
from models.enums import GradSpace, ReductionMode
from models.gaussian import PARAM_GROUPS, GaussianSet

FD_STEP = 1e-4
FD_RTOL = 1e-3
FD_ATOL = 1e-7


def _weighted_loss(rasterizer: Rasterizer, gs: GaussianSet, cam, weights: np.ndarray) -> float:
    return float((rasterizer.render(gs, cam).rgb * weights).sum())


def _finite_difference_agreement(rasterizer: Rasterizer, gs: GaussianSet, cam, weights: np.ndarray) -> float:
    """중앙 차분과 해석적 그래디언트가 일치하는 파라미터 좌표 비율"""
    analytic = rasterizer.render_backward(gs, cam, weights, accumulate=False).gradients.as_dict()
    matched = total = 0
    for name in PARAM_GROUPS:
        values = getattr(gs, name)
        for index in np.ndindex(values.shape):
            original = values[index]
            values[index] = original + FD_STEP
            plus = _weighted_loss(rasterizer, gs, cam, weights)
            values[index] = original - FD_STEP
            minus = _weighted_loss(rasterizer, gs, cam, weights)
            values[index] = original
            numeric = (plus - minus) / (2.0 * FD_STEP)
            exact = analytic[name][index]
            total += 1
            if abs(numeric - exact) <= FD_ATOL + FD_RTOL * max(abs(numeric), abs(exact)):
                matched += 1
    return matched / total


class TestRender:
    def test_빈_집합은_배경색(self, rasterizer):
        # Given
        cam = create_camera()
        raster = Rasterizer(tile_size=8, threads=1, background=(0.2, 0.4, 0.6))

        # When
        out = raster.render(GaussianSet.empty(), cam)

        # Then
        np.testing.assert_allclose(out.rgb, np.broadcast_to([0.2, 0.4, 0.6], (16, 16, 3)))
        np.testing.assert_array_equal(out.alpha, 0.0)
        np.testing.assert_array_equal(out.depth, 0.0)
        assert out.per_pixel_contrib_count.sum() == 0

    def test_출력_범위와_shape(self, rasterizer):
        # Given
        cam = create_camera(width=20, height=12)
        gs = create_gaussians(count=15, seed=2)

        # When
        out = rasterizer.render(gs, cam)

        # Then
        assert out.rgb.shape == (12, 20, 3)
        assert out.alpha.shape == (12, 20)
        assert np.all((out.alpha >= 0) & (out.alpha <= 1))
        assert np.all((out.rgb >= 0) & (out.rgb <= 1 + 1e-12))

    def test_불투명한_큰_Gaussian은_색상과_깊이를_그대로_렌더(self, rasterizer):
        # Given: 화면 전체를 덮는 거의 불투명한 빨간 Gaussian
        cam = create_camera()
        gs = GaussianSet.create(
            positions=[[0.0, 0.0, 3.0]],
            log_scales=[[4.0, 4.0, 4.0]],
            opacity_logits=[10.0],
            colors=[[1.0, 0.0, 0.0]],
        )

        # When
        out = rasterizer.render(gs, cam)
        depth = rasterizer.render_depth(gs, cam)

        # Then
        np.testing.assert_allclose(out.rgb[..., 0], 0.99, atol=1e-3)
        assert depth.valid.all()
        np.testing.assert_allclose(depth.values, 3.0, atol=1e-9)

    def test_투과율_하한을_넘긴_항까지_합성(self, rasterizer):
        # Given: 화면을 덮는 세 겹 (0.99 → 0.5 → 0.99), 세 번째 항에서 투과율이 1e-4 아래로 떨어진다
        cam = create_camera()
        gs = GaussianSet.create(
            positions=[[0.0, 0.0, 3.0], [0.0, 0.0, 3.5], [0.0, 0.0, 4.0]],
            log_scales=np.full((3, 3), 4.0),
            opacity_logits=[np.log(0.995 / 0.005), 0.0, np.log(0.995 / 0.005)],
            colors=[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        )

        # When
        out = rasterizer.render(gs, cam)

        # Then: 모든 항을 끝까지 합성한 값과 1e-3 이내
        v, u = 8, 8
        assert out.alpha[v, u] > 0.9999
        assert out.per_pixel_contrib_count[v, u] == 3
        np.testing.assert_allclose(out.rgb[v, u], [0.99, 0.01 * 0.5, 0.01 * 0.5 * 0.99], atol=1e-3)

    def test_타일_경계_너머의_꼬리도_합성(self):
        # Given: 광축 위 등방 Gaussian, 화면 공간 σ = 1.4px, 불투명도 ≈ 0.993
        #        오른쪽 타일의 가장 가까운 픽셀은 3σ 밖이지만 α > 1/255
        cam = create_camera()
        sigma_px = 1.4
        sigma_world = np.sqrt(sigma_px ** 2 - DILATION) * 4.0 / cam.fx
        gs = GaussianSet.create(
            positions=[[0.0, 0.0, 4.0]],
            log_scales=np.full((1, 3), np.log(sigma_world)),
            opacity_logits=[5.0],
            colors=[[1.0, 1.0, 1.0]],
        )
        tiled = Rasterizer(tile_size=4, threads=1, mode=ReductionMode.DETERMINISTIC)
        whole = Rasterizer(tile_size=16, threads=1, mode=ReductionMode.DETERMINISTIC)

        # When
        a = tiled.render(gs, cam)
        b = whole.render(gs, cam)

        # Then
        assert a.alpha[7, 12] > ALPHA_MIN
        np.testing.assert_allclose(a.alpha, b.alpha, atol=1e-12)
        np.testing.assert_allclose(a.rgb, b.rgb, atol=1e-12)

    def test_깊이_유효_마스크는_alpha_임계값(self, rasterizer):
        # Given
        cam = create_camera()
        gs = create_gaussians(count=6, seed=4)

        # When
        out = rasterizer.render(gs, cam)
        depth = rasterizer.render_depth(gs, cam)

        # Then
        np.testing.assert_array_equal(depth.valid, out.alpha >= DEPTH_VALID_ALPHA)
        np.testing.assert_array_equal(depth.values[~depth.valid], 0.0)

    def test_카메라_뒤쪽_Gaussian은_기여하지_않음(self, rasterizer):
        # Given
        cam = create_camera()
        gs = GaussianSet.create(positions=[[0.0, 0.0, -2.0]], opacity_logits=[5.0])

        # When
        out = rasterizer.render(gs, cam)

        # Then
        np.testing.assert_array_equal(out.alpha, 0.0)

    def test_결정적_모드는_스레드_수와_무관하게_비트_동일(self):
        # Given
        cam = create_camera(width=24, height=24)
        gs = create_gaussians(count=20, seed=5)
        weights = np.random.default_rng(0).normal(size=(24, 24, 3))
        single = Rasterizer(tile_size=8, threads=1, mode=ReductionMode.DETERMINISTIC)
        multi = Rasterizer(tile_size=8, threads=4, mode=ReductionMode.DETERMINISTIC)

        # When
        a = single.render_backward(gs.copy(), cam, weights, accumulate=False).gradients.as_dict()
        b = multi.render_backward(gs.copy(), cam, weights, accumulate=False).gradients.as_dict()

        # Then
        for name in PARAM_GROUPS:
            np.testing.assert_array_equal(a[name], b[name])
        np.testing.assert_array_equal(single.render(gs, cam).rgb, multi.render(gs, cam).rgb)


class TestRenderBackward:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_해석적_그래디언트는_중앙_차분과_일치(self, rasterizer, seed):
        # Given
        cam = create_camera()
        gs = create_gaussians(count=12, seed=seed)
        weights = np.random.default_rng(seed).normal(size=(16, 16, 3))

        # When
        agreement = _finite_difference_agreement(rasterizer, gs, cam, weights)

        # Then
        assert agreement >= 0.99

    def test_SH_degree_1_그래디언트(self, rasterizer):
        # Given
        cam = create_camera(center=(0.2, -0.1, -0.5))
        gs = create_gaussians(count=6, seed=7, sh_degree=1)
        weights = np.random.default_rng(7).normal(size=(16, 16, 3))

        # When
        agreement = _finite_difference_agreement(rasterizer, gs, cam, weights)

        # Then
        assert agreement >= 0.99

    def test_grad_accum은_보이는_Gaussian의_이동_평균(self, rasterizer):
        # Given
        cam = create_camera()
        gs = create_gaussians(count=8, seed=9)
        weights = np.ones((16, 16, 3))

        # When
        first = rasterizer.render_backward(gs, cam, weights, accumulate=True, grad_space=GradSpace.PIXEL)
        second = rasterizer.render_backward(gs, cam, 2.0 * weights, accumulate=True, grad_space=GradSpace.PIXEL)

        # Then
        vis = first.visible & second.visible
        np.testing.assert_array_equal(gs.grad_count[vis], 2)
        np.testing.assert_allclose(gs.grad_accum[vis], 0.5 * (first.view_grad_norm[vis] + second.view_grad_norm[vis]))
        np.testing.assert_array_equal(gs.grad_count[~first.visible & ~second.visible], 0)

    def test_NDC_누적은_픽셀_그래디언트_배율(self, rasterizer):
        # Given
        cam = create_camera(width=16, height=8)
        gs = create_gaussians(count=5, seed=11)
        pixel = gs.copy()
        weights = np.ones((8, 16, 3))

        # When
        grads = rasterizer.render_backward(gs, cam, weights, accumulate=True, grad_space=GradSpace.NDC)
        accumulate_view_gradients(pixel, grads, scale=1.0)

        # Then
        np.testing.assert_allclose(gs.grad_accum, pixel.grad_accum * 8.0)

    def test_예외_케이스_그래디언트_shape_불일치(self, rasterizer):
        with pytest.raises(ShapeMismatch):
            rasterizer.render_backward(create_gaussians(count=2), create_camera(), np.zeros((8, 8, 3)))


@pytest.mark.slow
class TestGradientOracle:
    @pytest.mark.parametrize("seed", range(10))
    def test_시드_장면_10개_그래디언트_일치율_99퍼센트(self, rasterizer, seed):
        cam = create_camera()
        gs = create_gaussians(count=20, seed=100 + seed)
        weights = np.random.default_rng(seed).normal(size=(16, 16, 3))
        assert _finite_difference_agreement(rasterizer, gs, cam, weights) >= 0.99
