import numpy as np
import pytest

from engine.losses import (
    anti_collapse,
    loss_gs,
    loss_ie,
    loss_io,
    loss_reg,
    loss_reproj,
    loss_reward_total,
)
from exception.splat_exceptions import ShapeMismatch
from factories import create_image

FD_STEP = 1e-6


def _numeric(fn, array: np.ndarray, index) -> float:
    original = array[index]
    array[index] = original + FD_STEP
    plus = fn()
    array[index] = original - FD_STEP
    minus = fn()
    array[index] = original
    return (plus - minus) / (2.0 * FD_STEP)


def _sampled_agreement(fn, array: np.ndarray, analytic: np.ndarray, samples: int = 60, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    matched = 0
    for _ in range(samples):
        index = tuple(rng.integers(dim) for dim in array.shape)
        numeric = _numeric(fn, array, index)
        if abs(numeric - analytic[index]) <= 1e-9 + 1e-3 * max(abs(numeric), abs(analytic[index])):
            matched += 1
    return matched / samples


class TestRewardRegularizers:
    def test_loss_reg_값(self):
        assert loss_reg(np.full((4, 4), 0.5)).value == pytest.approx(0.25)
        assert loss_reg(np.array([[0.0, 1.0], [1.0, 0.0]])).value == 0.0

    def test_loss_reproj는_투영이_prior와_같으면_0(self):
        # Given
        prior = create_image(seed=1)
        conf = np.full((16, 16), 0.7)
        valid = np.ones((16, 16), dtype=bool)

        # When
        result = loss_reproj(conf, prior.copy(), valid, prior)

        # Then
        assert result.value == 0.0
        np.testing.assert_array_equal(result.grad, 0.0)

    def test_loss_reproj는_신뢰도가_0이면_0(self):
        result = loss_reproj(np.zeros((16, 16)), create_image(seed=1), np.ones((16, 16), dtype=bool), create_image(seed=2))
        assert result.value == 0.0

    def test_loss_reproj는_유효하지_않은_픽셀을_무시(self):
        # Given
        prior = create_image(seed=1)
        proj = create_image(seed=2)
        valid = np.zeros((16, 16), dtype=bool)

        # When
        result = loss_reproj(np.ones((16, 16)), proj, valid, prior)

        # Then
        assert result.value == 0.0

    def test_loss_reproj_그래디언트_중앙_차분(self):
        # Given
        prior = create_image(seed=3)
        proj = create_image(seed=4)
        valid = np.random.default_rng(0).uniform(size=(16, 16)) > 0.3
        conf = np.random.default_rng(1).uniform(0.1, 0.9, size=(16, 16))

        # When
        analytic = loss_reproj(conf, proj, valid, prior).grad
        agreement = _sampled_agreement(lambda: loss_reproj(conf, proj, valid, prior).value, conf, analytic)

        # Then
        assert agreement == 1.0

    def test_anti_collapse는_평균이_tau_이상이면_0(self):
        assert anti_collapse(np.full((4, 4), 0.6)).value == 0.0
        assert anti_collapse(np.full((4, 4), 0.2)).value == pytest.approx(0.1 * 0.09)

    def test_리워드_총손실_가중치(self):
        assert loss_reward_total(1.0, 1.0, 0.0) == pytest.approx(0.8)
        assert loss_reward_total(1.0, 1.0, 1.0) == pytest.approx(1.8)


class TestRenderLosses:
    def test_loss_io는_동일_이미지에서_0(self):
        image = create_image(seed=5)
        assert loss_io(image, image.copy()).value == pytest.approx(0.0, abs=1e-12)

    def test_loss_io_그래디언트_중앙_차분(self):
        # Given
        render = create_image(seed=6)
        target = create_image(seed=7)

        # When
        analytic = loss_io(render, target).grad
        agreement = _sampled_agreement(lambda: loss_io(render, target).value, render, analytic)

        # Then
        assert agreement >= 0.95

    def test_loss_ie는_신뢰도에_선형(self):
        # Given
        render = create_image(seed=8)
        prior = create_image(seed=9)
        conf = np.random.default_rng(2).uniform(size=(16, 16))
        zero = loss_ie(render, prior, np.zeros((16, 16)))

        # When
        result = loss_ie(render, prior, conf)

        # Then: 신뢰도 항은 grad_conf와 C의 내적, 지각 손실 항은 C와 무관
        assert result.value == pytest.approx(float((result.grad_conf * conf).sum()) + zero.value, rel=1e-9)

    def test_loss_ie_렌더_그래디언트_중앙_차분(self):
        # Given
        render = create_image(seed=10)
        prior = create_image(seed=11)
        conf = np.random.default_rng(3).uniform(size=(16, 16))

        # When
        analytic = loss_ie(render, prior, conf).grad
        agreement = _sampled_agreement(lambda: loss_ie(render, prior, conf).value, render, analytic)

        # Then
        assert agreement >= 0.95

    def test_loss_gs는_두_항의_합(self):
        # Given
        a, b, c, d = (create_image(seed=s) for s in range(4))
        conf = np.full((16, 16), 0.5)

        # When
        total = loss_gs(a, b, c, d, conf)

        # Then
        assert total == loss_io(a, b).value + loss_ie(c, d, conf).value

    def test_예외_케이스_shape_불일치(self):
        with pytest.raises(ShapeMismatch):
            loss_io(create_image(8, 8), create_image(16, 16))
        with pytest.raises(ShapeMismatch):
            loss_ie(create_image(), create_image(), np.ones((8, 8)))
