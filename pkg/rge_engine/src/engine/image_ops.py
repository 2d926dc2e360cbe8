"""
이미지 연산: 휘도 변환, 분리형 필터 행렬(Gaussian/Sobel), SSIM 맵과 그 역전파

필터는 scipy.ndimage로 단위 행렬을 필터링해 만든 행렬 A로 표현한다 (filter(x) = A·x).
전치 행렬이 곧 정확한 수반 연산이므로 SSIM/Sobel 그래디언트가 닫힌 형태로 나온다.
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy.ndimage import correlate1d, gaussian_filter1d

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

SSIM_SIGMA = 1.5
SSIM_RADIUS = 5        # 11×11 창
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def luma(image: np.ndarray) -> np.ndarray:
    """H×W×3 → H×W (Rec.601)"""
    return image @ LUMA_WEIGHTS


@lru_cache(maxsize=32)
def gaussian_matrix(n: int, sigma: float = SSIM_SIGMA, radius: int = SSIM_RADIUS) -> np.ndarray:
    eye = np.eye(n)
    mat = gaussian_filter1d(eye, sigma, axis=0, mode="reflect", truncate=radius / sigma)
    mat.flags.writeable = False
    return mat


@lru_cache(maxsize=32)
def correlate_matrix(n: int, weights: Tuple[float, ...]) -> np.ndarray:
    mat = correlate1d(np.eye(n), np.asarray(weights, dtype=np.float64), axis=0, mode="reflect")
    mat.flags.writeable = False
    return mat


def separable(image_hw: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    return rows @ image_hw @ cols.T


def separable_adjoint(grad_hw: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    return rows.T @ grad_hw @ cols


# ============================
# SSIM
# ============================
@dataclass
class SSIMState:
    """SSIM 맵과 역전파용 중간값 (a가 미분 대상, b는 상수)"""
    ssim_map: np.ndarray
    mu_a: np.ndarray
    mu_b: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    rows: np.ndarray
    cols: np.ndarray


def ssim_state(a_hw: np.ndarray, b_hw: np.ndarray) -> SSIMState:
    h, w = a_hw.shape
    rows, cols = gaussian_matrix(h), gaussian_matrix(w)

    def blur(x):
        return separable(x, rows, cols)

    mu_a, mu_b = blur(a_hw), blur(b_hw)
    var_a = blur(a_hw * a_hw) - mu_a * mu_a
    var_b = blur(b_hw * b_hw) - mu_b * mu_b
    cov_ab = blur(a_hw * b_hw) - mu_a * mu_b
    a1 = 2.0 * mu_a * mu_b + SSIM_C1
    a2 = 2.0 * cov_ab + SSIM_C2
    b1 = mu_a * mu_a + mu_b * mu_b + SSIM_C1
    b2 = var_a + var_b + SSIM_C2
    return SSIMState(
        ssim_map=(a1 * a2) / (b1 * b2), mu_a=mu_a, mu_b=mu_b, a1=a1, a2=a2, b1=b1, b2=b2, rows=rows, cols=cols
    )


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """H×W×3 이미지 쌍의 휘도 SSIM 맵"""
    return ssim_state(luma(a), luma(b)).ssim_map


def ssim_map_backward(state: SSIMState, a_hw: np.ndarray, b_hw: np.ndarray, grad_map: np.ndarray) -> np.ndarray:
    """∂L/∂ssim_map → ∂L/∂a (휘도 평면)"""
    s = state.ssim_map
    denom = state.b1 * state.b2
    d_mu_a = (2.0 * state.mu_b * state.a2 - 2.0 * state.mu_b * state.a1) / denom - s * (
        2.0 * state.mu_a / state.b1 - 2.0 * state.mu_a / state.b2
    )
    d_m_ab = 2.0 * state.a1 / denom
    d_m_aa = -s / state.b2

    def adj(x):
        return separable_adjoint(x, state.rows, state.cols)

    return adj(grad_map * d_mu_a) + 2.0 * a_hw * adj(grad_map * d_m_aa) + b_hw * adj(grad_map * d_m_ab)


def ssim_map_backward_rgb(a: np.ndarray, b: np.ndarray, grad_map: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(SSIM 맵, ∂L/∂a RGB) 반환"""
    la, lb = luma(a), luma(b)
    state = ssim_state(la, lb)
    grad_luma = ssim_map_backward(state, la, lb, grad_map)
    return state.ssim_map, grad_luma[..., None] * LUMA_WEIGHTS[None, None, :]


# ============================
# Sobel (그래디언트 차이 기반 지각 손실 대용)
# ============================
_SMOOTH = (1.0, 2.0, 1.0)
_DERIV = (-1.0, 0.0, 1.0)


def sobel(image_hw: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(수평 응답, 수직 응답)"""
    h, w = image_hw.shape
    gx = separable(image_hw, correlate_matrix(h, _SMOOTH), correlate_matrix(w, _DERIV))
    gy = separable(image_hw, correlate_matrix(h, _DERIV), correlate_matrix(w, _SMOOTH))
    return gx, gy


def sobel_adjoint(grad_x: np.ndarray, grad_y: np.ndarray) -> np.ndarray:
    h, w = grad_x.shape
    return separable_adjoint(grad_x, correlate_matrix(h, _SMOOTH), correlate_matrix(w, _DERIV)) + separable_adjoint(
        grad_y, correlate_matrix(h, _DERIV), correlate_matrix(w, _SMOOTH)
    )


def to_chw(image_hwc: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.transpose(image_hwc, (2, 0, 1)))
