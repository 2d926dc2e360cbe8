"""
학습 손실과 해석적 그래디언트

- loss_io: 원래 차선 뷰 (L1 + (1−SSIM))
- loss_ie: prior 뷰, 리워드 맵 가중 (L1 + (1−SSIM) 맵 + 그래디언트 차이 지각 손실)
- loss_reproj / loss_reg / anti_collapse: 리워드 네트워크 손실 항
모든 함수는 (값, 그래디언트...) 형태의 결과 객체를 반환한다.
"""
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from engine.image_ops import sobel, sobel_adjoint, ssim_map_backward_rgb
from exception.splat_exceptions import ShapeMismatch

LAMBDA_IO = 0.8
LAMBDA_RGB = 0.8
LAMBDA_PERC = 0.01
LAMBDA_REPROJ = 0.5
LAMBDA_REG = 0.3


@dataclass
class LossResult:
    value: float
    grad: Optional[np.ndarray] = None            # 렌더(또는 주 입력)에 대한 그래디언트
    grad_conf: Optional[np.ndarray] = None       # 리워드 맵에 대한 그래디언트
    parts: Dict[str, float] = field(default_factory=dict)


def _check_same(name: str, a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ShapeMismatch(name, a.shape, b.shape)


def l1(a: np.ndarray, b: np.ndarray) -> LossResult:
    _check_same("l1", a, b)
    diff = a - b
    return LossResult(value=float(np.abs(diff).mean()), grad=np.sign(diff) / diff.size)


def loss_io(render: np.ndarray, target: np.ndarray, lambda_io: float = LAMBDA_IO) -> LossResult:
    """λ·L1 + (1−λ)·(1−SSIM)"""
    _check_same("loss_io", render, target)
    l1_part = l1(render, target)
    h, w = render.shape[:2]
    s_map, grad_ssim = ssim_map_backward_rgb(render, target, np.full((h, w), -(1.0 - lambda_io) / (h * w)))
    ssim_value = float(s_map.mean())
    value = lambda_io * l1_part.value + (1.0 - lambda_io) * (1.0 - ssim_value)
    return LossResult(
        value=value,
        grad=lambda_io * l1_part.grad + grad_ssim,
        parts={"l1": l1_part.value, "ssim": ssim_value},
    )


def perceptual_proxy(a: np.ndarray, b: np.ndarray) -> LossResult:
    """채널별 Sobel 응답 차이의 평균 L1 (수평 + 수직)"""
    _check_same("perceptual_proxy", a, b)
    h, w, channels = a.shape
    value = 0.0
    grad = np.zeros_like(a)
    norm = h * w * channels
    for ch in range(channels):
        ax, ay = sobel(a[..., ch])
        bx, by = sobel(b[..., ch])
        dx, dy = ax - bx, ay - by
        value += np.abs(dx).sum() + np.abs(dy).sum()
        grad[..., ch] = sobel_adjoint(np.sign(dx), np.sign(dy)) / norm
    return LossResult(value=float(value / norm), grad=grad)


def loss_ie(
    render: np.ndarray,
    prior: np.ndarray,
    conf: np.ndarray,
    lambda_rgb: float = LAMBDA_RGB,
    lambda_perc: float = LAMBDA_PERC,
) -> LossResult:
    """
    λ_RGB·mean|C⊙(I_d−I_e)| + (1−λ_RGB)·mean(C⊙(1−SSIM_map)) + λ_perc·L_perc
    grad: ∂/∂I_d, grad_conf: ∂/∂C_e
    """
    _check_same("loss_ie", render, prior)
    if conf.shape != render.shape[:2]:
        raise ShapeMismatch("conf", render.shape[:2], conf.shape)
    h, w, channels = render.shape
    diff = render - prior
    abs_diff = np.abs(diff)

    rgb_term = float((conf[..., None] * abs_diff).mean())
    grad_rgb = lambda_rgb * conf[..., None] * np.sign(diff) / (h * w * channels)
    conf_from_rgb = lambda_rgb * abs_diff.sum(axis=2) / (h * w * channels)

    s_map, grad_ssim = ssim_map_backward_rgb(render, prior, -(1.0 - lambda_rgb) * conf / (h * w))
    ssim_term = float((conf * (1.0 - s_map)).mean())
    conf_from_ssim = (1.0 - lambda_rgb) * (1.0 - s_map) / (h * w)

    perc = perceptual_proxy(render, prior)

    value = lambda_rgb * rgb_term + (1.0 - lambda_rgb) * ssim_term + lambda_perc * perc.value
    return LossResult(
        value=value,
        grad=grad_rgb + grad_ssim + lambda_perc * perc.grad,
        grad_conf=conf_from_rgb + conf_from_ssim,
        parts={"rgb": rgb_term, "ssim": ssim_term, "perc": perc.value},
    )


def loss_gs(render_o: np.ndarray, target_o: np.ndarray, render_e: np.ndarray, prior: np.ndarray, conf: np.ndarray, **kw) -> float:
    """L_GS = L_Io + L_Ie"""
    lambda_io = kw.pop("lambda_io", LAMBDA_IO)
    return loss_io(render_o, target_o, lambda_io).value + loss_ie(render_e, prior, conf, **kw).value


# ============================
# 리워드 네트워크 손실
# ============================
def loss_reproj(conf: np.ndarray, proj: np.ndarray, valid: np.ndarray, prior: np.ndarray) -> LossResult:
    """(1/(H·W))·‖C ⊙ valid ⊙ (proj − I_e)‖₂, grad는 ∂/∂C"""
    _check_same("loss_reproj", proj, prior)
    h, w = conf.shape
    resid = valid[..., None] * (proj - prior)
    weighted = conf[..., None] * resid
    norm = float(np.sqrt((weighted * weighted).sum()))
    if norm == 0.0:
        return LossResult(value=0.0, grad=np.zeros_like(conf))
    grad = (weighted * resid).sum(axis=2) / (h * w * norm)
    return LossResult(value=norm / (h * w), grad=grad)


def loss_reg(conf: np.ndarray) -> LossResult:
    """mean(c·(1−c))"""
    return LossResult(value=float((conf * (1.0 - conf)).mean()), grad=(1.0 - 2.0 * conf) / conf.size)


def anti_collapse(conf: np.ndarray, tau: float = 0.5, weight: float = 0.1) -> LossResult:
    """weight·max(0, τ − mean(C))²"""
    gap = max(0.0, tau - float(conf.mean()))
    return LossResult(value=weight * gap * gap, grad=np.full(conf.shape, -2.0 * weight * gap / conf.size))


def loss_reward_total(
    reproj: float, reg: float, gs: float, lambda_reproj: float = LAMBDA_REPROJ, lambda_reg: float = LAMBDA_REG
) -> float:
    return lambda_reproj * reproj + lambda_reg * reg + gs