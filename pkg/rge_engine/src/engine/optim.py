"""
옵티마이저와 학습률 스케줄

- AdamW: 리워드 네트워크 (decoupled weight decay)
- SplatAdam: Gaussian 파라미터 그룹별 Adam, 행 마스크로 Mature 행을 갱신 대상에서 제외
- reward_lr_at: 선형 감쇠 후 코사인 어닐링
"""
import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from exception.nn_exceptions import NonFiniteGradient, ScheduleExhausted
from exception.splat_exceptions import ShapeMismatch
from models.gaussian import LOG_SCALE_MAX, LOG_SCALE_MIN, PARAM_GROUPS, GaussianGradients, GaussianSet
from engine.splat_core import normalize_quaternions


@dataclass
class OptimizerState:
    base_lr: float = 5e-4
    weight_decay: float = 0.01
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(
    opt: OptimizerState, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], lr: Optional[float] = None
) -> Dict[str, np.ndarray]:
    """
    in-place AdamW 스텝
    - 모든 그래디언트를 먼저 검사하고, 하나라도 유한하지 않으면 아무것도 갱신하지 않는다
    """
    lr = opt.base_lr if lr is None else lr
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ShapeMismatch(f"grad[{name}]", params[name].shape, g.shape)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(name)

    opt.step += 1
    beta1, beta2 = opt.betas
    bias1 = 1.0 - beta1 ** opt.step
    bias2 = 1.0 - beta2 ** opt.step
    for name, g in grads.items():
        p = params[name]
        m = opt.m.setdefault(name, np.zeros_like(p))
        v = opt.v.setdefault(name, np.zeros_like(p))
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p *= 1.0 - lr * opt.weight_decay
        p -= lr * (m / bias1) / (np.sqrt(v / bias2) + opt.eps)
    return params


# ============================
# 리워드 네트워크 학습률 스케줄
# ============================
@dataclass(frozen=True)
class RewardLRSchedule:
    lr_init: float = 5e-4
    lr_linear_end: float = 5e-5
    lr_final: float = 1e-6
    linear_iters: int = 1000
    total_iters: int = 5000


def reward_lr_at(iteration: int, schedule: RewardLRSchedule = RewardLRSchedule()) -> float:
    """[0, linear_iters) 선형 감쇠, [linear_iters, total] 코사인 어닐링"""
    if iteration < 0 or iteration > schedule.total_iters:
        raise ScheduleExhausted(iteration, schedule.total_iters)
    if iteration < schedule.linear_iters:
        t = iteration / schedule.linear_iters
        return schedule.lr_init + (schedule.lr_linear_end - schedule.lr_init) * t
    span = schedule.total_iters - schedule.linear_iters
    t = 1.0 if span <= 0 else (iteration - schedule.linear_iters) / span
    return schedule.lr_final + 0.5 * (schedule.lr_linear_end - schedule.lr_final) * (1.0 + math.cos(math.pi * t))


def position_lr_at(step: int, total: int, lr_init: float, lr_final: float) -> float:
    """위치 학습률 지수 감쇠 (로그 선형 보간)"""
    if total <= 0:
        return lr_init
    t = min(max(step / total, 0.0), 1.0)
    return float(np.exp(np.log(lr_init) * (1.0 - t) + np.log(lr_final) * t))


# ============================
# Gaussian 파라미터 옵티마이저
# ============================
class SplatAdam:
    """
    파라미터 그룹별 Adam (weight decay 0)
    - 모멘트는 Gaussian 행 단위로 보관되어 densify/prune 시 함께 늘고 줄어든다
    - update_mask가 False인 행은 파라미터와 모멘트 모두 변경되지 않는다
    """

    def __init__(self, count: int, shapes: Dict[str, tuple], betas=(0.9, 0.999), eps: float = 1e-15):
        self.betas = betas
        self.eps = eps
        self.m = {name: np.zeros((count,) + shapes[name]) for name in PARAM_GROUPS}
        self.v = {name: np.zeros((count,) + shapes[name]) for name in PARAM_GROUPS}
        self.steps = np.zeros(count, dtype=np.int64)
        self.update_count = 0

    @classmethod
    def for_gaussians(cls, gaussians: GaussianSet, **kwargs) -> "SplatAdam":
        shapes = {name: getattr(gaussians, name).shape[1:] for name in PARAM_GROUPS}
        return cls(len(gaussians), shapes, **kwargs)

    def __len__(self) -> int:
        return int(self.steps.shape[0])

    def step(
        self,
        gaussians: GaussianSet,
        grads: GaussianGradients,
        lrs: Dict[str, float],
        update_mask: Optional[np.ndarray] = None,
    ) -> int:
        """갱신된 (행, 그룹) 수를 반환"""
        if len(gaussians) != len(self):
            raise ShapeMismatch("optimizer rows", len(self), len(gaussians))
        rows = np.ones(len(gaussians), dtype=bool) if update_mask is None else np.asarray(update_mask, dtype=bool)
        grad_dict = grads.as_dict()
        for name in PARAM_GROUPS:
            if not np.all(np.isfinite(grad_dict[name][rows])):
                raise NonFiniteGradient(name)
        idx = np.flatnonzero(rows)
        if idx.size == 0:
            return 0

        beta1, beta2 = self.betas
        self.steps[idx] += 1
        t = self.steps[idx]
        for name in PARAM_GROUPS:
            g = grad_dict[name][idx]
            m = self.m[name][idx] * beta1 + (1.0 - beta1) * g
            v = self.v[name][idx] * beta2 + (1.0 - beta2) * g * g
            self.m[name][idx] = m
            self.v[name][idx] = v
            shape = (-1,) + (1,) * (g.ndim - 1)
            m_hat = m / (1.0 - beta1 ** t).reshape(shape)
            v_hat = v / (1.0 - beta2 ** t).reshape(shape)
            getattr(gaussians, name)[idx] -= lrs[name] * m_hat / (np.sqrt(v_hat) + self.eps)

        gaussians.rotations[idx] = normalize_quaternions(gaussians.rotations[idx])
        gaussians.log_scales[idx] = np.clip(gaussians.log_scales[idx], LOG_SCALE_MIN + 1e-6, LOG_SCALE_MAX - 1e-6)
        updated = int(idx.size) * len(PARAM_GROUPS)
        self.update_count += updated
        return updated

    def keep(self, mask: np.ndarray):
        """prune: mask가 True인 행만 남긴다."""
        for name in PARAM_GROUPS:
            self.m[name] = self.m[name][mask]
            self.v[name] = self.v[name][mask]
        self.steps = self.steps[mask]

    def append(self, count: int, source: Optional[np.ndarray] = None):
        """새 행 추가. source 인덱스를 주면 해당 행의 모멘트를 복사(clone), 아니면 0"""
        for name in PARAM_GROUPS:
            tail_shape = self.m[name].shape[1:]
            if source is None:
                extra_m = np.zeros((count,) + tail_shape)
                extra_v = np.zeros((count,) + tail_shape)
            else:
                extra_m = self.m[name][source].copy()
                extra_v = self.v[name][source].copy()
            self.m[name] = np.concatenate([self.m[name], extra_m])
            self.v[name] = np.concatenate([self.v[name], extra_v])
        extra_steps = np.zeros(count, dtype=np.int64) if source is None else self.steps[source].copy()
        self.steps = np.concatenate([self.steps, extra_steps])
