from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from engine.image_ops import ssim_map
from exception.pipeline_exceptions import DegenerateLabels, NoValidPixels

PSNR_CAP = 99.0
MSE_FLOOR = 1e-12


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """[0, 1] 이미지 PSNR (dB). MSE < 1e-12이면 99 dB"""
    mse = float(np.mean((np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2))
    if mse < MSE_FLOOR:
        return PSNR_CAP
    return float(10.0 * np.log10(1.0 / mse))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """휘도 기반 창 SSIM (11×11, σ=1.5)의 평균"""
    return float(ssim_map(a, b).mean())


def reward_auroc(conf: np.ndarray, artifact_mask: np.ndarray) -> float:
    """
    점수 (1−C_e)로 아티팩트 마스크를 판별하는 AUROC
    동점은 midrank로 처리 (Mann-Whitney U)
    """
    scores = (1.0 - np.asarray(conf, dtype=np.float64)).ravel()
    labels = np.asarray(artifact_mask, dtype=bool).ravel()
    positives = int(labels.sum())
    negatives = int(labels.size - positives)
    if positives == 0 or negatives == 0:
        raise DegenerateLabels(positives, negatives)
    ranks = rankdata(scores, method="average")
    u = ranks[labels].sum() - positives * (positives + 1) / 2.0
    return float(u / (positives * negatives))


@dataclass
class MaskedMAE:
    accepted: float
    rejected: Optional[float]
    accepted_fraction: float


def masked_mae(prior: np.ndarray, gt: np.ndarray, conf: np.ndarray, threshold: float = 0.5) -> MaskedMAE:
    """C_e ≥ threshold 픽셀의 MAE와 나머지(거부) 픽셀의 MAE"""
    err = np.abs(np.asarray(prior, dtype=np.float64) - np.asarray(gt, dtype=np.float64)).mean(axis=2)
    accepted = conf >= threshold
    if not np.any(accepted):
        raise NoValidPixels(threshold)
    rejected = ~accepted
    return MaskedMAE(
        accepted=float(err[accepted].mean()),
        rejected=float(err[rejected].mean()) if np.any(rejected) else None,
        accepted_fraction=float(accepted.mean()),
    )
