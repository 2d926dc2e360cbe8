"""
Gaussian 프리미티브 대수: 쿼터니언/공분산, 핀홀 투영, 역투영, SH 색상 평가

단일 프리미티브용 함수(project_gaussian 등)와 래스터라이저가 쓰는 벡터화 버전
(project_gaussians 등)을 함께 제공한다. 모든 함수는 입력의 순수 함수다.
"""
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from exception.splat_exceptions import DegenerateQuaternion, InvalidDepth
from models.camera import CameraView
from models.gaussian import GaussianPrimitive, GaussianSet

DILATION = 0.3          # px², 화면 공간 공분산 대각선에 더하는 하한
MIN_QUAT_NORM = 1e-8
MIN_COV2D_DET = 1e-12

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199


# ============================
# 쿼터니언 / 회전
# ============================
def quaternion_to_rotation(q) -> np.ndarray:
    """단위 쿼터니언 (w, x, y, z) → 3×3 회전 행렬 (내부에서 재정규화)"""
    q = np.asarray(q, dtype=np.float64)
    norm = float(np.linalg.norm(q))
    if norm < MIN_QUAT_NORM:
        raise DegenerateQuaternion(norm)
    return quaternions_to_rotations(q[None, :])[0]


def quaternions_to_rotations(quats: np.ndarray) -> np.ndarray:
    """(N, 4) → (N, 3, 3). 노름이 0에 가까운 행은 항등 회전으로 둔다."""
    quats = np.asarray(quats, dtype=np.float64)
    norms = np.linalg.norm(quats, axis=1, keepdims=True)
    safe = np.where(norms < MIN_QUAT_NORM, 1.0, norms)
    q = np.where(norms < MIN_QUAT_NORM, np.array([1.0, 0.0, 0.0, 0.0]), quats / safe)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    rot = np.empty((q.shape[0], 3, 3))
    rot[:, 0, 0] = 1 - 2 * (y * y + z * z)
    rot[:, 0, 1] = 2 * (x * y - w * z)
    rot[:, 0, 2] = 2 * (x * z + w * y)
    rot[:, 1, 0] = 2 * (x * y + w * z)
    rot[:, 1, 1] = 1 - 2 * (x * x + z * z)
    rot[:, 1, 2] = 2 * (y * z - w * x)
    rot[:, 2, 0] = 2 * (x * z - w * y)
    rot[:, 2, 1] = 2 * (y * z + w * x)
    rot[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return rot


def rotation_to_quaternion(rot: np.ndarray) -> np.ndarray:
    """3×3 회전 행렬 → 단위 쿼터니언 (w ≥ 0)"""
    m = np.asarray(rot, dtype=np.float64)
    trace = np.trace(m)
    if trace > 0:
        s = 2.0 * np.sqrt(trace + 1.0)
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = 2.0 * np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = 2.0 * np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    q = np.asarray(q)
    q /= np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def quaternion_rotation_jacobian(quats: np.ndarray) -> np.ndarray:
    """정규화된 쿼터니언에 대한 ∂R/∂q̂ (N, 4, 3, 3)"""
    w, x, y, z = quats[:, 0], quats[:, 1], quats[:, 2], quats[:, 3]
    zero = np.zeros_like(w)
    d_w = np.stack([zero, -2 * z, 2 * y, 2 * z, zero, -2 * x, -2 * y, 2 * x, zero], axis=1)
    d_x = np.stack([zero, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x], axis=1)
    d_y = np.stack([-4 * y, 2 * x, 2 * w, 2 * x, zero, 2 * z, -2 * w, 2 * z, -4 * y], axis=1)
    d_z = np.stack([-4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, zero], axis=1)
    return np.stack([d_w, d_x, d_y, d_z], axis=1).reshape(-1, 4, 3, 3)


def normalize_quaternions(quats: np.ndarray) -> np.ndarray:
    """in-place 재정규화. 퇴화 행은 항등으로 되돌린다."""
    norms = np.linalg.norm(quats, axis=1, keepdims=True)
    degenerate = norms[:, 0] < MIN_QUAT_NORM
    quats /= np.where(norms < MIN_QUAT_NORM, 1.0, norms)
    quats[degenerate] = [1.0, 0.0, 0.0, 0.0]
    return quats


# ============================
# 공분산
# ============================
def build_covariance(g: GaussianPrimitive) -> np.ndarray:
    """Σ = R·diag(exp(2·log_scale))·Rᵀ"""
    rot = quaternion_to_rotation(g.rotation)
    return _symmetrize(rot @ np.diag(np.exp(2.0 * np.asarray(g.log_scale, dtype=np.float64))) @ rot.T)


def _symmetrize(cov: np.ndarray) -> np.ndarray:
    return 0.5 * (cov + np.swapaxes(cov, -1, -2))


# ============================
# 투영
# ============================
@dataclass(frozen=True)
class Projection:
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float


class _CulledType:
    """near_clip 뒤쪽 Gaussian 투영 결과 (정상 결과, 오류 아님)"""
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Culled"

    def __bool__(self):
        return False


Culled = _CulledType()


def project_point(cam: CameraView, point) -> Tuple[float, float, float]:
    """월드 점 → (u, v, camera-z)"""
    t = cam.rotation @ np.asarray(point, dtype=np.float64) + cam.translation
    return cam.fx * t[0] / t[2] + cam.cx, cam.fy * t[1] / t[2] + cam.cy, float(t[2])


def project_points(cam: CameraView, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(M, 3) 월드 점 → (M, 2) 픽셀 좌표, (M,) camera-z. z ≤ 0인 점의 좌표는 의미 없음."""
    t = points @ cam.rotation.T + cam.translation
    z = t[:, 2]
    safe = np.where(np.abs(z) < 1e-12, 1e-12, z)
    uv = np.stack([cam.fx * t[:, 0] / safe + cam.cx, cam.fy * t[:, 1] / safe + cam.cy], axis=1)
    return uv, z


def perspective_jacobian(cam: CameraView, t: np.ndarray) -> np.ndarray:
    """(N, 3) 카메라 좌표 → (N, 2, 3) 투영 야코비안"""
    tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]
    jac = np.zeros((t.shape[0], 2, 3))
    jac[:, 0, 0] = cam.fx / tz
    jac[:, 0, 2] = -cam.fx * tx / tz ** 2
    jac[:, 1, 1] = cam.fy / tz
    jac[:, 1, 2] = -cam.fy * ty / tz ** 2
    return jac


def project_gaussian(g: GaussianPrimitive, cam: CameraView, dilation: float = DILATION) -> Union[Projection, _CulledType]:
    cov3 = build_covariance(g)
    t = cam.rotation @ np.asarray(g.position, dtype=np.float64) + cam.translation
    if t[2] <= cam.near_clip:
        return Culled
    jac = perspective_jacobian(cam, t[None, :])[0]
    cov_cam = cam.rotation @ cov3 @ cam.rotation.T
    cov2d = _symmetrize(jac @ cov_cam @ jac.T) + dilation * np.eye(2)
    mean2d = np.array([cam.fx * t[0] / t[2] + cam.cx, cam.fy * t[1] / t[2] + cam.cy])
    return Projection(mean2d=mean2d, cov2d=cov2d, depth=float(t[2]))


@dataclass
class ProjectedSet:
    """
    집합 단위 투영 결과 (래스터라이저 전/역방향이 공유)
    - visible: near_clip 앞쪽이고 Σ*가 가역인 Gaussian
    - conics: Σ*⁻¹의 (a, b, c) 성분
    """
    cam_points: np.ndarray      # (N, 3) t = W·μ
    rotations: np.ndarray       # (N, 3, 3) R(q)
    cov_cam: np.ndarray         # (N, 3, 3) R_W Σ R_Wᵀ
    jacobians: np.ndarray       # (N, 2, 3)
    means2d: np.ndarray         # (N, 2)
    covs2d: np.ndarray          # (N, 2, 2)
    conics: np.ndarray          # (N, 3)
    radii: np.ndarray           # (N,) px
    depths: np.ndarray          # (N,)
    visible: np.ndarray         # (N,) bool
    degenerate: int = 0


def project_gaussians(gaussians: GaussianSet, cam: CameraView, dilation: float = DILATION) -> ProjectedSet:
    n = len(gaussians)
    rot = quaternions_to_rotations(gaussians.rotations)
    cov3 = _symmetrize(np.einsum("nij,nj,nkj->nik", rot, np.exp(2.0 * gaussians.log_scales), rot))
    t = gaussians.positions @ cam.rotation.T + cam.translation
    in_front = t[:, 2] > cam.near_clip
    safe_t = t.copy()
    safe_t[~in_front, 2] = 1.0

    jac = perspective_jacobian(cam, safe_t)
    cov_cam = cam.rotation[None] @ cov3 @ cam.rotation.T[None]
    cov2d = _symmetrize(jac @ cov_cam @ np.swapaxes(jac, 1, 2))
    cov2d[:, 0, 0] += dilation
    cov2d[:, 1, 1] += dilation
    means2d = np.stack(
        [cam.fx * safe_t[:, 0] / safe_t[:, 2] + cam.cx, cam.fy * safe_t[:, 1] / safe_t[:, 2] + cam.cy], axis=1
    )

    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] ** 2
    invertible = det >= MIN_COV2D_DET
    safe_det = np.where(invertible, det, 1.0)
    conics = np.stack([cov2d[:, 1, 1] / safe_det, -cov2d[:, 0, 1] / safe_det, cov2d[:, 0, 0] / safe_det], axis=1)

    mid = 0.5 * (cov2d[:, 0, 0] + cov2d[:, 1, 1])
    lambda_max = mid + np.sqrt(np.maximum(mid ** 2 - det, 0.0))
    # o·exp(-r²/2λ) = 1/255 이 되는 반경: 이 밖에서는 합성 시 스킵된다
    extent = np.sqrt(2.0 * np.log(np.maximum(255.0 * gaussians.opacities, 1.0)))
    radii = extent * np.sqrt(np.maximum(lambda_max, 0.0))

    visible = in_front & invertible
    return ProjectedSet(
        cam_points=t,
        rotations=rot,
        cov_cam=cov_cam,
        jacobians=jac,
        means2d=means2d,
        covs2d=cov2d,
        conics=conics,
        radii=np.where(visible, radii, 0.0),
        depths=t[:, 2],
        visible=visible,
        degenerate=int(np.count_nonzero(in_front & ~invertible)) if n else 0,
    )


# ============================
# 역투영
# ============================
def unproject_pixel(cam: CameraView, u: float, v: float, depth: float) -> np.ndarray:
    if depth <= 0:
        raise InvalidDepth(depth)
    return unproject_pixels(cam, np.array([u]), np.array([v]), np.array([depth]))[0]


def unproject_pixels(cam: CameraView, u: np.ndarray, v: np.ndarray, depth: np.ndarray) -> np.ndarray:
    """픽셀 좌표 + camera-z 배열 → (M, 3) 월드 좌표"""
    depth = np.asarray(depth, dtype=np.float64)
    if np.any(depth <= 0):
        raise InvalidDepth(float(depth.min()))
    t = np.stack([(np.asarray(u) - cam.cx) / cam.fx * depth, (np.asarray(v) - cam.cy) / cam.fy * depth, depth], axis=1)
    return (t - cam.translation) @ cam.rotation


# ============================
# 색상 (SH degree 0 / 1)
# ============================
def evaluate_colors(gaussians: GaussianSet, cam_center: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gaussian별 RGB와 클리핑 마스크 반환
    - degree 0: colors를 [0, 1]로 클리핑
    - degree 1: 0.5 + C0·z0 + C1·(−y·z1 + z·z2 − x·z3), 시선 방향은 카메라 중심 → μ
    """
    if gaussians.sh_degree == 0:
        raw = gaussians.colors
    else:
        z = gaussians.colors.reshape(-1, 4, 3)
        dirs, _ = _view_directions(gaussians.positions, cam_center)
        raw = (
            0.5
            + SH_C0 * z[:, 0]
            + SH_C1 * (-dirs[:, 1:2] * z[:, 1] + dirs[:, 2:3] * z[:, 2] - dirs[:, 0:1] * z[:, 3])
        )
    inside = (raw >= 0.0) & (raw <= 1.0)
    return np.clip(raw, 0.0, 1.0), inside


def colors_backward(
    gaussians: GaussianSet, cam_center: np.ndarray, d_rgb: np.ndarray, inside: np.ndarray
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """RGB 그래디언트 → (colors 그래디언트, 위치 그래디언트 또는 None)"""
    d_raw = d_rgb * inside
    if gaussians.sh_degree == 0:
        return d_raw, None
    z = gaussians.colors.reshape(-1, 4, 3)
    dirs, dist = _view_directions(gaussians.positions, cam_center)
    d_coef = np.empty_like(z)
    d_coef[:, 0] = SH_C0 * d_raw
    d_coef[:, 1] = -SH_C1 * dirs[:, 1:2] * d_raw
    d_coef[:, 2] = SH_C1 * dirs[:, 2:3] * d_raw
    d_coef[:, 3] = -SH_C1 * dirs[:, 0:1] * d_raw
    d_dir = SH_C1 * np.stack(
        [-(d_raw * z[:, 3]).sum(1), -(d_raw * z[:, 1]).sum(1), (d_raw * z[:, 2]).sum(1)], axis=1
    )
    d_pos = (d_dir - dirs * (d_dir * dirs).sum(1, keepdims=True)) / dist[:, None]
    return d_coef.reshape(gaussians.colors.shape), d_pos


def _view_directions(positions: np.ndarray, cam_center: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    offset = positions - np.asarray(cam_center)[None, :]
    dist = np.maximum(np.linalg.norm(offset, axis=1), 1e-12)
    return offset / dist[:, None], dist
