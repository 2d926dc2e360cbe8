"""
타일 기반 Gaussian 스플래팅 래스터라이저 (전방 합성 + 해석적 역전파)

- 뷰 단위 전역 깊이 정렬 (깊이, 인덱스 순 안정 정렬)
- 타일(기본 16×16)마다 겹치는 Gaussian × 픽셀 행렬로 front-to-back 합성
- 역전파는 전방 중간값을 타일 단위로 재계산한 뒤 해석적 연쇄 법칙 적용
- 결정적 모드: 타일별 부분 그래디언트를 타일 순서대로 합산
"""
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from engine.splat_core import (
    DILATION,
    ProjectedSet,
    colors_backward,
    evaluate_colors,
    project_gaussians,
    quaternion_rotation_jacobian,
)
from exception.splat_exceptions import ShapeMismatch
from models.camera import CameraView
from models.enums import GradSpace, ReductionMode
from models.gaussian import GaussianGradients, GaussianSet
from settings import settings

logger = logging.getLogger(__name__)

ALPHA_MAX = 0.99
ALPHA_MIN = 1.0 / 255.0
TRANSMITTANCE_MIN = 1e-4
DEPTH_VALID_ALPHA = 0.5


@dataclass
class RenderOutput:
    rgb: np.ndarray                     # (H, W, 3)
    alpha: np.ndarray                   # (H, W)
    depth: np.ndarray                   # (H, W) alpha 정규화 기대 깊이, alpha=0이면 0
    per_pixel_contrib_count: np.ndarray  # (H, W)
    skipped: int = 0                    # Σ* 비가역으로 제외된 Gaussian 수


@dataclass
class RenderGradients:
    gradients: GaussianGradients
    view_grad_norm: np.ndarray          # (N,) ‖∂L/∂mean2d‖₂, px 단위
    visible: np.ndarray                 # (N,) 이번 뷰에서 한 타일 이상과 겹친 Gaussian


@dataclass
class DepthMap:
    values: np.ndarray
    valid: np.ndarray


@dataclass
class _Tile:
    index: int
    xs: np.ndarray          # 타일 픽셀의 u 좌표 (P,)
    ys: np.ndarray          # 타일 픽셀의 v 좌표 (P,)
    gaussians: np.ndarray   # 깊이 순으로 정렬된 Gaussian 인덱스 (G,)


@dataclass
class _TileState:
    """타일 합성 중간값 (역전파에서 재계산)"""
    dx: np.ndarray
    dy: np.ndarray
    gauss: np.ndarray       # exp(power)
    raw: np.ndarray         # o·G
    alpha: np.ndarray       # 클램프/스킵/조기 종료 적용 후
    t_before: np.ndarray
    t_final: np.ndarray
    weights: np.ndarray     # α·T


class Rasterizer:
    def __init__(
        self,
        tile_size: int = None,
        threads: int = None,
        mode: ReductionMode = None,
        background: Sequence[float] = (0.0, 0.0, 0.0),
        dilation: float = DILATION,
    ):
        self.tile_size = tile_size or settings.TILE_SIZE
        self.threads = max(1, threads or settings.THREADS)
        if mode is None:
            mode = ReductionMode.DETERMINISTIC if settings.DETERMINISTIC else ReductionMode.ATOMIC
        self.mode = ReductionMode(mode)
        self.background = np.asarray(background, dtype=np.float64)
        self.dilation = dilation

    # ============================
    # 전방
    # ============================
    def render(self, gaussians: GaussianSet, cam: CameraView) -> RenderOutput:
        h, w = cam.height, cam.width
        proj, colors, _, opac, tiles = self._prepare(gaussians, cam)

        rgb = np.empty((h, w, 3))
        alpha = np.empty((h, w))
        depth_sum = np.empty((h, w))
        count = np.empty((h, w), dtype=np.int64)

        def run(tile: _Tile):
            state = self._composite(tile, proj, opac)
            g = tile.gaussians
            return (
                tile,
                state.weights.T @ colors[g] + state.t_final[:, None] * self.background[None, :],
                1.0 - state.t_final,
                state.weights.T @ proj.depths[g],
                np.count_nonzero(state.weights > 0, axis=0),
            )

        for tile, tile_rgb, tile_alpha, tile_depth, tile_count in self._map(run, tiles, ordered=False):
            rgb[tile.ys, tile.xs] = tile_rgb
            alpha[tile.ys, tile.xs] = tile_alpha
            depth_sum[tile.ys, tile.xs] = tile_depth
            count[tile.ys, tile.xs] = tile_count

        depth = np.where(alpha > 0, depth_sum / np.where(alpha > 0, alpha, 1.0), 0.0)
        if proj.degenerate:
            logger.debug(f"비가역 Σ*로 제외된 Gaussian: {proj.degenerate}개")
        return RenderOutput(rgb=rgb, alpha=alpha, depth=depth, per_pixel_contrib_count=count, skipped=proj.degenerate)

    def render_depth(self, gaussians: GaussianSet, cam: CameraView, min_alpha: float = DEPTH_VALID_ALPHA) -> DepthMap:
        out = self.render(gaussians, cam)
        valid = out.alpha >= min_alpha
        return DepthMap(values=np.where(valid, out.depth, 0.0), valid=valid)

    # ============================
    # 역방향
    # ============================
    def render_backward(
        self,
        gaussians: GaussianSet,
        cam: CameraView,
        grad_rgb: np.ndarray,
        accumulate: bool = True,
        grad_space: GradSpace = GradSpace.PIXEL,
    ) -> RenderGradients:
        """
        ∂L/∂rgb → Gaussian 파라미터 그래디언트
        - accumulate=True면 view_grad_norm을 grad_accum(이동 평균)/grad_count에 누적
        - grad_space=ndc면 누적 값은 px 그래디언트 × 0.5·max(W, H)
        """
        expected = (cam.height, cam.width, 3)
        if grad_rgb.shape != expected:
            raise ShapeMismatch("grad_rgb", expected, grad_rgb.shape)

        n = len(gaussians)
        proj, colors, inside, opac, tiles = self._prepare(gaussians, cam)

        d_mean2d = np.zeros((n, 2))
        d_conic = np.zeros((n, 3))
        d_opacity = np.zeros(n)
        d_color = np.zeros((n, 3))
        touched = np.zeros(n, dtype=bool)

        def run(tile: _Tile):
            return tile, self._tile_backward(tile, proj, colors, opac, grad_rgb[tile.ys, tile.xs])

        for tile, (tm, tc, to, tcol) in self._map(run, tiles, ordered=self.mode == ReductionMode.DETERMINISTIC):
            g = tile.gaussians
            d_mean2d[g] += tm
            d_conic[g] += tc
            d_opacity[g] += to
            d_color[g] += tcol
            touched[g] = True

        grads = self._gaussian_backward(gaussians, cam, proj, inside, d_mean2d, d_conic, d_opacity, d_color)
        view_grad_norm = np.linalg.norm(d_mean2d, axis=1)
        result = RenderGradients(gradients=grads, view_grad_norm=view_grad_norm, visible=touched)
        if accumulate:
            scale = 0.5 * max(cam.width, cam.height) if GradSpace(grad_space) == GradSpace.NDC else 1.0
            accumulate_view_gradients(gaussians, result, scale)
        return result

    # ============================
    # 내부: 준비 / 타일 합성
    # ============================
    def _prepare(self, gaussians: GaussianSet, cam: CameraView):
        proj = project_gaussians(gaussians, cam, self.dilation)
        colors, inside = evaluate_colors(gaussians, cam.center)
        opac = gaussians.opacities

        candidates = np.flatnonzero(proj.visible)
        order = candidates[np.lexsort((candidates, proj.depths[candidates]))]
        lo = proj.means2d[order] - proj.radii[order, None]
        hi = proj.means2d[order] + proj.radii[order, None]

        tiles: List[_Tile] = []
        ts = self.tile_size
        for ty0 in range(0, cam.height, ts):
            for tx0 in range(0, cam.width, ts):
                tx1, ty1 = min(tx0 + ts, cam.width) - 1, min(ty0 + ts, cam.height) - 1
                hit = (lo[:, 0] <= tx1) & (hi[:, 0] >= tx0) & (lo[:, 1] <= ty1) & (hi[:, 1] >= ty0)
                ys, xs = np.mgrid[ty0:ty1 + 1, tx0:tx1 + 1]
                tiles.append(_Tile(index=len(tiles), xs=xs.ravel(), ys=ys.ravel(), gaussians=order[hit]))
        return proj, colors, inside, opac, tiles

    def _composite(self, tile: _Tile, proj: ProjectedSet, opac: np.ndarray) -> _TileState:
        g = tile.gaussians
        p = tile.xs.size
        mean = proj.means2d[g]
        conic = proj.conics[g]
        dx = tile.xs[None, :] - mean[:, 0:1]
        dy = tile.ys[None, :] - mean[:, 1:2]
        power = -0.5 * (conic[:, 0:1] * dx * dx + conic[:, 2:3] * dy * dy) - conic[:, 1:2] * dx * dy
        gauss = np.exp(np.minimum(power, 0.0))
        raw = opac[g][:, None] * gauss

        alpha = np.minimum(ALPHA_MAX, raw)
        alpha[alpha < ALPHA_MIN] = 0.0
        if g.size:
            # 투과율이 하한 아래로 떨어진 다음 항부터 제외 (하한을 넘긴 항 자체는 합성)
            t_before = np.vstack([np.ones((1, p)), np.cumprod(1.0 - alpha, axis=0)[:-1]])
            alpha[t_before < TRANSMITTANCE_MIN] = 0.0
            t_after = np.cumprod(1.0 - alpha, axis=0)
            t_before = np.vstack([np.ones((1, p)), t_after[:-1]])
            t_final = t_after[-1]
        else:
            t_before = np.ones((0, p))
            t_final = np.ones(p)
        return _TileState(
            dx=dx, dy=dy, gauss=gauss, raw=raw, alpha=alpha,
            t_before=t_before, t_final=t_final, weights=alpha * t_before,
        )

    def _tile_backward(self, tile: _Tile, proj: ProjectedSet, colors: np.ndarray, opac: np.ndarray, grad: np.ndarray):
        g = tile.gaussians
        s = self._composite(tile, proj, opac)
        col = colors[g]

        d_color = s.weights @ grad
        cg = col @ grad.T
        contrib = s.weights * cg
        suffix = contrib.sum(axis=0, keepdims=True) - np.cumsum(contrib, axis=0)
        bg_term = s.t_final * (grad @ self.background)
        d_alpha = s.t_before * cg - (suffix + bg_term[None, :]) / (1.0 - s.alpha)
        d_raw = np.where((s.alpha > 0) & (s.raw < ALPHA_MAX), d_alpha, 0.0)

        conic = proj.conics[g]
        d_opacity = (d_raw * s.gauss).sum(axis=1)
        d_power = d_raw * s.raw
        a, b, c = conic[:, 0:1], conic[:, 1:2], conic[:, 2:3]
        d_mean = np.stack(
            [(d_power * (a * s.dx + b * s.dy)).sum(axis=1), (d_power * (b * s.dx + c * s.dy)).sum(axis=1)], axis=1
        )
        d_conic = np.stack(
            [
                (d_power * (-0.5 * s.dx * s.dx)).sum(axis=1),
                (d_power * (-s.dx * s.dy)).sum(axis=1),
                (d_power * (-0.5 * s.dy * s.dy)).sum(axis=1),
            ],
            axis=1,
        )
        return d_mean, d_conic, d_opacity, d_color

    # ============================
    # 내부: Gaussian 단위 연쇄 법칙
    # ============================
    def _gaussian_backward(
        self,
        gaussians: GaussianSet,
        cam: CameraView,
        proj: ProjectedSet,
        inside: np.ndarray,
        d_mean2d: np.ndarray,
        d_conic: np.ndarray,
        d_opacity: np.ndarray,
        d_color: np.ndarray,
    ) -> GaussianGradients:
        grads = GaussianGradients.zeros_like(gaussians)
        vis = proj.visible
        if not np.any(vis):
            return grads

        opac = gaussians.opacities
        grads.opacity_logits[vis] = d_opacity[vis] * opac[vis] * (1.0 - opac[vis])

        # conic → Σ*: ∂L/∂Σ* = −M·G_M·M
        a, b, c = proj.conics[vis, 0], proj.conics[vis, 1], proj.conics[vis, 2]
        conic_mat = np.stack([np.stack([a, b], -1), np.stack([b, c], -1)], axis=1)
        g_conic = np.stack(
            [np.stack([d_conic[vis, 0], 0.5 * d_conic[vis, 1]], -1), np.stack([0.5 * d_conic[vis, 1], d_conic[vis, 2]], -1)],
            axis=1,
        )
        g_cov2d = -conic_mat @ g_conic @ conic_mat

        # Σ* = J·C·Jᵀ + dilation·I, C = R_W Σ R_Wᵀ
        jac = proj.jacobians[vis]
        jac_t = np.swapaxes(jac, 1, 2)
        g_cov_cam = jac_t @ g_cov2d @ jac
        g_jac = 2.0 * g_cov2d @ jac @ proj.cov_cam[vis]
        r_w = cam.rotation
        g_cov3 = r_w.T[None] @ g_cov_cam @ r_w[None]

        # 카메라 좌표 t에 대한 그래디언트 (평균 투영 + 야코비안)
        t = proj.cam_points[vis]
        tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]
        d_t = np.einsum("nij,ni->nj", jac, d_mean2d[vis])
        d_t[:, 0] += g_jac[:, 0, 2] * (-cam.fx / tz ** 2)
        d_t[:, 1] += g_jac[:, 1, 2] * (-cam.fy / tz ** 2)
        d_t[:, 2] += (
            g_jac[:, 0, 0] * (-cam.fx / tz ** 2)
            + g_jac[:, 0, 2] * (2.0 * cam.fx * tx / tz ** 3)
            + g_jac[:, 1, 1] * (-cam.fy / tz ** 2)
            + g_jac[:, 1, 2] * (2.0 * cam.fy * ty / tz ** 3)
        )
        grads.positions[vis] = d_t @ r_w

        # Σ = R·S²·Rᵀ
        rot = proj.rotations[vis]
        s2 = np.exp(2.0 * gaussians.log_scales[vis])
        grads.log_scales[vis] = 2.0 * s2 * np.einsum("nik,nij,njk->nk", rot, g_cov3, rot)
        g_rot = 2.0 * g_cov3 @ rot * s2[:, None, :]

        quats = gaussians.rotations[vis]
        norms = np.linalg.norm(quats, axis=1, keepdims=True)
        q_hat = quats / norms
        g_qhat = np.einsum("nkij,nij->nk", quaternion_rotation_jacobian(q_hat), g_rot)
        grads.rotations[vis] = (g_qhat - q_hat * (q_hat * g_qhat).sum(1, keepdims=True)) / norms

        d_coef, d_pos_sh = colors_backward(gaussians, cam.center, d_color, inside)
        grads.colors[vis] = d_coef[vis]
        if d_pos_sh is not None:
            grads.positions[vis] += d_pos_sh[vis]
        return grads

    # ============================
    # 내부: 타일 병렬 실행
    # ============================
    def _map(self, fn, tiles: List[_Tile], ordered: bool):
        """ordered=True면 타일 순서, 아니면 완료 순서로 결과를 돌려준다."""
        if self.threads == 1 or len(tiles) <= 1:
            return [fn(tile) for tile in tiles]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            if ordered:
                return list(pool.map(fn, tiles))
            futures = [pool.submit(fn, tile) for tile in tiles]
            return [future.result() for future in as_completed(futures)]


def accumulate_view_gradients(gaussians: GaussianSet, grads: RenderGradients, scale: float = 1.0):
    """보이는 Gaussian의 grad_accum을 이동 평균으로 갱신"""
    vis = grads.visible
    count = gaussians.grad_count[vis] + 1
    gaussians.grad_accum[vis] += (grads.view_grad_norm[vis] * scale - gaussians.grad_accum[vis]) / count
    gaussians.grad_count[vis] = count


# ============================
# 모듈 수준 편의 함수 (프로세스 설정 기반 기본 래스터라이저)
# ============================
_default: Optional[Rasterizer] = None


def default_rasterizer() -> Rasterizer:
    global _default
    if _default is None:
        _default = Rasterizer()
    return _default


def render(gaussians: GaussianSet, cam: CameraView) -> RenderOutput:
    return default_rasterizer().render(gaussians, cam)


def render_backward(gaussians: GaussianSet, cam: CameraView, grad_rgb: np.ndarray, **kwargs) -> RenderGradients:
    return default_rasterizer().render_backward(gaussians, cam, grad_rgb, **kwargs)


def render_depth(gaussians: GaussianSet, cam: CameraView, min_alpha: float = DEPTH_VALID_ALPHA) -> DepthMap:
    return default_rasterizer().render_depth(gaussians, cam, min_alpha)