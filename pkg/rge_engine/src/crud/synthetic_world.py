"""
합성 벤치마크: 절차적 장면, 다차선 궤적, 점군 샘플링/재투영, 깊이 오라클, prior 합성기
모든 생성기는 (seed, config)의 순수 함수다.
"""
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

from engine.rasterizer import DEPTH_VALID_ALPHA, DepthMap, Rasterizer
from engine.splat_core import project_points, rotation_to_quaternion, unproject_pixels
from exception.pipeline_exceptions import InvalidConfig
from models.camera import CameraView
from models.enums import CorruptionKind
from models.gaussian import GaussianSet
from models.scene import (
    ColoredPointCloud,
    CorruptionOp,
    CorruptionRecipe,
    PriorSample,
    Reprojection,
    SyntheticScene,
    TrajectorySet,
)
from schemas.run_config import PriorsConfig, SceneConfig, TrajectoryConfig
from utils.hashing import derive_seed

logger = logging.getLogger(__name__)

GT_OPACITY_LOGIT = float(np.log(0.995 / 0.005))
PLANE_SIGMA = 1.25        # 면 스플랫 면내 σ / 격자 간격
PLANE_EDGE_CELLS = 2      # 면 가장자리 너머로 연장하는 격자 칸 수
OBJECT_SPACING = 0.5
BOX_MAX_YAW = math.radians(20.0)
BLOB_SPLATS = 30
PLACEMENT_CANDIDATES = 16  # 손상 영역 중심 후보 수 (겹침이 가장 작은 후보 채택)


def lane_tag(offset: Optional[float]) -> str:
    return "orig" if offset is None else f"shift+{offset:.1f}"


def quantize(image: np.ndarray) -> np.ndarray:
    """8비트 저장과 동일한 값으로 반올림"""
    return np.round(np.clip(image, 0.0, 1.0) * 255.0) / 255.0


class SyntheticWorldService:
    def __init__(self, rasterizer: Rasterizer):
        self.rasterizer = rasterizer

    # ============================
    # 장면
    # ============================
    def gen_scene(self, seed: int, cfg: SceneConfig) -> SyntheticScene:
        """
        도로 평면 + 하늘 + 좌우 벽 + 배경 벽으로 닫힌 상자, 그 안에 박스와 식생 블롭
        면은 원반형(한 축이 얇은) 스플랫 격자이며 가장자리 너머로 조금 연장된다.
        """
        rng = np.random.default_rng(derive_seed(seed, "scene"))
        objects = [self._box(rng, cfg, side) for side in self._box_sides(cfg.num_boxes)]
        objects += [self._blob(rng, cfg) for _ in range(cfg.num_blobs)]
        object_count = sum(len(o) for o in objects)

        surface_budget = cfg.splat_budget - object_count
        if surface_budget < 100:
            raise InvalidConfig(
                f"splat_budget가 너무 작습니다. 물체 스플랫 {object_count}개 이후 남은 수: {surface_budget}", field="scene.splat_budget"
            )
        surfaces = self._surfaces(cfg)
        total_area = sum(area for _, area, _ in surfaces)
        parts: List[GaussianSet] = []
        for (build, area, _), share in zip(surfaces, self._shares(surfaces, surface_budget, total_area)):
            parts.append(build(rng, share))
        parts += objects

        gaussians = parts[0]
        for part in parts[1:]:
            gaussians = gaussians.concat(part)
        gaussians = gaussians.select(np.arange(min(len(gaussians), cfg.splat_budget)))

        bounds_min = np.array([cfg.left_wall, -cfg.sky_height, cfg.start_z])
        bounds_max = np.array([cfg.right_wall, 0.0, cfg.backdrop_distance])
        logger.info(f"장면 생성 완료: seed={seed}, splats={len(gaussians)}")
        return SyntheticScene(gaussians=gaussians, bounds_min=bounds_min, bounds_max=bounds_max, seed=seed)

    @staticmethod
    def _shares(surfaces, budget: int, total_area: float) -> List[int]:
        shares = [int(budget * area / total_area) for _, area, _ in surfaces]
        shares[0] += budget - sum(shares)
        return shares

    def _surfaces(self, cfg: SceneConfig):
        """(빌더, 면적, 이름) 목록. 지면이 첫 번째 (남는 예산을 받는다)"""
        x0, x1 = cfg.left_wall, cfg.right_wall
        z0, z1 = cfg.start_z, cfg.backdrop_distance
        top = -cfg.sky_height
        t = cfg.surface_thickness

        def ground(rng, n):
            return self._plane(rng, n, axis=1, level=0.0, span_a=(x0, x1), span_b=(z0, z1), thickness=t, palette=_road_color)

        def sky(rng, n):
            return self._plane(rng, n, axis=1, level=top, span_a=(x0, x1), span_b=(z0, z1), thickness=t, palette=_sky_color)

        def left(rng, n):
            return self._plane(rng, n, axis=0, level=x0, span_a=(top, 0.0), span_b=(z0, z1), thickness=t, palette=_wall_color)

        def right(rng, n):
            return self._plane(rng, n, axis=0, level=x1, span_a=(top, 0.0), span_b=(z0, z1), thickness=t, palette=_wall_color)

        def backdrop(rng, n):
            return self._plane(rng, n, axis=2, level=z1, span_a=(x0, x1), span_b=(top, 0.0), thickness=t, palette=_backdrop_color)

        width, height, length = x1 - x0, cfg.sky_height, z1 - z0
        # 지면은 카메라와 가까워 밀도를 높인다
        return [
            (ground, 2.0 * width * length, "ground"),
            (sky, 0.5 * width * length, "sky"),
            (left, height * length, "left_wall"),
            (right, height * length, "right_wall"),
            (backdrop, width * height, "backdrop"),
        ]

    @staticmethod
    def _plane(rng, n: int, axis: int, level: float, span_a, span_b, thickness: float, palette) -> GaussianSet:
        """axis에 수직인 평면 위 격자 스플랫. span_a/span_b는 나머지 두 축의 범위(오름차순)"""
        other = [a for a in range(3) if a != axis]
        len_a, len_b = span_a[1] - span_a[0], span_b[1] - span_b[0]
        spacing = math.sqrt(len_a * len_b / max(n, 1))
        extra = 2 * PLANE_EDGE_CELLS + 1
        # 가장자리 연장분까지 예산 안에 들어가도록 간격을 넓힌다
        while (math.ceil(len_a / spacing) + extra) * (math.ceil(len_b / spacing) + extra) > max(n, 1) and spacing < max(len_a, len_b):
            spacing *= 1.05
        na = int(math.ceil(len_a / spacing)) + extra
        nb = int(math.ceil(len_b / spacing)) + extra
        edge = PLANE_EDGE_CELLS * spacing
        ga, gb = np.meshgrid(
            span_a[0] - edge + np.arange(na) * (len_a + 2 * edge) / max(na - 1, 1),
            span_b[0] - edge + np.arange(nb) * (len_b + 2 * edge) / max(nb - 1, 1),
            indexing="ij",
        )
        ga, gb = ga.ravel(), gb.ravel()
        m = ga.size
        pos = np.empty((m, 3))
        pos[:, axis] = level
        pos[:, other[0]] = ga + rng.uniform(-0.2, 0.2, m) * spacing
        pos[:, other[1]] = gb + rng.uniform(-0.2, 0.2, m) * spacing
        sigma = np.full((m, 3), PLANE_SIGMA * spacing)
        sigma[:, axis] = thickness * spacing
        return GaussianSet.create(
            positions=pos,
            log_scales=np.log(sigma),
            opacity_logits=np.full(m, GT_OPACITY_LOGIT),
            colors=palette(rng, pos),
        )

    @staticmethod
    def _box_sides(count: int) -> List[int]:
        """박스 배치: 오른쪽(+1)과 왼쪽(-1)을 번갈아"""
        return [1 if i % 2 == 0 else -1 for i in range(count)]

    @staticmethod
    def _box(rng, cfg: SceneConfig, side: int) -> GaussianSet:
        """수직축으로 조금 돌아간 직육면체. 면 스플랫은 박스 축에 정렬된다."""
        size = rng.uniform([1.0, 1.0, 1.0], [2.5, 2.5, 2.5])
        yaw = rng.uniform(-BOX_MAX_YAW, BOX_MAX_YAW)
        rot = _yaw_rotation(yaw)
        half_x = 0.5 * (abs(math.cos(yaw)) * size[0] + abs(math.sin(yaw)) * size[2])
        if side > 0:
            cx = rng.uniform(9.0, min(12.0, cfg.right_wall - half_x - 0.3))
        else:
            cx = rng.uniform(max(-5.0, cfg.left_wall + half_x + 0.3), -3.0)
        cz = rng.uniform(4.0, cfg.backdrop_distance - 10.0)
        center = np.array([cx, -size[1] / 2, cz])
        base = rng.uniform(0.15, 0.95, 3)

        positions, scales, colors = [], [], []
        for axis in range(3):
            for sign in (-1.0, 1.0):
                other = [a for a in range(3) if a != axis]
                na = max(2, int(math.ceil(size[other[0]] / OBJECT_SPACING)) + 1)
                nb = max(2, int(math.ceil(size[other[1]] / OBJECT_SPACING)) + 1)
                ga, gb = np.meshgrid(np.linspace(-0.5, 0.5, na), np.linspace(-0.5, 0.5, nb), indexing="ij")
                face = np.zeros((ga.size, 3))
                face[:, axis] = sign * 0.5 * size[axis]
                face[:, other[0]] = ga.ravel() * size[other[0]]
                face[:, other[1]] = gb.ravel() * size[other[1]]
                positions.append(center + face @ rot.T)
                sigma = np.full((ga.size, 3), 0.8 * OBJECT_SPACING)
                sigma[:, axis] = 0.1 * OBJECT_SPACING
                scales.append(sigma)
                shade = 0.75 + 0.25 * (axis == 1) + 0.1 * sign * (axis == 0)
                colors.append(np.clip(base * shade + rng.normal(0, 0.03, (ga.size, 3)), 0.0, 1.0))
        pos = np.concatenate(positions)
        return GaussianSet.create(
            positions=pos,
            rotations=np.tile(rotation_to_quaternion(rot), (pos.shape[0], 1)),
            log_scales=np.log(np.concatenate(scales)),
            opacity_logits=np.full(pos.shape[0], GT_OPACITY_LOGIT),
            colors=np.concatenate(colors),
        )

    @staticmethod
    def _blob(rng, cfg: SceneConfig) -> GaussianSet:
        """벽 앞의 식생 덩어리: 임의 회전 타원체 스플랫 묶음"""
        side = rng.choice([-1.0, 1.0])
        x = cfg.left_wall + 0.8 if side < 0 else cfg.right_wall - 0.8
        center = np.array([x, -rng.uniform(0.8, 2.5), rng.uniform(0.0, cfg.backdrop_distance - 5.0)])
        radius = rng.uniform(0.6, 1.2)
        offsets = rng.normal(0.0, radius / 2.0, (BLOB_SPLATS, 3))
        quats = rng.normal(size=(BLOB_SPLATS, 4))
        quats /= np.linalg.norm(quats, axis=1, keepdims=True)
        green = np.array([0.2, 0.5, 0.15]) + rng.normal(0, 0.05, (BLOB_SPLATS, 3))
        return GaussianSet.create(
            positions=center + offsets,
            rotations=quats,
            log_scales=np.log(rng.uniform(0.2, 0.45, (BLOB_SPLATS, 3)) * radius),
            opacity_logits=np.full(BLOB_SPLATS, GT_OPACITY_LOGIT),
            colors=np.clip(green, 0.0, 1.0),
        )

    # ============================
    # 궤적
    # ============================
    def gen_trajectory(self, scene_cfg: SceneConfig, cfg: TrajectoryConfig) -> TrajectorySet:
        """원래 차선(x=0) + lane_offsets만큼 x 방향으로 강체 이동한 차선들"""
        base = []
        sway = math.radians(cfg.yaw_sway_deg)
        for i in range(cfg.num_poses):
            yaw = sway * math.sin(2.0 * math.pi * i / max(cfg.num_poses, 1) * 1.5)
            center = np.array([0.0, -cfg.camera_height, i * cfg.step])
            base.append((center, _yaw_rotation(yaw)))

        lanes: Dict[str, List[CameraView]] = {}
        offsets: Dict[str, float] = {}
        for offset in [None] + list(cfg.lane_offsets):
            tag = lane_tag(offset)
            shift = np.array([0.0 if offset is None else offset, 0.0, 0.0])
            lanes[tag] = [
                CameraView.from_pose(
                    center + shift,
                    rot,
                    fx=scene_cfg.focal,
                    fy=scene_cfg.focal,
                    width=scene_cfg.width,
                    height=scene_cfg.height,
                    near_clip=cfg.near_clip,
                    lane_tag=tag,
                    view_id=f"{tag}_{i:03d}",
                ).validate()
                for i, (center, rot) in enumerate(base)
            ]
            offsets[tag] = 0.0 if offset is None else float(offset)
        return TrajectorySet(lanes=lanes, offsets=offsets)

    @staticmethod
    def frustum_check(scene: SyntheticScene, cam: CameraView) -> bool:
        """
        장면 상자가 이미지 전체를 덮는지
        상자는 z = bounds_min.z 쪽만 열려 있다. 카메라가 상자 안에 있고 이미지 네 모서리 광선이 모두
        +z로 나아가면 (광선 원뿔은 모서리 광선의 볼록 결합) 모든 픽셀 광선이 닫힌 면에서 끝난다.
        """
        center = cam.center
        if np.any(center <= scene.bounds_min) or np.any(center >= scene.bounds_max):
            return False
        us = np.array([0.0, cam.width, 0.0, cam.width])
        vs = np.array([0.0, 0.0, cam.height, cam.height])
        rays = unproject_pixels(cam, us, vs, np.ones(4)) - center
        return bool(np.all(rays[:, 2] > 0.0))

    def check_trajectory(self, scene: SyntheticScene, trajectory: TrajectorySet) -> None:
        outside = [cam.view_id for cam in trajectory.all_views() if not self.frustum_check(scene, cam)]
        if outside:
            raise InvalidConfig(f"장면이 시야를 모두 덮지 못하는 포즈: {outside}", field="trajectory")

    # ============================
    # GT 렌더 / 점군
    # ============================
    def render_gt(self, scene: SyntheticScene, cam: CameraView) -> np.ndarray:
        return quantize(self.rasterizer.render(scene.gaussians, cam).rgb)

    def sample_pointcloud(
        self, scene: SyntheticScene, views: Sequence[CameraView], stride: int, cap: int
    ) -> ColoredPointCloud:
        """
        각 뷰의 GT 깊이 맵을 stride 격자로 샘플링해 역투영, 해당 픽셀의 GT 렌더 색상 부여
        cap=0이면 빈 점군
        """
        if cap <= 0 or not views:
            return ColoredPointCloud.empty()
        positions, colors, sources = [], [], []
        for cam in views:
            out = self.rasterizer.render(scene.gaussians, cam)
            depth = DepthMap(values=np.where(out.alpha >= DEPTH_VALID_ALPHA, out.depth, 0.0), valid=out.alpha >= DEPTH_VALID_ALPHA)
            vs, us = np.mgrid[stride // 2:cam.height:stride, stride // 2:cam.width:stride]
            us, vs = us.ravel(), vs.ravel()
            ok = depth.valid[vs, us]
            us, vs = us[ok], vs[ok]
            if us.size == 0:
                continue
            positions.append(unproject_pixels(cam, us.astype(np.float64), vs.astype(np.float64), depth.values[vs, us]))
            colors.append(quantize(out.rgb)[vs, us])
            sources += [cam.view_id] * us.size
        if not positions:
            return ColoredPointCloud.empty()
        pos = np.concatenate(positions)
        col = np.concatenate(colors)
        if pos.shape[0] > cap:
            keep = np.linspace(0, pos.shape[0] - 1, cap).round().astype(np.int64)
            pos, col = pos[keep], col[keep]
            sources = [sources[i] for i in keep]
        return ColoredPointCloud(positions=pos, colors=col, source_views=sources)

    @staticmethod
    def reproject_pointcloud(cloud: ColoredPointCloud, cam: CameraView) -> Reprojection:
        """1px 스플랫 z-buffer. 같은 픽셀에서는 가까운 점, 동률이면 작은 인덱스가 이긴다."""
        h, w = cam.height, cam.width
        image = np.zeros((h, w, 3))
        valid = np.zeros((h, w), dtype=bool)
        index = np.full((h, w), -1, dtype=np.int64)
        depth = np.zeros((h, w))
        if len(cloud) == 0:
            return Reprojection(image=image, valid=valid, point_index=index, depth=depth)

        uv, z = project_points(cam, cloud.positions)
        px = np.round(uv).astype(np.int64)
        ok = (z > cam.near_clip) & (px[:, 0] >= 0) & (px[:, 0] < w) & (px[:, 1] >= 0) & (px[:, 1] < h)
        ids = np.flatnonzero(ok)
        if ids.size:
            order = ids[np.lexsort((ids, z[ids]))]
            flat = px[order, 1] * w + px[order, 0]
            _, first = np.unique(flat, return_index=True)
            winners = order[first]
            rows, cols = px[winners, 1], px[winners, 0]
            image[rows, cols] = cloud.colors[winners]
            valid[rows, cols] = True
            index[rows, cols] = winners
            depth[rows, cols] = z[winners]
        return Reprojection(image=image, valid=valid, point_index=index, depth=depth)

    # ============================
    # 깊이 오라클
    # ============================
    def depth_oracle(self, scene: SyntheticScene, cam: CameraView, seed: int, cfg: PriorsConfig) -> DepthMap:
        """GT 깊이 × 뷰별 전역 스케일 × 픽셀별 곱셈 노이즈 (단안 깊이 추정 대용)"""
        rng = np.random.default_rng(derive_seed(seed, "depth", cam.view_id))
        gt = self.rasterizer.render_depth(scene.gaussians, cam)
        scale = rng.uniform(*cfg.depth_scale_range)
        noise = rng.uniform(cfg.depth_noise[0], cfg.depth_noise[1], size=gt.values.shape)
        return DepthMap(values=np.where(gt.valid, gt.values * scale * noise, 0.0), valid=gt.valid)

    # ============================
    # prior 합성
    # ============================
    def synth_prior(
        self,
        scene: SyntheticScene,
        cam: CameraView,
        severity: float,
        seed: int,
        cfg: PriorsConfig,
        cloud: Optional[ColoredPointCloud] = None,
    ) -> PriorSample:
        """
        GT 렌더에 시드 고정 손상 레시피를 적용한 prior 이미지와 정확한 아티팩트 마스크
        마스크는 8비트 양자화 이후 값으로 계산하므로 PPM 저장 후에도 그대로 성립한다.
        """
        if not 0.0 <= severity <= 1.0:
            raise InvalidConfig(f"severity는 [0, 1] 범위여야 합니다. severity={severity}", field="priors.severity")
        gt = self.render_gt(scene, cam)
        rng = np.random.default_rng(derive_seed(seed, "prior", cam.view_id))
        recipe = CorruptionRecipe(seed=seed, severity=severity)
        image = gt.copy()

        if severity > 0:
            n_ops = 1 + int(severity * cfg.max_ops)
            h, w = cam.height, cam.width
            kinds = [CorruptionKind(k) for k in cfg.kinds]
            # 1. 원반 반경: 원반 면적 합이 목표 비율이 되도록 정규화 (모든 연산은 자기 원반 밖을 바꾸지 않는다)
            jitter = rng.uniform(0.9, 1.1, n_ops)
            target = min(cfg.max_area, severity + cfg.area_bias) * h * w
            radii = jitter * math.sqrt(target / (math.pi * float(np.sum(jitter ** 2))))
            placed: List[CorruptionOp] = []
            for radius in radii:
                kind = kinds[int(rng.integers(len(kinds)))]
                # 2. 이미 놓인 원반과 겹침이 가장 작은 중심
                center = self._place(rng, float(radius), placed, h, w)
                magnitude = float(0.25 + 0.5 * severity + rng.uniform(0.0, 0.1))
                op = CorruptionOp(kind=kind.value, center=center, radius=float(radius), magnitude=magnitude)
                image = self._apply_op(image, op, rng, scene, cam)
                placed.append(op)
            recipe.ops.extend(placed)

        image = quantize(image)
        mask = np.any(np.abs(image - gt) > cfg.mask_epsilon, axis=2)
        reproj = self.reproject_pointcloud(cloud if cloud is not None else ColoredPointCloud.empty(), cam)
        return PriorSample(view_id=cam.view_id, image=image, artifact_mask=mask, reprojection=reproj, recipe=recipe)

    @staticmethod
    def _place(rng, radius: float, placed: Sequence[CorruptionOp], h: int, w: int) -> Tuple[float, float]:
        margin = min(radius, 0.5 * min(h, w) - 1)
        us = rng.uniform(margin, w - 1 - margin, PLACEMENT_CANDIDATES)
        vs = rng.uniform(margin, h - 1 - margin, PLACEMENT_CANDIDATES)
        overlap = np.zeros(PLACEMENT_CANDIDATES)
        for op in placed:
            gap = np.hypot(us - op.center[0], vs - op.center[1])
            overlap += np.maximum(radius + op.radius - gap, 0.0)
        best = int(np.argmin(overlap))
        return float(us[best]), float(vs[best])

    def _apply_op(self, image: np.ndarray, op: CorruptionOp, rng, scene: SyntheticScene, cam: CameraView) -> np.ndarray:
        h, w = image.shape[:2]
        vs, us = np.mgrid[0:h, 0:w].astype(np.float64)
        dist = np.hypot(us - op.center[0], vs - op.center[1])
        feather = max(1.0, 0.2 * op.radius)
        weight = np.clip((op.radius - dist) / feather, 0.0, 1.0)[..., None]
        kind = CorruptionKind(op.kind)

        if kind == CorruptionKind.HUE_SHIFT:
            shift = rng.normal(0.0, 1.0, 3)
            shift *= op.magnitude / max(np.abs(shift).max(), 1e-9)
            op.params = {"dr": float(shift[0]), "dg": float(shift[1]), "db": float(shift[2])}
            altered = np.clip(image[..., ::-1] * 0.5 + image * 0.5 + shift, 0.0, 1.0)
        elif kind == CorruptionKind.BLUR:
            sigma = 1.5 + 3.0 * op.magnitude
            op.params = {"sigma": sigma}
            blurred = gaussian_filter(image, sigma=(sigma, sigma, 0), mode="nearest")
            gray = blurred.mean(axis=2, keepdims=True)
            # 평탄한 영역에서도 흔적이 남도록 채도와 밝기를 함께 낮춘다
            altered = (blurred * (1.0 - op.magnitude) + gray * op.magnitude) * (1.0 - 0.3 * op.magnitude)
        elif kind == CorruptionKind.WARP:
            amp = op.magnitude * 0.5 * op.radius
            angle = float(rng.uniform(0, 2 * math.pi))
            op.params = {"amplitude": amp, "angle": angle}
            falloff = weight[..., 0]
            src_u = us + amp * math.cos(angle) * falloff
            src_v = vs + amp * math.sin(angle) * falloff
            altered = np.stack(
                [map_coordinates(image[..., c], [src_v, src_u], order=1, mode="nearest") for c in range(3)], axis=2
            )
            altered = np.clip(altered + 0.5 * op.magnitude * (0.5 - altered), 0.0, 1.0)
        else:
            return self._ghost(image, op, rng, cam, weight)
        return image * (1.0 - weight) + altered * weight

    def _ghost(self, image: np.ndarray, op: CorruptionOp, rng, cam: CameraView, weight: np.ndarray) -> np.ndarray:
        """
        1~3개의 가짜 Gaussian을 카메라 앞에 렌더링해 합성
        색은 원반 평균색의 보색 근처, alpha는 원반 가중치로 잘라 원반 밖은 바뀌지 않는다.
        """
        count = int(rng.integers(1, 4))
        depth = float(rng.uniform(3.0, 10.0))
        spread = op.radius * 0.25
        us = op.center[0] + rng.normal(0.0, spread, count)
        vs = op.center[1] + rng.normal(0.0, spread, count)
        positions = unproject_pixels(cam, us, vs, np.full(count, depth))
        sigma_world = 0.5 * op.radius * depth / cam.fx
        local = image[weight[..., 0] > 0].mean(axis=0)
        colors = np.clip(1.0 - local + rng.normal(0.0, 0.1, (count, 3)), 0.0, 1.0)
        ghosts = GaussianSet.create(
            positions=positions,
            log_scales=np.full((count, 3), math.log(sigma_world)),
            opacity_logits=np.full(count, math.log(op.magnitude / max(1.0 - op.magnitude, 1e-3)) + 3.0),
            colors=colors,
        )
        op.params = {"count": count, "depth": depth}
        out = self.rasterizer.render(ghosts, cam)
        ghost_rgb = out.rgb - (1.0 - out.alpha[..., None]) * self.rasterizer.background
        return image * (1.0 - out.alpha[..., None] * weight) + ghost_rgb * weight


def _yaw_rotation(yaw: float) -> np.ndarray:
    """카메라→월드 회전. 열: 오른쪽, 아래, 전방 (y축 기준 회전)"""
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


# ============================
# 색상 팔레트
# ============================
def _road_color(rng, pos: np.ndarray) -> np.ndarray:
    n = pos.shape[0]
    base = np.full((n, 3), 0.32) + rng.normal(0.0, 0.04, (n, 1))
    marking = (np.min(np.abs(pos[:, 0:1] - np.array([[-1.75, 1.75, 5.25, 8.75]])), axis=1) < 0.35) & (
        np.mod(pos[:, 2], 4.0) < 2.0
    )
    base[marking] = 0.9
    curb = (pos[:, 0] < -3.5) | (pos[:, 0] > 10.5)
    base[curb] = np.array([0.45, 0.42, 0.35]) + rng.normal(0.0, 0.04, (int(curb.sum()), 3))
    return np.clip(base, 0.0, 1.0)


def _sky_color(rng, pos: np.ndarray) -> np.ndarray:
    n = pos.shape[0]
    t = np.clip((pos[:, 2] + 5.0) / 50.0, 0.0, 1.0)[:, None]
    base = np.array([0.35, 0.55, 0.9]) * (1.0 - t) + np.array([0.75, 0.85, 0.95]) * t
    return np.clip(base + rng.normal(0.0, 0.02, (n, 3)), 0.0, 1.0)


def _wall_color(rng, pos: np.ndarray) -> np.ndarray:
    n = pos.shape[0]
    brick = (np.floor(pos[:, 2] / 1.5) + np.floor(pos[:, 1] / 1.0)) % 2
    base = np.where(brick[:, None] > 0, np.array([0.6, 0.3, 0.22]), np.array([0.7, 0.55, 0.4]))
    return np.clip(base + rng.normal(0.0, 0.04, (n, 3)), 0.0, 1.0)


def _backdrop_color(rng, pos: np.ndarray) -> np.ndarray:
    n = pos.shape[0]
    ridge = -4.0 + 1.5 * np.sin(pos[:, 0] * 0.6)
    mountain = pos[:, 1] > ridge
    base = np.where(mountain[:, None], np.array([0.3, 0.4, 0.3]), np.array([0.7, 0.8, 0.95]))
    return np.clip(base + rng.normal(0.0, 0.03, (n, 3)), 0.0, 1.0)


def severity_for_lane(cfg: PriorsConfig, trajectory: TrajectorySet, tag: str) -> float:
    return cfg.severity_for(trajectory.offsets.get(tag, 0.0))


def prior_views(trajectory: TrajectorySet, cfg_traj: TrajectoryConfig, cfg_priors: PriorsConfig) -> List[CameraView]:
    """shifted 차선의 prior 뷰 (held-out 제외, prior_stride 간격)"""
    views = []
    for tag in trajectory.shifted_tags():
        for i, cam in enumerate(trajectory.lanes[tag]):
            if is_holdout(i, cfg_traj) or i % cfg_priors.prior_stride:
                continue
            views.append(cam)
    return views


def is_holdout(index: int, cfg: TrajectoryConfig) -> bool:
    return index % cfg.holdout_every == cfg.holdout_offset % cfg.holdout_every


def split_views(views: Sequence[CameraView], cfg: TrajectoryConfig) -> Tuple[List[CameraView], List[CameraView]]:
    """(학습 뷰, held-out 뷰)"""
    train, held = [], []
    for i, cam in enumerate(views):
        (held if is_holdout(i, cfg) else train).append(cam)
    return train, held
