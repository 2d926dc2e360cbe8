import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from engine.splat_core import (
    Culled,
    DILATION,
    build_covariance,
    project_gaussian,
    project_gaussians,
    project_point,
    quaternion_to_rotation,
    rotation_to_quaternion,
    unproject_pixel,
)
from exception.splat_exceptions import DegenerateQuaternion, InvalidDepth
from factories import create_camera, create_gaussians
from models.camera import CameraView
from models.gaussian import GaussianPrimitive

quaternions = st.lists(st.floats(-1.0, 1.0), min_size=4, max_size=4).filter(lambda q: np.linalg.norm(q) > 0.1)


def _primitive(position=(0.1, -0.2, 3.0), rotation=(1.0, 0.0, 0.0, 0.0), log_scale=(-1.5, -2.0, -1.0)) -> GaussianPrimitive:
    return GaussianPrimitive(
        position=np.asarray(position, dtype=np.float64),
        rotation=np.asarray(rotation, dtype=np.float64),
        log_scale=np.asarray(log_scale, dtype=np.float64),
        opacity_logit=0.0,
        color=np.array([0.5, 0.5, 0.5]),
    )


class TestQuaternion:
    @given(q=quaternions)
    def test_회전_행렬은_정규직교이고_det이_1(self, q):
        # When
        rot = quaternion_to_rotation(q)

        # Then
        np.testing.assert_allclose(rot @ rot.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(rot) == pytest.approx(1.0, abs=1e-12)

    @given(q=quaternions, k=st.floats(0.2, 20.0))
    def test_쿼터니언_스케일_불변(self, q, k):
        """R(k·q) == R(q), k > 0"""
        np.testing.assert_allclose(quaternion_to_rotation(np.asarray(q) * k), quaternion_to_rotation(q), atol=1e-12)

    @given(q=quaternions)
    def test_회전_행렬_쿼터니언_왕복(self, q):
        # Given
        rot = quaternion_to_rotation(q)

        # When
        back = quaternion_to_rotation(rotation_to_quaternion(rot))

        # Then
        np.testing.assert_allclose(back, rot, atol=1e-9)

    def test_예외_케이스_영_쿼터니언(self):
        with pytest.raises(DegenerateQuaternion):
            quaternion_to_rotation([0.0, 0.0, 0.0, 0.0])


class TestCovariance:
    @given(q=quaternions, s=st.lists(st.floats(-4.0, 1.0), min_size=3, max_size=3))
    def test_공분산은_대칭_양의_정부호(self, q, s):
        # Given
        g = _primitive(rotation=q, log_scale=s)

        # When
        cov = build_covariance(g)

        # Then
        np.testing.assert_array_equal(cov, cov.T)
        eig = np.linalg.eigvalsh(cov)
        assert np.all(eig > 0)
        np.testing.assert_allclose(np.sort(eig), np.sort(np.exp(2.0 * np.asarray(s))), rtol=1e-9)


class TestProjection:
    def test_near_clip_뒤쪽은_Culled(self):
        # Given
        cam = create_camera()
        g = _primitive(position=(0.0, 0.0, 0.01))

        # When
        result = project_gaussian(g, cam)

        # Then
        assert result is Culled
        assert not result

    def test_광축_위_Gaussian은_주점에_투영(self):
        # Given
        cam = create_camera(width=17, height=17)
        g = _primitive(position=(0.0, 0.0, 4.0))

        # When
        proj = project_gaussian(g, cam)

        # Then
        np.testing.assert_allclose(proj.mean2d, [cam.cx, cam.cy], atol=1e-12)
        assert proj.depth == pytest.approx(4.0)

    def test_2D_공분산에_dilation_하한(self):
        # Given: 매우 작은 Gaussian
        cam = create_camera()
        g = _primitive(log_scale=(-12.0, -12.0, -12.0))

        # When
        proj = project_gaussian(g, cam)

        # Then
        np.testing.assert_allclose(np.diag(proj.cov2d), [DILATION, DILATION], rtol=1e-6)

    @settings(max_examples=30, deadline=None)
    @given(
        q=quaternions,
        angle=st.floats(-np.pi, np.pi),
        shift=st.lists(st.floats(-5.0, 5.0), min_size=3, max_size=3),
    )
    def test_강체_변환_공변성(self, q, angle, shift):
        """장면과 카메라에 같은 강체 변환을 적용하면 투영 결과가 같다."""
        # Given
        cam = create_camera(center=(0.3, -0.1, 0.0))
        g = _primitive(rotation=q)
        c, s = np.cos(angle), np.sin(angle)
        rot = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
        transform = np.eye(4)
        transform[:3, :3] = rot
        transform[:3, 3] = shift

        moved = _primitive(
            position=rot @ g.position + np.asarray(shift),
            rotation=rotation_to_quaternion(rot @ quaternion_to_rotation(q)),
        )
        moved_cam = CameraView(
            fx=cam.fx, fy=cam.fy, cx=cam.cx, cy=cam.cy, width=cam.width, height=cam.height,
            world_to_cam=cam.world_to_cam @ np.linalg.inv(transform),
        )

        # When
        a = project_gaussian(g, cam)
        b = project_gaussian(moved, moved_cam)

        # Then
        np.testing.assert_allclose(b.mean2d, a.mean2d, atol=1e-8)
        np.testing.assert_allclose(b.cov2d, a.cov2d, atol=1e-8)
        assert b.depth == pytest.approx(a.depth, abs=1e-9)

    def test_집합_투영은_단일_투영과_일치(self):
        # Given
        cam = create_camera()
        gs = create_gaussians(count=8, seed=3)

        # When
        proj = project_gaussians(gs, cam)

        # Then
        for i in range(len(gs)):
            single = project_gaussian(gs.primitive(i), cam)
            np.testing.assert_allclose(proj.means2d[i], single.mean2d, atol=1e-10)
            np.testing.assert_allclose(proj.covs2d[i], single.cov2d, atol=1e-10)
        assert proj.visible.all()


class TestUnproject:
    @given(u=st.floats(0.0, 15.0), v=st.floats(0.0, 15.0), depth=st.floats(0.1, 50.0))
    def test_역투영_후_투영하면_원래_픽셀(self, u, v, depth):
        # Given
        cam = create_camera(center=(1.0, -1.5, 2.0))

        # When
        point = unproject_pixel(cam, u, v, depth)
        pu, pv, pz = project_point(cam, point)

        # Then
        assert pu == pytest.approx(u, abs=1e-9)
        assert pv == pytest.approx(v, abs=1e-9)
        assert pz == pytest.approx(depth, rel=1e-12)

    @pytest.mark.parametrize("depth", [0.0, -1.0])
    def test_예외_케이스_양수가_아닌_깊이(self, depth):
        with pytest.raises(InvalidDepth):
            unproject_pixel(create_camera(), 3.0, 4.0, depth)
