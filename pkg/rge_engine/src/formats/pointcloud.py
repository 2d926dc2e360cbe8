"""색상 점군 PLY (plyfile). 위치는 float64, 색상은 uchar, 생성 뷰 목록은 주석에 기록"""
import io

import numpy as np
from plyfile import PlyData, PlyElement

from formats.images import to_uint8
from models.scene import ColoredPointCloud

VIEWS_COMMENT = "views "


def encode_pointcloud(cloud: ColoredPointCloud, header: str = "") -> bytes:
    views = sorted(set(cloud.source_views))
    index = {v: i for i, v in enumerate(views)}
    vertex = np.zeros(
        len(cloud),
        dtype=[("x", "<f8"), ("y", "<f8"), ("z", "<f8"), ("red", "u1"), ("green", "u1"), ("blue", "u1"), ("view", "<i4")],
    )
    if len(cloud):
        vertex["x"], vertex["y"], vertex["z"] = cloud.positions.T
        rgb = to_uint8(cloud.colors)
        vertex["red"], vertex["green"], vertex["blue"] = rgb.T
        vertex["view"] = [index[v] for v in cloud.source_views] if cloud.source_views else -1
    comments = [VIEWS_COMMENT + ",".join(views)]
    if header:
        comments.append(header)
    buf = io.BytesIO()
    PlyData([PlyElement.describe(vertex, "vertex")], text=False, byte_order="<", comments=comments).write(buf)
    return buf.getvalue()


def decode_pointcloud(data: bytes) -> ColoredPointCloud:
    ply = PlyData.read(io.BytesIO(data))
    vertex = ply["vertex"].data
    views = []
    for comment in ply.comments:
        if comment.startswith(VIEWS_COMMENT):
            views = [v for v in comment[len(VIEWS_COMMENT):].split(",") if v]
    positions = np.stack([vertex["x"], vertex["y"], vertex["z"]], axis=1).astype(np.float64)
    colors = np.stack([vertex["red"], vertex["green"], vertex["blue"]], axis=1).astype(np.float64) / 255.0
    sources = [views[i] for i in vertex["view"]] if views and len(vertex) else []
    return ColoredPointCloud(positions=positions.reshape(-1, 3), colors=colors.reshape(-1, 3), source_views=sources)
