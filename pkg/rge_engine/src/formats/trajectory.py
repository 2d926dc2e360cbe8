"""
궤적 텍스트 파일: 한 줄에 포즈 하나
<view_id> <world_to_cam 16개 (행 우선)> <fx> <fy> <cx> <cy> <w> <h> <lane_tag>
'#'으로 시작하는 줄은 주석
"""
from typing import Dict, List

import numpy as np

from exception.pipeline_exceptions import CheckpointFormatError
from models.camera import DEFAULT_NEAR_CLIP, CameraView
from models.scene import TrajectorySet

FIELDS = 1 + 16 + 6 + 1


def lane_offset(tag: str) -> float:
    return 0.0 if tag == "orig" else float(tag.split("+", 1)[1])


def encode_trajectory(trajectory: TrajectorySet, header: str = "") -> str:
    lines = [f"# {header}"] if header else []
    for cam in trajectory.all_views():
        numbers = [repr(float(x)) for x in cam.world_to_cam.ravel()]
        numbers += [repr(float(cam.fx)), repr(float(cam.fy)), repr(float(cam.cx)), repr(float(cam.cy))]
        numbers += [str(cam.width), str(cam.height)]
        lines.append(" ".join([cam.view_id] + numbers + [cam.lane_tag]))
    return "\n".join(lines) + "\n"


def decode_trajectory(text: str, near_clip: float = DEFAULT_NEAR_CLIP, path: str = "<memory>") -> TrajectorySet:
    lanes: Dict[str, List[CameraView]] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) != FIELDS:
            raise CheckpointFormatError(path, f"{number}번째 줄의 필드 수가 {len(tokens)}개입니다. 기대값: {FIELDS}")
        try:
            matrix = np.array([float(x) for x in tokens[1:17]]).reshape(4, 4)
            fx, fy, cx, cy = (float(x) for x in tokens[17:21])
            width, height = int(tokens[21]), int(tokens[22])
        except ValueError as e:
            raise CheckpointFormatError(path, f"{number}번째 줄 숫자 파싱 실패: {e}") from e
        tag = tokens[23]
        cam = CameraView(
            fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height,
            world_to_cam=matrix, near_clip=near_clip, lane_tag=tag, view_id=tokens[0],
        )
        lanes.setdefault(tag, []).append(cam)
    if "orig" not in lanes:
        raise CheckpointFormatError(path, "원래 차선(orig) 포즈가 없습니다.")
    return TrajectorySet(lanes=lanes, offsets={tag: lane_offset(tag) for tag in lanes})
