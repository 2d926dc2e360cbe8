"""
SceneCheckpoint (magic "RGEGS001", little-endian)
header: magic 8B, count u32, sh_degree u8, desk_scale f32, seed u64, config_hash 16B
record: position 3f32, rotation 4f32, log_scale 3f32, opacity_logit f32, color (3 또는 12)f32,
        maturity u8, grad_accum f32, grad_count u32
"""
from dataclasses import dataclass

import numpy as np

from exception.pipeline_exceptions import CheckpointFormatError
from models.gaussian import GaussianSet, color_width

MAGIC = b"RGEGS001"

HEADER_DTYPE = np.dtype(
    [
        ("magic", "S8"),
        ("count", "<u4"),
        ("sh_degree", "u1"),
        ("desk_scale", "<f4"),
        ("seed", "<u8"),
        ("config_hash", "S16"),
    ]
)


def record_dtype(sh_degree: int) -> np.dtype:
    return np.dtype(
        [
            ("position", "<f4", (3,)),
            ("rotation", "<f4", (4,)),
            ("log_scale", "<f4", (3,)),
            ("opacity_logit", "<f4"),
            ("color", "<f4", (color_width(sh_degree),)),
            ("maturity", "u1"),
            ("grad_accum", "<f4"),
            ("grad_count", "<u4"),
        ]
    )


@dataclass
class CheckpointMeta:
    desk_scale: float
    seed: int
    config_hash: str


def encode_checkpoint(gaussians: GaussianSet, meta: CheckpointMeta) -> bytes:
    header = np.zeros(1, dtype=HEADER_DTYPE)
    header["magic"] = MAGIC
    header["count"] = len(gaussians)
    header["sh_degree"] = gaussians.sh_degree
    header["desk_scale"] = meta.desk_scale
    header["seed"] = meta.seed
    header["config_hash"] = meta.config_hash.encode("ascii")

    records = np.zeros(len(gaussians), dtype=record_dtype(gaussians.sh_degree))
    records["position"] = gaussians.positions
    records["rotation"] = gaussians.rotations
    records["log_scale"] = gaussians.log_scales
    records["opacity_logit"] = gaussians.opacity_logits
    records["color"] = gaussians.colors
    records["maturity"] = gaussians.maturity
    records["grad_accum"] = gaussians.grad_accum
    records["grad_count"] = np.minimum(gaussians.grad_count, np.iinfo(np.uint32).max)
    return header.tobytes() + records.tobytes()


def decode_checkpoint(data: bytes, path: str = "<memory>"):
    """bytes → (GaussianSet, CheckpointMeta). float32 저장값은 float64로 그대로 복원된다."""
    if len(data) < HEADER_DTYPE.itemsize:
        raise CheckpointFormatError(path, "헤더보다 짧은 파일")
    header = np.frombuffer(data, dtype=HEADER_DTYPE, count=1)[0]
    if bytes(header["magic"]) != MAGIC:
        raise CheckpointFormatError(path, f"magic 불일치: {bytes(header['magic'])!r}")
    sh_degree = int(header["sh_degree"])
    if sh_degree not in (0, 1):
        raise CheckpointFormatError(path, f"지원하지 않는 sh_degree: {sh_degree}")
    count = int(header["count"])
    dtype = record_dtype(sh_degree)
    expected = HEADER_DTYPE.itemsize + count * dtype.itemsize
    if len(data) != expected:
        raise CheckpointFormatError(path, f"크기 불일치. 기대값: {expected}, 실제값: {len(data)}")

    records = np.frombuffer(data, dtype=dtype, count=count, offset=HEADER_DTYPE.itemsize)
    gaussians = GaussianSet(
        positions=records["position"].astype(np.float64),
        rotations=records["rotation"].astype(np.float64),
        log_scales=records["log_scale"].astype(np.float64),
        opacity_logits=records["opacity_logit"].astype(np.float64),
        colors=records["color"].astype(np.float64).reshape(count, color_width(sh_degree)),
        maturity=records["maturity"].astype(np.uint8),
        grad_accum=records["grad_accum"].astype(np.float64),
        grad_count=records["grad_count"].astype(np.int64),
        sh_degree=sh_degree,
    )
    meta = CheckpointMeta(
        desk_scale=float(header["desk_scale"]),
        seed=int(header["seed"]),
        config_hash=bytes(header["config_hash"]).decode("ascii"),
    )
    return gaussians, meta


def block_bytes(gaussians: GaussianSet, mask) -> bytes:
    """mask로 고른 행만 직렬화한 레코드 바이트 (Mature 블록 비교용)"""
    subset = gaussians.select(mask)
    return encode_checkpoint(subset, CheckpointMeta(0.0, 0, "0" * 16))[HEADER_DTYPE.itemsize:]
