"""
이미지 파일 형식
- PPM (P6, maxval 255) / PGM (P5): Pillow
- PFM (단일 채널 "Pf", little-endian, scale −1.0, 아래 행부터)
"""
import io

import numpy as np
from PIL import Image

from exception.pipeline_exceptions import CheckpointFormatError


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def encode_ppm(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(to_uint8(image)).save(buf, format="PPM")
    return buf.getvalue()


def encode_pgm(image: np.ndarray) -> bytes:
    """[0, 1] 단일 채널 또는 bool 마스크 (True → 255)"""
    array = image.astype(np.float64) if image.dtype == bool else image
    buf = io.BytesIO()
    Image.fromarray(to_uint8(array)).save(buf, format="PPM")
    return buf.getvalue()


def decode_pnm(data: bytes) -> np.ndarray:
    """PPM → (H, W, 3), PGM → (H, W), 값은 [0, 1]"""
    with Image.open(io.BytesIO(data)) as img:
        return np.asarray(img, dtype=np.float64) / 255.0


def encode_pfm(values: np.ndarray) -> bytes:
    h, w = values.shape
    header = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    return header + np.ascontiguousarray(np.flipud(values), dtype="<f4").tobytes()


def decode_pfm(data: bytes, path: str = "<memory>") -> np.ndarray:
    parts = data.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"Pf":
        raise CheckpointFormatError(path, "단일 채널 PFM이 아닙니다.")
    w, h = (int(x) for x in parts[1].split())
    scale = float(parts[2])
    dtype = "<f4" if scale < 0 else ">f4"
    body = parts[3]
    if len(body) != w * h * 4:
        raise CheckpointFormatError(path, f"PFM 본문 크기 불일치: {len(body)} != {w * h * 4}")
    return np.flipud(np.frombuffer(body, dtype=dtype).reshape(h, w)).astype(np.float64)
