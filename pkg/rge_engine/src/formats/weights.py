"""
리워드 네트워크 가중치 (magic "RGEN0001", little-endian)
- u32 레이어 수, 레이어별 manifest: kind u8, in u16, out u16, stride u8, 이름, 입력 이름 목록
  (문자열은 u8 길이 + UTF-8)
- manifest 순서대로 파라미터 레이어의 weight, bias를 float32 블록으로
- trailer: config hash 16B
"""
import io
import struct
from typing import Tuple

import numpy as np

from engine.nn_engine import LayerSpec, NetGraph
from exception.nn_exceptions import WeightFormatError
from models.enums import LayerKind

MAGIC = b"RGEN0001"
KIND_CODES = {kind: code for code, kind in enumerate(LayerKind)}
CODE_KINDS = {code: kind for kind, code in KIND_CODES.items()}


def _write_str(buf: io.BytesIO, text: str):
    raw = text.encode("utf-8")
    buf.write(struct.pack("<B", len(raw)))
    buf.write(raw)


def _read(buf: io.BytesIO, fmt: str):
    size = struct.calcsize(fmt)
    chunk = buf.read(size)
    if len(chunk) != size:
        raise WeightFormatError("파일이 중간에 끝났습니다.")
    return struct.unpack(fmt, chunk)


def _read_str(buf: io.BytesIO) -> str:
    (length,) = _read(buf, "<B")
    raw = buf.read(length)
    if len(raw) != length:
        raise WeightFormatError("문자열이 중간에 끝났습니다.")
    return raw.decode("utf-8")


def _param_shape(layer: LayerSpec) -> Tuple[tuple, tuple]:
    if layer.kind == LayerKind.CONV3X3:
        return (layer.out_channels, layer.in_channels, 3, 3), (layer.out_channels,)
    return (layer.in_channels, layer.out_channels, 3, 3), (layer.out_channels,)


def encode_weights(net: NetGraph, config_hash: str) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(net.layers)))
    for layer in net.layers:
        buf.write(struct.pack("<BHHB", KIND_CODES[LayerKind(layer.kind)], layer.in_channels, layer.out_channels, layer.stride))
        _write_str(buf, layer.name)
        buf.write(struct.pack("<B", len(layer.inputs)))
        for source in layer.inputs:
            _write_str(buf, source)
    for name in net.parameter_names():
        buf.write(np.ascontiguousarray(net.params[name], dtype="<f4").tobytes())
    buf.write(config_hash.encode("ascii").ljust(16, b"0")[:16])
    return buf.getvalue()


def decode_weights(data: bytes) -> Tuple[NetGraph, str]:
    """bytes → (고정된 NetGraph, config hash)"""
    buf = io.BytesIO(data)
    if buf.read(len(MAGIC)) != MAGIC:
        raise WeightFormatError("magic 불일치")
    (count,) = _read(buf, "<I")
    layers = []
    for _ in range(count):
        code, in_c, out_c, stride = _read(buf, "<BHHB")
        if code not in CODE_KINDS:
            raise WeightFormatError(f"알 수 없는 레이어 코드: {code}")
        name = _read_str(buf)
        (n_inputs,) = _read(buf, "<B")
        inputs = [_read_str(buf) for _ in range(n_inputs)]
        layers.append(LayerSpec(name, CODE_KINDS[code], in_c, out_c, stride, inputs))
    try:
        net = NetGraph(layers)
    except ValueError as e:
        raise WeightFormatError(str(e)) from e

    for layer in net.layers:
        if layer.kind not in (LayerKind.CONV3X3, LayerKind.CONV_TRANSPOSE3X3):
            continue
        for suffix, shape in zip(("weight", "bias"), _param_shape(layer)):
            size = int(np.prod(shape)) * 4
            chunk = buf.read(size)
            if len(chunk) != size:
                raise WeightFormatError(f"{layer.name}.{suffix} 블록이 잘렸습니다.")
            net.params[f"{layer.name}.{suffix}"] = np.frombuffer(chunk, dtype="<f4").reshape(shape).astype(np.float64)
    trailer = buf.read(16)
    if len(trailer) != 16 or buf.read(1):
        raise WeightFormatError("trailer 길이 불일치")
    net.frozen = True
    return net, trailer.decode("ascii")
