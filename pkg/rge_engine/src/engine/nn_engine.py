"""
특징 맵 단위 역전파 엔진 (배치 크기 1, C×H×W)

레이어: input, conv3x3(stride 1|2), conv_transpose3x3(stride 2), relu, sigmoid, concat
NetGraph는 위상 정렬된 LayerSpec 목록이며, 각 레이어는 이름으로 입력을 참조한다.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from exception.nn_exceptions import NonFiniteValue, StaleGraph
from exception.splat_exceptions import ShapeMismatch
from models.enums import LayerKind

HEAD_BIAS = 2.0
HEAD_WEIGHT_SCALE = 0.01
SPATIAL_MULTIPLE = 8

_PARAMETRIC = (LayerKind.CONV3X3, LayerKind.CONV_TRANSPOSE3X3)


@dataclass
class FeatureMap:
    data: np.ndarray
    grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.data.shape

    def check_finite(self, where: str) -> "FeatureMap":
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteValue(where)
        return self


@dataclass
class LayerSpec:
    name: str
    kind: LayerKind
    in_channels: int = 0
    out_channels: int = 0
    stride: int = 1
    inputs: List[str] = field(default_factory=list)
    init: str = "he_uniform"


# ============================
# 컨볼루션 커널 (3×3, zero padding 1)
# ============================
def conv3x3_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int) -> np.ndarray:
    """x (Cin,H,W), weight (Cout,Cin,3,3) → (Cout, ceil(H/s), ceil(W/s))"""
    _, h, w = x.shape
    ho, wo = -(-h // stride), -(-w // stride)
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    out = np.zeros((weight.shape[0], ho, wo))
    for ky in range(3):
        for kx in range(3):
            patch = xp[:, ky:ky + stride * (ho - 1) + 1:stride, kx:kx + stride * (wo - 1) + 1:stride]
            out += np.tensordot(weight[:, :, ky, kx], patch, axes=(1, 0))
    return out + bias[:, None, None]


def conv3x3_backward(x: np.ndarray, weight: np.ndarray, grad_out: np.ndarray, stride: int):
    _, h, w = x.shape
    _, ho, wo = grad_out.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    grad_xp = np.zeros_like(xp)
    grad_w = np.zeros_like(weight)
    for ky in range(3):
        for kx in range(3):
            sl = (slice(None), slice(ky, ky + stride * (ho - 1) + 1, stride), slice(kx, kx + stride * (wo - 1) + 1, stride))
            grad_w[:, :, ky, kx] = np.tensordot(grad_out, xp[sl], axes=((1, 2), (1, 2)))
            grad_xp[sl] += np.tensordot(weight[:, :, ky, kx], grad_out, axes=(0, 0))
    return grad_xp[:, 1:h + 1, 1:w + 1], grad_w, grad_out.sum(axis=(1, 2))


def conv_transpose3x3_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """stride-2 컨볼루션의 수반 연산. x (Cin,H,W), weight (Cin,Cout,3,3) → (Cout, 2H, 2W)"""
    _, h, w = x.shape
    buf = np.zeros((weight.shape[1], 2 * h + 1, 2 * w + 1))
    for ky in range(3):
        for kx in range(3):
            buf[:, ky:ky + 2 * h - 1:2, kx:kx + 2 * w - 1:2] += np.tensordot(weight[:, :, ky, kx], x, axes=(0, 0))
    return buf[:, 1:, 1:] + bias[:, None, None]


def conv_transpose3x3_backward(x: np.ndarray, weight: np.ndarray, grad_out: np.ndarray):
    _, h, w = x.shape
    gbuf = np.zeros((grad_out.shape[0], 2 * h + 1, 2 * w + 1))
    gbuf[:, 1:, 1:] = grad_out
    grad_x = np.zeros_like(x)
    grad_w = np.zeros_like(weight)
    for ky in range(3):
        for kx in range(3):
            patch = gbuf[:, ky:ky + 2 * h - 1:2, kx:kx + 2 * w - 1:2]
            grad_x += np.tensordot(weight[:, :, ky, kx], patch, axes=(1, 0))
            grad_w[:, :, ky, kx] = np.tensordot(x, patch, axes=((1, 2), (1, 2)))
    return grad_x, grad_w, grad_out.sum(axis=(1, 2))


def sigmoid(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


# ============================
# 그래프
# ============================
class NetGraph:
    def __init__(self, layers: Sequence[LayerSpec], params: Optional[Dict[str, np.ndarray]] = None):
        self.layers: List[LayerSpec] = list(layers)
        self._validate_topology()
        self.params: Dict[str, np.ndarray] = params if params is not None else {}
        self.grads: Dict[str, np.ndarray] = {}
        self.frozen = False
        self._cache: Optional[Dict[str, np.ndarray]] = None
        self._input: Optional[FeatureMap] = None

    @property
    def input_layer(self) -> LayerSpec:
        return self.layers[0]

    @property
    def output_layer(self) -> LayerSpec:
        return self.layers[-1]

    def parameter_names(self) -> List[str]:
        names = []
        for layer in self.layers:
            if layer.kind in _PARAMETRIC:
                names += [f"{layer.name}.weight", f"{layer.name}.bias"]
        return names

    def _validate_topology(self):
        if not self.layers or self.layers[0].kind != LayerKind.INPUT:
            raise ValueError("첫 번째 레이어는 input이어야 합니다.")
        seen = set()
        for index, layer in enumerate(self.layers):
            if layer.name in seen:
                raise ValueError(f"레이어 이름 중복: {layer.name}")
            if index > 0 and not layer.inputs:
                layer.inputs = [self.layers[index - 1].name]
            for source in layer.inputs:
                if source not in seen:
                    raise ValueError(f"레이어 '{layer.name}'의 입력 '{source}'가 앞에 정의되지 않았습니다.")
            if layer.kind == LayerKind.CONCAT and len(layer.inputs) < 2:
                raise ValueError(f"concat 레이어 '{layer.name}'에는 입력이 2개 이상 필요합니다.")
            seen.add(layer.name)

    # ============================
    # 초기화 / 고정
    # ============================
    def initialize(self, rng: np.random.Generator, head_bias: float = HEAD_BIAS) -> "NetGraph":
        """He-uniform 초기화. 마지막 파라미터 레이어(예측 헤드)는 가중치 축소 + bias 고정"""
        parametric = [layer for layer in self.layers if layer.kind in _PARAMETRIC]
        for layer in parametric:
            fan_in = layer.in_channels * 9
            bound = np.sqrt(6.0 / fan_in)
            if layer.kind == LayerKind.CONV3X3:
                shape = (layer.out_channels, layer.in_channels, 3, 3)
            else:
                shape = (layer.in_channels, layer.out_channels, 3, 3)
            weight = rng.uniform(-bound, bound, size=shape)
            bias = np.zeros(layer.out_channels)
            if layer is parametric[-1]:
                weight *= HEAD_WEIGHT_SCALE
                bias[:] = head_bias
            self.params[f"{layer.name}.weight"] = weight
            self.params[f"{layer.name}.bias"] = bias
        return self

    def freeze(self) -> "NetGraph":
        """파라미터를 float32 표현으로 반올림해 저장 파일과 비트 단위로 일치시킨다."""
        for name in self.parameter_names():
            self.params[name] = self.params[name].astype(np.float32).astype(np.float64)
        self.frozen = True
        self._cache = None
        return self

    # ============================
    # 전방 / 역방향
    # ============================
    def forward(self, inp: FeatureMap) -> FeatureMap:
        acts = self._run(inp.data)
        self._cache = acts
        self._input = inp
        return FeatureMap(acts[self.output_layer.name]).check_finite(f"{self.output_layer.name} 출력")

    def infer(self, inp: FeatureMap) -> FeatureMap:
        """역방향용 캐시를 남기지 않는 전방 계산 (여러 스레드에서 동시에 호출 가능)"""
        acts = self._run(inp.data)
        return FeatureMap(acts[self.output_layer.name]).check_finite(f"{self.output_layer.name} 출력")

    def _run(self, data: np.ndarray) -> Dict[str, np.ndarray]:
        expected_c = self.input_layer.out_channels
        if data.ndim != 3 or data.shape[0] != expected_c:
            raise ShapeMismatch("input channels", expected_c, data.shape)
        acts: Dict[str, np.ndarray] = {self.input_layer.name: data}
        for layer in self.layers[1:]:
            xs = [acts[name] for name in layer.inputs]
            acts[layer.name] = self._layer_forward(layer, xs)
        return acts

    def backward(self, grad_output: np.ndarray) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
        """∂L/∂output → (파라미터 그래디언트, ∂L/∂input). 한 번의 forward당 한 번만 호출 가능"""
        if self._cache is None:
            raise StaleGraph()
        acts = self._cache
        out_name = self.output_layer.name
        if grad_output.shape != acts[out_name].shape:
            raise ShapeMismatch("grad_output", acts[out_name].shape, grad_output.shape)

        grads_act: Dict[str, np.ndarray] = {out_name: grad_output}
        param_grads: Dict[str, np.ndarray] = {}
        for layer in reversed(self.layers[1:]):
            g = grads_act.pop(layer.name, None)
            if g is None:
                continue
            xs = [acts[name] for name in layer.inputs]
            for source, gx in zip(layer.inputs, self._layer_backward(layer, xs, acts[layer.name], g, param_grads)):
                if source in grads_act:
                    grads_act[source] = grads_act[source] + gx
                else:
                    grads_act[source] = gx

        for name in self.parameter_names():
            param_grads.setdefault(name, np.zeros_like(self.params[name]))
        self.grads = param_grads
        self._cache = None
        grad_input = grads_act.get(self.input_layer.name, np.zeros_like(acts[self.input_layer.name]))
        self._input.grad = grad_input
        return param_grads, grad_input

    def _layer_forward(self, layer: LayerSpec, xs: List[np.ndarray]) -> np.ndarray:
        kind = layer.kind
        if kind == LayerKind.CONV3X3:
            x = xs[0]
            if x.shape[0] != layer.in_channels:
                raise ShapeMismatch(f"{layer.name} input channels", layer.in_channels, x.shape[0])
            return conv3x3_forward(x, self.params[f"{layer.name}.weight"], self.params[f"{layer.name}.bias"], layer.stride)
        if kind == LayerKind.CONV_TRANSPOSE3X3:
            x = xs[0]
            if x.shape[0] != layer.in_channels:
                raise ShapeMismatch(f"{layer.name} input channels", layer.in_channels, x.shape[0])
            return conv_transpose3x3_forward(x, self.params[f"{layer.name}.weight"], self.params[f"{layer.name}.bias"])
        if kind == LayerKind.RELU:
            return np.maximum(xs[0], 0.0)
        if kind == LayerKind.SIGMOID:
            return sigmoid(xs[0])
        if kind == LayerKind.CONCAT:
            spatial = {x.shape[1:] for x in xs}
            if len(spatial) != 1:
                raise ShapeMismatch(f"{layer.name} concat spatial", xs[0].shape[1:], [x.shape[1:] for x in xs])
            return np.concatenate(xs, axis=0)
        raise ValueError(f"지원하지 않는 레이어 종류: {kind}")

    def _layer_backward(
        self, layer: LayerSpec, xs: List[np.ndarray], out: np.ndarray, g: np.ndarray, param_grads: Dict[str, np.ndarray]
    ) -> List[np.ndarray]:
        kind = layer.kind
        if kind == LayerKind.CONV3X3:
            gx, gw, gb = conv3x3_backward(xs[0], self.params[f"{layer.name}.weight"], g, layer.stride)
        elif kind == LayerKind.CONV_TRANSPOSE3X3:
            gx, gw, gb = conv_transpose3x3_backward(xs[0], self.params[f"{layer.name}.weight"], g)
        elif kind == LayerKind.RELU:
            return [g * (xs[0] > 0)]
        elif kind == LayerKind.SIGMOID:
            return [g * out * (1.0 - out)]
        elif kind == LayerKind.CONCAT:
            splits = np.cumsum([x.shape[0] for x in xs])[:-1]
            return np.split(g, splits, axis=0)
        else:
            raise ValueError(f"지원하지 않는 레이어 종류: {kind}")
        param_grads[f"{layer.name}.weight"] = gw
        param_grads[f"{layer.name}.bias"] = gb
        return [gx]


# ============================
# 리워드 U-Net
# ============================
def build_unet(in_channels: int = 3, widths: Sequence[int] = (16, 32, 64)) -> NetGraph:
    """
    3단 인코더-디코더 U-Net (스킵 연결 concat), sigmoid 예측 헤드
    해상도: H → H/2 → H/4 → H/8 → H/4 → H/2 → H
    """
    w0, w1, w2 = widths
    L = LayerSpec
    layers = [
        L("input", LayerKind.INPUT, out_channels=in_channels),
        L("enc0", LayerKind.CONV3X3, in_channels, w0),
        L("enc0_act", LayerKind.RELU),
        L("down1", LayerKind.CONV3X3, w0, w1, stride=2),
        L("down1_act", LayerKind.RELU),
        L("down2", LayerKind.CONV3X3, w1, w2, stride=2),
        L("down2_act", LayerKind.RELU),
        L("down3", LayerKind.CONV3X3, w2, w2, stride=2),
        L("down3_act", LayerKind.RELU),
        L("up3", LayerKind.CONV_TRANSPOSE3X3, w2, w2, stride=2),
        L("up3_act", LayerKind.RELU),
        L("skip3", LayerKind.CONCAT, inputs=["up3_act", "down2_act"]),
        L("dec3", LayerKind.CONV3X3, 2 * w2, w1),
        L("dec3_act", LayerKind.RELU),
        L("up2", LayerKind.CONV_TRANSPOSE3X3, w1, w1, stride=2),
        L("up2_act", LayerKind.RELU),
        L("skip2", LayerKind.CONCAT, inputs=["up2_act", "down1_act"]),
        L("dec2", LayerKind.CONV3X3, 2 * w1, w0),
        L("dec2_act", LayerKind.RELU),
        L("up1", LayerKind.CONV_TRANSPOSE3X3, w0, w0, stride=2),
        L("up1_act", LayerKind.RELU),
        L("skip1", LayerKind.CONCAT, inputs=["up1_act", "enc0_act"]),
        L("dec1", LayerKind.CONV3X3, 2 * w0, w0),
        L("dec1_act", LayerKind.RELU),
        L("head", LayerKind.CONV3X3, w0, 1),
        L("head_act", LayerKind.SIGMOID),
    ]
    return NetGraph(layers)


# ============================
# 모듈 경계 패딩 (H, W를 8의 배수로)
# ============================
def pad_to_multiple(image_chw: np.ndarray, multiple: int = SPATIAL_MULTIPLE) -> Tuple[np.ndarray, Tuple[int, int]]:
    _, h, w = image_chw.shape
    ph, pw = (-h) % multiple, (-w) % multiple
    if ph == 0 and pw == 0:
        return image_chw, (h, w)
    return np.pad(image_chw, ((0, 0), (0, ph), (0, pw)), mode="edge"), (h, w)


def crop_to(array_chw: np.ndarray, size: Tuple[int, int]) -> np.ndarray:
    return array_chw[:, : size[0], : size[1]]