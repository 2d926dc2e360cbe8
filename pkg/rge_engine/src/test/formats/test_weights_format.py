import numpy as np
import pytest

from engine.nn_engine import FeatureMap, build_unet
from exception.nn_exceptions import WeightFormatError
from formats.weights import MAGIC, decode_weights, encode_weights


@pytest.fixture
def net():
    return build_unet(in_channels=3, widths=(4, 8, 8)).initialize(np.random.default_rng(0)).freeze()


class TestWeights:
    def test_고정된_네트워크는_바이트_동일하게_왕복(self, net):
        # Given
        data = encode_weights(net, "0123456789abcdef")

        # When
        decoded, config_hash = decode_weights(data)

        # Then
        assert encode_weights(decoded, config_hash) == data
        assert config_hash == "0123456789abcdef"
        assert decoded.frozen
        x = FeatureMap(np.random.default_rng(1).uniform(size=(3, 16, 16)))
        np.testing.assert_array_equal(decoded.infer(x).data, net.infer(x).data)

    def test_예외_케이스_magic_불일치(self, net):
        data = b"XXXXXXXX" + encode_weights(net, "0" * 16)[len(MAGIC):]
        with pytest.raises(WeightFormatError):
            decode_weights(data)

    def test_예외_케이스_잘린_파라미터_블록(self, net):
        data = encode_weights(net, "0" * 16)
        with pytest.raises(WeightFormatError):
            decode_weights(data[:-40])

    def test_예외_케이스_trailer_뒤_추가_바이트(self, net):
        with pytest.raises(WeightFormatError):
            decode_weights(encode_weights(net, "0" * 16) + b"\x00")
