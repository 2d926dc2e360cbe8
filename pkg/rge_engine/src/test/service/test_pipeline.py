import numpy as np
import pytest

from crud.pipeline import ensure_mature_block_unchanged
from exception.pipeline_exceptions import MatureBlockModified
from factories import create_gaussians
from models.enums import Maturity


@pytest.fixture
def tagged():
    gs = create_gaussians(count=8, seed=3)
    gs.maturity[:4] = int(Maturity.MATURE)
    return gs


class TestMatureBlockGuard:
    def test_Immature_행만_바뀌면_통과(self, tagged):
        # Given
        after = tagged.copy()
        after.positions[4:] += 0.05
        after.colors[5] = 0.0

        # When & Then
        ensure_mature_block_unchanged(tagged, after)

    def test_Immature_행이_추가되어도_통과(self, tagged):
        ensure_mature_block_unchanged(tagged, tagged.concat(create_gaussians(count=3, seed=4)))

    def test_예외_케이스_Mature_행의_값이_바뀜(self, tagged):
        # Given
        after = tagged.copy()
        after.opacity_logits[1] += 1e-3

        # When & Then
        with pytest.raises(MatureBlockModified):
            ensure_mature_block_unchanged(tagged, after)

    def test_예외_케이스_Mature_행이_사라짐(self, tagged):
        # Given
        after = tagged.select(np.arange(1, len(tagged)))

        # When & Then
        with pytest.raises(MatureBlockModified) as e:
            ensure_mature_block_unchanged(tagged, after)
        assert (e.value.before, e.value.after) == (4, 3)
