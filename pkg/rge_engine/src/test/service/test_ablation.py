import pytest

from crud.ablation import AblationService, compare
from crud.evaluation import EvaluationService
from crud.reward import RewardService
from crud.synthetic_world import SyntheticWorldService
from crud.trainer import TrainerService
from models.enums import AblationVariant
from schemas.format import Provenance
from schemas.report import AblationRow, AblationTable

PROVENANCE = Provenance(seed=0, config_hash="0123456789abcdef", stage="ablation")


def _row(variant: AblationVariant, seed: int, psnr: float, updates: int) -> AblationRow:
    return AblationRow(variant=variant.value, seed=seed, shifted_psnr=psnr, shifted_ssim=0.5, update_count=updates)


class TestCompare:
    def test_시드별_우위_비율과_갱신_비율(self):
        # Given
        table = AblationTable(
            provenance=PROVENANCE,
            rows=[
                _row(AblationVariant.FULL, 0, 21.0, 60),
                _row(AblationVariant.FULL, 1, 19.0, 40),
                _row(AblationVariant.NO_DIFF_TRAIN, 0, 20.0, 100),
                _row(AblationVariant.NO_DIFF_TRAIN, 1, 20.0, 100),
            ],
        )

        # When
        result = compare(table, AblationVariant.FULL, AblationVariant.NO_DIFF_TRAIN)

        # Then
        assert result["seeds"] == 2
        assert result["psnr_wins"] == 0.5
        assert result["mean_psnr_delta"] == pytest.approx(0.0)
        assert result["update_ratio"] == pytest.approx(0.5)

    def test_공통_시드가_없으면_0(self):
        table = AblationTable(provenance=PROVENANCE, rows=[_row(AblationVariant.FULL, 0, 20.0, 10)])
        result = compare(table, AblationVariant.FULL, AblationVariant.NO_REWARD)
        assert result == {"seeds": 0, "psnr_wins": 0.0, "mean_psnr_delta": 0.0, "update_ratio": 0.0}


@pytest.mark.slow
class TestAblationRun:
    def test_변형마다_한_행(self, rasterizer, tiny_config):
        # Given
        trainer = TrainerService(rasterizer)
        service = AblationService(
            SyntheticWorldService(rasterizer), trainer, RewardService(trainer, threads=1), EvaluationService(rasterizer)
        )

        # When
        table = service.run(tiny_config, PROVENANCE)

        # Then
        assert [row.variant for row in table.rows] == [v.value for v in AblationVariant]
        rows = {row.variant: row for row in table.rows}
        assert rows["full"].mature_count > 0
        assert rows["no_diff_train"].mature_count == 0
        assert rows["full"].update_count < rows["no_diff_train"].update_count
        assert all(row.wall_clock_s is None for row in table.rows)
