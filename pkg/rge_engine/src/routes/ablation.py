import argparse
import logging

from crud.ablation import compare
from di.pipeline import get_ablation_service, get_artifact_repository, get_output_dir, get_run_config
from models.enums import AblationVariant, Stage
from routes.common import RUN_ARGUMENTS
from routes.router import CommandRouter, arg
from utils.my_enum import CLI

logger = logging.getLogger(__name__)

router = CommandRouter(tags=["Ablation"], common=RUN_ARGUMENTS)


@router.command(
    "ablate",
    summary=CLI.ABLATE.value,
    description="""
    시드마다 full / no_reward / no_diff_train / baseline 변형을 메모리 안에서 실행하고
    shifted 차선 held-out PSNR / SSIM, 파라미터 update 수를 ablation/ 아래 JSON 표로 기록합니다.
    """,
    arguments=[
        arg("--seeds", type=int, nargs="+", default=None, help="기본값: eval.ablation_seeds"),
        arg("--variants", nargs="+", choices=[v.value for v in AblationVariant], default=None),
    ],
)
def ablate(args: argparse.Namespace) -> int:
    config = get_run_config(args.config, args.out, args.desk_scale)
    repository = get_artifact_repository(config, get_output_dir(config, args.out))
    service = get_ablation_service()

    table = service.run(config, repository.provenance(Stage.ABLATION), seeds=args.seeds, variants=args.variants)
    summary = {
        "reward_net": compare(table, AblationVariant.FULL, AblationVariant.NO_REWARD),
        "differentiated_training": compare(table, AblationVariant.FULL, AblationVariant.NO_DIFF_TRAIN),
    }
    suffix = repository.report_suffix()
    artifacts = {
        f"ablation/table_{suffix}.json": repository.save_report(Stage.ABLATION, f"table_{suffix}.json", table.model_dump(mode="json")),
        f"ablation/compare_{suffix}.json": repository.save_report(Stage.ABLATION, f"compare_{suffix}.json", summary),
    }
    repository.write_manifest(Stage.ABLATION, artifacts)
    for name, values in summary.items():
        logger.info(f"[ablate] {name}: {values}")
    return 0
