import argparse
import logging

from schemas.run_config import RunConfig, dump_run_config
from routes.router import CommandRouter, arg
from utils.hashing import config_hash
from utils.my_enum import CLI

logger = logging.getLogger(__name__)

router = CommandRouter(tags=["Config"])


@router.command(
    "init-config",
    summary=CLI.INIT_CONFIG.value,
    description="""
    모든 상수가 기본값으로 채워진 RunConfig를 YAML로 씁니다.
    이 파일만으로 파이프라인 전체를 재현할 수 있습니다.
    """,
    arguments=[
        arg("--out", required=True, help="출력 YAML 경로"),
        arg("--seed", type=int, default=0),
        arg("--desk-scale", dest="desk_scale", type=float, default=None),
    ],
)
def init_config(args: argparse.Namespace) -> int:
    overrides = {"seed": args.seed}
    if args.desk_scale is not None:
        overrides["desk_scale"] = args.desk_scale
    config = RunConfig.default(**overrides)
    dump_run_config(config, args.out)
    logger.info(f"{CLI.INIT_CONFIG.value}: {args.out} (config_hash={config_hash(config)})")
    return 0
