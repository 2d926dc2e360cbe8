import argparse
import logging
import os
from typing import Tuple

from crud.pipeline import PipelineService
from di.pipeline import get_output_dir, get_pipeline_service, get_run_config
from repositories.artifact_repository import CONFIG_FILE
from routes.common import RUN_ARGUMENTS
from routes.router import CommandRouter, arg
from schemas.run_config import dump_run_config
from utils.my_enum import CLI

logger = logging.getLogger(__name__)

router = CommandRouter(tags=["Pipeline"], common=RUN_ARGUMENTS)


def _service(args: argparse.Namespace, record_config: bool = False) -> Tuple[PipelineService, str]:
    config = get_run_config(args.config, args.out, args.desk_scale)
    out = get_output_dir(config, args.out)
    service = get_pipeline_service(config, out)
    if record_config:
        dump_run_config(config, os.path.join(out, CONFIG_FILE))
    logger.info(f"실행 디렉토리: {out} (seed={config.seed}, config_hash={service.repository.config_hash})")
    return service, out


# 장면 생성
@router.command(
    "gen-scene",
    summary=CLI.GEN_SCENE.value,
    description="""
    seed로 결정되는 합성 도로 장면을 만들고 다음을 기록합니다.
        - scene/scene.rgegs: GT Gaussian 장면
        - scene/trajectory.txt: 원래 차선 + shifted 차선 포즈
        - scene/gt/<view_id>.ppm: 모든 차선의 GT 렌더
        - scene/pointcloud.ply: 원래 차선 학습 뷰의 색상 점군
    """,
)
def gen_scene(args: argparse.Namespace) -> int:
    service, _ = _service(args, record_config=True)
    service.gen_scene()
    logger.info(f"{CLI.GEN_SCENE.value} 완료")
    return 0


# 학습
@router.command(
    "train",
    summary=CLI.TRAIN.value,
    description="""
    --phase 1: 점군 초기화 후 원래 차선 GT로 재구성 학습 (phase1/scene.rgegs)
    --phase 2: expand와 동일, 고정된 리워드 맵이 없으면 종료 코드 3
    """,
    arguments=[arg("--phase", type=int, choices=[1, 2], required=True)],
)
def train(args: argparse.Namespace) -> int:
    service, _ = _service(args)
    if args.phase == 1:
        service.train_phase1()
    else:
        service.expand()
    logger.info(f"{CLI.TRAIN.value} 완료: phase={args.phase}")
    return 0


@router.command(
    "synth-priors",
    summary=CLI.SYNTH_PRIORS.value,
    description="""
    shifted 차선의 학습 뷰마다 손상된 prior 이미지, 아티팩트 마스크, 손상 레시피,
    깊이 오라클, phase 1 장면의 degraded 렌더를 priors/ 아래에 기록합니다.
    """,
)
def synth_priors(args: argparse.Namespace) -> int:
    service, _ = _service(args)
    service.synth_priors()
    logger.info(f"{CLI.SYNTH_PRIORS.value} 완료")
    return 0


@router.command("train-reward", summary=CLI.TRAIN_REWARD.value)
def train_reward(args: argparse.Namespace) -> int:
    service, _ = _service(args)
    service.train_reward()
    logger.info(f"{CLI.TRAIN_REWARD.value} 완료")
    return 0


@router.command("expand", summary=CLI.EXPAND.value)
def expand(args: argparse.Namespace) -> int:
    service, _ = _service(args)
    service.expand()
    logger.info(f"{CLI.EXPAND.value} 완료")
    return 0


_EVAL_ARGUMENTS = [
    arg("--sweep", action="store_true", help="eval.sweep_offsets 만큼 측방 이동한 뷰에서 추가 평가"),
    arg("--visualize", action="store_true", help="리워드 맵(PGM)과 layered prior(PPM) 내보내기"),
]


@router.command(
    "eval",
    summary=CLI.EVAL.value,
    description="""
    expand 장면을 held-out 뷰(원래 차선 + shifted 차선)에서 평가합니다.
        - eval/metrics_s<seed>_<hash>.jsonl: 뷰별 PSNR / SSIM, prior 뷰별 AUROC / masked MAE
        - eval/summary_s<seed>_<hash>.json: 차선별 평균, 리워드 요약, Gaussian 성숙도 수
    """,
    arguments=_EVAL_ARGUMENTS,
)
def evaluate(args: argparse.Namespace) -> int:
    service, _ = _service(args)
    service.evaluate(sweep=args.sweep, visualize=args.visualize)
    logger.info(f"{CLI.EVAL.value} 완료")
    return 0


@router.command("run-all", summary=CLI.RUN_ALL.value, arguments=_EVAL_ARGUMENTS)
def run_all(args: argparse.Namespace) -> int:
    service, _ = _service(args, record_config=True)
    report = service.run_all(sweep=args.sweep, visualize=args.visualize)
    if report.overall is not None:
        logger.info(f"{CLI.RUN_ALL.value} 완료: psnr={report.overall.psnr:.3f}, ssim={report.overall.ssim:.4f}")
    return 0
