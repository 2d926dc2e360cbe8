import os
from typing import Optional

from crud.ablation import AblationService
from crud.evaluation import EvaluationService
from crud.pipeline import PipelineService
from crud.reward import RewardService
from crud.synthetic_world import SyntheticWorldService
from crud.trainer import TrainerService
from engine.rasterizer import Rasterizer
from repositories.artifact_repository import CONFIG_FILE, ArtifactRepository
from schemas.run_config import RunConfig, load_run_config
from settings import settings
from storage.local_client import LocalStorageClient


def get_run_config(config_path: Optional[str], out: Optional[str], desk_scale: Optional[float] = None) -> RunConfig:
    """--config > <out>/config.yaml > 기본값 순으로 설정 로드"""
    if config_path is None and out is not None and os.path.exists(os.path.join(out, CONFIG_FILE)):
        config_path = os.path.join(out, CONFIG_FILE)
    if config_path is None:
        config = RunConfig.default()
        return config if desk_scale is None else config.with_updates(desk_scale=desk_scale)
    return load_run_config(config_path, desk_scale=desk_scale)


def get_output_dir(config: RunConfig, out: Optional[str]) -> str:
    if out:
        return out
    return os.path.join(settings.OUTPUT_ROOT, config.output_dir)


def get_rasterizer() -> Rasterizer:
    return Rasterizer(threads=settings.THREADS)


def get_artifact_repository(config: RunConfig, out: str) -> ArtifactRepository:
    return ArtifactRepository(LocalStorageClient(out), config)


def get_trainer_service(rasterizer: Rasterizer, repository: Optional[ArtifactRepository] = None) -> TrainerService:
    dump_fn = None if repository is None else repository.dump_diverged
    return TrainerService(rasterizer, dump_fn=dump_fn)


def get_pipeline_service(config: RunConfig, out: str) -> PipelineService:
    rasterizer = get_rasterizer()
    repository = get_artifact_repository(config, out)
    trainer = get_trainer_service(rasterizer, repository)
    return PipelineService(
        repository=repository,
        world=SyntheticWorldService(rasterizer),
        trainer=trainer,
        reward=RewardService(trainer, threads=settings.THREADS),
        evaluation=EvaluationService(rasterizer),
        deterministic=settings.DETERMINISTIC,
    )


def get_ablation_service() -> AblationService:
    rasterizer = get_rasterizer()
    trainer = get_trainer_service(rasterizer)
    return AblationService(
        world=SyntheticWorldService(rasterizer),
        trainer=trainer,
        reward=RewardService(trainer, threads=settings.THREADS),
        evaluation=EvaluationService(rasterizer),
        deterministic=settings.DETERMINISTIC,
    )
