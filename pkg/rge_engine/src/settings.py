import os

from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

load_dotenv()


class Settings(BaseSettings):
    """프로세스 단위 설정 (환경 변수 RGE_*)"""
    model_config = SettingsConfigDict(env_prefix="RGE_", extra="ignore")

    THREADS: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1, description="래스터라이저/추론 워커 수 상한")
    DETERMINISTIC: bool = Field(True, description="타일 순서 고정 리덕션 사용 여부")
    LOG_LEVEL: str = Field("INFO", description="로그 레벨")
    OUTPUT_ROOT: str = Field("./runs", description="--out 미지정 시 기본 출력 루트")
    TILE_SIZE: int = Field(16, ge=1, description="래스터라이저 타일 크기(px)")


settings = Settings()
