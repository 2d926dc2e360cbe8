import logging
from typing import Callable, List, Tuple, Type

from pydantic import ValidationError

from exception.config_exceptions import ConfigError
from exception.nn_exceptions import NNEngineError, NonFiniteGradient, NonFiniteValue
from exception.pipeline_exceptions import (
    CheckpointFormatError,
    InvalidConfig,
    MatureBlockModified,
    MissingArtifact,
    NumericalDivergence,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_MISSING_PREREQUISITE = 3
EXIT_DIVERGENCE = 4

Handler = Callable[[Exception], int]


# -----------------------------
# 헬퍼 함수
# -----------------------------
def safe_exit_code(value, default=EXIT_FAILURE) -> int:
    if value is None:
        return default
    if isinstance(value, int) and 0 <= value < 256:
        return value
    return default


def describe_validation_error(exc: ValidationError) -> str:
    """pydantic ValidationError의 첫 번째 오류를 사람이 읽을 수 있는 메시지로 변환"""
    errors = exc.errors()
    if not errors:
        return str(exc)
    first = errors[0]
    location = ".".join(str(p) for p in first.get("loc", ()))
    return f"{location}: {first.get('msg', '잘못된 설정입니다.')}"


# -----------------------------
# 공통 핸들러 팩토리
# -----------------------------
def create_exception_handler(exit_code: int) -> Handler:
    def handler(exc: Exception) -> int:
        logger.error(f"{type(exc).__name__}: {str(exc)}")
        return safe_exit_code(exit_code)
    return handler


def create_validation_exception_handler() -> Handler:
    def handler(exc: ValidationError) -> int:
        logger.error(f"ValidationError: {describe_validation_error(exc)}")
        return EXIT_CONFIG
    return handler


def create_divergence_handler() -> Handler:
    def handler(exc: NumericalDivergence) -> int:
        logger.error(f"NumericalDivergence: stage={exc.stage}, iteration={exc.iteration}, dump={exc.dump_path}")
        logger.error(str(exc))
        return EXIT_DIVERGENCE
    return handler


class ExceptionHandlerRegistry:
    """
    예외 타입 → 종료 코드 매핑. 먼저 등록된 구체 타입이 우선한다.
    등록되지 않은 예외는 트레이스백을 남기고 EXIT_FAILURE
    """

    def __init__(self):
        self._handlers: List[Tuple[Type[BaseException], Handler]] = []

    def add_exception_handler(self, exc_type: Type[BaseException], handler: Handler):
        self._handlers.append((exc_type, handler))

    def resolve(self, exc: BaseException) -> int:
        for exc_type, handler in self._handlers:
            if isinstance(exc, exc_type):
                return handler(exc)
        logger.exception(f"처리되지 않은 예외: {exc}")
        return EXIT_FAILURE


# -----------------------------
# 핸들러 등록
# -----------------------------
def register_exception_handlers(app: ExceptionHandlerRegistry):
    # 설정 오류
    app.add_exception_handler(ConfigError, create_exception_handler(EXIT_CONFIG))
    app.add_exception_handler(InvalidConfig, create_exception_handler(EXIT_CONFIG))
    app.add_exception_handler(ValidationError, create_validation_exception_handler())

    # 선행 산출물 누락
    app.add_exception_handler(MissingArtifact, create_exception_handler(EXIT_MISSING_PREREQUISITE))

    # 수치 발산
    app.add_exception_handler(NumericalDivergence, create_divergence_handler())
    app.add_exception_handler(NonFiniteGradient, create_exception_handler(EXIT_DIVERGENCE))
    app.add_exception_handler(NonFiniteValue, create_exception_handler(EXIT_DIVERGENCE))
    app.add_exception_handler(MatureBlockModified, create_exception_handler(EXIT_DIVERGENCE))

    # 그 외
    app.add_exception_handler(CheckpointFormatError, create_exception_handler(EXIT_FAILURE))
    app.add_exception_handler(NNEngineError, create_exception_handler(EXIT_FAILURE))
    app.add_exception_handler(OSError, create_exception_handler(EXIT_FAILURE))
