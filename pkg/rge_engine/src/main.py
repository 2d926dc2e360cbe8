import argparse
import logging
import sys
from typing import List, Optional

from exception.exception_handler import ExceptionHandlerRegistry, register_exception_handlers
from routes import ablation, config, pipeline
from routes.router import include_router
from settings import settings

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rge", description="desk-scale 리워드 기반 Gaussian splatting 장면 확장")
    subparsers = parser.add_subparsers(dest="command", required=True)
    routers = [config.router, pipeline.router, ablation.router]
    for router in routers:
        include_router(subparsers, router)
    return parser


app = ExceptionHandlerRegistry()
register_exception_handlers(app)


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=settings.LOG_LEVEL,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except Exception as e:
        return app.resolve(e)


if __name__ == "__main__":
    sys.exit(main())
