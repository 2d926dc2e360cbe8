import argparse
from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Tuple

Handler = Callable[[argparse.Namespace], int]
Argument = Tuple[Sequence[str], dict]


def arg(*flags: str, **kwargs) -> Argument:
    return flags, kwargs


@dataclass
class Command:
    name: str
    handler: Handler
    summary: str
    description: str = ""
    arguments: List[Argument] = field(default_factory=list)


class CommandRouter:
    """
    서브커맨드 그룹
    @router.command(...)로 핸들러를 등록하고 include_router로 루트 파서에 붙인다.
    """

    def __init__(self, tags: Sequence[str] = (), common: Sequence[Argument] = ()):
        self.tags = list(tags)
        self.common = list(common)
        self.commands: List[Command] = []

    def command(self, name: str, summary: str, description: str = "", arguments: Sequence[Argument] = ()):
        def decorator(handler: Handler) -> Handler:
            self.commands.append(Command(name, handler, summary, description, list(arguments)))
            return handler
        return decorator


def include_router(subparsers, router: CommandRouter):
    for cmd in router.commands:
        parser = subparsers.add_parser(cmd.name, help=cmd.summary, description=cmd.description or cmd.summary)
        for flags, kwargs in router.common + cmd.arguments:
            parser.add_argument(*flags, **kwargs)
        parser.set_defaults(handler=cmd.handler)
