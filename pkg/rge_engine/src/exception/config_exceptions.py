from typing import Optional


class ConfigError(Exception):
    def __init__(self, message: str, section: Optional[str] = None, field: Optional[str] = None):
        self.message = message
        self.section = section
        self.field = field
        location = ".".join(p for p in (section and f"[{section}]", field) if p)
        super().__init__(f"{location + ': ' if location else ''}{message}")
