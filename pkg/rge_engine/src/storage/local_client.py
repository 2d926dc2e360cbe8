import logging
import os
import tempfile

from .client import StorageClient

logger = logging.getLogger(__name__)


class LocalStorageClient(StorageClient):
    """실행 디렉토리(root) 아래 로컬 파일시스템 저장소"""

    def __init__(self, root: str):
        self.root = os.path.abspath(root)
        os.makedirs(self.root, exist_ok=True)

    def full_path(self, path: str) -> str:
        return os.path.join(self.root, path)

    def write_bytes(self, path: str, data: bytes):
        target = self.full_path(path)
        directory = os.path.dirname(target)
        os.makedirs(directory, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(data)
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.remove(tmp)
            raise
        logger.debug(f"저장: {path} ({len(data)} bytes)")

    def read_bytes(self, path: str) -> bytes:
        with open(self.full_path(path), "rb") as f:
            return f.read()

    def exists(self, path: str) -> bool:
        return os.path.exists(self.full_path(path))
