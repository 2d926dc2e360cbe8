from abc import ABC, abstractmethod


class StorageClient(ABC):
    @abstractmethod
    def write_bytes(self, path: str, data: bytes):
        """파일 전체를 원자적으로 기록 (임시 파일 → rename)"""
        pass

    @abstractmethod
    def read_bytes(self, path: str) -> bytes:
        pass

    @abstractmethod
    def exists(self, path: str) -> bool:
        pass

    def write_text(self, path: str, text: str):
        self.write_bytes(path, text.encode("utf-8"))

    def read_text(self, path: str) -> str:
        return self.read_bytes(path).decode("utf-8")
