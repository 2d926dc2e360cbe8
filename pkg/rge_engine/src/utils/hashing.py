import hashlib
import zlib

from utils.json_utils import canonical_json

CONFIG_HASH_LENGTH = 16


def config_hash(config) -> str:
    """검증된 RunConfig의 canonical JSON에 대한 SHA-256 앞 16자리"""
    payload = canonical_json(config.model_dump(mode="json"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:CONFIG_HASH_LENGTH]


def file_digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def derive_seed(seed: int, *keys) -> list:
    """(전역 seed, 키...) → numpy SeedSequence 엔트로피. 문자열 키는 CRC32로 변환"""
    entropy = [int(seed)]
    for key in keys:
        entropy.append(zlib.crc32(key.encode("utf-8")) if isinstance(key, str) else int(key))
    return entropy
