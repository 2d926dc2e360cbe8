import json
import math
from typing import Any, Iterable

import numpy as np


def remove_none_recursive(obj: Any) -> Any:
    """
    중첩 dict, list에서 None 값 제거

    Args:
        obj: dict, list, 기타 객체
    Returns:
        None이 제거된 새로운 객체
    """
    if isinstance(obj, dict):
        return {k: remove_none_recursive(v) for k, v in obj.items() if v is not None}
    elif isinstance(obj, list):
        return [remove_none_recursive(v) for v in obj if v is not None]
    else:
        return obj


def to_builtin(obj: Any) -> Any:
    """numpy 스칼라/배열을 JSON 직렬화 가능한 파이썬 타입으로 변환. NaN/Inf는 None"""
    if isinstance(obj, dict):
        return {str(k): to_builtin(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_builtin(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_builtin(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def canonical_json(obj: Any) -> str:
    """키 정렬, 공백 없는 결정적 JSON"""
    return json.dumps(to_builtin(obj), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def pretty_json(obj: Any) -> str:
    return json.dumps(to_builtin(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def json_lines(records: Iterable[Any]) -> str:
    return "".join(canonical_json(record) + "\n" for record in records)
