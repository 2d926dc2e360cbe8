from typing import Generic, Optional, TypeVar

from pydantic import BaseModel, ConfigDict, Field

T = TypeVar("T")


class BaseSchema(BaseModel):
    model_config = ConfigDict(extra="forbid", use_enum_values=True)


class Provenance(BaseSchema):
    """모든 산출물에 기록되는 재현 정보"""
    seed: int
    config_hash: str = Field(min_length=16, max_length=16)
    stage: Optional[str] = None


class ArtifactEnvelope(BaseSchema, Generic[T]):
    provenance: Provenance
    data: Optional[T] = None
    message: str = ""

    model_config = {
        "json_schema_extra": {
            "example": {
                "provenance": {"seed": 0, "config_hash": "0123456789abcdef", "stage": "eval"},
                "data": {},
                "message": "String",
            }
        }
    }
