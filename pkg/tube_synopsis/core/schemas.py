"""
On-disk schemas for tube databases and schedules
"""

from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from .tube_model import Params

TUBE_DB_VERSION = "tube-db/1"
SCHEDULE_VERSION = "schedule/1"

BoxRecord = Tuple[int, int, int, int, int]


class _Strict(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class SceneInfo(_Strict):
    width: int = Field(ge=1)
    height: int = Field(ge=1)
    fps: float = Field(25.0, gt=0)
    background: Optional[str] = None


class TubeRecord(_Strict):
    id: int
    object_id: Optional[int] = None
    boxes: List[BoxRecord] = Field(min_length=1, description="[frame, x, y, w, h] per frame")


class TubeDbFile(_Strict):
    version: Literal["tube-db/1"] = TUBE_DB_VERSION
    scene: SceneInfo
    tubes: List[TubeRecord] = Field(default_factory=list)


class PairEnergyRecord(_Strict):
    a: int
    b: int
    e_t: float
    e_o: float
    e_c: float


class EnergyRecord(_Strict):
    e_activity: float
    e_temporal: float
    e_chrono: float
    e_collision: float
    total: float
    per_pair: List[PairEnergyRecord] = Field(default_factory=list)


class ScheduleFile(_Strict):
    version: Literal["schedule/1"] = SCHEDULE_VERSION
    tube_db_hash: str = Field(min_length=64, max_length=64)
    params: Params
    groups: List[List[int]]
    shifts: List[Tuple[int, int]] = Field(description="[tube id, frame shift] pairs in id order")
    length: int = Field(ge=0)
    energy: EnergyRecord
