"""
Core domain types for tube rearrangement

A tube is one tracked object's per-frame bounding boxes over a contiguous
frame span. A synopsis is described by a Mapping that shifts each tube in
time (never in space). Runtime types are frozen dataclasses; Params is a
validated pydantic model because it also travels through config files and
CLI flags.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from pydantic import ValidationError as PydanticValidationError

from ..exceptions import OutOfRangeError, ValidationError

logger = logging.getLogger(__name__)

FrameInterval = Tuple[int, int]


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned object extent at one frame"""

    frame: int
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.frame < 0:
            raise ValidationError(f"frame index must be >= 0, got {self.frame}")
        if self.w < 1 or self.h < 1:
            raise ValidationError(f"box at frame {self.frame} has non-positive extent {self.w}x{self.h}")

    @property
    def center(self) -> Tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def area(self) -> int:
        return self.w * self.h

    def as_record(self) -> Tuple[int, int, int, int, int]:
        return (self.frame, self.x, self.y, self.w, self.h)

    def inside(self, width: int, height: int) -> bool:
        return self.x >= 0 and self.y >= 0 and self.x + self.w <= width and self.y + self.h <= height


@dataclass(frozen=True)
class Tube:
    """
    One tracked object over frames start_frame..end_frame.

    Boxes must cover every frame of the span exactly once, in order.
    ``object_id`` is an optional ground-truth label of the physical object
    (set by the synthetic generator, absent for tracked tubes).
    """

    id: int
    boxes: Tuple[BoundingBox, ...]
    object_id: Optional[int] = None
    start_frame: int = field(init=False)
    end_frame: int = field(init=False)
    xywh: np.ndarray = field(init=False, repr=False, compare=False)
    centers: np.ndarray = field(init=False, repr=False, compare=False)
    areas: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        boxes = tuple(self.boxes)
        if not boxes:
            raise ValidationError(f"tube {self.id}: no boxes")
        first = boxes[0].frame
        for index, box in enumerate(boxes):
            if box.frame != first + index:
                raise ValidationError(
                    f"tube {self.id}: record {index} has frame {box.frame}, expected {first + index} "
                    "(frames must be consecutive without gaps or duplicates)"
                )
        xywh = np.array([[b.x, b.y, b.w, b.h] for b in boxes], dtype=float)
        xywh.setflags(write=False)
        centers = xywh[:, :2] + xywh[:, 2:] / 2.0
        centers.setflags(write=False)
        areas = xywh[:, 2] * xywh[:, 3]
        areas.setflags(write=False)
        object.__setattr__(self, "boxes", boxes)
        object.__setattr__(self, "start_frame", first)
        object.__setattr__(self, "end_frame", boxes[-1].frame)
        object.__setattr__(self, "xywh", xywh)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "areas", areas)

    @classmethod
    def from_records(cls, tube_id: int, records: Iterable[Sequence[int]], object_id: Optional[int] = None) -> "Tube":
        """Build a tube from ``[frame, x, y, w, h]`` records"""
        boxes = []
        for index, record in enumerate(records):
            try:
                frame, x, y, w, h = (int(v) for v in record)
                boxes.append(BoundingBox(frame, x, y, w, h))
            except (TypeError, ValueError) as e:
                raise ValidationError(f"tube {tube_id}: record {index} is invalid: {e}") from e
        return cls(id=tube_id, boxes=tuple(boxes), object_id=object_id)

    @property
    def length(self) -> int:
        return self.end_frame - self.start_frame + 1

    @property
    def span(self) -> FrameInterval:
        return (self.start_frame, self.end_frame)

    @property
    def mean_area(self) -> float:
        return float(self.areas.mean())

    def box_at(self, frame: int) -> BoundingBox:
        if frame < self.start_frame or frame > self.end_frame:
            raise OutOfRangeError(f"frame {frame} outside tube {self.id} span [{self.start_frame}, {self.end_frame}]")
        return self.boxes[frame - self.start_frame]


@dataclass(frozen=True)
class TubeDatabase:
    """The original video as a set of tubes plus scene metadata"""

    tubes: Tuple[Tube, ...]
    scene_width: int
    scene_height: int
    fps: float = 25.0
    background: Optional[str] = None
    _index: Dict[int, Tube] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.scene_width < 1 or self.scene_height < 1:
            raise ValidationError(f"scene dimensions must be positive, got {self.scene_width}x{self.scene_height}")
        if not self.fps > 0:
            raise ValidationError(f"fps must be positive, got {self.fps}")
        tubes = tuple(sorted(self.tubes, key=lambda t: t.id))
        index: Dict[int, Tube] = {}
        for tube in tubes:
            if tube.id in index:
                raise ValidationError(f"duplicate tube id {tube.id}")
            for record, box in enumerate(tube.boxes):
                if not box.inside(self.scene_width, self.scene_height):
                    raise ValidationError(
                        f"tube {tube.id}: record {record} box {box.as_record()} lies outside the "
                        f"{self.scene_width}x{self.scene_height} scene"
                    )
            index[tube.id] = tube
        object.__setattr__(self, "tubes", tubes)
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.tubes)

    def __iter__(self) -> Iterator[Tube]:
        return iter(self.tubes)

    def __contains__(self, tube_id: int) -> bool:
        return tube_id in self._index

    @property
    def ids(self) -> List[int]:
        return [t.id for t in self.tubes]

    @property
    def scene_area(self) -> int:
        return self.scene_width * self.scene_height

    def get(self, tube_id: int) -> Tube:
        try:
            return self._index[tube_id]
        except KeyError:
            raise ValidationError(f"unknown tube id {tube_id}") from None

    def original_span(self) -> int:
        """Length of the original video covered by tubes (0 when empty)"""
        if not self.tubes:
            return 0
        return max(t.end_frame for t in self.tubes) - min(t.start_frame for t in self.tubes) + 1

    def canonical_dict(self) -> dict:
        return {
            "version": "tube-db/1",
            "scene": {
                "width": self.scene_width,
                "height": self.scene_height,
                "fps": self.fps,
                "background": self.background,
            },
            "tubes": [
                {
                    "id": t.id,
                    "object_id": t.object_id,
                    "boxes": [list(b.as_record()) for b in t.boxes],
                }
                for t in self.tubes
            ],
        }

    def content_hash(self) -> str:
        payload = json.dumps(self.canonical_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Group:
    """Tubes shifted rigidly together"""

    member_ids: frozenset

    def __post_init__(self):
        members = frozenset(self.member_ids)
        if not members:
            raise ValidationError("a group needs at least one tube")
        object.__setattr__(self, "member_ids", members)

    @property
    def sorted_ids(self) -> List[int]:
        return sorted(self.member_ids)

    def __len__(self) -> int:
        return len(self.member_ids)

    def __contains__(self, tube_id: int) -> bool:
        return tube_id in self.member_ids


@dataclass(frozen=True)
class Mapping:
    """Per-tube integer frame shift; synopsis start = start_frame + shift"""

    shifts: Dict[int, int]

    def __post_init__(self):
        object.__setattr__(self, "shifts", {int(k): int(v) for k, v in sorted(self.shifts.items())})

    @classmethod
    def identity(cls, db: TubeDatabase) -> "Mapping":
        return cls({t.id: 0 for t in db.tubes})

    def shift(self, tube_id: int) -> int:
        try:
            return self.shifts[tube_id]
        except KeyError:
            raise ValidationError(f"mapping has no shift for tube {tube_id}") from None

    def shifted_span(self, tube: Tube) -> FrameInterval:
        delta = self.shift(tube.id)
        return (tube.start_frame + delta, tube.end_frame + delta)

    def translated(self, delta: int) -> "Mapping":
        return Mapping({k: v + delta for k, v in self.shifts.items()})

    def validate_for(self, db: TubeDatabase) -> None:
        """Raise ValidationError unless every tube has exactly one legal shift"""
        missing = [tid for tid in db.ids if tid not in self.shifts]
        if missing:
            raise ValidationError(f"mapping is missing tubes {missing}")
        extra = [tid for tid in self.shifts if tid not in db]
        if extra:
            raise ValidationError(f"mapping references unknown tubes {extra}")
        for tube in db.tubes:
            start = tube.start_frame + self.shifts[tube.id]
            if start < 0:
                raise ValidationError(f"tube {tube.id} would start at synopsis frame {start} (< 0)")


@dataclass(frozen=True)
class PairEnergy:
    a: int
    b: int
    e_t: float
    e_o: float
    e_c: float


@dataclass(frozen=True)
class EnergyBreakdown:
    """E(M) split into its activity, interaction, chronology and collision terms"""

    e_activity: float
    e_temporal: float
    e_chrono: float
    e_collision: float
    per_pair: Tuple[PairEnergy, ...] = ()

    @property
    def total(self) -> float:
        return self.e_activity + self.e_temporal + self.e_chrono + self.e_collision

    @classmethod
    def zero(cls) -> "EnergyBreakdown":
        return cls(0.0, 0.0, 0.0, 0.0, ())

    def summary(self) -> Dict[str, float]:
        return {
            "e_activity": self.e_activity,
            "e_temporal": self.e_temporal,
            "e_chrono": self.e_chrono,
            "e_collision": self.e_collision,
            "total": self.total,
        }


class Params(BaseModel):
    """Grouping, energy and packing parameters"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha: float = Field(0.0, ge=0, description="spatio-temporal grouping threshold")
    beta: float = Field(0.0, ge=0, description="chronological grouping threshold in frames")
    chrono_constant: float = Field(1.0, description="constant cost C for a changed start offset")
    collision_weight: float = Field(0.0, ge=0)
    collision_budget: float = Field(0.0, ge=0, description="max pixel overlap per frame pair while packing")
    grouping_mode: Literal["literal", "transitive"] = "transitive"
    sigma_mode: Literal["area", "sqrt_area"] = "sqrt_area"
    packing: Literal["earliest", "best"] = "earliest"

    def with_updates(self, **updates) -> "Params":
        try:
            return Params.model_validate({**self.model_dump(), **updates})
        except PydanticValidationError as e:
            raise ValidationError(str(e)) from e


def tube_center(tube: Tube, frame: int) -> Tuple[float, float]:
    """Center of the tube's box at ``frame``"""
    return tube.box_at(frame).center


def tube_span_intersection(a: Tube, b: Tube, mapping: Optional[Mapping] = None) -> Optional[FrameInterval]:
    """
    Common frames of two tubes, on shifted spans when a mapping is given.

    Returns None for the empty interval.
    """
    if mapping is None:
        a_span, b_span = a.span, b.span
    else:
        a_span, b_span = mapping.shifted_span(a), mapping.shifted_span(b)
    lo = max(a_span[0], b_span[0])
    hi = min(a_span[1], b_span[1])
    if lo > hi:
        return None
    return (lo, hi)
