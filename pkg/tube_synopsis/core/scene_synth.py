"""
Synthetic scenes with optional tracking fragmentation

Objects are rectangles moving at constant velocity. An object's tube ends
on the first frame its box would leave the scene. With a fragmentation
rate > 0 a track may break at any frame: that frame is dropped and the
object continues as a new tube, so one object yields several contiguous
tubes separated by one-frame gaps.
"""

import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic import ValidationError as PydanticValidationError

from ..exceptions import ValidationError
from ..utils.netpbm import frame_name, write_pgm
from .tube_model import Tube, TubeDatabase

logger = logging.getLogger(__name__)

BACKGROUND_FILE = "background.pgm"


class ObjectSpec(BaseModel):
    """One moving object; (x, y) is the box's top-left corner at ``entry_frame``"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    entry_frame: int = Field(0, ge=0)
    x: float
    y: float
    vx: float = 0.0
    vy: float = 0.0
    width: int = Field(8, ge=1)
    height: int = Field(8, ge=1)


class SceneSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    width: int = Field(160, ge=1)
    height: int = Field(120, ge=1)
    duration: int = Field(100, ge=1, description="frames")
    fps: float = Field(25.0, gt=0)
    seed: int = 0
    fragmentation_rate: float = Field(0.0, ge=0, le=100, description="expected track splits per 100 frames")
    objects: List[ObjectSpec] = Field(default_factory=list)
    random_objects: int = Field(0, ge=0)
    min_size: int = Field(6, ge=1)
    max_size: int = Field(14, ge=1)
    max_speed: float = Field(2.0, ge=0)
    noise_sigma: float = Field(0.0, ge=0)
    object_intensity: int = Field(220, ge=0, le=255)
    background_level: int = Field(40, ge=0, le=255)

    @model_validator(mode="after")
    def _check_sizes(self) -> "SceneSpec":
        if self.min_size > self.max_size:
            raise ValueError(f"min_size {self.min_size} exceeds max_size {self.max_size}")
        if self.random_objects and self.max_size > min(self.width, self.height):
            raise ValueError(f"max_size {self.max_size} does not fit a {self.width}x{self.height} scene")
        return self


def _random_objects(spec: SceneSpec, rng: np.random.Generator) -> List[ObjectSpec]:
    objects = []
    for _ in range(spec.random_objects):
        w, h = (int(v) for v in rng.integers(spec.min_size, spec.max_size + 1, size=2))
        objects.append(
            ObjectSpec(
                entry_frame=int(rng.integers(0, max(1, spec.duration // 2))),
                x=float(rng.integers(0, spec.width - w + 1)),
                y=float(rng.integers(0, spec.height - h + 1)),
                vx=float(rng.uniform(-spec.max_speed, spec.max_speed)),
                vy=float(rng.uniform(-spec.max_speed, spec.max_speed)),
                width=w,
                height=h,
            )
        )
    return objects


def object_path(obj: ObjectSpec, spec: SceneSpec) -> List[Tuple[int, int, int, int, int]]:
    """[frame, x, y, w, h] records while the box is fully inside the scene"""
    records = []
    for frame in range(obj.entry_frame, spec.duration):
        elapsed = frame - obj.entry_frame
        x = int(round(obj.x + obj.vx * elapsed))
        y = int(round(obj.y + obj.vy * elapsed))
        if x < 0 or y < 0 or x + obj.width > spec.width or y + obj.height > spec.height:
            break
        records.append((frame, x, y, obj.width, obj.height))
    return records


def _fragment(records: List[Tuple[int, int, int, int, int]], rate: float, rng: np.random.Generator) -> List[list]:
    """Split a path; each split drops one frame between consecutive fragments"""
    draws = rng.random(len(records))
    if not records:
        return []
    if rate == 0:
        return [records]
    probability = rate / 100.0
    fragments, current = [], []
    index = 0
    while index < len(records):
        # a split needs a frame on either side of the dropped one
        if current and index < len(records) - 1 and draws[index] < probability:
            fragments.append(current)
            current = []
            index += 1
            continue
        current.append(records[index])
        index += 1
    if current:
        fragments.append(current)
    return fragments


def _render(spec: SceneSpec, objects: List[ObjectSpec], paths, frames_dir: Path, rng: np.random.Generator) -> Path:
    frames_dir.mkdir(parents=True, exist_ok=True)
    background = np.full((spec.height, spec.width), spec.background_level, dtype=np.uint8)
    background_path = write_pgm(background, frames_dir / BACKGROUND_FILE)
    by_frame = {}
    for path in paths:
        for frame, x, y, w, h in path:
            by_frame.setdefault(frame, []).append((x, y, w, h))
    for frame in range(spec.duration):
        canvas = background.astype(float)
        for x, y, w, h in by_frame.get(frame, ()):
            canvas[y : y + h, x : x + w] = spec.object_intensity
        if spec.noise_sigma > 0:
            canvas += rng.normal(0.0, spec.noise_sigma, canvas.shape)
        write_pgm(np.clip(np.rint(canvas), 0, 255).astype(np.uint8), frames_dir / frame_name(frame))
    logger.info(f"Rendered {spec.duration} frames of {len(objects)} objects to {frames_dir}")
    return background_path


def synth_scene(spec: SceneSpec, frames_dir: Optional[Union[str, Path]] = None) -> TubeDatabase:
    """
    Generate a tube database (and optionally its PGM frames) from a scene spec.

    Deterministic for a given seed. Tube ids are assigned in object order and
    carry the source object index as ``object_id``.
    """
    rng = np.random.default_rng(spec.seed)
    objects = list(spec.objects) + _random_objects(spec, rng)

    paths = []
    for index, obj in enumerate(objects):
        path = object_path(obj, spec)
        if obj.entry_frame < spec.duration and not path:
            raise ValidationError(f"object {index} starts outside the {spec.width}x{spec.height} scene")
        paths.append(path)

    tubes = []
    for index, path in enumerate(paths):
        for fragment in _fragment(path, spec.fragmentation_rate, rng):
            tubes.append(Tube.from_records(len(tubes), fragment, object_id=index))

    background = None
    if frames_dir is not None:
        background = str(_render(spec, objects, paths, Path(frames_dir), rng))

    db = TubeDatabase(tuple(tubes), spec.width, spec.height, fps=spec.fps, background=background)
    logger.debug(f"Synthesized {len(objects)} objects as {len(db)} tubes (seed {spec.seed})")
    return db


def load_scene_spec(path: Union[str, Path]) -> SceneSpec:
    """Read a scene spec from YAML or JSON"""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
        return SceneSpec.model_validate(data)
    except yaml.YAMLError as e:
        raise ValidationError(f"{path}: invalid YAML/JSON: {e}") from e
    except PydanticValidationError as e:
        raise ValidationError(f"{path}: {e}") from e
