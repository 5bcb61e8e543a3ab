"""
Persistence for tube databases, schedules and sweep curves

Files are versioned, sorted-key JSON so they diff cleanly; a schedule
records the content hash of the tube database it was computed from.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple, Union

from pydantic import ValidationError as PydanticValidationError

from ..exceptions import StaleReferenceError, ValidationError
from .grouping import GroupingResult
from .scheduler import SweepPoint, SynopsisSchedule
from .schemas import EnergyRecord, PairEnergyRecord, ScheduleFile, TubeDbFile
from .tube_model import EnergyBreakdown, Group, Mapping, PairEnergy, Tube, TubeDatabase

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
CURVE_HEADER = ("param", "length", "energy")
CurveRow = Tuple[float, int, float]


def _dumps(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _read_json(path: PathLike) -> dict:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e


def _write_text(path: PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    return path


def _locate(error: PydanticValidationError, raw: dict, path: PathLike) -> ValidationError:
    """Translate the first pydantic error into a message naming tube id and record index"""
    detail = error.errors()[0]
    loc = list(detail.get("loc", ()))
    where = ".".join(str(part) for part in loc) or "document"
    if len(loc) >= 2 and loc[0] == "tubes" and isinstance(loc[1], int):
        try:
            tube_id = raw["tubes"][loc[1]].get("id", f"#{loc[1]}")
        except (KeyError, IndexError, TypeError, AttributeError):
            tube_id = f"#{loc[1]}"
        where = f"tube {tube_id}"
        if len(loc) >= 4 and loc[2] == "boxes":
            where += f": record {loc[3]}"
    return ValidationError(f"{path}: {where}: {detail.get('msg', 'invalid value')}")


def tube_db_to_json(db: TubeDatabase) -> str:
    return _dumps(db.canonical_dict())


def tube_db_from_file(document: TubeDbFile) -> TubeDatabase:
    tubes = [Tube.from_records(t.id, t.boxes, t.object_id) for t in document.tubes]
    return TubeDatabase(
        tubes=tuple(tubes),
        scene_width=document.scene.width,
        scene_height=document.scene.height,
        fps=document.scene.fps,
        background=document.scene.background,
    )


def save_tube_db(db: TubeDatabase, path: PathLike) -> Path:
    path = _write_text(path, tube_db_to_json(db))
    logger.debug(f"Saved {len(db)} tubes to {path}")
    return path


def load_tube_db(path: PathLike) -> TubeDatabase:
    """Parse and validate a tube database; every error names the offending tube and record"""
    raw = _read_json(path)
    try:
        document = TubeDbFile.model_validate(raw)
    except PydanticValidationError as e:
        raise _locate(e, raw if isinstance(raw, dict) else {}, path) from e
    try:
        db = tube_db_from_file(document)
    except ValidationError as e:
        raise ValidationError(f"{path}: {e}") from e
    logger.debug(f"Loaded {len(db)} tubes from {path}")
    return db


def schedule_to_file(schedule: SynopsisSchedule, db: TubeDatabase) -> ScheduleFile:
    energy = schedule.energy
    return ScheduleFile(
        tube_db_hash=db.content_hash(),
        params=schedule.params,
        groups=schedule.groups.as_lists(),
        shifts=sorted(schedule.mapping.shifts.items()),
        length=schedule.length,
        energy=EnergyRecord(
            e_activity=energy.e_activity,
            e_temporal=energy.e_temporal,
            e_chrono=energy.e_chrono,
            e_collision=energy.e_collision,
            total=energy.total,
            per_pair=[PairEnergyRecord(a=p.a, b=p.b, e_t=p.e_t, e_o=p.e_o, e_c=p.e_c) for p in energy.per_pair],
        ),
    )


def schedule_to_json(schedule: SynopsisSchedule, db: TubeDatabase) -> str:
    return _dumps(schedule_to_file(schedule, db).model_dump(mode="json"))


def save_schedule(schedule: SynopsisSchedule, path: PathLike, db: TubeDatabase) -> Path:
    path = _write_text(path, schedule_to_json(schedule, db))
    logger.debug(f"Saved schedule (L={schedule.length}) to {path}")
    return path


def load_schedule(path: PathLike, db: TubeDatabase) -> SynopsisSchedule:
    """Load a schedule and check it was computed from ``db``"""
    raw = _read_json(path)
    try:
        document = ScheduleFile.model_validate(raw)
    except PydanticValidationError as e:
        raise _locate(e, {}, path) from e

    expected = db.content_hash()
    if document.tube_db_hash != expected:
        raise StaleReferenceError(
            f"{path} was computed for tube database {document.tube_db_hash[:12]}, "
            f"but the given database hashes to {expected[:12]}"
        )

    mapping = Mapping(dict(document.shifts))
    mapping.validate_for(db)
    params = document.params
    energy = document.energy
    return SynopsisSchedule(
        mapping=mapping,
        length=document.length,
        energy=EnergyBreakdown(
            e_activity=energy.e_activity,
            e_temporal=energy.e_temporal,
            e_chrono=energy.e_chrono,
            e_collision=energy.e_collision,
            per_pair=tuple(PairEnergy(p.a, p.b, p.e_t, p.e_o, p.e_c) for p in energy.per_pair),
        ),
        groups=GroupingResult(
            groups=tuple(Group(frozenset(ids)) for ids in document.groups),
            alpha=params.alpha,
            beta=params.beta,
            mode=params.grouping_mode,
        ),
        params=params,
    )


def _curve_row(row: Union[SweepPoint, Sequence]) -> CurveRow:
    if isinstance(row, SweepPoint):
        return row.as_row()
    value, length, energy = row
    return (float(value), int(length), float(energy))


def export_curve_csv(rows: Iterable[Union[SweepPoint, Sequence]], path: PathLike) -> Path:
    """Write ``param,length,energy`` rows with 6 significant digits"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CURVE_HEADER)
        count = 0
        for row in rows:
            value, length, energy = _curve_row(row)
            writer.writerow((f"{value:.6g}", length, f"{energy:.6g}"))
            count += 1
    logger.debug(f"Wrote {count} curve rows to {path}")
    return path


def load_curve_csv(path: PathLike) -> List[CurveRow]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != CURVE_HEADER:
            raise ValidationError(f"{path}: expected header {','.join(CURVE_HEADER)}")
        try:
            return [(float(value), int(length), float(energy)) for value, length, energy in reader]
        except ValueError as e:
            raise ValidationError(f"{path}: malformed curve row: {e}") from e
