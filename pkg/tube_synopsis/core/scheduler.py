"""
Synopsis length minimization

Groups are taken in chronological order and each one is fitted at the
earliest offset where none of its boxes overlaps an already placed tube by
more than the collision budget. Members of a group keep their relative
timing, so interaction and chronology inside a group cost nothing.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import InstanceTooLargeError, SchedulingError, ValidationError
from .energy import DistanceCache, _aligned_slices, _intersection_areas, box_overlap_matrix, total_energy
from .grouping import GroupingResult, group_tubes
from .tube_model import EnergyBreakdown, Group, Mapping, Params, Tube, TubeDatabase

logger = logging.getLogger(__name__)

MAX_BRUTE_FORCE_GROUPS = 6
SWEEP_AXES = ("alpha", "beta", "length-budget")


@dataclass(frozen=True)
class SynopsisSchedule:
    mapping: Mapping
    length: int
    energy: EnergyBreakdown
    groups: GroupingResult
    params: Params

    def summary(self) -> Dict[str, object]:
        return {
            "length": self.length,
            "groups": len(self.groups),
            "energy": self.energy.summary(),
        }


@dataclass(frozen=True)
class SweepPoint:
    value: float
    length: int
    energy: float

    def as_row(self) -> Tuple[float, int, float]:
        return (self.value, self.length, self.energy)


@dataclass(frozen=True)
class _GroupLayout:
    """A group's members with their frame offsets relative to the group's earliest start"""

    members: Tuple[Tube, ...]
    start: int
    span: int

    @classmethod
    def of(cls, db: TubeDatabase, group: Group) -> "_GroupLayout":
        members = tuple(db.get(tid) for tid in group.sorted_ids)
        start = min(t.start_frame for t in members)
        end = max(t.end_frame for t in members)
        return cls(members, start, end - start + 1)

    @property
    def first_id(self) -> int:
        return self.members[0].id


def _envelope(tube: Tube) -> np.ndarray:
    x0 = tube.xywh[:, 0].min()
    y0 = tube.xywh[:, 1].min()
    x1 = (tube.xywh[:, 0] + tube.xywh[:, 2]).max()
    y1 = (tube.xywh[:, 1] + tube.xywh[:, 3]).max()
    return np.array([x0, y0, x1 - x0, y1 - y0])


class _ConflictTable:
    """
    Forbidden relative offsets between groups.

    ``forbidden(i, j)`` holds every d = offset_j - offset_i at which some box
    of group j overlaps some box of group i by more than the budget.
    """

    def __init__(self, layouts: Sequence[_GroupLayout], budget: float):
        self.layouts = layouts
        self.budget = budget
        self._table: Dict[Tuple[int, int], np.ndarray] = {}
        self._envelopes: Dict[int, np.ndarray] = {}

    def _tube_envelope(self, tube: Tube) -> np.ndarray:
        env = self._envelopes.get(tube.id)
        if env is None:
            env = _envelope(tube)
            self._envelopes[tube.id] = env
        return env

    def _compute(self, i: int, j: int) -> np.ndarray:
        first, second = self.layouts[i], self.layouts[j]
        chunks = []
        for m in first.members:
            rel_m = m.start_frame - first.start
            for n in second.members:
                if _intersection_areas(self._tube_envelope(m), self._tube_envelope(n)) <= self.budget:
                    continue
                rel_n = n.start_frame - second.start
                k, jj = np.nonzero(box_overlap_matrix(m, n) > self.budget)
                if k.size:
                    chunks.append((rel_m + k) - (rel_n + jj))
        if not chunks:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate(chunks)).astype(np.int64)

    def forbidden(self, i: int, j: int) -> np.ndarray:
        key = (i, j)
        value = self._table.get(key)
        if value is None:
            reverse = self._table.get((j, i))
            value = -reverse[::-1] if reverse is not None else self._compute(i, j)
            self._table[key] = value
        return value


def _chronological_order(layouts: Sequence[_GroupLayout]) -> List[int]:
    return sorted(range(len(layouts)), key=lambda i: (layouts[i].start, layouts[i].first_id))


def _blocked_offsets(conflicts: _ConflictTable, placed: Dict[int, int], index: int) -> np.ndarray:
    chunks = [offset + conflicts.forbidden(other, index) for other, offset in placed.items()]
    if not chunks:
        return np.empty(0, dtype=np.int64)
    return np.unique(np.concatenate(chunks))


def _earliest_free(blocked: np.ndarray, lower: int = 0) -> int:
    candidate = lower
    for value in blocked[blocked >= lower]:
        if value > candidate:
            break
        if value == candidate:
            candidate += 1
    return candidate


def _pack_earliest(layouts: Sequence[_GroupLayout], conflicts: _ConflictTable) -> Dict[int, int]:
    placed: Dict[int, int] = {}
    for index in _chronological_order(layouts):
        placed[index] = _earliest_free(_blocked_offsets(conflicts, placed, index))
    return placed


def _pack_best(layouts: Sequence[_GroupLayout], conflicts: _ConflictTable) -> Dict[int, int]:
    placed: Dict[int, int] = {}
    end = -1
    for index in _chronological_order(layouts):
        span = layouts[index].span
        if not placed:
            placed[index] = 0
            end = span - 1
            continue
        blocked = _blocked_offsets(conflicts, placed, index)
        latest = _earliest_free(blocked)
        blocked_set = set(blocked.tolist())
        best_key, best_offset = None, latest
        for offset in range(-span, latest + 1):
            if offset in blocked_set:
                continue
            length = max(end, offset + span - 1) - min(0, offset) + 1
            key = (length, offset < 0, abs(offset))
            if best_key is None or key < best_key:
                best_key, best_offset = key, offset
        placed[index] = best_offset
        if best_offset < 0:
            placed = {k: v - best_offset for k, v in placed.items()}
        end = max(placed[k] + layouts[k].span - 1 for k in placed)
    return placed


def _layout_feasible(offsets: Dict[int, int], conflicts: _ConflictTable) -> bool:
    indices = sorted(offsets)
    for pos, i in enumerate(indices):
        for j in indices[pos + 1 :]:
            forbidden = conflicts.forbidden(i, j)
            if forbidden.size and np.any(forbidden == offsets[j] - offsets[i]):
                return False
    return True


def _mapping_from_offsets(layouts: Sequence[_GroupLayout], offsets: Dict[int, int]) -> Mapping:
    shifts = {}
    for index, layout in enumerate(layouts):
        for tube in layout.members:
            shifts[tube.id] = offsets[index] - layout.start
    return Mapping(shifts)


def _offsets_length(layouts: Sequence[_GroupLayout], offsets: Dict[int, int]) -> int:
    if not offsets:
        return 0
    return max(offsets[i] + layouts[i].span for i in offsets) - min(offsets.values())


def synopsis_length(db: TubeDatabase, mapping: Mapping) -> int:
    """Max shifted end - min shifted start + 1 (0 for an empty database)"""
    if not db.tubes:
        return 0
    spans = [mapping.shifted_span(t) for t in db.tubes]
    return max(s[1] for s in spans) - min(s[0] for s in spans) + 1


def minimize_length(
    db: TubeDatabase,
    groups: GroupingResult,
    params: Params,
    cache: Optional[DistanceCache] = None,
) -> SynopsisSchedule:
    """Assign one rigid shift per group so the synopsis is short and within the collision budget"""
    layouts = [_GroupLayout.of(db, g) for g in groups.groups]
    conflicts = _ConflictTable(layouts, params.collision_budget)
    if params.packing == "best":
        offsets = _pack_best(layouts, conflicts)
    else:
        offsets = _pack_earliest(layouts, conflicts)

    original_span = db.original_span()
    if _offsets_length(layouts, offsets) > original_span:
        origin = min((layout.start for layout in layouts), default=0)
        original = {i: layout.start - origin for i, layout in enumerate(layouts)}
        if _layout_feasible(original, conflicts):
            logger.info("Packed synopsis is longer than the original; keeping the original layout")
            offsets = original

    mapping = _mapping_from_offsets(layouts, offsets)
    length = synopsis_length(db, mapping)
    energy = total_energy(db, mapping, params, cache=cache)
    logger.info(f"Scheduled {len(db)} tubes in {len(layouts)} groups: L={length} (original {original_span}), E={energy.total:.6g}")
    return SynopsisSchedule(mapping=mapping, length=length, energy=energy, groups=groups, params=params)


def evaluate_schedule(db: TubeDatabase, mapping: Mapping, params: Params) -> SynopsisSchedule:
    """Score an externally supplied mapping without changing it"""
    mapping.validate_for(db)
    return SynopsisSchedule(
        mapping=mapping,
        length=synopsis_length(db, mapping),
        energy=total_energy(db, mapping, params),
        groups=GroupingResult.singletons(db, params),
        params=params,
    )


def max_cross_group_overlap(db: TubeDatabase, mapping: Mapping, groups: GroupingResult) -> float:
    """Largest per-frame box intersection between tubes of different groups"""
    owner = {tid: index for index, g in enumerate(groups.groups) for tid in g.member_ids}
    worst = 0.0
    tubes = db.tubes
    for pos, a in enumerate(tubes):
        for b in tubes[pos + 1 :]:
            if owner[a.id] == owner[b.id]:
                continue
            slices = _aligned_slices(a, b, mapping)
            if slices is None:
                continue
            ia, ib = slices
            areas = _intersection_areas(a.xywh[ia], b.xywh[ib])
            if areas.size:
                worst = max(worst, float(areas.max()))
    return worst


def _search(domains: List[np.ndarray], assigned: Dict[int, int], conflicts: _ConflictTable) -> bool:
    free = [i for i in range(len(domains)) if i not in assigned]
    if not free:
        return True
    index = min(free, key=lambda i: int(domains[i].sum()))
    for offset in np.flatnonzero(domains[index]):
        offset = int(offset)
        narrowed = list(domains)
        feasible = True
        for other in free:
            if other == index:
                continue
            blocked = offset + conflicts.forbidden(index, other)
            blocked = blocked[(blocked >= 0) & (blocked < domains[other].size)]
            if blocked.size:
                domain = domains[other].copy()
                domain[blocked] = False
                if not domain.any():
                    feasible = False
                    break
                narrowed[other] = domain
        if feasible and _search(narrowed, {**assigned, index: offset}, conflicts):
            return True
    return False


def _fits(layouts: Sequence[_GroupLayout], conflicts: _ConflictTable, length: int, max_offset: int) -> bool:
    limits = [min(max_offset, length - layout.span) for layout in layouts]
    if any(limit < 0 for limit in limits):
        return False
    base = [np.ones(limit + 1, dtype=bool) for limit in limits]
    # some group can always be translated to offset 0
    for anchor in range(len(layouts)):
        domains = list(base)
        domains[anchor] = np.zeros_like(base[anchor])
        domains[anchor][0] = True
        if _search(domains, {}, conflicts):
            return True
    return False


def brute_force_optimal_length(
    db: TubeDatabase,
    groups: GroupingResult,
    params: Params,
    max_offset: int,
) -> int:
    """Exact minimal L over all per-group offsets in [0, max_offset] meeting the budget"""
    if len(groups) > MAX_BRUTE_FORCE_GROUPS:
        raise InstanceTooLargeError(
            f"exhaustive search supports at most {MAX_BRUTE_FORCE_GROUPS} groups, got {len(groups)}"
        )
    if max_offset < 0:
        raise ValidationError(f"max_offset must be >= 0, got {max_offset}")
    layouts = [_GroupLayout.of(db, g) for g in groups.groups]
    if not layouts:
        return 0
    conflicts = _ConflictTable(layouts, params.collision_budget)
    low = max(layout.span for layout in layouts)
    high = max_offset + low
    if not _fits(layouts, conflicts, high, max_offset):
        raise SchedulingError(f"no placement within max_offset={max_offset} meets the collision budget")
    while low < high:
        middle = (low + high) // 2
        if _fits(layouts, conflicts, middle, max_offset):
            high = middle
        else:
            low = middle + 1
    return low


def _schedule_point(db: TubeDatabase, params: Params) -> SynopsisSchedule:
    return minimize_length(db, group_tubes(db, params), params)


def _axis_params(axis: str, value: float, params: Params) -> Params:
    if axis == "alpha":
        return params.with_updates(alpha=value, beta=0.0)
    return params.with_updates(alpha=0.0, beta=value)


def _length_budget_candidates(db: TubeDatabase) -> List[float]:
    gaps = sorted({abs(a.start_frame - b.start_frame) for a in db.tubes for b in db.tubes if a.id < b.id})
    return [0.0] + [float(g + 1) for g in gaps]


def sweep(
    db: TubeDatabase,
    axis: str,
    values: Sequence[float],
    params: Params,
    workers: int = 1,
) -> List[SweepPoint]:
    """
    Synopsis length and energy as a function of one threshold.

    ``alpha`` holds beta at 0, ``beta`` holds alpha at 0; ``length-budget``
    reports, per budget, the lowest-energy beta schedule with L <= budget.
    """
    if axis not in SWEEP_AXES:
        raise ValidationError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    values = [float(v) for v in values]
    if not values:
        raise ValidationError("sweep needs at least one value")
    if any(b < a for a, b in zip(values, values[1:])):
        raise ValidationError("sweep values must be sorted ascending")
    if not db.tubes:
        return [SweepPoint(v, 0, 0.0) for v in values]

    if axis == "length-budget":
        settings = [_axis_params("beta", beta, params) for beta in _length_budget_candidates(db)]
    else:
        settings = [_axis_params(axis, v, params) for v in values]

    if workers > 1 and len(settings) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            schedules = list(executor.map(_schedule_point, [db] * len(settings), settings))
    else:
        schedules = [_schedule_point(db, s) for s in settings]

    if axis != "length-budget":
        points = [SweepPoint(v, s.length, s.energy.total) for v, s in zip(values, schedules)]
    else:
        points = []
        fallback = schedules[0]
        for budget in values:
            fitting = [s for s in schedules if s.length <= budget]
            chosen = min(fitting, key=lambda s: (s.energy.total, s.length)) if fitting else fallback
            points.append(SweepPoint(budget, chosen.length, chosen.energy.total))
    logger.info(f"Sweep over {axis}: {len(points)} points")
    return points
