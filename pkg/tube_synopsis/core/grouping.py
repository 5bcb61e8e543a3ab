"""
Grouping of tubes by interaction and chronological proximity

Two tubes are groupable when their interaction distance is below alpha or
their start frames differ by less than beta. ``transitive`` mode returns
the connected components of that relation; ``literal`` mode replays the
single-pass procedure where each newly opened group absorbs at most one
further tube.
"""

import logging
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, List, Optional, Tuple

from .energy import DistanceCache, interaction_distance
from .tube_model import Group, Params, Tube, TubeDatabase

logger = logging.getLogger(__name__)


class UnionFind:
    """Disjoint sets over tube ids (path halving, union by size)"""

    def __init__(self, ids):
        self._parent: Dict[int, int] = {i: i for i in ids}
        self._size: Dict[int, int] = {i: 1 for i in ids}

    def find(self, item: int) -> int:
        parent = self._parent
        while parent[item] != item:
            parent[item] = parent[parent[item]]
            item = parent[item]
        return item

    def union(self, a: int, b: int) -> bool:
        root_a, root_b = self.find(a), self.find(b)
        if root_a == root_b:
            return False
        if self._size[root_a] < self._size[root_b]:
            root_a, root_b = root_b, root_a
        self._parent[root_b] = root_a
        self._size[root_a] += self._size[root_b]
        return True

    def components(self) -> List[List[int]]:
        members: Dict[int, List[int]] = {}
        for item in sorted(self._parent):
            members.setdefault(self.find(item), []).append(item)
        return sorted(members.values(), key=lambda ids: ids[0])


@dataclass(frozen=True)
class GroupingResult:
    groups: Tuple[Group, ...]
    alpha: float
    beta: float
    mode: str

    def __len__(self) -> int:
        return len(self.groups)

    def group_of(self, tube_id: int) -> Group:
        for group in self.groups:
            if tube_id in group:
                return group
        raise KeyError(tube_id)

    def as_lists(self) -> List[List[int]]:
        return [g.sorted_ids for g in self.groups]

    @classmethod
    def singletons(cls, db: TubeDatabase, params: Optional[Params] = None) -> "GroupingResult":
        params = params or Params()
        return cls(
            groups=tuple(Group(frozenset([tid])) for tid in db.ids),
            alpha=params.alpha,
            beta=params.beta,
            mode=params.grouping_mode,
        )


@dataclass(frozen=True)
class ThresholdBounds:
    """Natural sweep ranges: d_s over temporally overlapping pairs, |start gap| over all pairs"""

    alpha_min: float
    alpha_max: float
    beta_min: float
    beta_max: float


def pair_groupable(a: Tube, b: Tube, params: Params, cache: Optional[DistanceCache] = None) -> bool:
    """True when d_s(a, b) < alpha or |t_a^s - t_b^s| < beta"""
    if abs(a.start_frame - b.start_frame) < params.beta:
        return True
    # the infinite sentinel of disjoint spans never passes
    return interaction_distance(a, b, None, params, cache) < params.alpha


def _literal_groups(db: TubeDatabase, params: Params, cache: DistanceCache) -> List[List[int]]:
    assigned = set()
    groups: List[List[int]] = []
    for a in db.tubes:
        if a.id in assigned:
            continue
        group = [a.id]
        assigned.add(a.id)
        for b in db.tubes:
            if b.id in assigned:
                continue
            if pair_groupable(a, b, params, cache):
                group.append(b.id)
                assigned.add(b.id)
                break
        groups.append(group)
    return groups


def _transitive_groups(db: TubeDatabase, params: Params, cache: DistanceCache) -> List[List[int]]:
    sets = UnionFind(db.ids)
    for a, b in combinations(db.tubes, 2):
        if sets.find(a.id) == sets.find(b.id):
            continue
        if pair_groupable(a, b, params, cache):
            sets.union(a.id, b.id)
    return sets.components()


def group_tubes(db: TubeDatabase, params: Params, cache: Optional[DistanceCache] = None) -> GroupingResult:
    """Partition the database into groups under (alpha, beta)"""
    cache = cache if cache is not None and cache.sigma_mode == params.sigma_mode else DistanceCache(params.sigma_mode)
    if params.grouping_mode == "literal":
        id_groups = _literal_groups(db, params, cache)
    else:
        id_groups = _transitive_groups(db, params, cache)
    result = GroupingResult(
        groups=tuple(Group(frozenset(ids)) for ids in id_groups),
        alpha=params.alpha,
        beta=params.beta,
        mode=params.grouping_mode,
    )
    logger.debug(
        f"Grouped {len(db)} tubes into {len(result)} groups "
        f"(alpha={params.alpha}, beta={params.beta}, mode={params.grouping_mode})"
    )
    return result


def threshold_bounds(db: TubeDatabase, params: Optional[Params] = None, cache: Optional[DistanceCache] = None) -> ThresholdBounds:
    """Range of finite d_s values and of absolute start gaps; zeros for fewer than two tubes"""
    params = params or Params()
    distances = []
    gaps = []
    for a, b in combinations(db.tubes, 2):
        gaps.append(abs(a.start_frame - b.start_frame))
        value = interaction_distance(a, b, None, params, cache)
        if not math.isinf(value):
            distances.append(value)
    return ThresholdBounds(
        alpha_min=min(distances, default=0.0),
        alpha_max=max(distances, default=0.0),
        beta_min=float(min(gaps, default=0)),
        beta_max=float(max(gaps, default=0)),
    )
