"""
Pairwise energy model for scoring a synopsis mapping

E(M) sums, over every unordered tube pair, the interaction distortion E_t,
the chronological distortion E_o and the collision cost E_c, plus the
activity cost E_a of frames left out of the synopsis. Identity and rigid
mappings score exactly zero for E_t and E_o.
"""

import logging
import math
from itertools import combinations
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import OutOfRangeError
from .tube_model import (
    EnergyBreakdown,
    FrameInterval,
    Mapping,
    PairEnergy,
    Params,
    Tube,
    TubeDatabase,
    tube_span_intersection,
)

logger = logging.getLogger(__name__)

# Returned by interaction_distance for disjoint spans
INFINITE_DISTANCE = math.inf

# exp(700) is still a finite double
MAX_EXPONENT = 700.0

Exclusion = Tuple[int, FrameInterval]


def _shifts(a: Tube, b: Tube, mapping: Optional[Mapping]) -> Tuple[int, int]:
    if mapping is None:
        return 0, 0
    return mapping.shift(a.id), mapping.shift(b.id)


def _intersection_areas(a_xywh: np.ndarray, b_xywh: np.ndarray) -> np.ndarray:
    """Elementwise (broadcasting) intersection area of boxes given as x, y, w, h"""
    left = np.maximum(a_xywh[..., 0], b_xywh[..., 0])
    top = np.maximum(a_xywh[..., 1], b_xywh[..., 1])
    right = np.minimum(a_xywh[..., 0] + a_xywh[..., 2], b_xywh[..., 0] + b_xywh[..., 2])
    bottom = np.minimum(a_xywh[..., 1] + a_xywh[..., 3], b_xywh[..., 1] + b_xywh[..., 3])
    return np.clip(right - left, 0, None) * np.clip(bottom - top, 0, None)


def box_overlap_matrix(a: Tube, b: Tube) -> np.ndarray:
    """Intersection area between box k of ``a`` and box j of ``b`` as a len(a) x len(b) array"""
    return _intersection_areas(a.xywh[:, None, :], b.xywh[None, :, :])


def _aligned_slices(a: Tube, b: Tube, mapping: Optional[Mapping]) -> Optional[Tuple[slice, slice]]:
    """Index slices into a's and b's boxes for their shared (synopsis) frames"""
    shared = tube_span_intersection(a, b, mapping)
    if shared is None:
        return None
    da, db_ = _shifts(a, b, mapping)
    lo, hi = shared
    a_lo = lo - da - a.start_frame
    b_lo = lo - db_ - b.start_frame
    count = hi - lo + 1
    return slice(a_lo, a_lo + count), slice(b_lo, b_lo + count)


def frame_distance(a: Tube, b: Tube, frame: int) -> float:
    """Euclidean distance between the two box centers at an original frame"""
    ax, ay = a.box_at(frame).center
    bx, by = b.box_at(frame).center
    return math.hypot(ax - bx, ay - by)


def sigma_area(a: Tube, b: Tube, mode: str = "sqrt_area") -> float:
    """Object-size normalizer: mean of both tubes' time-averaged box areas (or its square root)"""
    mean_area = (a.mean_area + b.mean_area) / 2.0
    if mode == "area":
        return mean_area
    if mode == "sqrt_area":
        return math.sqrt(mean_area)
    raise ValueError(f"unknown sigma mode {mode!r}")


def _interaction(a: Tube, b: Tube, mapping: Optional[Mapping], sigma_mode: str) -> float:
    slices = _aligned_slices(a, b, mapping)
    if slices is None:
        return INFINITE_DISTANCE
    ia, ib = slices
    delta = a.centers[ia] - b.centers[ib]
    closest = float(np.hypot(delta[:, 0], delta[:, 1]).min())
    return math.exp(min(closest / sigma_area(a, b, sigma_mode), MAX_EXPONENT))


class DistanceCache:
    """
    Memo of pairwise distances.

    Shifted interaction distance depends only on the relative shift of the
    two tubes, so entries are keyed by (a, b, shift_b - shift_a); the
    original-time value is relative shift 0 under the identity mapping.
    """

    def __init__(self, sigma_mode: str = "sqrt_area"):
        self.sigma_mode = sigma_mode
        self._interaction: Dict[Tuple[int, int, int], float] = {}
        self._chrono: Dict[Tuple[int, int], float] = {}

    def __len__(self) -> int:
        return len(self._interaction) + len(self._chrono)

    def interaction(self, a: Tube, b: Tube, mapping: Optional[Mapping] = None) -> float:
        da, db_ = _shifts(a, b, mapping)
        key = (a.id, b.id, db_ - da)
        value = self._interaction.get(key)
        if value is None:
            value = _interaction(a, b, mapping, self.sigma_mode)
            self._interaction[key] = value
        return value

    def original_chrono(self, a: Tube, b: Tube) -> float:
        """Signed start gap for disjoint original spans, 0 when they overlap"""
        key = (a.id, b.id)
        value = self._chrono.get(key)
        if value is None:
            value = 0.0 if tube_span_intersection(a, b) is not None else float(a.start_frame - b.start_frame)
            self._chrono[key] = value
        return value


def _cache_for(params: Params, cache: Optional[DistanceCache]) -> DistanceCache:
    if cache is None or cache.sigma_mode != params.sigma_mode:
        return DistanceCache(params.sigma_mode)
    return cache


def interaction_distance(
    a: Tube,
    b: Tube,
    mapping: Optional[Mapping] = None,
    params: Optional[Params] = None,
    cache: Optional[DistanceCache] = None,
) -> float:
    """
    d_s(a, b) = exp(min over shared frames of center distance / sigma).

    With a mapping the shared frames are synopsis frames and each tube is
    read at its own original frame. Disjoint spans give INFINITE_DISTANCE.
    """
    params = params or Params()
    if cache is not None and cache.sigma_mode == params.sigma_mode:
        return cache.interaction(a, b, mapping)
    return _interaction(a, b, mapping, params.sigma_mode)


def d_interaction(
    a: Tube,
    b: Tube,
    mapping: Optional[Mapping] = None,
    params: Optional[Params] = None,
    cache: Optional[DistanceCache] = None,
) -> float:
    """Interaction amount: 0 for disjoint spans, d_s otherwise"""
    value = interaction_distance(a, b, mapping, params, cache)
    return 0.0 if math.isinf(value) else value


def temporal_consistency_cost(
    b: Tube,
    b2: Tube,
    mapping: Mapping,
    params: Optional[Params] = None,
    cache: Optional[DistanceCache] = None,
) -> float:
    """E_t = |d(b, b') - d(b^, b'^)|"""
    original = d_interaction(b, b2, None, params, cache)
    shifted = d_interaction(b, b2, mapping, params, cache)
    return abs(original - shifted)


def chrono_distance(
    a: Tube,
    b: Tube,
    use_shifted: bool = False,
    mapping: Optional[Mapping] = None,
    chrono_constant: float = 1.0,
    other_offset: Optional[int] = None,
) -> float:
    """
    Signed chronological distance (t_a^s - t_b^s) * [0 if overlapping else d_ch].

    d_ch is 0 when the start offset of this side equals the start offset of
    the other side (``other_offset``, or derived from ``mapping``) and
    ``chrono_constant`` otherwise. Overlap is tested on original spans for
    the original side and on shifted spans for the synopsis side.
    """
    if use_shifted and mapping is None:
        raise ValueError("the synopsis side needs a mapping")
    da, db_ = _shifts(a, b, mapping)
    original_gap = a.start_frame - b.start_frame
    shifted_gap = (a.start_frame + da) - (b.start_frame + db_)
    if use_shifted:
        gap, reference = shifted_gap, original_gap
        overlaps = tube_span_intersection(a, b, mapping) is not None
    else:
        gap, reference = original_gap, shifted_gap
        overlaps = tube_span_intersection(a, b) is not None
    if other_offset is not None:
        reference = other_offset
    if overlaps:
        return 0.0
    d_ch = 0.0 if gap == reference else chrono_constant
    return float(gap) * d_ch


def chronological_cost(
    b: Tube,
    b2: Tube,
    mapping: Mapping,
    params: Optional[Params] = None,
    cache: Optional[DistanceCache] = None,
) -> float:
    """E_o = |d(b, b') - d(b^, b'^)| with the chronological distance"""
    params = params or Params()
    if cache is None:
        original = chrono_distance(b, b2, False, mapping, params.chrono_constant)
    else:
        da, db_ = _shifts(b, b2, mapping)
        d_ch = 0.0 if da == db_ else params.chrono_constant
        original = cache.original_chrono(b, b2) * d_ch
    shifted = chrono_distance(b, b2, True, mapping, params.chrono_constant)
    return abs(original - shifted)


def collision_cost(
    b: Tube,
    b2: Tube,
    mapping: Mapping,
    params: Optional[Params] = None,
    scene_area: int = 1,
) -> float:
    """collision_weight * sum over shared synopsis frames of overlap area / scene area"""
    params = params or Params()
    if params.collision_weight == 0:
        return 0.0
    slices = _aligned_slices(b, b2, mapping)
    if slices is None:
        return 0.0
    ia, ib = slices
    overlap = _intersection_areas(b.xywh[ia], b2.xywh[ib]).sum()
    return params.collision_weight * float(overlap) / scene_area


def activity_cost(excluded: Iterable[Exclusion], db: TubeDatabase) -> float:
    """Normalized box area of tube frames left out of the synopsis"""
    total = 0.0
    for tube_id, (lo, hi) in excluded:
        tube = db.get(tube_id)
        if hi < lo:
            continue
        if lo < tube.start_frame or hi > tube.end_frame:
            raise OutOfRangeError(
                f"excluded interval [{lo}, {hi}] outside tube {tube_id} span [{tube.start_frame}, {tube.end_frame}]"
            )
        total += float(tube.areas[lo - tube.start_frame : hi - tube.start_frame + 1].sum())
    return total / db.scene_area


def pair_energy(
    a: Tube,
    b: Tube,
    mapping: Mapping,
    params: Params,
    scene_area: int,
    cache: Optional[DistanceCache] = None,
) -> PairEnergy:
    if mapping.shift(a.id) == mapping.shift(b.id):
        # same shift: interaction and order are reproduced exactly
        e_t = e_o = 0.0
    else:
        e_t = temporal_consistency_cost(a, b, mapping, params, cache)
        e_o = chronological_cost(a, b, mapping, params, cache)
    e_c = collision_cost(a, b, mapping, params, scene_area)
    return PairEnergy(a.id, b.id, e_t, e_o, e_c)


def total_energy(
    db: TubeDatabase,
    mapping: Mapping,
    params: Optional[Params] = None,
    excluded: Sequence[Exclusion] = (),
    cache: Optional[DistanceCache] = None,
) -> EnergyBreakdown:
    """E(M) over all unordered pairs (ascending id order) plus the activity cost"""
    params = params or Params()
    cache = _cache_for(params, cache)
    pairs = [
        pair_energy(a, b, mapping, params, db.scene_area, cache)
        for a, b in combinations(db.tubes, 2)
    ]
    e_activity = activity_cost(excluded, db)
    breakdown = EnergyBreakdown(
        e_activity=e_activity,
        e_temporal=math.fsum(p.e_t for p in pairs),
        e_chrono=math.fsum(p.e_o for p in pairs),
        e_collision=math.fsum(p.e_c for p in pairs),
        per_pair=tuple(pairs),
    )
    logger.debug(f"Energy over {len(pairs)} pairs: {breakdown.summary()}")
    return breakdown
