import math

import pytest

from conftest import make_db, make_tube, random_db
from tube_synopsis.core.energy import (
    INFINITE_DISTANCE,
    DistanceCache,
    activity_cost,
    box_overlap_matrix,
    chrono_distance,
    chronological_cost,
    collision_cost,
    d_interaction,
    frame_distance,
    interaction_distance,
    sigma_area,
    temporal_consistency_cost,
    total_energy,
)
from tube_synopsis.core.tube_model import Mapping, Params, Tube
from tube_synopsis.exceptions import OutOfRangeError


def centered(tube_id, start, length, cx, cy, size=10):
    """Tube whose box center sits at (cx, cy)"""
    return make_tube(tube_id, start, length, x=cx - size // 2, y=cy - size // 2, w=size, h=size)


class TestFrameDistance:
    def test_coincident_centers(self):
        assert frame_distance(centered(0, 0, 3, 50, 50), centered(1, 0, 3, 50, 50), 1) == 0.0

    def test_three_four_five(self):
        a = Tube.from_records(0, [(0, 0, 0, 2, 2)])
        b = Tube.from_records(1, [(0, 3, 4, 2, 2)])
        assert frame_distance(a, b, 0) == 5.0

    def test_vertical_offset(self):
        assert frame_distance(centered(0, 0, 1, 10, 10), centered(1, 0, 1, 10, 34), 0) == 24.0

    def test_frame_outside_span(self):
        with pytest.raises(OutOfRangeError):
            frame_distance(make_tube(0, 0, 3), make_tube(1, 5, 3), 1)


class TestSigmaArea:
    def test_area_mode(self):
        assert sigma_area(make_tube(0, 0, 3), make_tube(1, 0, 3), "area") == 100.0

    def test_sqrt_area_mode(self):
        assert sigma_area(make_tube(0, 0, 3), make_tube(1, 0, 3)) == 10.0

    def test_mean_of_means(self):
        a = make_tube(0, 0, 3, w=10, h=10)
        b = make_tube(1, 0, 3, w=10, h=30)
        assert sigma_area(a, b, "area") == 200.0


class TestInteraction:
    def test_coincident_centers_give_one(self):
        a, b = make_tube(0, 0, 5), make_tube(1, 2, 5)
        assert interaction_distance(a, b) == 1.0
        assert d_interaction(a, b) == 1.0

    def test_disjoint_spans(self):
        a, b = make_tube(0, 0, 5), make_tube(1, 5, 5)
        assert interaction_distance(a, b) == INFINITE_DISTANCE
        assert d_interaction(a, b) == 0.0

    def test_constant_distance(self):
        a, b = centered(0, 0, 5, 20, 20), centered(1, 0, 5, 50, 20)
        assert interaction_distance(a, b) == pytest.approx(math.exp(3), rel=1e-12)
        assert d_interaction(a, b) == pytest.approx(20.0855, abs=1e-4)

    def test_shifted_frames_are_read_at_original_times(self):
        # delaying a shows only its early, distant positions next to b
        a = make_tube(0, 0, 10, x=0, y=0, vx=5)
        b = make_tube(1, 0, 10, x=45, y=0)
        near = interaction_distance(a, b, Mapping({0: 0, 1: 0}))
        assert near == 1.0
        far = interaction_distance(a, b, Mapping({0: 5, 1: 0}))
        assert far > near

    def test_huge_exponent_stays_finite(self):
        a = Tube.from_records(0, [(0, 0, 0, 1, 1)])
        b = Tube.from_records(1, [(0, 5000, 0, 1, 1)])
        assert math.isfinite(interaction_distance(a, b))

    def test_cache_agrees_with_direct_computation(self):
        a, b = centered(0, 0, 8, 20, 20), centered(1, 3, 8, 40, 25)
        cache = DistanceCache()
        mapping = Mapping({0: 0, 1: 2})
        assert cache.interaction(a, b, mapping) == interaction_distance(a, b, mapping)
        # only the relative shift matters
        assert cache.interaction(a, b, Mapping({0: 10, 1: 12})) == interaction_distance(a, b, mapping)
        assert len(cache) == 1


class TestTemporalConsistency:
    def test_rigid_shift(self):
        a, b = centered(0, 0, 5, 20, 20), centered(1, 2, 5, 40, 20)
        assert temporal_consistency_cost(a, b, Mapping({0: 7, 1: 7})) == 0.0

    def test_overlapping_pair_shifted_apart(self):
        a, b = make_tube(0, 0, 5), make_tube(1, 0, 5)
        assert temporal_consistency_cost(a, b, Mapping({0: 0, 1: 20})) == 1.0

    def test_disjoint_pair_kept_disjoint(self):
        a, b = make_tube(0, 0, 5), make_tube(1, 10, 5)
        assert temporal_consistency_cost(a, b, Mapping({0: 0, 1: -3})) == 0.0


class TestChronology:
    def test_overlapping_spans(self):
        a, b = make_tube(0, 0, 10), make_tube(1, 5, 10)
        assert chrono_distance(a, b, False, Mapping({0: 0, 1: 50})) == 0.0

    def test_offset_preserved(self):
        a, b = make_tube(0, 0, 5), make_tube(1, 100, 5)
        assert chrono_distance(b, a, True, Mapping({0: 0, 1: 0})) == 0.0
        assert chronological_cost(a, b, Mapping({0: 3, 1: 3})) == 0.0

    def test_offset_change_both_sides(self):
        first, later = make_tube(0, 0, 5), make_tube(1, 100, 5)
        mapping = Mapping({0: 0, 1: -90})
        assert chrono_distance(later, first, False, mapping) == 100.0
        assert chrono_distance(later, first, True, mapping) == 10.0
        assert chronological_cost(first, later, mapping) == 90.0
        assert chronological_cost(first, later, mapping, cache=DistanceCache()) == 90.0

    def test_overlap_in_both(self):
        a, b = make_tube(0, 0, 10), make_tube(1, 3, 10)
        assert chronological_cost(a, b, Mapping({0: 0, 1: 2})) == 0.0

    def test_synopsis_side_needs_mapping(self):
        with pytest.raises(ValueError):
            chrono_distance(make_tube(0, 0, 3), make_tube(1, 9, 3), use_shifted=True)


class TestCollision:
    def test_disjoint_shifted_spans(self):
        a, b = make_tube(0, 0, 5), make_tube(1, 0, 5)
        params = Params(collision_weight=1.0)
        assert collision_cost(a, b, Mapping({0: 0, 1: 5}), params, 10_000) == 0.0

    def test_identical_tubes(self):
        a, b = make_tube(0, 0, 5), make_tube(1, 0, 5)
        params = Params(collision_weight=1.0)
        assert collision_cost(a, b, Mapping({0: 0, 1: 0}), params, 100 * 100) == pytest.approx(0.05)

    def test_edge_to_edge(self):
        a, b = make_tube(0, 0, 5, x=0), make_tube(1, 0, 5, x=10)
        params = Params(collision_weight=1.0)
        assert collision_cost(a, b, Mapping({0: 0, 1: 0}), params, 10_000) == 0.0

    def test_weight_zero_disables_term(self):
        a, b = make_tube(0, 0, 5), make_tube(1, 0, 5)
        assert collision_cost(a, b, Mapping({0: 0, 1: 0}), Params(), 10_000) == 0.0

    def test_overlap_matrix(self):
        a = make_tube(0, 0, 2, x=0)
        b = make_tube(1, 0, 3, x=5)
        matrix = box_overlap_matrix(a, b)
        assert matrix.shape == (2, 3)
        assert (matrix == 50.0).all()


class TestActivity:
    def test_empty_exclusions(self):
        db = make_db([make_tube(0, 0, 20)], width=100, height=100)
        assert activity_cost([], db) == 0.0

    def test_ten_excluded_frames(self):
        db = make_db([make_tube(0, 0, 20)], width=100, height=100)
        assert activity_cost([(0, (5, 14))], db) == pytest.approx(0.1)

    def test_empty_interval(self):
        db = make_db([make_tube(0, 0, 20)], width=100, height=100)
        assert activity_cost([(0, (5, 4))], db) == 0.0

    def test_interval_outside_span(self):
        db = make_db([make_tube(0, 0, 20)], width=100, height=100)
        with pytest.raises(OutOfRangeError):
            activity_cost([(0, (15, 25))], db)


class TestTotalEnergy:
    def test_identity_is_zero(self, two_tube_db):
        energy = total_energy(two_tube_db, Mapping.identity(two_tube_db))
        assert energy.total == 0.0
        assert len(energy.per_pair) == 1

    def test_single_tube_any_shift(self):
        db = make_db([make_tube(0, 10, 5)])
        assert total_energy(db, Mapping({0: -10})).total == 0.0

    def test_offset_change_example(self):
        db = make_db([make_tube(0, 0, 5), make_tube(1, 100, 5)])
        energy = total_energy(db, Mapping({0: 0, 1: -90}))
        assert energy.e_temporal == 0.0
        assert energy.e_chrono == 90.0
        assert energy.total == 90.0

    def test_activity_term_is_added(self):
        db = make_db([make_tube(0, 0, 20)], width=100, height=100)
        energy = total_energy(db, Mapping.identity(db), excluded=[(0, (0, 9))])
        assert energy.e_activity == pytest.approx(0.1)
        assert energy.total == pytest.approx(0.1)


def _random_mapping(rng, db, spread=40):
    return Mapping({t.id: int(rng.integers(-spread, spread + 1)) for t in db.tubes})


def _scan_d_interaction(a, b, mapping, sigma):
    """Frame-by-frame minimum over shared synopsis frames"""
    da, db_ = mapping.shift(a.id), mapping.shift(b.id)
    lo = max(a.start_frame + da, b.start_frame + db_)
    hi = min(a.end_frame + da, b.end_frame + db_)
    if lo > hi:
        return 0.0
    closest = min(
        math.hypot(
            a.box_at(f - da).center[0] - b.box_at(f - db_).center[0],
            a.box_at(f - da).center[1] - b.box_at(f - db_).center[1],
        )
        for f in range(lo, hi + 1)
    )
    return math.exp(min(closest / sigma, 700.0))


def _grown(tube, pixels):
    return Tube.from_records(
        tube.id,
        [(f, x, y, w + pixels, h + pixels) for f, x, y, w, h in (box.as_record() for box in tube.boxes)],
    )


class TestEnergyProperties:
    def test_global_shift_leaves_energy_unchanged(self, rng):
        params = Params(collision_weight=1.0)
        for _ in range(30):
            db = random_db(rng, int(rng.integers(2, 12)), max_length=20)
            mapping = _random_mapping(rng, db)
            delta = int(rng.integers(-50, 51))
            before = total_energy(db, mapping, params)
            after = total_energy(db, mapping.translated(delta), params)
            assert after.e_temporal == pytest.approx(before.e_temporal, rel=1e-12, abs=1e-12)
            assert after.e_chrono == pytest.approx(before.e_chrono, rel=1e-12, abs=1e-12)
            assert after.e_collision == pytest.approx(before.e_collision, rel=1e-12, abs=1e-12)

    def test_pair_terms_are_symmetric(self, rng):
        params = Params(collision_weight=1.0, chrono_constant=2.5)
        for _ in range(30):
            db = random_db(rng, 6, max_length=20)
            mapping = _random_mapping(rng, db)
            for a, b in zip(db.tubes, db.tubes[1:]):
                assert temporal_consistency_cost(a, b, mapping, params) == pytest.approx(
                    temporal_consistency_cost(b, a, mapping, params)
                )
                assert chronological_cost(a, b, mapping, params) == pytest.approx(chronological_cost(b, a, mapping, params))
                assert collision_cost(a, b, mapping, params, db.scene_area) == pytest.approx(
                    collision_cost(b, a, mapping, params, db.scene_area)
                )

    def test_energy_is_never_negative(self, rng):
        for _ in range(30):
            db = random_db(rng, int(rng.integers(2, 10)))
            params = Params(collision_weight=float(rng.uniform(0, 5)), chrono_constant=float(rng.uniform(0, 3)))
            energy = total_energy(db, _random_mapping(rng, db), params)
            assert energy.total >= 0.0
            assert all(p.e_t >= 0.0 and p.e_o >= 0.0 and p.e_c >= 0.0 for p in energy.per_pair)

    @pytest.mark.parametrize("sigma_mode", ["sqrt_area", "area"])
    def test_d_interaction_matches_frame_scan(self, rng, sigma_mode):
        params = Params(sigma_mode=sigma_mode)
        for _ in range(30):
            db = random_db(rng, 4, horizon=40, max_length=20)
            mapping = _random_mapping(rng, db, spread=10)
            for a, b in zip(db.tubes, db.tubes[1:]):
                sigma = sigma_area(a, b, sigma_mode)
                assert d_interaction(a, b, mapping, params) == pytest.approx(_scan_d_interaction(a, b, mapping, sigma), rel=1e-12)
                assert d_interaction(a, b, None, params) == pytest.approx(
                    _scan_d_interaction(a, b, Mapping({a.id: 0, b.id: 0}), sigma), rel=1e-12
                )

    def test_larger_boxes_never_collide_less(self, rng):
        params = Params(collision_weight=1.0)
        for _ in range(30):
            db = random_db(rng, 2, horizon=30, width=60, height=60, max_length=20)
            a, b = db.tubes
            mapping = _random_mapping(rng, db, spread=5)
            base = collision_cost(a, b, mapping, params, db.scene_area)
            for pixels in (1, 4, 12):
                assert collision_cost(_grown(a, pixels), b, mapping, params, db.scene_area) >= base
                assert collision_cost(_grown(a, pixels), _grown(b, pixels), mapping, params, db.scene_area) >= base
