import pytest

from conftest import make_db, make_tube
from tube_synopsis.core.scheduler import evaluate_schedule
from tube_synopsis.core.tube_model import Mapping, Params
from tube_synopsis.exceptions import ValidationError
from tube_synopsis.plugins.base_plugin import (
    BUILTIN_PLUGINS,
    BasePlugin,
    ChronologyPlugin,
    CompressionPlugin,
    ContinuityPlugin,
    PluginManager,
    appearance_discontinuities,
)


def _fragmented_db():
    """One object tracked as two fragments with the usual one-frame gap, plus an unlabelled tube"""
    return make_db(
        [
            make_tube(0, 0, 10, object_id=7),
            make_tube(1, 11, 10, object_id=7),
            make_tube(2, 0, 5, x=100),
        ]
    )


def _schedule(db, shifts):
    return evaluate_schedule(db, Mapping(shifts), Params())


class TestContinuity:
    def test_tracker_gap_is_tolerated(self):
        db = _fragmented_db()
        schedule = _schedule(db, {0: 0, 1: 0, 2: 0})
        assert appearance_discontinuities(db, schedule) == 0
        assert appearance_discontinuities(db, schedule, tolerance=0) == 1

    def test_fragments_pulled_apart(self):
        db = _fragmented_db()
        schedule = _schedule(db, {0: 0, 1: 20, 2: 0})
        assert appearance_discontinuities(db, schedule) == 1

    def test_overlapping_fragments_are_continuous(self):
        db = _fragmented_db()
        schedule = _schedule(db, {0: 0, 1: -11, 2: 0})
        assert appearance_discontinuities(db, schedule) == 0

    def test_plugin_output(self):
        db = _fragmented_db()
        result = ContinuityPlugin().evaluate(db, _schedule(db, {0: 0, 1: 20, 2: 0}))
        assert result == {"appearance_discontinuities": 1, "objects": 2}

    def test_rejects_negative_tolerance(self):
        assert not ContinuityPlugin({"tolerance": -1}).validate_config()


class TestChronology:
    def test_swapped_fragments(self):
        db = _fragmented_db()
        result = ChronologyPlugin().evaluate(db, _schedule(db, {0: 30, 1: 0, 2: 0}))
        assert result["order_violations"] == 1

    def test_simultaneous_duplicates(self):
        db = _fragmented_db()
        result = ChronologyPlugin().evaluate(db, _schedule(db, {0: 0, 1: -11, 2: 0}))
        assert result == {"order_violations": 0, "simultaneous_duplicates": 10}


def test_compression_ratio():
    db = _fragmented_db()
    result = CompressionPlugin().evaluate(db, _schedule(db, {0: 0, 1: -11, 2: 0}))
    assert result["original_span"] == 21
    assert result["length"] == 10
    assert result["ratio"] == pytest.approx(10 / 21)


class TestPluginManager:
    def test_all_builtins_by_default(self):
        manager = PluginManager()
        assert [m["name"] for m in manager.list_plugins()] == list(BUILTIN_PLUGINS)

    def test_enabled_subset(self):
        manager = PluginManager(enabled=["compression"])
        assert list(manager.plugins) == ["compression"]

    def test_invalid_plugin_config(self):
        with pytest.raises(ValidationError, match="continuity"):
            PluginManager(config={"continuity": {"tolerance": "wide"}})

    def test_run_all_skips_disabled(self, two_tube_db):
        manager = PluginManager()
        manager.plugins["chronology"].enabled = False
        results = manager.run_all(two_tube_db, _schedule(two_tube_db, {0: 0, 1: 0}))
        assert set(results) == {"continuity", "compression"}

    def test_register_custom_plugin(self, two_tube_db):
        class TubeCount(BasePlugin):
            def evaluate(self, db, schedule):
                return {"tubes": len(db)}

            def get_metadata(self):
                return {"name": self.name}

        manager = PluginManager(enabled=[])
        manager.register(TubeCount())
        assert manager.run_all(two_tube_db, _schedule(two_tube_db, {0: 0, 1: 0})) == {"TubeCount": {"tubes": 2}}
