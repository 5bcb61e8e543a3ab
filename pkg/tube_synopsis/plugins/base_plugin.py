"""
Schedule quality plugins for the tube synopsis engine
"""

import logging
from abc import ABC, abstractmethod
from itertools import combinations
from typing import Any, Dict, List, Optional

from ..exceptions import ValidationError
from ..core.scheduler import SynopsisSchedule
from ..core.tube_model import Tube, TubeDatabase

logger = logging.getLogger(__name__)


def _objects(db: TubeDatabase) -> Dict[Any, List[Tube]]:
    """Tubes per source object; tubes without an object label stand alone"""
    objects: Dict[Any, List[Tube]] = {}
    for tube in db.tubes:
        key = ("object", tube.object_id) if tube.object_id is not None else ("tube", tube.id)
        objects.setdefault(key, []).append(tube)
    return objects


def _active_frames(tubes: List[Tube], schedule: SynopsisSchedule) -> List[int]:
    frames = set()
    for tube in tubes:
        lo, hi = schedule.mapping.shifted_span(tube)
        frames.update(range(lo, hi + 1))
    return sorted(frames)


def appearance_discontinuities(db: TubeDatabase, schedule: SynopsisSchedule, tolerance: int = 1) -> int:
    """
    Number of times a source object disappears and reappears in synopsis time.

    Inactive stretches of at most ``tolerance`` frames are ignored; the
    one-frame gaps a tracker leaves between fragments do not count.
    """
    count = 0
    for tubes in _objects(db).values():
        frames = _active_frames(tubes, schedule)
        count += sum(1 for prev, cur in zip(frames, frames[1:]) if cur - prev - 1 > tolerance)
    return count


class BasePlugin(ABC):
    """Base class for all plugins"""

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        self.config = config or {}
        self.name = self.__class__.__name__
        self.version = "1.0.0"
        self.description = "Base plugin"
        self.enabled = True

    @abstractmethod
    def evaluate(self, db: TubeDatabase, schedule: SynopsisSchedule) -> Dict[str, Any]:
        """Measure one aspect of a schedule"""

    @abstractmethod
    def get_metadata(self) -> Dict[str, Any]:
        """Get plugin metadata"""

    def validate_config(self) -> bool:
        return True

    def initialize(self) -> bool:
        if not self.validate_config():
            logger.error(f"Plugin {self.name} configuration validation failed")
            return False
        logger.debug(f"Plugin {self.name} initialized")
        return True


class ContinuityPlugin(BasePlugin):
    """Counts objects that vanish and reappear in the synopsis"""

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        super().__init__(config)
        self.name = "continuity"
        self.description = "Appearance discontinuities per source object"

    def validate_config(self) -> bool:
        tolerance = self.config.get("tolerance", 1)
        return isinstance(tolerance, int) and tolerance >= 0

    def evaluate(self, db: TubeDatabase, schedule: SynopsisSchedule) -> Dict[str, Any]:
        tolerance = self.config.get("tolerance", 1)
        return {
            "appearance_discontinuities": appearance_discontinuities(db, schedule, tolerance),
            "objects": len(_objects(db)),
        }

    def get_metadata(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "version": self.version,
            "description": self.description,
            "capabilities": ["appearance_discontinuities"],
        }


class ChronologyPlugin(BasePlugin):
    """Order violations and duplicated appearances of one source object"""

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        super().__init__(config)
        self.name = "chronology"
        self.description = "Same-object order violations and simultaneous duplicates"

    def evaluate(self, db: TubeDatabase, schedule: SynopsisSchedule) -> Dict[str, Any]:
        violations = 0
        duplicates = 0
        for tubes in _objects(db).values():
            for a, b in combinations(sorted(tubes, key=lambda t: (t.start_frame, t.id)), 2):
                if a.start_frame < b.start_frame and schedule.mapping.shifted_span(a)[0] > schedule.mapping.shifted_span(b)[0]:
                    violations += 1
            seen: Dict[int, int] = {}
            for tube in tubes:
                lo, hi = schedule.mapping.shifted_span(tube)
                for frame in range(lo, hi + 1):
                    seen[frame] = seen.get(frame, 0) + 1
            duplicates += sum(1 for shown in seen.values() if shown > 1)
        return {"order_violations": violations, "simultaneous_duplicates": duplicates}

    def get_metadata(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "version": self.version,
            "description": self.description,
            "capabilities": ["order_violations", "simultaneous_duplicates"],
        }


class CompressionPlugin(BasePlugin):
    """How much shorter the synopsis is than the original"""

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        super().__init__(config)
        self.name = "compression"
        self.description = "Original span, synopsis length and their ratio"

    def evaluate(self, db: TubeDatabase, schedule: SynopsisSchedule) -> Dict[str, Any]:
        original = db.original_span()
        return {
            "original_span": original,
            "length": schedule.length,
            "ratio": schedule.length / original if original else 0.0,
            "groups": len(schedule.groups),
        }

    def get_metadata(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "version": self.version,
            "description": self.description,
            "capabilities": ["compression_ratio"],
        }


BUILTIN_PLUGINS = {
    "continuity": ContinuityPlugin,
    "chronology": ChronologyPlugin,
    "compression": CompressionPlugin,
}


class PluginManager:
    """Registry of schedule quality plugins"""

    def __init__(self, enabled: Optional[List[str]] = None, config: Optional[Dict[str, Dict[str, Any]]] = None):
        config = config or {}
        self.plugins: Dict[str, BasePlugin] = {}
        for name, plugin_class in BUILTIN_PLUGINS.items():
            if enabled is not None and name not in enabled:
                continue
            self.register(plugin_class(config.get(name)))

    def register(self, plugin: BasePlugin) -> None:
        if not plugin.initialize():
            raise ValidationError(f"plugin {plugin.name} rejected its configuration")
        self.plugins[plugin.name] = plugin

    def list_plugins(self) -> List[Dict[str, Any]]:
        return [p.get_metadata() for p in self.plugins.values()]

    def run_all(self, db: TubeDatabase, schedule: SynopsisSchedule) -> Dict[str, Dict[str, Any]]:
        results = {}
        for name, plugin in self.plugins.items():
            if plugin.enabled:
                results[name] = plugin.evaluate(db, schedule)
        return results
