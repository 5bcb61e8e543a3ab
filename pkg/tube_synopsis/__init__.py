"""
Tube Synopsis
Video synopsis by grouping and rigidly shifting tracked-object tubes
"""

__version__ = "1.0.0"

from .core.config_manager import ConfigManager
from .core.energy import total_energy
from .core.grouping import group_tubes
from .core.scheduler import SynopsisSchedule, minimize_length, sweep
from .core.synopsis_coordinator import SynopsisCoordinator
from .core.tube_model import BoundingBox, Mapping, Params, Tube, TubeDatabase
from .plugins.base_plugin import BasePlugin, PluginManager

__all__ = [
    "BasePlugin",
    "BoundingBox",
    "ConfigManager",
    "Mapping",
    "Params",
    "PluginManager",
    "SynopsisCoordinator",
    "SynopsisSchedule",
    "Tube",
    "TubeDatabase",
    "group_tubes",
    "minimize_length",
    "sweep",
    "total_energy",
]
