"""
Synopsis Coordinator - orchestrates tracking, scheduling, sweeps and rendering
"""

import logging
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from rich.console import Console
from rich.progress import Progress

from ..exceptions import ValidationError
from ..plugins.base_plugin import PluginManager
from .blend_render import RgbImage, estimate_background, render_boxes, render_stitched, write_frames
from .config_manager import ConfigManager
from .grouping import GroupingResult, group_tubes, threshold_bounds
from .scheduler import SweepPoint, SynopsisSchedule, max_cross_group_overlap, minimize_length, sweep
from .tracker import track_directory
from .tube_model import Params, TubeDatabase

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class SynopsisCoordinator:
    """
    Runs the online phase (tracking) and the response phase (grouping,
    length minimization, rendering) with settings from a ConfigManager.
    """

    def __init__(self, config_manager: Optional[ConfigManager] = None, console: Optional[Console] = None):
        self.config_manager = config_manager or ConfigManager()
        self.console = console or Console(stderr=True)
        plugin_config = self.config_manager.get_plugin_config()
        self.plugin_manager = PluginManager(
            enabled=plugin_config.get("enabled"),
            config={name: value for name, value in plugin_config.items() if isinstance(value, dict)},
        )
        logger.debug("Synopsis coordinator initialized")

    @property
    def params(self) -> Params:
        return self.config_manager.get_params()

    @contextmanager
    def _stage(self, name: str):
        started = time.perf_counter()
        yield
        logger.info(f"{name} finished in {time.perf_counter() - started:.3f}s")

    def track(self, frames_dir: PathLike) -> TubeDatabase:
        with self._stage("Tracking"):
            return track_directory(frames_dir, self.config_manager.get_tracker_config())

    def group(self, db: TubeDatabase, params: Optional[Params] = None) -> GroupingResult:
        with self._stage("Grouping"):
            return group_tubes(db, params or self.params)

    def build_schedule(self, db: TubeDatabase, params: Optional[Params] = None) -> SynopsisSchedule:
        params = params or self.params
        with self._stage("Scheduling"):
            return minimize_length(db, group_tubes(db, params), params)

    def evaluate(self, db: TubeDatabase, schedule: SynopsisSchedule) -> Dict[str, Any]:
        """Schedule summary plus plugin measurements"""
        summary = schedule.summary()
        summary["original_span"] = db.original_span()
        summary["max_cross_group_overlap"] = max_cross_group_overlap(db, schedule.mapping, schedule.groups)
        summary["quality"] = self.plugin_manager.run_all(db, schedule)
        return summary

    def auto_values(self, db: TubeDatabase, axis: str, count: int) -> List[float]:
        """``count`` evenly spaced values over the natural range of ``axis``"""
        if count < 1:
            raise ValidationError("--auto needs a positive number of points")
        bounds = threshold_bounds(db, self.params)
        if axis == "alpha":
            low, high = bounds.alpha_min, bounds.alpha_max * 1.05 + 1e-9
        elif axis == "beta":
            low, high = 0.0, bounds.beta_max + 1
        else:
            low, high = 0.0, float(db.original_span())
        return [float(v) for v in np.linspace(low, high, count)]

    def run_sweep(self, db: TubeDatabase, axis: str, values: Sequence[float], workers: Optional[int] = None) -> List[SweepPoint]:
        workers = workers or int(self.config_manager.get_config("sweep", "workers") or 1)
        with self._stage(f"Sweep over {axis}"):
            return sweep(db, axis, values, self.params, workers=workers)

    def resolve_background(
        self,
        db: TubeDatabase,
        background: Optional[PathLike] = None,
        frames_dir: Optional[PathLike] = None,
        base_dir: Optional[PathLike] = None,
    ) -> RgbImage:
        """Explicit image, else the database's background, else the frame median, else flat gray"""
        candidates = [background]
        if db.background:
            recorded = Path(db.background)
            candidates.append(recorded)
            if not recorded.is_absolute() and base_dir is not None:
                candidates.append(Path(base_dir) / recorded)
        for candidate in candidates:
            if candidate and Path(candidate).exists():
                logger.debug(f"Using background {candidate}")
                return RgbImage.load(candidate)
        if frames_dir is not None:
            logger.info(f"Estimating background from {frames_dir}")
            return estimate_background(frames_dir)
        logger.warning("No background available; rendering on a flat gray canvas")
        return RgbImage.blank(db.scene_width, db.scene_height)

    def render(
        self,
        db: TubeDatabase,
        schedule: SynopsisSchedule,
        out_dir: PathLike,
        mode: Optional[str] = None,
        background: Optional[RgbImage] = None,
        frames_dir: Optional[PathLike] = None,
        base_dir: Optional[PathLike] = None,
    ) -> List[Path]:
        render_config = self.config_manager.get_render_config()
        mode = mode or render_config.get("mode", "boxes")
        background = background or self.resolve_background(db, frames_dir=frames_dir, base_dir=base_dir)
        with self._stage(f"Rendering ({mode})"):
            if mode == "boxes":
                images = render_boxes(db, schedule, background, label=bool(render_config.get("label", True)))
            elif mode == "stitch":
                if frames_dir is None:
                    raise ValidationError("stitch rendering needs --frames-dir with the source frames")
                images = render_stitched(db, schedule, background, frames_dir, self.config_manager.get_solver_config())
            else:
                raise ValidationError(f"unknown render mode {mode!r}")

            with Progress(console=self.console, transient=True) as progress:
                task = progress.add_task("[green]Writing frames...", total=len(images))
                written = write_frames(images, out_dir, on_written=lambda _: progress.advance(task))
        logger.info(f"Wrote {len(written)} frames to {out_dir}")
        return written
