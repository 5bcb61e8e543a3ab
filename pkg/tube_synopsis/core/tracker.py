"""
Online phase: background subtraction, blob detection and Kalman tracking

Frames are compared against a per-pixel running Gaussian background;
foreground blobs become detections, and a constant-velocity Kalman filter
per track associates detections greedily by nearest predicted center.
Every sufficiently long track becomes a Tube.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage

from ..exceptions import DimensionMismatchError, ValidationError
from ..utils.netpbm import list_frames, read_gray
from .tube_model import BoundingBox, Tube, TubeDatabase

logger = logging.getLogger(__name__)

# 8-connectivity
_EIGHT_NEIGHBOURS = np.ones((3, 3), dtype=bool)


class TrackerConfig(BaseModel):
    """Background model, detection and association settings"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    learning_rate: float = Field(0.05, gt=0, le=1)
    k: float = Field(3.0, ge=0, description="foreground threshold in standard deviations")
    stddev_floor: float = Field(2.0, gt=0)
    min_area: int = Field(9, ge=1)
    gate_radius: float = Field(20.0, gt=0)
    max_missed: int = Field(5, ge=1)
    min_length: int = Field(3, ge=1)
    process_noise: float = Field(0.01, gt=0)
    measurement_noise: float = Field(1.0, gt=0)
    selective_update: bool = True
    fps: float = Field(25.0, gt=0)


@dataclass(frozen=True)
class GrayFrame:
    """Single-channel 8-bit frame, row-major"""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 2:
            raise ValidationError(f"gray frame must be 2-D, got shape {pixels.shape}")
        object.__setattr__(self, "pixels", pixels.astype(np.uint8, copy=False))

    @classmethod
    def from_values(cls, width: int, height: int, values: Sequence[int]) -> "GrayFrame":
        if len(values) != width * height:
            raise ValidationError(f"expected {width * height} values for {width}x{height}, got {len(values)}")
        return cls(np.asarray(values, dtype=np.uint8).reshape(height, width))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class BackgroundModel:
    """Per-pixel running mean and variance"""

    mean: np.ndarray
    variance: np.ndarray

    @classmethod
    def from_frame(cls, frame: GrayFrame, stddev_floor: float = 2.0) -> "BackgroundModel":
        mean = frame.pixels.astype(float)
        return cls(mean, np.full_like(mean, stddev_floor**2))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.mean.shape


def _check_dims(model: BackgroundModel, frame: GrayFrame) -> None:
    if model.shape != frame.pixels.shape:
        raise DimensionMismatchError(
            f"frame is {frame.width}x{frame.height} but the background model is {model.shape[1]}x{model.shape[0]}"
        )


def update_background(
    model: BackgroundModel,
    frame: GrayFrame,
    learning_rate: float,
    foreground: Optional[np.ndarray] = None,
) -> BackgroundModel:
    """
    Blend a frame into the model: mean <- (1 - rho) * mean + rho * pixel.

    Pixels flagged in ``foreground`` keep their previous statistics.
    """
    _check_dims(model, frame)
    if not 0 < learning_rate <= 1:
        raise ValidationError(f"learning rate must be in (0, 1], got {learning_rate}")
    pixels = frame.pixels.astype(float)
    deviation = pixels - model.mean
    mean = model.mean + learning_rate * deviation
    variance = (1 - learning_rate) * model.variance + learning_rate * deviation**2
    if foreground is not None:
        mean = np.where(foreground, model.mean, mean)
        variance = np.where(foreground, model.variance, variance)
    return BackgroundModel(mean, variance)


def foreground_mask(model: BackgroundModel, frame: GrayFrame, k: float, stddev_floor: float = 2.0) -> np.ndarray:
    """Pixels deviating from the background mean by more than k standard deviations"""
    _check_dims(model, frame)
    stddev = np.maximum(np.sqrt(model.variance), stddev_floor)
    return np.abs(frame.pixels.astype(float) - model.mean) > k * stddev


def connected_components(mask: np.ndarray, min_area: int = 1, frame: int = 0) -> List[BoundingBox]:
    """Tight boxes of 8-connected foreground components with at least ``min_area`` pixels, in (y, x) order"""
    labels, count = ndimage.label(np.asarray(mask, dtype=bool), structure=_EIGHT_NEIGHBOURS)
    if count == 0:
        return []
    areas = np.bincount(labels.ravel(), minlength=count + 1)
    boxes = []
    for label, region in enumerate(ndimage.find_objects(labels), start=1):
        if region is None or areas[label] < min_area:
            continue
        rows, cols = region
        boxes.append(BoundingBox(frame, cols.start, rows.start, cols.stop - cols.start, rows.stop - rows.start))
    boxes.sort(key=lambda b: (b.y, b.x))
    return boxes


class KalmanFilterCV:
    """
    Constant-velocity Kalman filter on box centers.

    State is (cx, cy, vx, vy) in pixels and pixels per frame; the measurement
    is the detected box center.
    """

    def __init__(self, process_noise: float = 0.01, measurement_noise: float = 1.0, initial_velocity_var: float = 100.0):
        self._motion_mat = np.eye(4)
        self._motion_mat[0, 2] = self._motion_mat[1, 3] = 1.0
        self._update_mat = np.eye(2, 4)
        # white acceleration noise, dt = 1
        gain = np.array([[0.5, 0.0], [0.0, 0.5], [1.0, 0.0], [0.0, 1.0]])
        self._motion_cov = process_noise * gain @ gain.T
        self._innovation_cov = measurement_noise * np.eye(2)
        self._initial_velocity_var = initial_velocity_var
        self._measurement_noise = measurement_noise

    def initiate(self, measurement: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        mean = np.r_[np.asarray(measurement, dtype=float), 0.0, 0.0]
        covariance = np.diag([self._measurement_noise] * 2 + [self._initial_velocity_var] * 2)
        return mean, covariance

    def predict(self, mean: np.ndarray, covariance: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        mean = self._motion_mat @ mean
        covariance = np.linalg.multi_dot((self._motion_mat, covariance, self._motion_mat.T)) + self._motion_cov
        return mean, (covariance + covariance.T) / 2

    def update(self, mean: np.ndarray, covariance: np.ndarray, measurement: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        projected_cov = np.linalg.multi_dot((self._update_mat, covariance, self._update_mat.T)) + self._innovation_cov
        chol_factor, lower = scipy.linalg.cho_factor(projected_cov, lower=True, check_finite=False)
        kalman_gain = scipy.linalg.cho_solve(
            (chol_factor, lower), (covariance @ self._update_mat.T).T, check_finite=False
        ).T
        innovation = np.asarray(measurement, dtype=float) - self._update_mat @ mean
        new_mean = mean + kalman_gain @ innovation
        # Joseph form keeps the covariance symmetric positive semi-definite
        factor = np.eye(4) - kalman_gain @ self._update_mat
        new_covariance = factor @ covariance @ factor.T + kalman_gain @ self._innovation_cov @ kalman_gain.T
        return new_mean, (new_covariance + new_covariance.T) / 2


@dataclass
class TrackState:
    id: int
    mean: np.ndarray
    covariance: np.ndarray
    last_box: BoundingBox
    missed: int = 0
    # (record, matched) per frame since the track was born
    history: List[Tuple[Tuple[int, int, int, int, int], bool]] = field(default_factory=list)
    matched_frames: int = 0

    @property
    def center(self) -> Tuple[float, float]:
        return (float(self.mean[0]), float(self.mean[1]))

    @property
    def velocity(self) -> Tuple[float, float]:
        return (float(self.mean[2]), float(self.mean[3]))


def _box_center(box: BoundingBox) -> np.ndarray:
    return np.array(box.center, dtype=float)


def _predicted_box(track: TrackState, frame: int, width: int, height: int) -> Tuple[int, int, int, int, int]:
    w = min(track.last_box.w, width)
    h = min(track.last_box.h, height)
    x = int(round(track.mean[0] - w / 2.0))
    y = int(round(track.mean[1] - h / 2.0))
    x = min(max(x, 0), width - w)
    y = min(max(y, 0), height - h)
    return (frame, x, y, w, h)


def _associate(tracks: List[TrackState], detections: List[BoundingBox], gate_radius: float) -> List[Tuple[int, int]]:
    """Greedy nearest-neighbour pairs (track index, detection index) within the gate"""
    if not tracks or not detections:
        return []
    predicted = np.array([t.center for t in tracks])
    observed = np.array([b.center for b in detections])
    distances = np.hypot(*(predicted[:, None, :] - observed[None, :, :]).transpose(2, 0, 1))
    candidates = sorted(
        (float(distances[i, j]), tracks[i].id, j, i)
        for i in range(len(tracks))
        for j in range(len(detections))
        if distances[i, j] <= gate_radius
    )
    used_tracks, used_detections, pairs = set(), set(), []
    for _, _, j, i in candidates:
        if i in used_tracks or j in used_detections:
            continue
        used_tracks.add(i)
        used_detections.add(j)
        pairs.append((i, j))
    return pairs


def _finish(track: TrackState, config: TrackerConfig) -> Optional[Tube]:
    history = list(track.history)
    # trailing predictions past the last detection are not part of the tube
    while history and not history[-1][1]:
        history.pop()
    if len(history) < config.min_length:
        return None
    records = [record for record, _ in history]
    return Tube.from_records(track.id, records)


def track_frames(
    frames: Iterable[GrayFrame],
    config: Optional[TrackerConfig] = None,
    first_index: int = 0,
) -> TubeDatabase:
    """Run the online phase over a frame sequence and return its tubes"""
    config = config or TrackerConfig()
    kalman = KalmanFilterCV(config.process_noise, config.measurement_noise)
    model: Optional[BackgroundModel] = None
    live: List[TrackState] = []
    tubes: List[Tube] = []
    next_id = 0
    width = height = 0
    frame_index = first_index - 1

    for frame_index, frame in enumerate(frames, start=first_index):
        if model is None:
            model = BackgroundModel.from_frame(frame, config.stddev_floor)
            height, width = frame.pixels.shape
        elif frame.pixels.shape != (height, width):
            raise DimensionMismatchError(
                f"frame {frame_index} is {frame.width}x{frame.height}, sequence started at {width}x{height}"
            )

        mask = foreground_mask(model, frame, config.k, config.stddev_floor)
        detections = connected_components(mask, config.min_area, frame_index)

        for track in live:
            track.mean, track.covariance = kalman.predict(track.mean, track.covariance)

        matched_tracks, matched_detections = set(), set()
        for i, j in _associate(live, detections, config.gate_radius):
            track, box = live[i], detections[j]
            track.mean, track.covariance = kalman.update(track.mean, track.covariance, _box_center(box))
            track.last_box = box
            track.missed = 0
            track.matched_frames += 1
            track.history.append((box.as_record(), True))
            matched_tracks.add(i)
            matched_detections.add(j)

        survivors = []
        for i, track in enumerate(live):
            if i not in matched_tracks:
                track.missed += 1
                if track.missed >= config.max_missed:
                    tube = _finish(track, config)
                    if tube is not None:
                        tubes.append(tube)
                    logger.debug(f"Track {track.id} terminated at frame {frame_index}")
                    continue
                track.history.append((_predicted_box(track, frame_index, width, height), False))
            survivors.append(track)

        for j, box in enumerate(detections):
            if j in matched_detections:
                continue
            mean, covariance = kalman.initiate(_box_center(box))
            survivors.append(TrackState(next_id, mean, covariance, box, history=[(box.as_record(), True)], matched_frames=1))
            next_id += 1
        live = survivors

        if config.selective_update:
            model = update_background(model, frame, config.learning_rate, foreground=mask)
        else:
            model = update_background(model, frame, config.learning_rate)

    if model is None:
        raise ValidationError("tracking needs at least one frame")

    for track in live:
        tube = _finish(track, config)
        if tube is not None:
            tubes.append(tube)

    logger.info(f"Tracked {frame_index - first_index + 1} frames: {next_id} tracks, {len(tubes)} tubes")
    return TubeDatabase(tuple(tubes), width, height, fps=config.fps)


def track_directory(frames_dir: Union[str, Path], config: Optional[TrackerConfig] = None) -> TubeDatabase:
    """Track a directory of frame_%06d.pgm files"""
    frames = list_frames(frames_dir)
    if not frames:
        raise ValidationError(f"no PGM/PPM frames in {frames_dir}")
    indices = [index for index, _ in frames]
    if indices != list(range(indices[0], indices[0] + len(indices))):
        raise ValidationError(f"frame indices in {frames_dir} are not consecutive")
    return track_frames((GrayFrame(read_gray(path)) for _, path in frames), config, first_index=indices[0])
