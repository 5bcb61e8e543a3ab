"""
Synopsis rendering: annotated boxes or Poisson-stitched object patches

Patches are composited with the source gradients as guidance field and the
background as Dirichlet boundary. The discrete system is solved with
natural-order Gauss-Seidel (or directly, for reference).
"""

import colorsys
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse
from PIL import Image, ImageDraw, ImageFont
from pydantic import BaseModel, ConfigDict, Field
from scipy.sparse.linalg import spsolve, splu

from ..exceptions import DimensionMismatchError, ValidationError
from ..utils.netpbm import frame_name, frame_path, list_frames, read_rgb, write_ppm
from .scheduler import SynopsisSchedule
from .tube_model import BoundingBox, TubeDatabase

logger = logging.getLogger(__name__)

_NEIGHBOURS = ((-1, 0), (1, 0), (0, -1), (0, 1))
_GOLDEN_RATIO_CONJUGATE = 0.618033988749895


class SolverConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    max_iters: int = Field(10_000, ge=1)
    tolerance: float = Field(1e-3, gt=0)
    method: Literal["gauss_seidel", "direct"] = "gauss_seidel"


@dataclass(frozen=True)
class RgbImage:
    """Three-channel 8-bit image stored as an H x W x 3 array"""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise DimensionMismatchError(f"RGB image must be H x W x 3, got shape {pixels.shape}")
        object.__setattr__(self, "pixels", np.clip(pixels, 0, 255).astype(np.uint8, copy=False))

    @classmethod
    def blank(cls, width: int, height: int, value: int = 128) -> "RgbImage":
        return cls(np.full((height, width, 3), value, dtype=np.uint8))

    @classmethod
    def from_gray(cls, gray: np.ndarray) -> "RgbImage":
        return cls(np.repeat(np.asarray(gray, dtype=np.uint8)[:, :, None], 3, axis=2))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RgbImage":
        return cls(read_rgb(path))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, RgbImage) and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True)
class Patch:
    """
    Source region, blend mask and target position.

    The mask must leave a one-pixel margin so every masked pixel has all four
    neighbours inside the patch.
    """

    source: np.ndarray
    mask: np.ndarray
    x: int
    y: int

    def __post_init__(self):
        source = np.asarray(self.source, dtype=float)
        if source.ndim == 2:
            source = np.repeat(source[:, :, None], 3, axis=2)
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != source.shape[:2]:
            raise DimensionMismatchError(f"mask shape {mask.shape} differs from patch shape {source.shape[:2]}")
        if mask.any() and (mask[0].any() or mask[-1].any() or mask[:, 0].any() or mask[:, -1].any()):
            raise ValidationError("patch mask touches the patch border")
        object.__setattr__(self, "source", source)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_box(cls, frame: np.ndarray, box: BoundingBox) -> "Patch":
        """Crop ``box`` out of a full frame; the mask is the box minus a one-pixel margin"""
        crop = np.asarray(frame)[box.y : box.y + box.h, box.x : box.x + box.w]
        mask = np.zeros((box.h, box.w), dtype=bool)
        mask[1:-1, 1:-1] = True
        return cls(crop, mask, box.x, box.y)

    @property
    def width(self) -> int:
        return self.source.shape[1]

    @property
    def height(self) -> int:
        return self.source.shape[0]


@dataclass(frozen=True)
class BlendResult:
    image: RgbImage
    # float solution before 8-bit rounding, clamped to [0, 255]
    values: np.ndarray
    residual: float
    iterations: int
    converged: bool


def _region(background: RgbImage, patch: Patch) -> Tuple[slice, slice]:
    if patch.x < 0 or patch.y < 0 or patch.x + patch.width > background.width or patch.y + patch.height > background.height:
        raise ValidationError(
            f"patch {patch.width}x{patch.height} at ({patch.x}, {patch.y}) does not fit "
            f"in a {background.width}x{background.height} background"
        )
    return slice(patch.y, patch.y + patch.height), slice(patch.x, patch.x + patch.width)


def _guidance(source: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """4-neighbour Laplacian (4 s_p - sum of neighbours) at the given pixels, per channel"""
    lap = 4.0 * source[ys, xs]
    for dy, dx in _NEIGHBOURS:
        lap -= source[ys + dy, xs + dx]
    return lap


def _assemble(target: np.ndarray, patch: Patch):
    """Sparse system A f = b over masked pixels in raster order"""
    ys, xs = np.nonzero(patch.mask)
    count = len(ys)
    index = np.full(patch.mask.shape, -1, dtype=np.int64)
    index[ys, xs] = np.arange(count)

    rows = [np.arange(count)]
    cols = [np.arange(count)]
    data = [np.full(count, 4.0)]
    rhs = _guidance(patch.source, ys, xs)
    for dy, dx in _NEIGHBOURS:
        neighbour = index[ys + dy, xs + dx]
        inside = neighbour >= 0
        rows.append(np.nonzero(inside)[0])
        cols.append(neighbour[inside])
        data.append(np.full(int(inside.sum()), -1.0))
        boundary = ~inside
        rhs[boundary] += target[ys[boundary] + dy, xs[boundary] + dx]
    matrix = scipy.sparse.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(count, count)
    )
    return matrix, rhs, ys, xs


def poisson_residual(values: np.ndarray, patch: Patch, background: RgbImage) -> float:
    """Max |Laplacian(result) - Laplacian(patch source)| over masked pixels, from the full result image"""
    rows, cols = _region(background, patch)
    result = np.asarray(values, dtype=float)[rows, cols]
    ys, xs = np.nonzero(patch.mask)
    if len(ys) == 0:
        return 0.0
    return float(np.abs(_guidance(result, ys, xs) - _guidance(patch.source, ys, xs)).max())


def _system_residual(matrix, rhs: np.ndarray, solution: np.ndarray) -> float:
    return float(np.abs(matrix @ solution - rhs).max()) if len(rhs) else 0.0


def _gauss_seidel(matrix, rhs: np.ndarray, initial: np.ndarray, config: SolverConfig) -> Tuple[np.ndarray, float, int]:
    # one raster-order sweep is a forward substitution with the lower triangle
    lower = splu(scipy.sparse.tril(matrix, format="csc"), permc_spec="NATURAL", diag_pivot_thresh=0.0)
    upper = scipy.sparse.triu(matrix, k=1, format="csr")
    solution = initial.copy()
    residual = _system_residual(matrix, rhs, solution)
    iterations = 0
    while residual >= config.tolerance and iterations < config.max_iters:
        solution = lower.solve(rhs - upper @ solution)
        iterations += 1
        residual = _system_residual(matrix, rhs, solution)
    return solution, residual, iterations


def poisson_blend(background: RgbImage, patch: Patch, solver: Optional[SolverConfig] = None) -> BlendResult:
    """Blend a patch into the background; pixels outside the mask are returned unchanged"""
    solver = solver or SolverConfig()
    rows, cols = _region(background, patch)
    values = background.pixels.astype(float)
    target = values[rows, cols]
    if not patch.mask.any():
        return BlendResult(background, values, 0.0, 0, True)

    matrix, rhs, ys, xs = _assemble(target, patch)
    if solver.method == "direct":
        solution = np.column_stack([spsolve(matrix.tocsc(), rhs[:, c]) for c in range(3)])
        residual, iterations = _system_residual(matrix, rhs, solution), 1
    else:
        solution, residual, iterations = _gauss_seidel(matrix, rhs, target[ys, xs], solver)

    converged = residual < solver.tolerance
    if not converged:
        logger.warning(
            f"Poisson solve stopped after {iterations} iterations with residual {residual:.3g} "
            f"(tolerance {solver.tolerance:g})"
        )
    target[ys, xs] = solution
    values[rows, cols] = target
    values = np.clip(values, 0.0, 255.0)
    image = RgbImage(np.rint(values))
    return BlendResult(image, values, residual, iterations, converged)


def dense_poisson_solve(background: RgbImage, patch: Patch) -> np.ndarray:
    """Reference solution of the same system with a dense solver, clamped to [0, 255]"""
    rows, cols = _region(background, patch)
    values = background.pixels.astype(float)
    target = values[rows, cols]
    if patch.mask.any():
        matrix, rhs, ys, xs = _assemble(target, patch)
        target[ys, xs] = np.linalg.solve(matrix.toarray(), rhs)
        values[rows, cols] = target
    return np.clip(values, 0.0, 255.0)


def group_hue(group_key: int) -> float:
    return (group_key * _GOLDEN_RATIO_CONJUGATE) % 1.0


def tube_color(tube_id: int, group_key: int) -> Tuple[int, int, int]:
    """RGB for a tube: hue from its group, brightness varied by tube id"""
    value = 0.7 + 0.3 * ((tube_id * 0.381966011250105) % 1.0)
    r, g, b = colorsys.hsv_to_rgb(group_hue(group_key), 0.9, value)
    return (int(round(r * 255)), int(round(g * 255)), int(round(b * 255)))


def _active(db: TubeDatabase, schedule: SynopsisSchedule, t: int, origin: int) -> List[Tuple[int, BoundingBox]]:
    """(tube id, original box) of every tube shown at synopsis frame t, ascending id"""
    active = []
    for tube in db.tubes:
        frame = origin + t - schedule.mapping.shift(tube.id)
        if tube.start_frame <= frame <= tube.end_frame:
            active.append((tube.id, tube.box_at(frame)))
    return active


def _origin(db: TubeDatabase, schedule: SynopsisSchedule) -> int:
    return min((schedule.mapping.shifted_span(t)[0] for t in db.tubes), default=0)


def _check_background(db: TubeDatabase, background: RgbImage) -> None:
    if (background.width, background.height) != (db.scene_width, db.scene_height):
        raise DimensionMismatchError(
            f"background is {background.width}x{background.height}, scene is {db.scene_width}x{db.scene_height}"
        )


def render_boxes(
    db: TubeDatabase,
    schedule: SynopsisSchedule,
    background: RgbImage,
    label: bool = True,
) -> List[RgbImage]:
    """One annotated frame per synopsis time; each box carries its original start frame"""
    _check_background(db, background)
    group_key = {tid: g.sorted_ids[0] for g in schedule.groups.groups for tid in g.member_ids}
    font = ImageFont.load_default()
    origin = _origin(db, schedule)
    frames = []
    for t in range(schedule.length):
        canvas = Image.fromarray(background.pixels.copy())
        draw = ImageDraw.Draw(canvas)
        for tube_id, box in _active(db, schedule, t, origin):
            color = tube_color(tube_id, group_key.get(tube_id, tube_id))
            draw.rectangle([box.x, box.y, box.x + box.w - 1, box.y + box.h - 1], outline=color)
            if label:
                text = str(db.get(tube_id).start_frame)
                left, top, right, bottom = draw.textbbox((0, 0), text, font=font)
                label_y = max(0, box.y - (bottom - top) - 3)
                draw.rectangle([box.x, label_y, box.x + right - left + 2, label_y + bottom - top + 2], fill=color)
                draw.text((box.x + 1 - left, label_y + 1 - top), text, fill=(0, 0, 0), font=font)
        frames.append(RgbImage(np.asarray(canvas)))
    logger.debug(f"Rendered {len(frames)} annotated frames")
    return frames


def render_stitched(
    db: TubeDatabase,
    schedule: SynopsisSchedule,
    background: RgbImage,
    frames_dir: Union[str, Path],
    solver: Optional[SolverConfig] = None,
) -> List[RgbImage]:
    """Poisson-blend every active tube's original patch into the background, ascending tube id"""
    _check_background(db, background)
    origin = _origin(db, schedule)
    sources: Dict[int, np.ndarray] = {}
    frames = []
    unconverged = 0
    for t in range(schedule.length):
        canvas = background
        for tube_id, box in _active(db, schedule, t, origin):
            if box.w < 3 or box.h < 3:
                logger.debug(f"Tube {tube_id} box at frame {box.frame} is too small to blend")
                continue
            if box.frame not in sources:
                source = read_rgb(frame_path(frames_dir, box.frame))
                if source.shape[:2] != (db.scene_height, db.scene_width):
                    raise DimensionMismatchError(
                        f"source frame {box.frame} is {source.shape[1]}x{source.shape[0]}, "
                        f"scene is {db.scene_width}x{db.scene_height}"
                    )
                sources[box.frame] = source
            result = poisson_blend(canvas, Patch.from_box(sources[box.frame], box), solver)
            unconverged += not result.converged
            canvas = result.image
        frames.append(canvas)
        if len(sources) > 256:  # bounded frame cache
            sources.clear()
    if unconverged:
        logger.warning(f"{unconverged} patch blends did not reach the solver tolerance")
    return frames


def estimate_background(frames_dir: Union[str, Path], max_frames: int = 50) -> RgbImage:
    """Per-pixel median over up to ``max_frames`` evenly spaced source frames"""
    frames = list_frames(frames_dir)
    if not frames:
        raise ValidationError(f"no PGM/PPM frames in {frames_dir}")
    picks = np.unique(np.linspace(0, len(frames) - 1, min(max_frames, len(frames))).astype(int))
    stack = np.stack([read_rgb(frames[i][1]) for i in picks])
    return RgbImage(np.median(stack, axis=0))


def write_frames(
    images: Sequence[RgbImage],
    out_dir: Union[str, Path],
    on_written: Optional[Callable[[Path], None]] = None,
) -> List[Path]:
    """Write frame_%06d.ppm files numbered from 0"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for index, image in enumerate(images):
        path = write_ppm(image.pixels, out_dir / frame_name(index, ".ppm"))
        paths.append(path)
        if on_written is not None:
            on_written(path)
    return paths
