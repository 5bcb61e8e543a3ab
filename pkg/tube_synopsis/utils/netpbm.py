"""
PGM/PPM frame access through Pillow
"""

import logging
import re
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..exceptions import FrameFormatError, SourceFrameMissingError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FRAME_SUFFIXES = (".pgm", ".ppm")
_INDEX_PATTERN = re.compile(r"(\d+)$")


def _open(path: PathLike) -> Image.Image:
    try:
        image = Image.open(path)
        image.load()
        return image
    except FileNotFoundError:
        raise
    except (UnidentifiedImageError, OSError) as e:
        raise FrameFormatError(f"{path}: not a readable PGM/PPM image ({e})") from e


def read_gray(path: PathLike) -> np.ndarray:
    """Read a frame as an H x W uint8 array"""
    return np.asarray(_open(path).convert("L"), dtype=np.uint8)


def read_rgb(path: PathLike) -> np.ndarray:
    """Read a frame as an H x W x 3 uint8 array (gray sources are replicated)"""
    return np.asarray(_open(path).convert("RGB"), dtype=np.uint8)


def write_pgm(pixels: np.ndarray, path: PathLike) -> Path:
    if pixels.ndim != 2:
        raise FrameFormatError(f"PGM frames are single channel, got shape {pixels.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8)).save(path, format="PPM")
    return path


def write_ppm(pixels: np.ndarray, path: PathLike) -> Path:
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise FrameFormatError(f"PPM frames are H x W x 3, got shape {pixels.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8)).save(path, format="PPM")
    return path


def frame_name(index: int, suffix: str = ".pgm") -> str:
    return f"frame_{index:06d}{suffix}"


def list_frames(directory: PathLike) -> List[Tuple[int, Path]]:
    """Frame files in ``directory`` as (index, path), ordered by the zero-padded index in the name"""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"frame directory {directory} does not exist")
    frames = []
    for path in directory.iterdir():
        if path.suffix.lower() not in FRAME_SUFFIXES:
            continue
        match = _INDEX_PATTERN.search(path.stem)
        if match is None:
            continue
        frames.append((int(match.group(1)), path))
    frames.sort()
    return frames


def frame_path(directory: PathLike, index: int) -> Path:
    """Path of source frame ``index``; PPM wins over PGM when both exist"""
    directory = Path(directory)
    for suffix in (".ppm", ".pgm"):
        candidate = directory / frame_name(index, suffix)
        if candidate.exists():
            return candidate
    raise SourceFrameMissingError(index, str(directory))
