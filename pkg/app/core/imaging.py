"""Raster primitives shared by fusion, the correction model and the losses.

Images are ``(H, W, 3)`` float arrays with nominal range [0, 1]; luma maps are
``(H, W)``. Everything here is a pure function of its inputs.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from app.core.exceptions import InvalidImage, LevelCountTooLarge, MismatchedPyramid

# Rec.709 luma
LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722], dtype=np.float64)

BINOMIAL_KERNEL = np.array([1.0, 4.0, 6.0, 4.0, 1.0], dtype=np.float64) / 16.0

STATS_FIELDS: Tuple[str, ...] = (
    "luma_mean",
    "luma_std",
    "luma_p5",
    "luma_p25",
    "luma_p50",
    "luma_p75",
    "luma_p95",
    "mean_r",
    "mean_g",
    "mean_b",
)
STATS_SIZE = len(STATS_FIELDS)
_PERCENTILES = (5, 25, 50, 75, 95)


@dataclass(frozen=True)
class Pyramid:
    levels: Tuple[np.ndarray, ...]

    @property
    def depth(self) -> int:
        return len(self.levels)


def validate_image(img, name: str = "image") -> np.ndarray:
    """Check the Image invariants and return the data as a float64 array."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidImage(f"{name}: expected shape (H, W, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidImage(f"{name}: empty raster {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidImage(f"{name}: contains non-finite values")
    return arr


def luminance(img: np.ndarray) -> np.ndarray:
    return np.asarray(img, dtype=np.float64) @ LUMA_WEIGHTS


def nearest_rank(sorted_values: np.ndarray, percent: float) -> float:
    n = sorted_values.size
    rank = max(int(np.ceil(percent / 100.0 * n)), 1)
    return float(sorted_values[rank - 1])


def global_stats(img: np.ndarray) -> np.ndarray:
    """Ten-value summary used by the descriptor and blend heads (see STATS_FIELDS)."""
    img = np.asarray(img, dtype=np.float64)
    luma = luminance(img).ravel()
    ordered = np.sort(luma, kind="stable")
    stats = np.empty(STATS_SIZE, dtype=np.float64)
    stats[0] = luma.mean()
    stats[1] = luma.std()
    for i, p in enumerate(_PERCENTILES):
        stats[2 + i] = nearest_rank(ordered, p)
    stats[7:10] = img.reshape(-1, 3).mean(axis=0)
    return stats


def _correlate_valid(arr: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    taps = kernel.size
    length = arr.shape[axis] - taps + 1
    out = None
    for i, k in enumerate(kernel):
        part = k * np.take(arr, np.arange(i, i + length), axis=axis)
        out = part if out is None else out + part
    return out


def _pad_edge(arr: np.ndarray, width: int) -> np.ndarray:
    pad = [(width, width), (width, width)] + [(0, 0)] * (arr.ndim - 2)
    return np.pad(arr, pad, mode="edge")


def blur(arr: np.ndarray) -> np.ndarray:
    """Separable [1,4,6,4,1]/16 blur with replicated borders."""
    padded = _pad_edge(np.asarray(arr, dtype=np.float64), 2)
    rows = _correlate_valid(padded, BINOMIAL_KERNEL, axis=0)
    return _correlate_valid(rows, BINOMIAL_KERNEL, axis=1)


def half_size(n: int) -> int:
    return (n + 1) // 2


def downsample(arr: np.ndarray) -> np.ndarray:
    return blur(arr)[::2, ::2]


def upsample(coarse: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    """Zero-insert ``coarse`` up to ``shape`` and blur with the kernel scaled by 2.

    The coarse level is edge-replicated before insertion so constants map to
    the same constant at every output pixel, borders included.
    """
    height, width = shape
    coarse = np.asarray(coarse, dtype=np.float64)
    if coarse.shape[0] != half_size(height) or coarse.shape[1] != half_size(width):
        raise MismatchedPyramid(
            f"cannot upsample {coarse.shape[:2]} to {(height, width)}"
        )
    padded = _pad_edge(coarse, 2)
    sparse = np.zeros(
        (2 * padded.shape[0], 2 * padded.shape[1]) + padded.shape[2:], dtype=np.float64
    )
    sparse[::2, ::2] = padded
    kernel = 2.0 * BINOMIAL_KERNEL
    rows = _correlate_valid(sparse, kernel, axis=0)[2 : 2 + height]
    return _correlate_valid(rows, kernel, axis=1)[:, 2 : 2 + width]


def max_levels(height: int, width: int) -> int:
    """Deepest pyramid allowed for a raster: floor(log2(min dim)) + 1."""
    return int(np.floor(np.log2(min(height, width)))) + 1


def check_levels(shape: Tuple[int, ...], levels: int) -> None:
    if levels < 1 or 2 ** (levels - 1) > min(shape[0], shape[1]):
        raise LevelCountTooLarge(
            f"{levels} pyramid levels do not fit a {shape[0]}x{shape[1]} raster"
        )


def gaussian_pyramid(src: np.ndarray, levels: int) -> Pyramid:
    src = np.asarray(src, dtype=np.float64)
    check_levels(src.shape, levels)
    out = [src]
    for _ in range(levels - 1):
        out.append(downsample(out[-1]))
    return Pyramid(levels=tuple(out))


def laplacian_pyramid(src: np.ndarray, levels: int) -> Pyramid:
    gauss = gaussian_pyramid(src, levels).levels
    bands = [
        gauss[k] - upsample(gauss[k + 1], gauss[k].shape[:2])
        for k in range(levels - 1)
    ]
    bands.append(gauss[-1])
    return Pyramid(levels=tuple(bands))


def _check_consistent(pyr: Pyramid) -> None:
    if pyr.depth < 1:
        raise MismatchedPyramid("pyramid has no levels")
    for k in range(pyr.depth - 1):
        fine, coarse = pyr.levels[k], pyr.levels[k + 1]
        expected = (half_size(fine.shape[0]), half_size(fine.shape[1])) + fine.shape[2:]
        if coarse.shape != expected:
            raise MismatchedPyramid(
                f"level {k + 1} has shape {coarse.shape}, expected {expected}"
            )


def reconstruct(pyr: Pyramid) -> np.ndarray:
    _check_consistent(pyr)
    img = pyr.levels[-1]
    for band in reversed(pyr.levels[:-1]):
        img = band + upsample(img, band.shape[:2])
    return img
