import logging
from pathlib import Path
from typing import Union

import cv2
import numpy as np

from app.core.exceptions import InvalidImage

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def read_png(path: PathLike) -> np.ndarray:
    """Decode an 8- or 16-bit PNG into an (H, W, 3) float32 array in [0, 1].

    Stored sRGB-encoded values are mapped linearly; no colour management.
    """
    path = Path(path)
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise InvalidImage(f"cannot decode PNG: {path}")

    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise InvalidImage(f"unsupported PNG sample type {raw.dtype}: {path}")

    if raw.ndim == 2:
        rgb = np.repeat(raw[:, :, None], 3, axis=2)
    elif raw.shape[2] == 4:
        rgb = cv2.cvtColor(raw, cv2.COLOR_BGRA2RGB)
    else:
        rgb = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    return (rgb.astype(np.float64) / scale).astype(np.float32)


def write_png(path: PathLike, img: np.ndarray, bit_depth: int = 16) -> Path:
    """Quantize an [0, 1] image to 8 or 16 bits and write it as PNG."""
    if bit_depth not in (8, 16):
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    path = Path(path)
    arr = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidImage(f"expected (H, W, 3) image, got {arr.shape}")

    peak, dtype = (65535.0, np.uint16) if bit_depth == 16 else (255.0, np.uint8)
    quantized = np.rint(arr * peak).astype(dtype)
    bgr = cv2.cvtColor(quantized, cv2.COLOR_RGB2BGR)

    path.parent.mkdir(parents=True, exist_ok=True)
    # Fixed compression level; equal images must give equal bytes
    if not cv2.imwrite(str(path), bgr, [cv2.IMWRITE_PNG_COMPRESSION, 6]):
        raise OSError(f"cannot write PNG: {path}")
    logger.debug(f"write_png: Success - {path} ({bit_depth}-bit)")
    return path
