"""Checkpoint codec.

Layout: ``LOOPX1\\n``, one JSON header line with the model dimensions, then the
parameter blocks as little-endian float32 in ModelParams field order.
"""

import json
import logging
from pathlib import Path
from typing import Union

import numpy as np

from app.core.exceptions import CheckpointError
from app.models.params import ModelDims, ModelParams

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"LOOPX1"
_FLOAT = np.dtype("<f4")


def encode_checkpoint(params: ModelParams) -> bytes:
    dims = params.dims
    header = json.dumps(
        {"K_t": dims.curve_knots, "B": dims.lut_count, "D": dims.lut_size},
        sort_keys=True,
        separators=(",", ":"),
    )
    body = b"".join(np.ascontiguousarray(a, dtype=_FLOAT).tobytes() for a in params.arrays())
    return CHECKPOINT_MAGIC + b"\n" + header.encode("ascii") + b"\n" + body


def decode_checkpoint(blob: bytes) -> ModelParams:
    magic, sep, rest = blob.partition(b"\n")
    if magic != CHECKPOINT_MAGIC or not sep:
        raise CheckpointError("not a checkpoint: bad magic")
    header_line, sep, body = rest.partition(b"\n")
    if not sep:
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(header_line.decode("ascii"))
        dims = ModelDims(
            curve_knots=header["K_t"], lut_count=header["B"], lut_size=header["D"]
        )
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointError(f"malformed checkpoint header: {e}") from e

    expected = dims.num_params * _FLOAT.itemsize
    if len(body) != expected:
        raise CheckpointError(f"checkpoint payload is {len(body)} bytes, expected {expected}")
    vector = np.frombuffer(body, dtype=_FLOAT).astype(np.float64)
    return ModelParams.from_vector(vector, dims)


def save_checkpoint(path: Union[str, Path], params: ModelParams) -> Path:
    path = Path(path)
    logger.info(f"save_checkpoint: Entry - {path}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(params))
    logger.info(f"save_checkpoint: Success - {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> ModelParams:
    path = Path(path)
    logger.info(f"load_checkpoint: Entry - {path}")
    try:
        params = decode_checkpoint(path.read_bytes())
    except CheckpointError as e:
        logger.error(f"load_checkpoint: Failure - {e}")
        raise
    logger.info(f"load_checkpoint: Success - {path}, dims: {params.dims.model_dump()}")
    return params
