import hashlib
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.core.imaging import STATS_SIZE

# Descriptor and blend heads see the stats vector plus a bias input
HEAD_INPUTS = STATS_SIZE + 1


class ModelDims(BaseModel):
    """Shape of the correction model"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    curve_knots: int = Field(16, ge=1, description="K_t: tone-curve segments")
    lut_count: int = Field(4, ge=1, description="B: basis LUTs in the bank")
    lut_size: int = Field(9, ge=2, description="D: lattice points per LUT axis")

    @property
    def num_params(self) -> int:
        d = self.lut_size
        return self.curve_knots + self.lut_count * d**3 * 3 + HEAD_INPUTS * (1 + self.lut_count)


@dataclass
class ModelParams:
    """All learnable parameters, in checkpoint field order."""

    curve_logits: np.ndarray  # (K_t,)
    lut_bank: np.ndarray  # (B, D, D, D, 3)
    fl_head: np.ndarray  # (11,) weights then bias
    blend_head: np.ndarray  # (B, 11)

    FIELDS = ("curve_logits", "lut_bank", "fl_head", "blend_head")

    @property
    def dims(self) -> ModelDims:
        return ModelDims(
            curve_knots=self.curve_logits.shape[0],
            lut_count=self.lut_bank.shape[0],
            lut_size=self.lut_bank.shape[1],
        )

    def arrays(self) -> Tuple[np.ndarray, ...]:
        return tuple(getattr(self, name) for name in self.FIELDS)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()]).astype(np.float64)

    @classmethod
    def shapes(cls, dims: ModelDims) -> Tuple[Tuple[int, ...], ...]:
        d = dims.lut_size
        return (
            (dims.curve_knots,),
            (dims.lut_count, d, d, d, 3),
            (HEAD_INPUTS,),
            (dims.lut_count, HEAD_INPUTS),
        )

    @classmethod
    def from_vector(cls, vector: np.ndarray, dims: ModelDims):
        vector = np.asarray(vector, dtype=np.float64)
        if vector.size != dims.num_params:
            raise ValueError(f"expected {dims.num_params} values, got {vector.size}")
        parts, offset = [], 0
        for shape in cls.shapes(dims):
            size = int(np.prod(shape))
            parts.append(vector[offset : offset + size].reshape(shape).copy())
            offset += size
        return cls(*parts)

    @classmethod
    def zeros(cls, dims: ModelDims):
        return cls(*(np.zeros(shape, dtype=np.float64) for shape in cls.shapes(dims)))

    def copy(self):
        return type(self)(*(a.copy() for a in self.arrays()))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def fingerprint(self) -> str:
        digest = hashlib.blake2b(digest_size=16)
        for a in self.arrays():
            digest.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
        return digest.hexdigest()


class ParamGrads(ModelParams):
    """Gradient of a scalar objective w.r.t. every ModelParams entry."""

    def add_(self, other: ModelParams) -> "ParamGrads":
        for mine, theirs in zip(self.arrays(), other.arrays()):
            mine += theirs
        return self
