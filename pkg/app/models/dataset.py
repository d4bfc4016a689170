import enum
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

# Five EVs over the standard range, and a wider preset
EV_PRESETS = {
    "standard": (-1.5, -0.75, 0.0, 0.75, 1.5),
    "wide": (-3.0, -1.5, 0.0, 1.5, 3.0),
}


class CrfKind(str, enum.Enum):
    GAMMA = "gamma"
    SMOOTHSTEP = "smoothstep"


class CrfSpec(BaseModel):
    """Camera response function applied after exposure scaling"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: CrfKind = CrfKind.GAMMA
    gamma: float = Field(2.2, gt=0.0)


def check_increasing(evs) -> List[float]:
    evs = [float(ev) for ev in evs]
    if not evs:
        raise ValueError("EV list is empty")
    if any(b <= a for a, b in zip(evs, evs[1:])):
        raise ValueError(f"EV list must be strictly increasing: {evs}")
    return evs


class SceneRecord(BaseModel):
    """On-disk description of one scene folder"""

    scene_id: str
    evs: List[float]
    paths: List[str]
    gt_path: Optional[str] = None

    @field_validator("evs")
    @classmethod
    def evs_increasing(cls, v: List[float]) -> List[float]:
        return check_increasing(v)


@dataclass
class ExposureSequence:
    """Images of one scene ordered dark to bright, with their EVs"""

    images: List[np.ndarray]
    evs: Optional[List[float]] = None

    def __len__(self) -> int:
        return len(self.images)


@dataclass
class Scene:
    scene_id: str
    sequence: ExposureSequence
    ground_truth: Optional[np.ndarray] = None

    @property
    def images(self) -> List[np.ndarray]:
        return self.sequence.images

    @property
    def evs(self) -> Optional[List[float]]:
        return self.sequence.evs
