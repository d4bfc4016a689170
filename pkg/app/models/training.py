import enum
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.models.params import ModelParams


class Phase(str, enum.Enum):
    WARM_UP = "warmup"
    JOINT = "joint"


def decreasing_fraction(losses: Sequence[float]) -> Optional[float]:
    """Share of consecutive epoch pairs where the mean loss went down; None below two epochs."""
    if len(losses) < 2:
        return None
    steps = [b < a for a, b in zip(losses, losses[1:])]
    return sum(steps) / len(steps)


class TrainConfig(BaseModel):
    """Schedule of the nested loop: warm-up against fixed labels, then joint rounds"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    warmup_epochs: int = Field(30, ge=0)
    joint_rounds: int = Field(5, ge=0)
    epochs_per_round: int = Field(10, ge=1)
    lr_warmup_start: float = Field(5e-3, gt=0.0)
    lr_warmup_floor: float = Field(
        0.1, gt=0.0, le=1.0, description="Cosine decay ends at this fraction of the start rate"
    )
    lr_joint: float = Field(5e-4, gt=0.0, description="Constant rate during joint rounds")
    blend_init_scale: float = Field(
        1.0, ge=0.0, description="Std of the seeded blend-head jitter applied before training"
    )
    adam_beta1: float = Field(0.9, ge=0.0, lt=1.0)
    adam_beta2: float = Field(0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(1e-8, gt=0.0)
    drift_threshold: float = Field(0.15, gt=0.0, description="Max mean |Y(t+1) - Y(t)|")
    seed: int = 0


class RoundReport(BaseModel):
    round_index: int
    mean_loss: float
    mean_drift: float
    mean_label_luminance: float
    decreasing_fraction: Optional[float] = Field(
        None, description="Share of epochs whose mean loss fell below the previous epoch"
    )
    wall_time_s: float


class EpochRecord(BaseModel):
    """One line of the run-log"""

    phase: Phase
    round_index: int
    epoch: int
    mean_loss: float
    lr: float
    drift: float


@dataclass
class TrainState:
    params: ModelParams
    adam_m: np.ndarray
    adam_v: np.ndarray
    rng: np.random.Generator
    step: int = 0
    phase: Phase = Phase.WARM_UP
    round_index: int = 0
    label_versions: Dict[str, str] = field(default_factory=dict)
    labels: Dict[str, np.ndarray] = field(default_factory=dict)
    drift_history: List[float] = field(default_factory=list)
    epoch_log: List[EpochRecord] = field(default_factory=list)
    drift_strikes: int = 0

    @classmethod
    def fresh(cls, params: ModelParams, seed: int) -> "TrainState":
        size = params.to_vector().size
        return cls(
            params=params,
            adam_m=np.zeros(size),
            adam_v=np.zeros(size),
            rng=np.random.default_rng(seed),
        )

    @property
    def last_drift(self) -> Optional[float]:
        return self.drift_history[-1] if self.drift_history else None

    def phase_losses(self, phase: Phase, round_index: int = 0) -> List[float]:
        return [
            r.mean_loss
            for r in self.epoch_log
            if r.phase == phase and r.round_index == round_index
        ]
