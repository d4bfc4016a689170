from pathlib import Path
from typing import Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from app.core.exceptions import ConfigError
from app.models.fusion import FusionParams
from app.models.losses import LossConfig
from app.models.params import ModelDims
from app.models.training import TrainConfig


class RunConfig(BaseModel):
    """JSON run file; section keys mirror the config models one to one"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    data_root: Path = Field(description="Dataset folder written by `synth`")
    output_root: Path = Field(description="Checkpoints, run-log and reports go here")
    seed: Optional[int] = Field(None, description="Overrides train.seed when set")
    holdout_fraction: float = Field(0.25, ge=0.0, lt=1.0, description="Held-out share for `ablate`")
    train: TrainConfig = Field(default_factory=TrainConfig)
    fusion: FusionParams = Field(default_factory=FusionParams)
    loss: LossConfig = Field(default_factory=LossConfig)
    model: ModelDims = Field(default_factory=ModelDims)

    @field_validator("data_root")
    @classmethod
    def data_root_exists(cls, v: Path) -> Path:
        if not v.is_dir():
            raise ValueError(f"data_root {v} is not a directory")
        return v

    @property
    def effective_train(self) -> TrainConfig:
        if self.seed is None:
            return self.train
        return self.train.model_copy(update={"seed": self.seed})


def load_run_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        return RunConfig.model_validate_json(text)
    except ValidationError as e:
        raise ConfigError(f"invalid config {path}:\n{e}") from e
