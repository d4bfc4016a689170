from app.models.dataset import CrfKind, CrfSpec, ExposureSequence, Scene, SceneRecord
from app.models.fusion import FusionParams
from app.models.losses import LossConfig
from app.models.params import ModelDims, ModelParams, ParamGrads
from app.models.reports import AblationReport, EvalReport
from app.models.run_config import RunConfig
from app.models.training import Phase, RoundReport, TrainConfig, TrainState

__all__ = [
    "CrfKind",
    "CrfSpec",
    "ExposureSequence",
    "Scene",
    "SceneRecord",
    "FusionParams",
    "LossConfig",
    "ModelDims",
    "ModelParams",
    "ParamGrads",
    "AblationReport",
    "EvalReport",
    "RunConfig",
    "Phase",
    "RoundReport",
    "TrainConfig",
    "TrainState",
]
