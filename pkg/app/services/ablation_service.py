import logging
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from app.core.exceptions import EmptyDataset
from app.models.dataset import Scene
from app.models.losses import LossConfig
from app.models.params import ModelParams
from app.models.reports import AblationReport, AblationRow
from app.models.run_config import RunConfig
from app.services.correction_model import forward, init_identity
from app.services.data_service import DatasetService, sort_by_mean_intensity
from app.services.eval_service import BASELINE_METHOD, EvaluationService
from app.services.loss_service import LossService
from app.services.trainer_service import TrainerService

logger = logging.getLogger(__name__)


def heldout_lumi(params: ModelParams, scenes: Sequence[Scene], margin: float = 0.05) -> Optional[float]:
    """Mean unit-weight ranking loss of the model's descriptors over dark-to-bright sequences."""
    if not scenes:
        return None
    ranking = LossService(LossConfig(w_lumi=1.0, margin=margin))
    values = []
    for scene in scenes:
        order = sort_by_mean_intensity(scene.images)
        descriptors = [forward(params, scene.images[i]).descriptor for i in order]
        values.append(ranking.lumi_rank(descriptors).value)
    return float(np.mean(values))


class AblationService:
    """Trains the schedule and loss variants on one corpus and tabulates them.

    Settings: identity (no training), warmup_only, joint_only, full, and
    full_no_lumi (ranking weight zero), plus the rule-based fusion baseline.
    """

    SETTINGS = ("identity", "warmup_only", "joint_only", "full", "full_no_lumi")

    def __init__(self, run_config: RunConfig, threads: int = 1):
        self.config = run_config
        self.threads = threads
        self.logger = logging.getLogger(__name__)

    def _variant(self, setting: str):
        train = self.config.effective_train
        loss = self.config.loss
        if setting == "warmup_only":
            train = train.model_copy(update={"joint_rounds": 0})
        elif setting == "joint_only":
            train = train.model_copy(update={"warmup_epochs": 0})
        elif setting == "full_no_lumi":
            loss = loss.model_copy(update={"w_lumi": 0.0})
        return train, loss

    def _train(self, setting: str, train_scenes: Sequence[Scene], out_root: Optional[Path]) -> ModelParams:
        if setting == "identity":
            return init_identity(self.config.model)
        train_cfg, loss_cfg = self._variant(setting)
        trainer = TrainerService(
            train_cfg=train_cfg,
            loss_cfg=loss_cfg,
            fusion_params=self.config.fusion,
            dims=self.config.model,
            threads=self.threads,
            out_dir=out_root / setting if out_root is not None else None,
        )
        state, _ = trainer.train(train_scenes)
        return state.params

    def run(
        self, scenes: Sequence[Scene], out_root: Optional[Path] = None
    ) -> AblationReport:
        if not scenes:
            raise EmptyDataset("ablation needs at least one scene")
        seed = self.config.effective_train.seed
        train_scenes, holdout = DatasetService(self.threads).split(
            scenes, self.config.holdout_fraction, seed
        )
        eval_scenes = holdout or train_scenes
        self.logger.info(
            f"run: Entry - train: {len(train_scenes)}, held-out: {len(holdout)}"
        )
        evaluator = EvaluationService(self.config.fusion, self.config.loss, self.threads)

        rows: List[AblationRow] = []
        baseline = None
        for setting in self.SETTINGS:
            params = self._train(setting, train_scenes, out_root)
            report = evaluator.evaluate(params, eval_scenes, with_baseline=baseline is None)
            if baseline is None:
                baseline = report.mef_mean(BASELINE_METHOD)
            sec, mef = report.sec_mean, report.mef_mean()
            rows.append(
                AblationRow(
                    setting=setting,
                    sec_psnr=sec.psnr,
                    sec_ssim=sec.ssim,
                    mef_psnr=mef.psnr,
                    mef_ssim=mef.ssim,
                    heldout_lumi=heldout_lumi(params, eval_scenes, self.config.loss.margin),
                )
            )
            self.logger.info(f"run: {setting} SEC PSNR {sec.psnr} MEF PSNR {mef.psnr}")

        rows.append(AblationRow(setting=BASELINE_METHOD, mef_psnr=baseline.psnr, mef_ssim=baseline.ssim))
        self.logger.info(f"run: Success - {len(rows)} rows")
        return AblationReport(rows=rows)
