import csv
import hashlib
import logging
import math
import time
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.checkpoint import save_checkpoint
from app.core.exceptions import DriftAbort, EmptyDataset, TrainerStateError
from app.core.imaging import luminance
from app.core.parallel import ordered_map
from app.models.dataset import Scene
from app.models.fusion import FusionParams
from app.models.losses import LossConfig
from app.models.params import ModelDims, ModelParams, ParamGrads
from app.models.training import (
    EpochRecord,
    Phase,
    RoundReport,
    TrainConfig,
    TrainState,
    decreasing_fraction,
)
from app.services.correction_model import backward, correct, forward, init_identity
from app.services.data_service import sort_by_mean_intensity
from app.services.fusion_service import FusionService
from app.services.loss_service import LossService
from app.services.optimizer import adam_step

logger = logging.getLogger(__name__)

RUN_LOG_NAME = "run_log.csv"
RUN_LOG_FIELDS = ("phase", "round", "epoch", "mean_loss", "lr", "drift")
MIN_DECREASING_FRACTION = 0.7


def label_version(label: np.ndarray) -> str:
    return hashlib.blake2b(np.ascontiguousarray(label).tobytes(), digest_size=16).hexdigest()


def warmup_lr(cfg: TrainConfig, epoch: int) -> float:
    """Cosine decay from lr_warmup_start down to lr_warmup_floor of it."""
    cosine = 0.5 * (1.0 + math.cos(math.pi * epoch / cfg.warmup_epochs))
    return cfg.lr_warmup_start * (cfg.lr_warmup_floor + (1.0 - cfg.lr_warmup_floor) * cosine)


def checkpoint_name(phase: Phase, round_index: int = 0) -> str:
    return "ckpt_warmup.lx" if phase == Phase.WARM_UP else f"ckpt_round_{round_index}.lx"


def infer(
    params: ModelParams,
    seq: Sequence[np.ndarray],
    fusion: Optional[FusionParams] = None,
) -> Tuple[List[np.ndarray], np.ndarray]:
    """Correct every image; fuse the corrections unless the sequence has one image."""
    if not seq:
        raise EmptyDataset("inference needs at least one image")
    corrected = [correct(params, img) for img in seq]
    if len(corrected) == 1:
        return corrected, corrected[0]
    return corrected, FusionService(fusion).fuse(corrected)


class TrainerService:
    """Nested-loop optimisation.

    Warm-up trains against labels fused from the inputs alone. Each joint
    round freezes the current model, fuses inputs together with their
    corrections into new labels, then trains against those at a constant rate.
    """

    def __init__(
        self,
        train_cfg: Optional[TrainConfig] = None,
        loss_cfg: Optional[LossConfig] = None,
        fusion_params: Optional[FusionParams] = None,
        dims: Optional[ModelDims] = None,
        threads: int = 1,
        out_dir: Optional[Union[str, Path]] = None,
    ):
        self.cfg = train_cfg or TrainConfig()
        self.losses = LossService(loss_cfg)
        self.fusion = FusionService(fusion_params)
        self.dims = dims or ModelDims()
        self.threads = threads
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.logger = logging.getLogger(__name__)

    # -- state and bookkeeping -------------------------------------------------

    def init_state(self) -> TrainState:
        """Identity model with a seeded blend head.

        Every basis LUT is the identity, so the output is the identity map for any
        blend. With equal blend logits all LUTs receive the same gradient.
        """
        state = TrainState.fresh(init_identity(self.dims), self.cfg.seed)
        if self.cfg.blend_init_scale > 0:
            state.params.blend_head += state.rng.normal(
                0.0, self.cfg.blend_init_scale, size=state.params.blend_head.shape
            )
        return state

    def _check_trend(self, label: str, fraction: Optional[float]) -> None:
        if fraction is not None and fraction < MIN_DECREASING_FRACTION:
            self.logger.warning(
                f"{label}: loss fell in only {fraction:.0%} of epochs "
                f"(expected at least {MIN_DECREASING_FRACTION:.0%})"
            )

    def _log_epoch(self, state: TrainState, record: EpochRecord) -> None:
        state.epoch_log.append(record)
        self.logger.info(
            f"epoch: {record.phase.value} round {record.round_index} epoch {record.epoch} "
            f"loss {record.mean_loss:.6f} lr {record.lr:.6g} drift {record.drift:.6f}"
        )
        if self.out_dir is None:
            return
        path = self.out_dir / RUN_LOG_NAME
        new_file = not path.exists()
        with path.open("a", newline="") as handle:
            writer = csv.writer(handle)
            if new_file:
                writer.writerow(RUN_LOG_FIELDS)
            writer.writerow(
                [
                    record.phase.value,
                    record.round_index,
                    record.epoch,
                    f"{record.mean_loss:.8f}",
                    f"{record.lr:.8g}",
                    f"{record.drift:.8f}",
                ]
            )

    def _checkpoint(self, state: TrainState) -> None:
        if self.out_dir is None:
            return
        name = checkpoint_name(state.phase if state.round_index else Phase.WARM_UP, state.round_index)
        save_checkpoint(self.out_dir / name, state.params)

    def _set_labels(self, state: TrainState, scenes: Sequence[Scene], labels: Sequence[np.ndarray]) -> None:
        for scene, label in zip(scenes, labels):
            state.labels[scene.scene_id] = label
            state.label_versions[scene.scene_id] = label_version(label)

    # -- one optimisation pass -------------------------------------------------

    def scene_loss_and_grads(
        self, params: ModelParams, scene: Scene, label: np.ndarray
    ) -> Tuple[float, ParamGrads]:
        """Total loss of one scene's sequence and its gradient (fixed summation order)."""
        order = sort_by_mean_intensity(scene.images)
        results = [forward(params, scene.images[i]) for i in order]
        loss = self.losses.total_loss(
            [r.corrected for r in results], label, [r.descriptor for r in results]
        )
        grads = ParamGrads.zeros(params.dims)
        for result, g_img, g_desc in zip(results, loss.grad_preds, loss.grad_descriptors):
            grads.add_(backward(params, result.cache, g_img, float(g_desc)))
        return loss.value, grads

    def _run_epoch(self, state: TrainState, scenes: Sequence[Scene], lr: float) -> float:
        order = state.rng.permutation(len(scenes))
        losses = []
        for index in order:
            scene = scenes[int(index)]
            value, grads = self.scene_loss_and_grads(
                state.params, scene, state.labels[scene.scene_id]
            )
            adam_step(
                state,
                grads,
                lr,
                beta1=self.cfg.adam_beta1,
                beta2=self.cfg.adam_beta2,
                eps=self.cfg.adam_eps,
            )
            losses.append(value)
        return float(np.mean(losses))

    # -- phases ----------------------------------------------------------------

    def warm_up(self, dataset: Sequence[Scene], state: Optional[TrainState] = None) -> TrainState:
        """Train against labels fused from the original sequences only."""
        if not dataset:
            raise EmptyDataset("warm-up needs at least one scene")
        self.logger.info(f"warm_up: Entry - scenes: {len(dataset)}, epochs: {self.cfg.warmup_epochs}")
        state = state or self.init_state()
        state.phase = Phase.WARM_UP

        labels = ordered_map(
            lambda s: self.fusion.make_pseudo_label(s.images), dataset, self.threads
        )
        self._set_labels(state, dataset, labels)

        for epoch in range(self.cfg.warmup_epochs):
            lr = warmup_lr(self.cfg, epoch)
            mean_loss = self._run_epoch(state, dataset, lr)
            self._log_epoch(
                state,
                EpochRecord(
                    phase=Phase.WARM_UP,
                    round_index=0,
                    epoch=epoch + 1,
                    mean_loss=mean_loss,
                    lr=lr,
                    drift=0.0,
                ),
            )

        state.phase = Phase.JOINT
        fraction = decreasing_fraction(state.phase_losses(Phase.WARM_UP))
        self._check_trend("warm_up", fraction)
        trend = "n/a" if fraction is None else f"{fraction:.2f}"
        self.logger.info(f"warm_up: Success - steps: {state.step}, decreasing epochs: {trend}")
        return state

    def joint_round(self, state: TrainState, dataset: Sequence[Scene]) -> Tuple[TrainState, RoundReport]:
        """Regenerate labels from the frozen model's corrections, then train on them."""
        if state.phase != Phase.JOINT:
            raise TrainerStateError("joint rounds require a state that finished warm-up")
        if not dataset:
            raise EmptyDataset("joint round needs at least one scene")
        round_index = state.round_index + 1
        self.logger.info(f"joint_round: Entry - round: {round_index}")
        started = time.perf_counter()

        frozen = state.params.copy()

        def relabel(scene: Scene) -> np.ndarray:
            corrected = [correct(frozen, img) for img in scene.images]
            return self.fusion.make_pseudo_label(scene.images, corrected)

        new_labels = ordered_map(relabel, dataset, self.threads)
        drifts = [
            float(np.abs(new - state.labels[scene.scene_id]).mean())
            for scene, new in zip(dataset, new_labels)
        ]
        drift = float(np.mean(drifts))
        label_luma = float(np.mean([luminance(label).mean() for label in new_labels]))
        self._set_labels(state, dataset, new_labels)
        state.round_index = round_index
        state.drift_history.append(drift)

        epoch_losses = []
        for epoch in range(self.cfg.epochs_per_round):
            mean_loss = self._run_epoch(state, dataset, self.cfg.lr_joint)
            epoch_losses.append(mean_loss)
            self._log_epoch(
                state,
                EpochRecord(
                    phase=Phase.JOINT,
                    round_index=round_index,
                    epoch=epoch + 1,
                    mean_loss=mean_loss,
                    lr=self.cfg.lr_joint,
                    drift=drift,
                ),
            )

        report = RoundReport(
            round_index=round_index,
            mean_loss=float(np.mean(epoch_losses)),
            mean_drift=drift,
            mean_label_luminance=label_luma,
            decreasing_fraction=decreasing_fraction(epoch_losses),
            wall_time_s=time.perf_counter() - started,
        )
        self._check_trend(f"joint_round {round_index}", report.decreasing_fraction)
        if not 0.2 <= label_luma <= 0.8:
            self.logger.warning(
                f"joint_round: pseudo-label mean luminance {label_luma:.3f} left [0.2, 0.8]"
            )
        self.logger.info(
            f"joint_round: Success - round: {round_index}, drift: {drift:.6f}, loss: {report.mean_loss:.6f}"
        )
        return state, report

    def train(self, dataset: Sequence[Scene]) -> Tuple[TrainState, List[RoundReport]]:
        """Warm-up, then ``joint_rounds`` rounds; checkpoints after each phase and round."""
        self.logger.info(
            f"train: Entry - scenes: {len(dataset)}, rounds: {self.cfg.joint_rounds}, seed: {self.cfg.seed}"
        )
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            (self.out_dir / RUN_LOG_NAME).unlink(missing_ok=True)

        try:
            state = self.warm_up(dataset)
            self._checkpoint(state)

            reports = []
            for _ in range(self.cfg.joint_rounds):
                state, report = self.joint_round(state, dataset)
                if report.mean_drift > self.cfg.drift_threshold:
                    state.drift_strikes += 1
                    self.logger.warning(
                        f"train: drift {report.mean_drift:.4f} above {self.cfg.drift_threshold} "
                        f"(strike {state.drift_strikes})"
                    )
                    if state.drift_strikes >= 2:
                        raise DriftAbort(report.round_index, report.mean_drift, self.cfg.drift_threshold)
                else:
                    state.drift_strikes = 0
                reports.append(report)
                self._checkpoint(state)
        except Exception as e:
            self.logger.error(f"train: Failure - {e}")
            raise

        self.logger.info(f"train: Success - steps: {state.step}, rounds: {len(reports)}")
        return state, reports
