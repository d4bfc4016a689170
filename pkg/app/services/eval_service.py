import csv
import io
import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.exceptions import ConfigError, DimensionMismatch, MissingGroundTruth
from app.core.parallel import ordered_map
from app.models.dataset import Scene
from app.models.fusion import FusionParams
from app.models.losses import LossConfig
from app.models.params import ModelParams
from app.models.reports import AblationReport, EvalReport, MefRow, MetricMean, SecRow
from app.services.correction_model import correct
from app.services.fusion_service import FusionService
from app.services.loss_service import LossService
from app.services.trainer_service import infer

logger = logging.getLogger(__name__)

BASELINE_METHOD = "mertens"
TABLE_SUFFIX = ".txt"


def psnr_from_mse(mse: float) -> float:
    if mse <= 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio for [0, 1] data; ``inf`` when a == b."""
    if np.shape(a) != np.shape(b):
        raise DimensionMismatch(f"{np.shape(a)} vs {np.shape(b)}")
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return psnr_from_mse(float(np.mean(diff * diff)))


def ssim_metric(a: np.ndarray, b: np.ndarray, cfg: Optional[LossConfig] = None) -> float:
    return float(LossService(cfg).ssim_map(a, b).mean())


class EvaluationService:
    def __init__(
        self,
        fusion_params: Optional[FusionParams] = None,
        loss_cfg: Optional[LossConfig] = None,
        threads: int = 1,
    ):
        self.fusion_params = fusion_params
        self.fusion = FusionService(fusion_params)
        self.losses = LossService(loss_cfg)
        self.threads = threads
        self.logger = logging.getLogger(__name__)

    def _metrics(self, pred: np.ndarray, gt: np.ndarray) -> Tuple[float, float]:
        return psnr(pred, gt), float(self.losses.ssim_map(pred, gt).mean())

    def _evaluate_scene(
        self, params: ModelParams, scene: Scene, with_baseline: bool
    ) -> Tuple[List[SecRow], List[MefRow]]:
        gt = scene.ground_truth
        evs = scene.evs or [None] * len(scene.images)
        sec = []
        for img, ev in zip(scene.images, evs):
            value_psnr, value_ssim = self._metrics(correct(params, img), gt)
            sec.append(SecRow(scene_id=scene.scene_id, ev=ev, psnr=value_psnr, ssim=value_ssim))

        _, final = infer(params, scene.images, self.fusion_params)
        value_psnr, value_ssim = self._metrics(final, gt)
        mef = [MefRow(scene_id=scene.scene_id, psnr=value_psnr, ssim=value_ssim)]
        if with_baseline:
            value_psnr, value_ssim = self._metrics(self.fusion.fuse(scene.images), gt)
            mef.append(
                MefRow(scene_id=scene.scene_id, method=BASELINE_METHOD, psnr=value_psnr, ssim=value_ssim)
            )
        return sec, mef

    def evaluate(
        self,
        params: ModelParams,
        dataset: Sequence[Scene],
        with_baseline: bool = False,
    ) -> EvalReport:
        """SEC rows per scene and EV, MEF rows per scene, in dataset order."""
        missing = [s.scene_id for s in dataset if s.ground_truth is None]
        if missing:
            raise MissingGroundTruth(f"no ground truth for scenes: {', '.join(missing)}")
        self.logger.info(f"evaluate: Entry - scenes: {len(dataset)}, baseline: {with_baseline}")

        rows = ordered_map(
            lambda s: self._evaluate_scene(params, s, with_baseline), dataset, self.threads
        )
        report = EvalReport(
            sec_rows=[r for sec, _ in rows for r in sec],
            mef_rows=[r for _, mef in rows for r in mef],
        )
        sec = report.sec_mean
        self.logger.info(f"evaluate: Success - SEC PSNR {_fmt(sec.psnr)} SSIM {_fmt(sec.ssim, 4)}")
        return report


def _fmt(value: Optional[float], digits: int = 3) -> str:
    if value is None:
        return "-"
    if math.isinf(value):
        return "inf"
    return f"{value:.{digits}f}"


def _mean_cells(mean: MetricMean) -> List[str]:
    return [_fmt(mean.psnr), _fmt(mean.ssim, 4)]


def report_rows(report: EvalReport) -> List[List[str]]:
    """Flat rows shared by the CSV and the table rendering."""
    rows = [["kind", "scene", "ev", "method", "psnr", "ssim"]]
    for r in report.sec_rows:
        ev = "" if r.ev is None else f"{r.ev:+.2f}"
        rows.append(["sec", r.scene_id, ev, "model", _fmt(r.psnr), _fmt(r.ssim, 4)])
    for r in report.mef_rows:
        rows.append(["mef", r.scene_id, "", r.method, _fmt(r.psnr), _fmt(r.ssim, 4)])

    rows.append(["sec_mean", "all", "", "model", *_mean_cells(report.sec_mean)])
    for ev, mean in report.per_ev.items():
        rows.append(["sec_mean", "all", f"{ev:+.2f}", "model", *_mean_cells(mean)])
    for method in report.mef_methods:
        rows.append(["mef_mean", "all", "", method, *_mean_cells(report.mef_mean(method))])
    return rows


def _footnote(report: EvalReport) -> Optional[str]:
    skipped = report.sec_mean.infinite_count + sum(
        report.mef_mean(m).infinite_count for m in report.mef_methods
    )
    if not skipped:
        return None
    return f"# {skipped} infinite PSNR value(s) excluded from means"


def render_csv(rows: List[List[str]], footnote: Optional[str] = None) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerows(rows)
    if footnote:
        buffer.write(footnote + "\n")
    return buffer.getvalue()


def render_table(rows: List[List[str]], footnote: Optional[str] = None) -> str:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    if footnote:
        lines.append(footnote)
    return "\n".join(lines) + "\n"


def ablation_rows(report: AblationReport) -> List[List[str]]:
    rows = [["setting", "sec_psnr", "sec_ssim", "mef_psnr", "mef_ssim", "heldout_lumi"]]
    for r in report.rows:
        rows.append(
            [
                r.setting,
                _fmt(r.sec_psnr),
                _fmt(r.sec_ssim, 4),
                _fmt(r.mef_psnr),
                _fmt(r.mef_ssim, 4),
                _fmt(r.heldout_lumi, 5),
            ]
        )
    return rows


def write_report(path: Union[str, Path], rows: List[List[str]], footnote: Optional[str] = None) -> Path:
    """Write the CSV to ``path`` and the aligned table next to it as ``<stem>.txt``."""
    path = Path(path)
    if path.suffix.lower() == TABLE_SUFFIX:
        raise ConfigError(f"report path {path} ends in {TABLE_SUFFIX}, which is reserved for the table")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_csv(rows, footnote))
    path.with_suffix(TABLE_SUFFIX).write_text(render_table(rows, footnote))
    logger.info(f"write_report: Success - {path}")
    return path


def write_eval_report(path: Union[str, Path], report: EvalReport) -> Path:
    return write_report(path, report_rows(report), _footnote(report))
