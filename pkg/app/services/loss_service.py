import logging
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from app.core.exceptions import DimensionMismatch, ImageTooSmall
from app.core.imaging import LUMA_WEIGHTS, luminance
from app.models.losses import LossConfig

logger = logging.getLogger(__name__)

PERCEPTUAL_FILTERS = 3
PERCEPTUAL_BANK_SIZE = 8


class LossResult(NamedTuple):
    value: float
    grad: np.ndarray


@dataclass
class TotalLoss:
    value: float
    grad_preds: List[np.ndarray]
    grad_descriptors: np.ndarray
    components: Dict[str, float] = field(default_factory=dict)


def _same_shape(pred: np.ndarray, target: np.ndarray) -> None:
    if np.shape(pred) != np.shape(target):
        raise DimensionMismatch(f"pred {np.shape(pred)} vs target {np.shape(target)}")


def _luma_grad_to_rgb(g_luma: np.ndarray) -> np.ndarray:
    return g_luma[..., None] * LUMA_WEIGHTS


def make_filter_bank(seed: int) -> np.ndarray:
    """Eight zero-mean, unit-norm 3x3 filters drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    bank = rng.standard_normal((PERCEPTUAL_BANK_SIZE, PERCEPTUAL_FILTERS, PERCEPTUAL_FILTERS))
    bank -= bank.mean(axis=(1, 2), keepdims=True)
    bank /= np.sqrt((bank**2).sum(axis=(1, 2), keepdims=True))
    return bank


def _block_view(luma: np.ndarray, window: int) -> np.ndarray:
    rows, cols = luma.shape[0] // window, luma.shape[1] // window
    cropped = luma[: rows * window, : cols * window]
    return cropped.reshape(rows, window, cols, window).transpose(0, 2, 1, 3)


def _half_resolution(luma: np.ndarray) -> np.ndarray:
    rows, cols = luma.shape[0] // 2, luma.shape[1] // 2
    return luma[: 2 * rows, : 2 * cols].reshape(rows, 2, cols, 2).mean(axis=(1, 3))


class LossService:
    """L1, block SSIM, a seeded filter-bank perceptual proxy and the luminance ranking hinge.

    Every method returns the value together with its gradient.
    """

    def __init__(self, cfg: Optional[LossConfig] = None):
        self.cfg = cfg or LossConfig()
        self.filter_bank = make_filter_bank(self.cfg.perceptual_seed)
        self.logger = logging.getLogger(__name__)

    def l1(self, pred: np.ndarray, target: np.ndarray) -> LossResult:
        _same_shape(pred, target)
        diff = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
        return LossResult(float(np.abs(diff).mean()), np.sign(diff) / diff.size)

    def ssim_map(self, pred: np.ndarray, target: np.ndarray) -> np.ndarray:
        """Per-block SSIM on luminance, shape (rows, cols)."""
        return self._ssim_terms(pred, target)[0]

    def _ssim_terms(self, pred: np.ndarray, target: np.ndarray):
        _same_shape(pred, target)
        window = self.cfg.ssim_window
        if np.shape(pred)[0] < window or np.shape(pred)[1] < window:
            raise ImageTooSmall(f"image {np.shape(pred)[:2]} smaller than SSIM window {window}")
        c1, c2 = self.cfg.ssim_c1, self.cfg.ssim_c2

        x = _block_view(luminance(pred), window)
        y = _block_view(luminance(target), window)
        mu_x = x.mean(axis=(2, 3), keepdims=True)
        mu_y = y.mean(axis=(2, 3), keepdims=True)
        dx, dy = x - mu_x, y - mu_y
        var_x = (dx * dx).mean(axis=(2, 3), keepdims=True)
        var_y = (dy * dy).mean(axis=(2, 3), keepdims=True)
        cov = (dx * dy).mean(axis=(2, 3), keepdims=True)

        a = 2.0 * mu_x * mu_y + c1
        b = 2.0 * cov + c2
        c = mu_x * mu_x + mu_y * mu_y + c1
        d = var_x + var_y + c2
        blocks = (a * b) / (c * d)
        return blocks[:, :, 0, 0], (blocks, a, b, c, d, mu_x, mu_y, dx, dy)

    def ssim(self, pred: np.ndarray, target: np.ndarray) -> LossResult:
        """Mean block SSIM, and the gradient of (1 - SSIM) w.r.t. pred."""
        ssim_blocks, (s, a, b, c, d, mu_x, mu_y, dx, dy) = self._ssim_terms(pred, target)
        window = self.cfg.ssim_window
        n = window * window
        n_blocks = ssim_blocks.size

        ds_dx = s * (
            (2.0 * mu_y / n) / a + (2.0 * dy / n) / b - (2.0 * mu_x / n) / c - (2.0 * dx / n) / d
        )
        g_blocks = -ds_dx / n_blocks

        rows, cols = ssim_blocks.shape
        g_luma = np.zeros(np.shape(pred)[:2], dtype=np.float64)
        g_luma[: rows * window, : cols * window] = g_blocks.transpose(0, 2, 1, 3).reshape(
            rows * window, cols * window
        )
        return LossResult(float(ssim_blocks.mean()), _luma_grad_to_rgb(g_luma))

    def _features(self, luma: np.ndarray) -> List[np.ndarray]:
        scales = [luma]
        half = _half_resolution(luma)
        if min(half.shape) >= PERCEPTUAL_FILTERS:
            scales.append(half)
        return [
            np.einsum("ijab,fab->fij", sliding_window_view(s, (3, 3)), self.filter_bank)
            for s in scales
        ]

    def _features_backward(self, g_feats: List[np.ndarray]) -> np.ndarray:
        g_scales = []
        for g_f in g_feats:
            rows, cols = g_f.shape[1] + 2, g_f.shape[2] + 2
            g_s = np.zeros((rows, cols), dtype=np.float64)
            for i in range(PERCEPTUAL_FILTERS):
                for j in range(PERCEPTUAL_FILTERS):
                    g_s[i : i + rows - 2, j : j + cols - 2] += np.tensordot(
                        self.filter_bank[:, i, j], g_f, axes=1
                    )
            g_scales.append(g_s)

        g_luma = g_scales[0]
        if len(g_scales) > 1:
            rows, cols = g_scales[1].shape
            g_luma[: 2 * rows, : 2 * cols] += (
                np.repeat(np.repeat(g_scales[1], 2, axis=0), 2, axis=1) / 4.0
            )
        return g_luma

    def perceptual_proxy(self, pred: np.ndarray, target: np.ndarray) -> LossResult:
        _same_shape(pred, target)
        if min(np.shape(pred)[:2]) < PERCEPTUAL_FILTERS:
            raise ImageTooSmall(f"image {np.shape(pred)[:2]} smaller than a 3x3 filter")
        f_pred = self._features(luminance(pred))
        f_target = self._features(luminance(target))
        diffs = [p - t for p, t in zip(f_pred, f_target)]
        count = sum(d.size for d in diffs)
        value = sum(float(np.abs(d).sum()) for d in diffs) / count
        g_luma = self._features_backward([np.sign(d) / count for d in diffs])
        return LossResult(value, _luma_grad_to_rgb(g_luma))

    def lumi_rank(self, descriptors: Sequence[float]) -> LossResult:
        """Hinge on every (darker, brighter) pair of a dark-to-bright sequence."""
        f = np.asarray(descriptors, dtype=np.float64)
        n = f.size
        if n < 2:
            return LossResult(0.0, np.zeros(n))
        hinge = f[:, None] + self.cfg.margin - f[None, :]
        active = np.triu(hinge > 0.0, k=1)
        value = self.cfg.w_lumi * float(hinge[active].sum())
        grad = self.cfg.w_lumi * (
            active.sum(axis=1).astype(np.float64) - active.sum(axis=0).astype(np.float64)
        )
        return LossResult(value, grad)

    def total_loss(
        self,
        preds: Sequence[np.ndarray],
        target: np.ndarray,
        descriptors: Sequence[float],
    ) -> TotalLoss:
        """Mean supervised loss of a scene's corrected images plus the ranking term."""
        cfg = self.cfg
        n = len(preds)
        if n == 0:
            raise DimensionMismatch("total_loss needs at least one prediction")
        if len(descriptors) != n:
            raise DimensionMismatch(f"{len(descriptors)} descriptors for {n} predictions")

        sums = {"l1": 0.0, "perceptual": 0.0, "ssim": 0.0}
        sup_value = 0.0
        grad_preds = []
        for pred in preds:
            l1 = self.l1(pred, target)
            value, grad = l1.value, l1.grad.copy()
            sums["l1"] += l1.value
            if cfg.w_p > 0:
                perc = self.perceptual_proxy(pred, target)
                value += cfg.w_p * perc.value
                grad += cfg.w_p * perc.grad
                sums["perceptual"] += perc.value
            if cfg.w_ssim > 0:
                sim = self.ssim(pred, target)
                value += cfg.w_ssim * (1.0 - sim.value)
                grad += cfg.w_ssim * sim.grad
                sums["ssim"] += sim.value
            sup_value += value
            grad_preds.append(grad / n)

        lumi = self.lumi_rank(descriptors)
        components = {name: total / n for name, total in sums.items()}
        components["lumi"] = lumi.value
        return TotalLoss(
            value=sup_value / n + lumi.value,
            grad_preds=grad_preds,
            grad_descriptors=lumi.grad,
            components=components,
        )
