import logging
from typing import List, Optional, Sequence

import numpy as np

from app.core.exceptions import DimensionMismatch
from app.core.imaging import (
    check_levels,
    gaussian_pyramid,
    laplacian_pyramid,
    luminance,
    reconstruct,
    validate_image,
    Pyramid,
)
from app.models.fusion import FusionParams

logger = logging.getLogger(__name__)


def default_levels(height: int, width: int) -> int:
    return max(1, int(np.floor(np.log2(min(height, width)))))


class FusionService:
    """Mertens-style exposure fusion.

    Each input is weighted per pixel by contrast, saturation and
    well-exposedness; the inputs' Laplacian pyramids are blended with the
    Gaussian pyramids of the normalized weights and collapsed back.
    """

    def __init__(self, params: Optional[FusionParams] = None):
        self.params = params or FusionParams()
        self.logger = logging.getLogger(__name__)

    def quality_measures(self, img: np.ndarray) -> np.ndarray:
        """Unnormalized per-pixel weight of one exposure."""
        p = self.params
        img = validate_image(img)

        luma = np.pad(luminance(img), 1, mode="edge")
        center = luma[1:-1, 1:-1]
        contrast = np.abs(
            luma[:-2, 1:-1] + luma[2:, 1:-1] + luma[1:-1, :-2] + luma[1:-1, 2:] - 4.0 * center
        )
        saturation = img.std(axis=2)
        well_exposed = np.prod(
            np.exp(-((img - 0.5) ** 2) / (2.0 * p.sigma_well**2)), axis=2
        )

        return (
            (contrast + p.eps_weight) ** p.exp_contrast
            * saturation**p.exp_saturation
            * well_exposed**p.exp_wellexposed
            + p.eps_weight
        )

    def normalize(self, weights: Sequence[np.ndarray]) -> np.ndarray:
        """Stack weight maps as (N, H, W) and make them sum to one per pixel."""
        if not weights:
            raise DimensionMismatch("normalize needs at least one weight map")
        shape = np.shape(weights[0])
        for i, w in enumerate(weights):
            if np.shape(w) != shape:
                raise DimensionMismatch(
                    f"weight map {i} has shape {np.shape(w)}, expected {shape}"
                )
        stack = np.stack([np.asarray(w, dtype=np.float64) for w in weights])
        return stack / stack.sum(axis=0, keepdims=True)

    def _check_sequence(self, seq: Sequence[np.ndarray]) -> List[np.ndarray]:
        if not seq:
            raise DimensionMismatch("fusion needs at least one image")
        images = [validate_image(img, name=f"image {i}") for i, img in enumerate(seq)]
        shape = images[0].shape
        for i, img in enumerate(images):
            if img.shape != shape:
                raise DimensionMismatch(f"image {i} has shape {img.shape}, expected {shape}")
        return images

    def fuse_unclamped(self, seq: Sequence[np.ndarray]) -> np.ndarray:
        """Blend and collapse the pyramids without the final clamp."""
        images = self._check_sequence(seq)
        height, width = images[0].shape[:2]
        levels = self.params.levels or default_levels(height, width)
        check_levels(images[0].shape, levels)

        weights = self.normalize([self.quality_measures(img) for img in images])

        blended = None
        for img, w in zip(images, weights):
            w_pyr = gaussian_pyramid(w, levels).levels
            img_pyr = laplacian_pyramid(img, levels).levels
            contrib = [lw[:, :, None] * band for lw, band in zip(w_pyr, img_pyr)]
            blended = contrib if blended is None else [b + c for b, c in zip(blended, contrib)]

        return reconstruct(Pyramid(levels=tuple(blended)))

    def fuse(self, seq: Sequence[np.ndarray]) -> np.ndarray:
        self.logger.debug(f"fuse: Entry - {len(seq)} images")
        try:
            fused = np.clip(self.fuse_unclamped(seq), 0.0, 1.0)
        except Exception as e:
            self.logger.error(f"fuse: Failure - {e}")
            raise
        self.logger.debug(f"fuse: Success - shape: {fused.shape}")
        return fused

    def make_pseudo_label(
        self,
        inputs: Sequence[np.ndarray],
        corrected: Optional[Sequence[np.ndarray]] = None,
    ) -> np.ndarray:
        """Warm-Up label M(I) when ``corrected`` is None, else M over I and E together."""
        if not inputs:
            raise DimensionMismatch("pseudo-label needs at least one input image")
        if corrected is None:
            return self.fuse(inputs)
        if len(corrected) != len(inputs):
            raise DimensionMismatch(
                f"{len(corrected)} corrected images for {len(inputs)} inputs"
            )
        for i, (src, out) in enumerate(zip(inputs, corrected)):
            if np.shape(src) != np.shape(out):
                raise DimensionMismatch(
                    f"corrected image {i} has shape {np.shape(out)}, input has {np.shape(src)}"
                )
        return self.fuse(list(inputs) + list(corrected))
