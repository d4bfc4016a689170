"""Differentiable exposure-correction model.

A monotone global tone curve (luminance branch) feeds a content-adaptive blend
of basis 3D LUTs (colour branch). A linear head on the image statistics emits
the scalar luminance descriptor F^L, another one emits the LUT blend logits.
``backward`` replays ``forward`` in reverse and returns exact gradients.
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np

from app.core.exceptions import CacheMismatch
from app.core.imaging import global_stats, luminance, validate_image
from app.models.params import ModelDims, ModelParams, ParamGrads

logger = logging.getLogger(__name__)

LUMA_GUARD = 1e-4

# Corner offsets of a trilinear cell, in (r, g, b) order
_CORNERS = np.array(
    [(a, b, c) for a in (0, 1) for b in (0, 1) for c in (0, 1)], dtype=np.int64
)


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - np.max(x))
    return z / z.sum()


def identity_lut(size: int) -> np.ndarray:
    axis = np.linspace(0.0, 1.0, size)
    r, g, b = np.meshgrid(axis, axis, axis, indexing="ij")
    return np.stack([r, g, b], axis=-1)


def init_identity(dims: Optional[ModelDims] = None) -> ModelParams:
    """Parameters for which the model is the identity map and F^L is mean luminance."""
    dims = dims or ModelDims()
    params = ModelParams.zeros(dims)
    params.lut_bank[:] = identity_lut(dims.lut_size)[None]
    params.fl_head[0] = 1.0  # stats[0] is mean luminance
    return params


def curve_knots(curve_logits: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Knot heights y_0..y_K of the tone curve, plus the raw cumulative sums."""
    increments = softplus(curve_logits)
    cumulative = np.concatenate([[0.0], np.cumsum(increments)])
    return cumulative / cumulative[-1], cumulative


def _curve_segments(luma: np.ndarray, segments: int) -> Tuple[np.ndarray, np.ndarray]:
    u = np.clip(luma, 0.0, 1.0) * segments
    seg = np.minimum(np.floor(u).astype(np.int64), segments - 1)
    return seg, u - seg


def tone_curve(params: ModelParams, luma: np.ndarray) -> np.ndarray:
    """Evaluate the piecewise-linear curve at every luma value."""
    knots, _ = curve_knots(params.curve_logits)
    seg, frac = _curve_segments(np.asarray(luma, dtype=np.float64), params.curve_logits.size)
    return knots[seg] + frac * (knots[seg + 1] - knots[seg])


def apply_tone_curve(params: ModelParams, img: np.ndarray) -> np.ndarray:
    """Re-scale RGB by curve(Y)/Y, guarded below 1e-4, and clamp to [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    guarded = np.maximum(luminance(img), LUMA_GUARD)
    ratio = tone_curve(params, guarded) / guarded
    return np.clip(img * ratio[..., None], 0.0, 1.0)


def _lattice_coords(x: np.ndarray, size: int) -> Tuple[np.ndarray, np.ndarray]:
    u = np.clip(x, 0.0, 1.0) * (size - 1)
    base = np.minimum(np.floor(u).astype(np.int64), size - 2)
    return base, u - base


def _corner_terms(base: np.ndarray, frac: np.ndarray, size: int):
    """Yield (flat lattice index, weight, d weight / d frac) for each of the 8 corners."""
    for corner in _CORNERS:
        idx = base + corner
        flat = (idx[:, 0] * size + idx[:, 1]) * size + idx[:, 2]
        per_axis = np.where(corner == 1, frac, 1.0 - frac)
        sign = np.where(corner == 1, 1.0, -1.0)
        weight = per_axis.prod(axis=1)
        dweight = np.stack(
            [
                sign[0] * per_axis[:, 1] * per_axis[:, 2],
                sign[1] * per_axis[:, 0] * per_axis[:, 2],
                sign[2] * per_axis[:, 0] * per_axis[:, 1],
            ],
            axis=1,
        )
        yield flat, weight, dweight


def _trilinear(lut: np.ndarray, pixels: np.ndarray) -> np.ndarray:
    size = lut.shape[0]
    flat_lut = lut.reshape(-1, 3)
    base, frac = _lattice_coords(pixels, size)
    out = np.zeros_like(pixels)
    for flat, weight, _ in _corner_terms(base, frac, size):
        out += weight[:, None] * flat_lut[flat]
    return out


def apply_lut_blend(params: ModelParams, img: np.ndarray, blend_weights: np.ndarray) -> np.ndarray:
    """Trilinear lookup through the convex combination of the basis LUTs."""
    blend_weights = np.asarray(blend_weights, dtype=np.float64)
    if np.any(blend_weights < 0) or abs(blend_weights.sum() - 1.0) > 1e-6:
        raise ValueError("blend weights must be non-negative and sum to 1")
    img = np.asarray(img, dtype=np.float64)
    effective = np.tensordot(blend_weights, params.lut_bank, axes=1)
    return _trilinear(effective, img.reshape(-1, 3)).reshape(img.shape)


@dataclass
class ForwardCache:
    fingerprint: str
    shape: Tuple[int, ...]
    head_input: np.ndarray
    cumulative: np.ndarray
    seg: np.ndarray
    frac: np.ndarray
    guarded: np.ndarray
    rgb: np.ndarray
    tone_mask: np.ndarray
    blend: np.ndarray
    effective_lut: np.ndarray
    lut_base: np.ndarray
    lut_frac: np.ndarray
    out_mask: np.ndarray

    @property
    def stats(self) -> np.ndarray:
        return self.head_input[:-1]


class ForwardResult(NamedTuple):
    corrected: np.ndarray
    descriptor: float
    cache: ForwardCache


def forward(params: ModelParams, img: np.ndarray) -> ForwardResult:
    img = validate_image(img)
    segments = params.curve_logits.size
    lut_size = params.lut_bank.shape[1]

    head_input = np.append(global_stats(img), 1.0)
    descriptor = float(params.fl_head @ head_input)
    blend = softmax(params.blend_head @ head_input)

    # luminance branch
    rgb = img.reshape(-1, 3)
    guarded = np.maximum(luminance(rgb), LUMA_GUARD)
    knots, cumulative = curve_knots(params.curve_logits)
    seg, frac = _curve_segments(guarded, segments)
    curved = knots[seg] + frac * (knots[seg + 1] - knots[seg])
    pre_tone = rgb * (curved / guarded)[:, None]
    tone_mask = pre_tone <= 1.0
    toned = np.minimum(pre_tone, 1.0)

    # colour branch
    effective = np.tensordot(blend, params.lut_bank, axes=1)
    lut_base, lut_frac = _lattice_coords(toned, lut_size)
    flat_lut = effective.reshape(-1, 3)
    looked_up = np.zeros_like(toned)
    for flat, weight, _ in _corner_terms(lut_base, lut_frac, lut_size):
        looked_up += weight[:, None] * flat_lut[flat]
    out_mask = (looked_up >= 0.0) & (looked_up <= 1.0)
    corrected = np.clip(looked_up, 0.0, 1.0).reshape(img.shape)

    cache = ForwardCache(
        fingerprint=params.fingerprint(),
        shape=img.shape,
        head_input=head_input,
        cumulative=cumulative,
        seg=seg,
        frac=frac,
        guarded=guarded,
        rgb=rgb,
        tone_mask=tone_mask,
        blend=blend,
        effective_lut=effective,
        lut_base=lut_base,
        lut_frac=lut_frac,
        out_mask=out_mask,
    )
    return ForwardResult(corrected, descriptor, cache)


def correct(params: ModelParams, img: np.ndarray) -> np.ndarray:
    return forward(params, img).corrected


def backward(
    params: ModelParams,
    cache: ForwardCache,
    grad_corrected: np.ndarray,
    grad_descriptor: float,
) -> ParamGrads:
    """Gradients of <grad_corrected, corrected> + grad_descriptor * F^L w.r.t. params."""
    if cache.fingerprint != params.fingerprint():
        raise CacheMismatch("forward cache was produced with different parameters")
    grad_corrected = np.asarray(grad_corrected, dtype=np.float64)
    if grad_corrected.shape != cache.shape:
        raise CacheMismatch(
            f"gradient shape {grad_corrected.shape} does not match cached image {cache.shape}"
        )

    grads = ParamGrads.zeros(params.dims)
    segments = params.curve_logits.size
    lut_size = params.lut_bank.shape[1]

    grads.fl_head[:] = grad_descriptor * cache.head_input

    # through the output clamp and the trilinear lookup
    g_out = grad_corrected.reshape(-1, 3) * cache.out_mask
    flat_lut = cache.effective_lut.reshape(-1, 3)
    g_lut = np.zeros_like(flat_lut)
    g_toned = np.zeros_like(g_out)
    for flat, weight, dweight in _corner_terms(cache.lut_base, cache.lut_frac, lut_size):
        for ch in range(3):
            g_lut[:, ch] += np.bincount(
                flat, weights=weight * g_out[:, ch], minlength=flat_lut.shape[0]
            )
        g_corner = (g_out * flat_lut[flat]).sum(axis=1)
        g_toned += dweight * g_corner[:, None]
    g_toned *= lut_size - 1
    g_lut = g_lut.reshape(cache.effective_lut.shape)

    # LUT bank and blend head
    grads.lut_bank[:] = cache.blend[:, None, None, None, None] * g_lut[None]
    g_blend = np.tensordot(params.lut_bank, g_lut, axes=4)
    g_logits = cache.blend * (g_blend - cache.blend @ g_blend)
    grads.blend_head[:] = np.outer(g_logits, cache.head_input)

    # through the tone clamp into the curve value at the guarded luma
    g_ratio = (g_toned * cache.tone_mask * cache.rgb).sum(axis=1)
    g_curved = g_ratio / cache.guarded
    g_knots = np.bincount(
        cache.seg, weights=(1.0 - cache.frac) * g_curved, minlength=segments + 1
    ) + np.bincount(cache.seg + 1, weights=cache.frac * g_curved, minlength=segments + 1)

    # knots y_k = c_k / c_K with c the cumulative softplus increments
    total = cache.cumulative[-1]
    tail = np.cumsum(g_knots[::-1])[::-1]
    g_increments = tail[1:] / total - (g_knots @ cache.cumulative) / total**2
    grads.curve_logits[:] = g_increments * sigmoid(params.curve_logits)

    return grads
