"""
Pytest configuration for testing
"""

import logging
import os

import numpy as np
import pytest

from app.models.params import ModelDims, ModelParams
from app.services.correction_model import init_identity


@pytest.fixture(autouse=True)
def clean_loopx_env(monkeypatch):
    """Keep LOOPX_* variables from the developer shell out of every test"""
    for key in list(os.environ):
        if key.upper().startswith("LOOPX_"):
            monkeypatch.delenv(key, raising=False)
    yield


@pytest.fixture(autouse=True)
def restore_root_logger():
    """Undo handlers installed by configure_logging"""
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def rng():
    """Seeded generator so every test run sees the same random inputs"""
    return np.random.default_rng(1234)


@pytest.fixture
def small_dims():
    """Model small enough for finite-difference checks; one LUT cell per axis"""
    return ModelDims(curve_knots=4, lut_count=2, lut_size=2)


@pytest.fixture
def make_image(rng):
    """Factory for random (H, W, 3) float64 images in [lo, hi]"""

    def factory(height=8, width=8, lo=0.0, hi=1.0):
        return rng.uniform(lo, hi, size=(height, width, 3))

    return factory


@pytest.fixture
def make_params(rng):
    """Factory for mildly perturbed parameters around the identity model"""

    def factory(dims: ModelDims, scale: float = 1.0) -> ModelParams:
        params = init_identity(dims)
        params.curve_logits += rng.normal(0.0, 0.3 * scale, size=params.curve_logits.shape)
        params.lut_bank += rng.normal(0.0, 0.03 * scale, size=params.lut_bank.shape)
        params.fl_head += rng.normal(0.0, 0.1 * scale, size=params.fl_head.shape)
        params.blend_head += rng.normal(0.0, 0.3 * scale, size=params.blend_head.shape)
        return params

    return factory
