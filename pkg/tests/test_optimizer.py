"""
Tests for the Adam update
"""

import numpy as np
import pytest

from app.core.exceptions import NonFiniteGradient
from app.models.params import ParamGrads
from app.models.training import TrainState
from app.services.correction_model import init_identity
from app.services.optimizer import adam_step


@pytest.fixture
def state(small_dims):
    return TrainState.fresh(init_identity(small_dims), seed=0)


class TestAdamStep:
    def test_zero_grads(self, state, small_dims):
        """Test that zero gradients leave params unchanged and count the step"""
        before = state.params.to_vector()
        adam_step(state, ParamGrads.zeros(small_dims), lr=0.01)
        assert state.step == 1
        np.testing.assert_array_equal(state.params.to_vector(), before)

    def test_first_step_closed_form(self, state, small_dims, rng):
        """Test that the first update is -lr * g / (|g| + eps)"""
        g = rng.normal(size=small_dims.num_params)
        before = state.params.to_vector()
        adam_step(state, ParamGrads.from_vector(g, small_dims), lr=0.01)
        expected = before - 0.01 * g / (np.abs(g) + 1e-8)
        np.testing.assert_allclose(state.params.to_vector(), expected, rtol=1e-9, atol=1e-15)

    def test_moments_follow_betas(self, state, small_dims):
        """Test the raw moment recursions over two steps"""
        g = np.full(small_dims.num_params, 2.0)
        grads = ParamGrads.from_vector(g, small_dims)
        adam_step(state, grads, lr=0.01)
        adam_step(state, grads, lr=0.01)
        np.testing.assert_allclose(state.adam_m, (1 - 0.9**2) * 2.0)
        np.testing.assert_allclose(state.adam_v, (1 - 0.999**2) * 4.0)
        assert state.step == 2

    def test_deterministic(self, small_dims, rng):
        """Test that two identical runs give bit-identical parameters"""
        grads = [
            ParamGrads.from_vector(rng.normal(size=small_dims.num_params), small_dims) for _ in range(5)
        ]
        runs = []
        for _ in range(2):
            state = TrainState.fresh(init_identity(small_dims), seed=3)
            for g in grads:
                adam_step(state, g, lr=0.005)
            runs.append(state.params.to_vector())
        np.testing.assert_array_equal(runs[0], runs[1])

    def test_non_finite(self, state, small_dims):
        """Test that a NaN gradient aborts without touching the state"""
        g = np.zeros(small_dims.num_params)
        g[3] = np.nan
        before = state.params.to_vector()
        with pytest.raises(NonFiniteGradient):
            adam_step(state, ParamGrads.from_vector(g, small_dims), lr=0.01)
        assert state.step == 0
        np.testing.assert_array_equal(state.params.to_vector(), before)

    def test_size_mismatch(self, state):
        """Test that gradients for another model shape are refused"""
        with pytest.raises(ValueError):
            adam_step(state, ParamGrads.zeros(init_identity().dims), lr=0.01)
