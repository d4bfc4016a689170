import logging

import numpy as np

from app.core.exceptions import NonFiniteGradient
from app.models.params import ModelParams
from app.models.training import TrainState

logger = logging.getLogger(__name__)


def adam_step(
    state: TrainState,
    grads: ModelParams,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> TrainState:
    """One bias-corrected Adam update of ``state.params`` in place."""
    g = grads.to_vector()
    if g.size != state.adam_m.size:
        raise ValueError(f"gradient has {g.size} entries, params have {state.adam_m.size}")
    if not np.all(np.isfinite(g)):
        bad = np.flatnonzero(~np.isfinite(g))
        logger.error(f"adam_step: Failure - non-finite gradient at step {state.step + 1}")
        raise NonFiniteGradient(
            f"{bad.size} non-finite gradient entries at step {state.step + 1} "
            f"(first index {int(bad[0])})"
        )

    state.step += 1
    state.adam_m = beta1 * state.adam_m + (1.0 - beta1) * g
    state.adam_v = beta2 * state.adam_v + (1.0 - beta2) * g * g
    m_hat = state.adam_m / (1.0 - beta1**state.step)
    v_hat = state.adam_v / (1.0 - beta2**state.step)

    theta = state.params.to_vector() - lr * m_hat / (np.sqrt(v_hat) + eps)
    state.params = ModelParams.from_vector(theta, state.params.dims)
    return state
