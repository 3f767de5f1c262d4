"""Finite-difference verification of the hand-derived gradients.

Central differences with eps=1e-5 against the analytic backward pass. The
relative error between analytic value a and numeric value n is
|a - n| / max(|a| + |n|, 1e-6), so zero-gradient parameters compare cleanly.
"""

from dataclasses import dataclass

import numpy as np

from .model import ModelParams, backward_batch, build_model, forward_batch
from .rng import SeededRng
from .training import mse_loss

DEFAULT_EPS = 1e-5
REL_ERR_FLOOR = 1e-6


def finite_difference_grads(loss_fn, params, eps: float = DEFAULT_EPS) -> dict:
    """Numeric gradient of ``loss_fn()`` w.r.t. every array in ``params``.

    ``loss_fn`` must read the parameter arrays in place; each element is
    nudged up and down by ``eps`` and restored.
    """
    grads = {}
    for name, arr in params.named_arrays():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        g_flat = g.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            up = loss_fn()
            flat[i] = original - eps
            down = loss_fn()
            flat[i] = original
            g_flat[i] = (up - down) / (2.0 * eps)
        grads[name] = g
    return grads


def max_relative_error(analytic: dict, numeric: dict) -> float:
    worst = 0.0
    for name, a in analytic.items():
        n = numeric[name]
        denom = np.maximum(np.abs(a) + np.abs(n), REL_ERR_FLOOR)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def check_model_gradients(model: ModelParams, windows, targets, eps=DEFAULT_EPS):
    """Compare backward_batch with finite differences of the MSE loss."""
    windows = np.asarray(windows, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)

    def loss_fn():
        preds, _ = forward_batch(windows, model)
        loss, _ = mse_loss(preds, targets)
        return loss

    preds, caches = forward_batch(windows, model)
    _, d_pred = mse_loss(preds, targets)
    analytic = dict(backward_batch(d_pred, caches, model).named_arrays())
    numeric = finite_difference_grads(loss_fn, model, eps)
    return max_relative_error(analytic, numeric)


@dataclass
class GradCheckCase:
    seed: int
    error: float


def composed_gradcheck_suite(n_seeds: int = 20, seed_base: int = 0) -> list:
    """The standing end-to-end configuration: 2 LSTM layers (hidden 4),
    one encoder layer (d_model 8, 2 heads), head width 4, 6 steps of 2
    features. Returns per-seed max relative errors."""
    cases = []
    for s in range(n_seeds):
        seed = seed_base + s
        rng = SeededRng(seed)
        model = build_model(
            n_features=2,
            lookback=6,
            lstm_hidden=4,
            lstm_layers=2,
            transformer_layers=1,
            attention_heads=2,
            d_model=8,
            head_width=4,
            rng=rng.split(0),
        )
        data_rng = rng.split(1)
        windows = data_rng.uniform(-1.0, 1.0, (2, 6, 2))
        targets = data_rng.uniform(-1.0, 1.0, 2)
        cases.append(GradCheckCase(seed=seed, error=check_model_gradients(model, windows, targets)))
    return cases
