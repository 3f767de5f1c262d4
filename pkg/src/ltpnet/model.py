"""Full forecasting model: LSTM stack -> encoder stack -> prediction head.

Ablation variants are functional bypasses, not zeroed weights:

- ``lstm_enabled=False``: window rows feed the encoder's input projection
  directly (the projection is built feature-sized instead of hidden-sized).
- ``transformer_enabled=False``: the LSTM's final hidden state goes through a
  dedicated bypass projection into the prediction head; no pooling happens
  because there is a single vector per window.

Parameter traversal (``named_arrays``) defines a stable flat namespace used
by the optimizers, gradient checks, and checkpoints. The positional table is
a constant and never appears in it.
"""

from dataclasses import dataclass, field

import numpy as np

from . import lstm as L
from . import transformer as T
from .rng import SeededRng


@dataclass
class BypassProjection:
    """Maps the LSTM final state to head width when the encoder is bypassed."""

    W: np.ndarray
    b: np.ndarray

    def named_arrays(self):
        yield "W", self.W
        yield "b", self.b


@dataclass
class ModelParams:
    lstm_stack: list = field(default_factory=list)
    encoder: T.EncoderStack | None = None
    head: T.PredictionHead | None = None
    bypass: BypassProjection | None = None
    lstm_enabled: bool = True
    transformer_enabled: bool = True

    def named_arrays(self):
        for i, layer in enumerate(self.lstm_stack):
            for name, arr in layer.named_arrays():
                yield f"lstm.{i}.{name}", arr
        if self.encoder is not None:
            for name, arr in self.encoder.named_arrays():
                yield f"encoder.{name}", arr
        if self.head is not None:
            for name, arr in self.head.named_arrays():
                yield f"head.{name}", arr
        if self.bypass is not None:
            for name, arr in self.bypass.named_arrays():
                yield f"bypass.{name}", arr


def zeros_like_model(m: ModelParams) -> ModelParams:
    return ModelParams(
        lstm_stack=[L.zeros_like_layer(p) for p in m.lstm_stack],
        encoder=T.zeros_like_encoder_stack(m.encoder) if m.encoder else None,
        head=T.zeros_like_head(m.head) if m.head else None,
        bypass=BypassProjection(np.zeros_like(m.bypass.W), np.zeros_like(m.bypass.b))
        if m.bypass
        else None,
        lstm_enabled=m.lstm_enabled,
        transformer_enabled=m.transformer_enabled,
    )


def build_model(
    n_features: int,
    lookback: int,
    lstm_hidden: int = 128,
    lstm_layers: int = 2,
    transformer_layers: int = 6,
    attention_heads: int = 8,
    d_model: int = 256,
    d_ff: int | None = None,
    head_width: int = 64,
    lstm_enabled: bool = True,
    transformer_enabled: bool = True,
    rng: SeededRng | None = None,
) -> ModelParams:
    """Construct and initialize all components for the chosen variant."""
    if not lstm_enabled and not transformer_enabled:
        raise ValueError("at least one of the LSTM and encoder must be enabled")
    rng = rng or SeededRng(0)
    stack = []
    if lstm_enabled:
        in_size = n_features
        for i in range(lstm_layers):
            stack.append(L.init_layer(in_size, lstm_hidden, rng.split(i)))
            in_size = lstm_hidden

    encoder = None
    head_input = d_model
    bypass = None
    if transformer_enabled:
        encoder_input = lstm_hidden if lstm_enabled else n_features
        encoder = T.init_encoder_stack(
            encoder_input,
            d_model=d_model,
            n_layers=transformer_layers,
            n_heads=attention_heads,
            d_ff=d_ff,
            max_len=max(lookback, 1),
            rng=rng.split(100),
        )
    else:
        bound = 1.0 / np.sqrt(lstm_hidden)
        bypass = BypassProjection(
            W=rng.split(101).uniform(-bound, bound, (lstm_hidden, d_model)),
            b=np.zeros(d_model),
        )
    head = T.init_prediction_head(head_input, head_width, rng.split(102))
    return ModelParams(
        lstm_stack=stack,
        encoder=encoder,
        head=head,
        bypass=bypass,
        lstm_enabled=lstm_enabled,
        transformer_enabled=transformer_enabled,
    )


def forward_batch(windows: np.ndarray, model: ModelParams):
    """Predict a batch of windows (B, L, F). Returns (preds (B,), caches)."""
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 3:
        raise ValueError(f"expected (batch, lookback, features), got {windows.shape}")
    caches = {}
    if model.lstm_enabled:
        hidden, finals, lstm_caches = L.lstm_sequence_forward(windows, model.lstm_stack)
        caches["lstm"] = lstm_caches
    else:
        hidden = windows

    if model.transformer_enabled:
        encoded, enc_caches = T.encoder_stack_forward(hidden, model.encoder)
        caches["encoder"] = enc_caches
        preds, head_cache = T.predict(encoded, model.head)
        caches["head"] = head_cache
    else:
        last_hidden = hidden[:, -1, :]
        projected = last_hidden @ model.bypass.W + model.bypass.b
        caches["bypass"] = {"last_hidden": last_hidden, "hidden_shape": hidden.shape}
        preds, head_cache = T.head_forward(projected, model.head)
        caches["head"] = head_cache
    return preds, caches


def forward_full(window: np.ndarray, model: ModelParams):
    """Single-window convenience wrapper; returns (scalar, caches)."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2:
        raise ValueError(f"expected (lookback, features), got {window.shape}")
    preds, caches = forward_batch(window[None], model)
    return float(preds[0]), caches


def backward_batch(d_preds: np.ndarray, caches: dict, model: ModelParams) -> ModelParams:
    """Exact gradients of the batch predictions; mirrors ModelParams."""
    d_preds = np.atleast_1d(np.asarray(d_preds, dtype=np.float64))
    grads = zeros_like_model(model)

    if model.transformer_enabled:
        d_encoded, grads.head = T.predict_backward(d_preds, caches["head"], model.head)
        enc_grads, d_hidden = T.encoder_stack_backward(
            d_encoded, caches["encoder"], model.encoder
        )
        grads.encoder = enc_grads
    else:
        d_projected, grads.head = T.head_backward(d_preds, caches["head"], model.head)
        last_hidden = caches["bypass"]["last_hidden"]
        grads.bypass.W = last_hidden.T @ d_projected
        grads.bypass.b = d_projected.sum(axis=0)
        d_hidden = np.zeros(caches["bypass"]["hidden_shape"])
        d_hidden[:, -1, :] = d_projected @ model.bypass.W.T

    if model.lstm_enabled:
        layer_grads, _ = L.lstm_backward(caches["lstm"], d_hidden, model.lstm_stack)
        grads.lstm_stack = layer_grads
    return grads
