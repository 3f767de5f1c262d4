"""Transformer encoder over LSTM features, plus the scalar prediction head.

Layout: input projection to d_model, additive sinusoidal positional encoding,
then a stack of post-norm encoder layers (multi-head self-attention and a
position-wise feed-forward block, each wrapped in residual + layer norm).
Predictions mean-pool the encoded sequence through a two-layer ReLU head.

Attention inside each layer is scaled dot-product: softmax(Q K^T / sqrt(d_head)) V.
Per-head query/key/value projections are stored concatenated column-wise in
(d_model, d_model) matrices; head h owns columns [h*d_head, (h+1)*d_head).

Backward passes are hand-derived and exact; the positional table is a
constant, so nothing propagates into it.
"""

from dataclasses import dataclass, fields

import numpy as np

from .ops import ShapeMismatchError, softmax
from .rng import SeededRng

LAYER_NORM_EPS = 1e-5


@dataclass
class EncoderLayerParams:
    W_q: np.ndarray  # (d_model, d_model), head-blocked columns
    W_k: np.ndarray
    W_v: np.ndarray
    W_o: np.ndarray  # (d_model, d_model)
    W_ff1: np.ndarray  # (d_model, d_ff)
    b_ff1: np.ndarray
    W_ff2: np.ndarray  # (d_ff, d_model)
    b_ff2: np.ndarray
    ln1_gain: np.ndarray
    ln1_bias: np.ndarray
    ln2_gain: np.ndarray
    ln2_bias: np.ndarray

    def named_arrays(self):
        for f in fields(self):
            yield f.name, getattr(self, f.name)


@dataclass
class EncoderStack:
    layers: list
    n_heads: int
    W_in: np.ndarray  # (input_size, d_model)
    b_in: np.ndarray
    pos_table: np.ndarray  # (max_len, d_model), constant

    @property
    def d_model(self) -> int:
        return self.W_in.shape[1]

    @property
    def input_size(self) -> int:
        return self.W_in.shape[0]

    def named_arrays(self):
        yield "W_in", self.W_in
        yield "b_in", self.b_in
        for i, layer in enumerate(self.layers):
            for name, arr in layer.named_arrays():
                yield f"layers.{i}.{name}", arr


@dataclass
class PredictionHead:
    W_a: np.ndarray  # (d_model, width)
    b_a: np.ndarray
    W_b: np.ndarray  # (width, 1)
    b_b: np.ndarray  # (1,)
    pooling: str = "mean"

    def named_arrays(self):
        yield "W_a", self.W_a
        yield "b_a", self.b_a
        yield "W_b", self.W_b
        yield "b_b", self.b_b


def positional_encoding(seq_len: int, d_model: int) -> np.ndarray:
    """Sinusoidal table: sin at even columns, cos at odd columns."""
    if seq_len <= 0 or d_model <= 0:
        raise ValueError("seq_len and d_model must be positive")
    if d_model % 2:
        raise ValueError(f"d_model must be even, got {d_model}")
    pos = np.arange(seq_len, dtype=np.float64)[:, None]
    i = np.arange(d_model // 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * i / d_model)
    table = np.empty((seq_len, d_model))
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle)
    return table


def _uniform_fan_in(rows, cols, rng):
    bound = 1.0 / np.sqrt(rows)
    return rng.uniform(-bound, bound, (rows, cols))


def init_encoder_layer(d_model: int, d_ff: int, rng: SeededRng) -> EncoderLayerParams:
    return EncoderLayerParams(
        W_q=_uniform_fan_in(d_model, d_model, rng),
        W_k=_uniform_fan_in(d_model, d_model, rng),
        W_v=_uniform_fan_in(d_model, d_model, rng),
        W_o=_uniform_fan_in(d_model, d_model, rng),
        W_ff1=_uniform_fan_in(d_model, d_ff, rng),
        b_ff1=np.zeros(d_ff),
        W_ff2=_uniform_fan_in(d_ff, d_model, rng),
        b_ff2=np.zeros(d_model),
        ln1_gain=np.ones(d_model),
        ln1_bias=np.zeros(d_model),
        ln2_gain=np.ones(d_model),
        ln2_bias=np.zeros(d_model),
    )


def init_encoder_stack(
    input_size: int,
    d_model: int = 256,
    n_layers: int = 6,
    n_heads: int = 8,
    d_ff: int | None = None,
    max_len: int = 64,
    rng: SeededRng | None = None,
) -> EncoderStack:
    if d_model % n_heads:
        raise ValueError(f"n_heads {n_heads} must divide d_model {d_model}")
    rng = rng or SeededRng(0)
    d_ff = 4 * d_model if d_ff is None else d_ff
    return EncoderStack(
        layers=[init_encoder_layer(d_model, d_ff, rng) for _ in range(n_layers)],
        n_heads=n_heads,
        W_in=_uniform_fan_in(input_size, d_model, rng),
        b_in=np.zeros(d_model),
        pos_table=positional_encoding(max_len, d_model),
    )


def init_prediction_head(d_model: int, width: int = 64, rng: SeededRng | None = None) -> PredictionHead:
    rng = rng or SeededRng(0)
    return PredictionHead(
        W_a=_uniform_fan_in(d_model, width, rng),
        b_a=np.zeros(width),
        W_b=_uniform_fan_in(width, 1, rng),
        b_b=np.zeros(1),
    )


def zeros_like_encoder_layer(p: EncoderLayerParams) -> EncoderLayerParams:
    return EncoderLayerParams(**{n: np.zeros_like(a) for n, a in p.named_arrays()})


def zeros_like_encoder_stack(s: EncoderStack) -> EncoderStack:
    return EncoderStack(
        layers=[zeros_like_encoder_layer(l) for l in s.layers],
        n_heads=s.n_heads,
        W_in=np.zeros_like(s.W_in),
        b_in=np.zeros_like(s.b_in),
        pos_table=s.pos_table,
    )


def zeros_like_head(h: PredictionHead) -> PredictionHead:
    return PredictionHead(
        W_a=np.zeros_like(h.W_a),
        b_a=np.zeros_like(h.b_a),
        W_b=np.zeros_like(h.W_b),
        b_b=np.zeros_like(h.b_b),
        pooling=h.pooling,
    )


# ---------------------------------------------------------------------------
# attention
# ---------------------------------------------------------------------------

def scaled_attention(Q, K, V):
    """softmax(Q K^T / sqrt(d_head)) V, row-wise. Returns (output, weights)."""
    Q, K, V = (np.asarray(a, dtype=np.float64) for a in (Q, K, V))
    if Q.shape[-1] != K.shape[-1]:
        raise ShapeMismatchError(f"Q/K head sizes differ: {Q.shape} vs {K.shape}")
    if K.shape[-2] != V.shape[-2]:
        raise ShapeMismatchError(f"K/V sequence lengths differ: {K.shape} vs {V.shape}")
    scale = 1.0 / np.sqrt(Q.shape[-1])
    scores = (Q @ np.swapaxes(K, -1, -2)) * scale
    weights = softmax(scores, axis=-1)
    return weights @ V, weights


def _split_heads(x, n_heads):
    # (B, S, D) -> (B, H, S, d_head)
    b, s, d = x.shape
    return x.reshape(b, s, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    # (B, H, S, d_head) -> (B, S, D)
    b, h, s, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, s, h * dh)


def multi_head_attention(x, p: EncoderLayerParams, n_heads: int):
    """Project, attend per head, concatenate, re-project.

    ``x`` is (S, d_model) or (B, S, d_model). Returns (output, cache); the
    cache holds the per-head attention weights under "weights".
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 2
    xb = x[None] if single else x
    d_model = p.W_q.shape[0]
    if xb.shape[-1] != d_model:
        raise ShapeMismatchError(
            f"input feature size {xb.shape[-1]} does not match d_model {d_model}"
        )
    Q = _split_heads(xb @ p.W_q, n_heads)
    K = _split_heads(xb @ p.W_k, n_heads)
    V = _split_heads(xb @ p.W_v, n_heads)
    ctx, weights = scaled_attention(Q, K, V)
    merged = _merge_heads(ctx)
    out = merged @ p.W_o
    cache = {"x": xb, "Q": Q, "K": K, "V": V, "weights": weights, "merged": merged}
    return (out[0] if single else out), cache


def multi_head_attention_backward(d_out, cache, p: EncoderLayerParams):
    """Returns (grad w.r.t. x, dict of grads for W_q/W_k/W_v/W_o)."""
    xb, Q, K, V = cache["x"], cache["Q"], cache["K"], cache["V"]
    weights, merged = cache["weights"], cache["merged"]
    d_out = np.asarray(d_out, dtype=np.float64)
    if d_out.ndim == 2:
        d_out = d_out[None]
    b, s, d_model = xb.shape
    n_heads = Q.shape[1]

    flat = lambda a: a.reshape(-1, a.shape[-1])
    dW_o = flat(merged).T @ flat(d_out)
    d_merged = d_out @ p.W_o.T
    d_ctx = _split_heads(d_merged, n_heads)

    dW_att = d_ctx @ np.swapaxes(V, -1, -2)
    dV = np.swapaxes(weights, -1, -2) @ d_ctx
    # softmax rows: dS = W * (dW - sum(dW * W))
    dS = weights * (dW_att - np.sum(dW_att * weights, axis=-1, keepdims=True))
    scale = 1.0 / np.sqrt(Q.shape[-1])
    dQ = (dS @ K) * scale
    dK = (np.swapaxes(dS, -1, -2) @ Q) * scale

    dQf, dKf, dVf = (_merge_heads(a) for a in (dQ, dK, dV))
    dW_q = flat(xb).T @ flat(dQf)
    dW_k = flat(xb).T @ flat(dKf)
    dW_v = flat(xb).T @ flat(dVf)
    dx = dQf @ p.W_q.T + dKf @ p.W_k.T + dVf @ p.W_v.T
    return dx, {"W_q": dW_q, "W_k": dW_k, "W_v": dW_v, "W_o": dW_o}


# ---------------------------------------------------------------------------
# feed-forward and layer norm with caches
# ---------------------------------------------------------------------------

def feed_forward(x, p: EncoderLayerParams):
    """ReLU(x W1 + b1) W2 + b2 applied per position. Returns (out, cache)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != p.W_ff1.shape[0]:
        raise ShapeMismatchError(
            f"input feature size {x.shape[-1]} does not match W1 {p.W_ff1.shape}"
        )
    pre = x @ p.W_ff1 + p.b_ff1
    act = np.maximum(pre, 0.0)
    out = act @ p.W_ff2 + p.b_ff2
    return out, {"x": x, "pre": pre, "act": act}


def feed_forward_backward(d_out, cache, p: EncoderLayerParams):
    flat = lambda a: a.reshape(-1, a.shape[-1])
    dW2 = flat(cache["act"]).T @ flat(d_out)
    db2 = flat(d_out).sum(axis=0)
    d_act = d_out @ p.W_ff2.T
    d_pre = d_act * (cache["pre"] > 0)
    dW1 = flat(cache["x"]).T @ flat(d_pre)
    db1 = flat(d_pre).sum(axis=0)
    dx = d_pre @ p.W_ff1.T
    return dx, {"W_ff1": dW1, "b_ff1": db1, "W_ff2": dW2, "b_ff2": db2}


def _layer_norm_fwd(x, gain, bias):
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
    xhat = centered * inv
    return gain * xhat + bias, {"xhat": xhat, "inv": inv}


def _layer_norm_bwd(d_out, cache, gain):
    xhat, inv = cache["xhat"], cache["inv"]
    axes = tuple(range(d_out.ndim - 1))
    d_gain = (d_out * xhat).sum(axis=axes)
    d_bias = d_out.sum(axis=axes)
    d_xhat = d_out * gain
    dx = inv * (
        d_xhat
        - d_xhat.mean(axis=-1, keepdims=True)
        - xhat * (d_xhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, d_gain, d_bias


# ---------------------------------------------------------------------------
# encoder layer / stack / head
# ---------------------------------------------------------------------------

def encoder_layer_forward(x, p: EncoderLayerParams, n_heads: int):
    """Post-norm block: LN(x + attention(x)), then LN(y + feed_forward(y))."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 2
    xb = x[None] if single else x
    attn, attn_cache = multi_head_attention(xb, p, n_heads)
    y1, ln1_cache = _layer_norm_fwd(xb + attn, p.ln1_gain, p.ln1_bias)
    ff, ff_cache = feed_forward(y1, p)
    y2, ln2_cache = _layer_norm_fwd(y1 + ff, p.ln2_gain, p.ln2_bias)
    cache = {"attn": attn_cache, "ln1": ln1_cache, "ff": ff_cache, "ln2": ln2_cache}
    return (y2[0] if single else y2), cache


def encoder_layer_backward(d_out, cache, p: EncoderLayerParams):
    """Returns (grad w.r.t. x, EncoderLayerParams-shaped grads)."""
    d_out = np.asarray(d_out, dtype=np.float64)
    if d_out.ndim == 2:
        d_out = d_out[None]
    g = zeros_like_encoder_layer(p)
    d_s2, g.ln2_gain, g.ln2_bias = _layer_norm_bwd(d_out, cache["ln2"], p.ln2_gain)
    d_y1_ff, ff_grads = feed_forward_backward(d_s2, cache["ff"], p)
    for name, val in ff_grads.items():
        setattr(g, name, val)
    d_y1 = d_s2 + d_y1_ff
    d_s1, g.ln1_gain, g.ln1_bias = _layer_norm_bwd(d_y1, cache["ln1"], p.ln1_gain)
    d_x_attn, attn_grads = multi_head_attention_backward(d_s1, cache["attn"], p)
    for name, val in attn_grads.items():
        setattr(g, name, val)
    return d_s1 + d_x_attn, g


def encoder_stack_forward(hidden_seq, stack: EncoderStack, add_positional: bool = True):
    """Project, add positional encoding, run all layers. Returns (out, caches)."""
    hidden_seq = np.asarray(hidden_seq, dtype=np.float64)
    single = hidden_seq.ndim == 2
    xb = hidden_seq[None] if single else hidden_seq
    if xb.shape[-1] != stack.input_size:
        raise ShapeMismatchError(
            f"sequence feature size {xb.shape[-1]} does not match "
            f"stack input size {stack.input_size}"
        )
    seq_len = xb.shape[1]
    if seq_len > stack.pos_table.shape[0]:
        raise ValueError(
            f"sequence length {seq_len} exceeds positional table "
            f"length {stack.pos_table.shape[0]}"
        )
    z = xb @ stack.W_in + stack.b_in
    if add_positional:
        z = z + stack.pos_table[:seq_len]
    layer_caches = []
    for layer in stack.layers:
        z, cache = encoder_layer_forward(z, layer, stack.n_heads)
        layer_caches.append(cache)
    caches = {"input": xb, "layers": layer_caches}
    return (z[0] if single else z), caches


def encoder_stack_backward(d_out, caches, stack: EncoderStack):
    """Returns (EncoderStack-shaped grads, grad w.r.t. the input sequence).

    The positional table is constant, so the additive encoding passes the
    gradient through untouched.
    """
    d = np.asarray(d_out, dtype=np.float64)
    single = d.ndim == 2
    if single:
        d = d[None]
    g = zeros_like_encoder_stack(stack)
    for idx in reversed(range(len(stack.layers))):
        d, g.layers[idx] = encoder_layer_backward(
            d, caches["layers"][idx], stack.layers[idx]
        )
    xb = caches["input"]
    flat = lambda a: a.reshape(-1, a.shape[-1])
    g.W_in = flat(xb).T @ flat(d)
    g.b_in = flat(d).sum(axis=0)
    d_input = d @ stack.W_in.T
    return g, (d_input[0] if single else d_input)


def head_forward(pooled, head: PredictionHead):
    """Two-layer ReLU head on pooled features (B, d_model) -> (B,)."""
    pre = pooled @ head.W_a + head.b_a
    act = np.maximum(pre, 0.0)
    out = act @ head.W_b + head.b_b
    return out[:, 0], {"pooled": pooled, "pre": pre, "act": act}


def head_backward(d_out, cache, head: PredictionHead):
    d = np.asarray(d_out, dtype=np.float64)[:, None]
    g = zeros_like_head(head)
    g.W_b = cache["act"].T @ d
    g.b_b = d.sum(axis=0)
    d_act = d @ head.W_b.T
    d_pre = d_act * (cache["pre"] > 0)
    g.W_a = cache["pooled"].T @ d_pre
    g.b_a = d_pre.sum(axis=0)
    d_pooled = d_pre @ head.W_a.T
    return d_pooled, g


def predict(encoded, head: PredictionHead):
    """Mean-pool sequence positions, run the head; scalar per window."""
    if head.pooling != "mean":
        raise ValueError(f"unsupported pooling mode {head.pooling!r}")
    encoded = np.asarray(encoded, dtype=np.float64)
    single = encoded.ndim == 2
    z = encoded[None] if single else encoded
    if z.shape[-1] != head.W_a.shape[0]:
        raise ShapeMismatchError(
            f"encoded feature size {z.shape[-1]} does not match "
            f"head input {head.W_a.shape[0]}"
        )
    pooled = z.mean(axis=1)
    out, cache = head_forward(pooled, head)
    cache["seq_len"] = z.shape[1]
    return (float(out[0]) if single else out), cache


def predict_backward(d_out, cache, head: PredictionHead):
    """Returns (grad w.r.t. the encoded sequence, head grads)."""
    d = np.atleast_1d(np.asarray(d_out, dtype=np.float64))
    d_pooled, g = head_backward(d, cache, head)
    seq_len = cache["seq_len"]
    d_encoded = np.repeat(d_pooled[:, None, :], seq_len, axis=1) / seq_len
    return d_encoded, g
