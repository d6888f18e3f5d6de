"""Bidirectional transformer encoder over token sequences.

Attention uses relative positional embeddings: the pre-softmax score
between positions i and j is

    (q_i + u) . k_j  +  (q_i + v) . r_{clip(j-i)}

with one (2K+1) x (d/H) table of offset embeddings per layer shared
across heads, plus learned content/position bias vectors u, v per head.
No absolute position table exists, so any input length runs at inference
time; offsets beyond +/-K reuse the clipped entries.

All trailing all-PAD columns are dropped before the first layer and PAD
rows of the sequence output are zeroed, which makes outputs exactly
independent of how much padding a caller appended.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .nn import Tensor
from .tokenizer import (
    DEFAULT_CAPACITY,
    TokenSequence,
    Vocabulary,
    encode_single,
    tokenize,
)

NEG_INF = -1e9


class ModelError(ValueError):
    """Configuration or shape problem in the encoder."""


@dataclass(frozen=True)
class ModelConfig:
    layers: int = 4
    heads: int = 4
    hidden: int = 128
    ff_dim: int = 512
    vocab_size: int = 42
    descriptor_count: int = 16
    max_rel_distance: int = 64
    dropout: float = 0.0
    init_seed: int = 1234
    capacity: int = DEFAULT_CAPACITY
    tie_mlm: bool = True
    layer_norm_eps: float = 1e-12

    def __post_init__(self):
        if self.layers < 0 or self.heads < 1 or self.hidden < 1:
            raise ModelError("layers/heads/hidden out of range")
        if self.hidden % self.heads != 0:
            raise ModelError("hidden size must be divisible by the head count")
        if self.max_rel_distance < 1:
            raise ModelError("max relative distance must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelError("dropout must lie in [0, 1)")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads


def small_config(**overrides) -> ModelConfig:
    return replace(ModelConfig(), **overrides)


def paper_config(**overrides) -> ModelConfig:
    base = ModelConfig(
        layers=12, heads=12, hidden=768, ff_dim=3072, dropout=0.1
    )
    return replace(base, **overrides)


def tiny_config(**overrides) -> ModelConfig:
    """Audit-size model for gradient checks."""
    base = ModelConfig(
        layers=1, heads=2, hidden=8, ff_dim=16, max_rel_distance=4, capacity=32
    )
    return replace(base, **overrides)


@dataclass
class ModelState:
    config: ModelConfig
    params: dict[str, Tensor]
    dtype: np.dtype

    def p(self, name: str) -> Tensor:
        return self.params[name]

    def clone(self) -> "ModelState":
        params = {
            k: Tensor(t.data.copy(), requires_grad=True)
            for k, t in self.params.items()
        }
        return ModelState(self.config, params, self.dtype)


def _param_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    d, f, dh = cfg.hidden, cfg.ff_dim, cfg.head_dim
    shapes: dict[str, tuple] = {
        "embeddings.token": (cfg.vocab_size, d),
        "embeddings.segment": (2, d),
        "embeddings.norm_gain": (d,),
        "embeddings.norm_bias": (d,),
    }
    for i in range(cfg.layers):
        prefix = f"layer{i}."
        shapes.update(
            {
                prefix + "attn_wq": (d, d),
                prefix + "attn_bq": (d,),
                prefix + "attn_wk": (d, d),
                prefix + "attn_bk": (d,),
                prefix + "attn_wv": (d, d),
                prefix + "attn_bv": (d,),
                prefix + "attn_rel": (2 * cfg.max_rel_distance + 1, dh),
                prefix + "attn_u": (cfg.heads, dh),
                prefix + "attn_v": (cfg.heads, dh),
                prefix + "attn_wo": (d, d),
                prefix + "attn_bo": (d,),
                prefix + "attn_norm_gain": (d,),
                prefix + "attn_norm_bias": (d,),
                prefix + "ff_w1": (d, f),
                prefix + "ff_b1": (f,),
                prefix + "ff_w2": (f, d),
                prefix + "ff_b2": (d,),
                prefix + "ff_norm_gain": (d,),
                prefix + "ff_norm_bias": (d,),
            }
        )
    shapes["pooler.weight"] = (d, d)
    shapes["pooler.bias"] = (d,)
    if not cfg.tie_mlm:
        shapes["mlm.decoder"] = (d, cfg.vocab_size)
    shapes["mlm.bias"] = (cfg.vocab_size,)
    shapes["eq.weight"] = (d, 2)
    shapes["eq.bias"] = (2,)
    shapes["phys.weight"] = (d, cfg.descriptor_count)
    shapes["phys.bias"] = (cfg.descriptor_count,)
    return shapes


def init_model(cfg: ModelConfig, dtype=np.float32) -> ModelState:
    """Fresh parameters: N(0, 0.02) weights, zero biases, unit norm gains.

    Draws happen in a fixed name order from a PCG64 stream seeded with
    ``cfg.init_seed``, so two inits with one seed are bitwise identical.
    """
    rng = np.random.Generator(np.random.PCG64(cfg.init_seed))
    dtype = np.dtype(dtype)
    params: dict[str, Tensor] = {}
    for name, shape in _param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if "norm_gain" in leaf:
            data = np.ones(shape, dtype=np.float64)
        elif leaf.startswith(("b", "norm_bias")) or leaf in ("bias",):
            data = np.zeros(shape, dtype=np.float64)
        else:
            data = rng.normal(0.0, 0.02, size=shape)
        params[name] = Tensor(data.astype(dtype), requires_grad=True)
    return ModelState(cfg, params, dtype)


def zero_gradients(state: ModelState) -> None:
    for t in state.params.values():
        t.grad = None


@dataclass
class EncoderOutput:
    sequence_output: Tensor  # (B, T, d); PAD rows exactly zero
    pooled_output: Tensor  # (B, d)
    attention_mask: np.ndarray = field(repr=False)  # (B, T)
    lengths: np.ndarray = field(repr=False)  # (B,)


def _layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / nn.sqrt(var + eps) * gain + bias


def _dropout(x: Tensor, p: float, rng, dtype) -> Tensor:
    if p <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= p).astype(dtype)
    return x * Tensor(keep * (1.0 / (1.0 - p)))


def _as_batch(seqs) -> list[TokenSequence]:
    if isinstance(seqs, TokenSequence):
        return [seqs]
    batch = list(seqs)
    if not batch:
        raise ModelError("empty batch")
    return batch


def forward(state: ModelState, seqs, train: bool = False, rng=None) -> EncoderOutput:
    """Run the encoder; dropout applies only when ``train`` with a rng."""
    cfg = state.config
    batch = _as_batch(seqs)
    t_eff = max(s.length for s in batch)
    ids = np.stack([s.ids[:t_eff] for s in batch])
    seg = np.stack([s.segment_ids[:t_eff] for s in batch])
    mask = np.stack([s.attention_mask[:t_eff] for s in batch])
    if ids.max() >= cfg.vocab_size:
        raise ModelError("token id out of range for this model's vocabulary")

    b, t = ids.shape
    h, dh = cfg.heads, cfg.head_dim
    dtype = state.dtype
    p_drop = cfg.dropout if train else 0.0

    x = nn.embedding(state.p("embeddings.token"), ids) + nn.embedding(
        state.p("embeddings.segment"), seg
    )
    x = _layer_norm(
        x,
        state.p("embeddings.norm_gain"),
        state.p("embeddings.norm_bias"),
        cfg.layer_norm_eps,
    )
    x = _dropout(x, p_drop, rng, dtype)

    # Additive mask: 0 on real positions, -1e9 on PAD columns. exp(-1e9)
    # underflows to exactly zero, so PAD columns get exactly zero weight.
    mask_bias = Tensor(((1 - mask) * NEG_INF).astype(dtype)[:, None, None, :])
    offsets = np.clip(
        np.arange(t)[None, :] - np.arange(t)[:, None],
        -cfg.max_rel_distance,
        cfg.max_rel_distance,
    ) + cfg.max_rel_distance  # (T, T) indices into the rel table
    scale = 1.0 / float(np.sqrt(dh))

    for i in range(cfg.layers):
        pre = f"layer{i}."

        def proj(which):
            return (
                (x @ state.p(pre + f"attn_w{which}") + state.p(pre + f"attn_b{which}"))
                .reshape(b, t, h, dh)
                .transpose(0, 2, 1, 3)
            )

        q = proj("q")
        k = proj("k")
        v = proj("v")
        u_bias = state.p(pre + "attn_u").reshape(1, h, 1, dh)
        v_bias = state.p(pre + "attn_v").reshape(1, h, 1, dh)

        content = (q + u_bias) @ k.transpose(0, 1, 3, 2)  # (B,H,T,T)

        rel = nn.embedding(state.p(pre + "attn_rel"), offsets)  # (T,T,dh)
        qv = (q + v_bias).transpose(2, 0, 1, 3).reshape(t, b * h, dh)
        position = qv @ rel.transpose(0, 2, 1)  # (T, B*H, T)
        position = position.reshape(t, b, h, t).transpose(1, 2, 0, 3)

        scores = (content + position) * scale + mask_bias
        probs = _dropout(nn.softmax(scores, axis=-1), p_drop, rng, dtype)

        ctx = (probs @ v).transpose(0, 2, 1, 3).reshape(b, t, cfg.hidden)
        attn_out = ctx @ state.p(pre + "attn_wo") + state.p(pre + "attn_bo")
        attn_out = _dropout(attn_out, p_drop, rng, dtype)
        x = _layer_norm(
            x + attn_out,
            state.p(pre + "attn_norm_gain"),
            state.p(pre + "attn_norm_bias"),
            cfg.layer_norm_eps,
        )

        hidden = nn.gelu(x @ state.p(pre + "ff_w1") + state.p(pre + "ff_b1"))
        ff_out = hidden @ state.p(pre + "ff_w2") + state.p(pre + "ff_b2")
        ff_out = _dropout(ff_out, p_drop, rng, dtype)
        x = _layer_norm(
            x + ff_out,
            state.p(pre + "ff_norm_gain"),
            state.p(pre + "ff_norm_bias"),
            cfg.layer_norm_eps,
        )

    # Zero PAD rows so padding differences cannot leak downstream.
    x = x * Tensor(mask[:, :, None].astype(dtype))
    first = x[:, 0]
    pooled = nn.tanh(first @ state.p("pooler.weight") + state.p("pooler.bias"))
    lengths = np.array([s.length for s in batch])
    return EncoderOutput(x, pooled, mask, lengths)


# ---------------------------------------------------------------------------
# Task losses


def _mlm_logits(state: ModelState, output: EncoderOutput, positions) -> Tensor:
    positions = np.asarray(positions, dtype=np.int64)
    if positions.size == 0:
        raise ModelError("masked_lm_loss needs at least one masked position")
    b, t, d = output.sequence_output.shape
    flat = output.sequence_output.reshape(b * t, d)
    rows = flat[positions[:, 0] * t + positions[:, 1]]
    if state.config.tie_mlm:
        decoder = state.p("embeddings.token").transpose(1, 0)
    else:
        decoder = state.p("mlm.decoder")
    return rows @ decoder + state.p("mlm.bias")


def masked_lm_loss(
    state: ModelState, output: EncoderOutput, positions, labels
) -> Tensor:
    """Mean cross-entropy over the masked positions only.

    ``positions`` holds (batch, position) index pairs; ``labels`` the
    original token ids at those positions.
    """
    labels = np.asarray(labels, dtype=np.int64)
    logits = _mlm_logits(state, output, positions)
    logp = nn.log_softmax(logits, axis=-1)
    picked = logp[np.arange(labels.size), labels]
    return -picked.mean()


def smiles_eq_loss(state: ModelState, output: EncoderOutput, labels) -> Tensor:
    """Two-class cross-entropy of the equivalence head on pooled output."""
    labels = np.asarray(labels, dtype=np.int64)
    logits = output.pooled_output @ state.p("eq.weight") + state.p("eq.bias")
    logp = nn.log_softmax(logits, axis=-1)
    picked = logp[np.arange(labels.size), labels]
    return -picked.mean()


def physchem_head(state: ModelState, output: EncoderOutput) -> Tensor:
    return output.pooled_output @ state.p("phys.weight") + state.p("phys.bias")


def physchem_loss(state: ModelState, output: EncoderOutput, targets) -> Tensor:
    """Mean squared error of the descriptor head against [0,1] targets."""
    targets = np.asarray(targets)
    pred = physchem_head(state, output)
    diff = pred - Tensor(targets.astype(state.dtype))
    return (diff * diff).mean()


def total_loss(task_losses: list[Tensor]) -> Tensor:
    """Arithmetic mean of the task losses, accumulated in float64."""
    if not task_losses:
        raise ModelError("total_loss needs at least one task loss")
    acc = task_losses[0].astype(np.float64)
    for term in task_losses[1:]:
        acc = acc + term.astype(np.float64)
    return acc * (1.0 / len(task_losses))


# ---------------------------------------------------------------------------
# Embedding extraction


def embed(
    state: ModelState,
    inputs,
    strategy: str = "pooled",
    vocab: Vocabulary | None = None,
    batch_size: int = 64,
) -> np.ndarray:
    """Embed molecules: one row per input, ``(N, hidden)`` float array.

    ``inputs`` may be SMILES strings (encoded with ``vocab``) or
    ready-made TokenSequences. ``pooled`` takes the tanh pooler output;
    ``mean_sequence`` averages the sequence output over non-PAD positions.
    """
    if strategy not in ("pooled", "mean_sequence"):
        raise ModelError(f"unknown embedding strategy {strategy!r}")
    items = list(inputs) if not isinstance(inputs, (str, TokenSequence)) else [inputs]
    if vocab is None:
        vocab = Vocabulary()
    seqs = []
    for item in items:
        if isinstance(item, str):
            needed = len(tokenize(item, vocab)) + 2
            seqs.append(
                encode_single(
                    item, vocab, capacity=max(state.config.capacity, needed)
                )
            )
        else:
            seqs.append(item)
    rows = []
    for lo in range(0, len(seqs), batch_size):
        out = forward(state, seqs[lo : lo + batch_size])
        if strategy == "pooled":
            rows.append(out.pooled_output.data.copy())
        else:
            summed = out.sequence_output.data.sum(axis=1)
            rows.append(summed / out.lengths[:, None])
    return np.concatenate(rows, axis=0)
