"""Toy encoder-decoder transformer with exact reverse-mode gradients.

Small enough to verify end to end with finite differences: float64
throughout, sinusoidal positions, post-norm residual blocks, shared input
embedding for encoder and decoder, separate output projection. ``forward``
returns one probability distribution over the vocabulary per target position
(teacher forcing with causal masking); ``backward`` maps an upstream gradient
on those probabilities to gradients for every parameter.

Parameters are a plain dict of named float64 arrays and are never mutated by
forward or decoding, so they can be shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import BOS_ID, EOS_ID, PAD_ID

NEG_MASK = -1e9
LN_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    n_layers_enc: int = 2
    n_layers_dec: int = 2
    d_ff: int = 128
    max_src_len: int = 256
    max_tgt_len: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model={self.d_model} must be divisible by n_heads={self.n_heads}"
            )
        for field in ("vocab_size", "d_model", "n_heads", "n_layers_enc",
                      "n_layers_dec", "d_ff", "max_src_len", "max_tgt_len"):
            if getattr(self, field) < 1:
                raise ValueError(f"{field} must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def init_parameters(cfg: ModelConfig) -> dict[str, np.ndarray]:
    """Xavier-style scaled-uniform initialization, reproducible per seed."""
    rng = np.random.default_rng(cfg.seed)
    params: dict[str, np.ndarray] = {}

    def xavier(name: str, fan_in: int, fan_out: int) -> None:
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-limit, limit, size=(fan_in, fan_out))

    def zeros(name: str, size: int) -> None:
        params[name] = np.zeros(size)

    def ones(name: str, size: int) -> None:
        params[name] = np.ones(size)

    d, ff, v = cfg.d_model, cfg.d_ff, cfg.vocab_size
    xavier("embed", v, d)

    def attn_block(prefix: str) -> None:
        for proj in ("wq", "wk", "wv", "wo"):
            xavier(f"{prefix}.{proj}", d, d)
        for bias in ("bq", "bk", "bv", "bo"):
            zeros(f"{prefix}.{bias}", d)

    def ff_block(prefix: str) -> None:
        xavier(f"{prefix}.w1", d, ff)
        zeros(f"{prefix}.b1", ff)
        xavier(f"{prefix}.w2", ff, d)
        zeros(f"{prefix}.b2", d)

    def ln_block(prefix: str) -> None:
        ones(f"{prefix}.g", d)
        zeros(f"{prefix}.b", d)

    for i in range(cfg.n_layers_enc):
        attn_block(f"enc{i}.attn")
        ln_block(f"enc{i}.ln1")
        ff_block(f"enc{i}.ff")
        ln_block(f"enc{i}.ln2")
    for i in range(cfg.n_layers_dec):
        attn_block(f"dec{i}.self")
        ln_block(f"dec{i}.ln1")
        attn_block(f"dec{i}.cross")
        ln_block(f"dec{i}.ln2")
        ff_block(f"dec{i}.ff")
        ln_block(f"dec{i}.ln3")
    xavier("out_w", d, v)
    zeros("out_b", v)
    return params


@lru_cache(maxsize=8)
def _positional_encoding(length: int, d_model: int) -> np.ndarray:
    position = np.arange(length, dtype=np.float64)[:, None]
    div = np.exp(np.arange(0, d_model, 2, dtype=np.float64) * (-math.log(10000.0) / d_model))
    pe = np.zeros((length, d_model))
    pe[:, 0::2] = np.sin(position * div)
    pe[:, 1::2] = np.cos(position * div[: d_model // 2])
    pe.setflags(write=False)
    return pe


# ---------------------------------------------------------------------------
# Forward graph
# ---------------------------------------------------------------------------

@dataclass
class ForwardCache:
    """Tape roots and bookkeeping needed to run backward."""

    probs: Tensor                     # (B, T_max, V)
    param_tensors: dict[str, Tensor]
    tgt_lengths: list[int]
    vocab_size: int


def _layer_norm(x: Tensor, g: Tensor, b: Tensor) -> Tensor:
    mu = ad.mean(x, axis=-1, keepdims=True)
    centered = x - mu
    var = ad.mean(centered * centered, axis=-1, keepdims=True)
    inv = ad.power(var + LN_EPS, -0.5)
    return centered * inv * g + b


def _attention(
    p: dict[str, Tensor], prefix: str, q_in: Tensor, kv_in: Tensor,
    mask: np.ndarray, n_heads: int,
) -> Tensor:
    batch, t_q, d = q_in.shape
    t_k = kv_in.shape[1]
    d_head = d // n_heads

    def heads(x: Tensor, t: int) -> Tensor:
        return ad.swapaxes(ad.reshape(x, (batch, t, n_heads, d_head)), 1, 2)

    q = heads(q_in @ p[f"{prefix}.wq"] + p[f"{prefix}.bq"], t_q)
    k = heads(kv_in @ p[f"{prefix}.wk"] + p[f"{prefix}.bk"], t_k)
    v = heads(kv_in @ p[f"{prefix}.wv"] + p[f"{prefix}.bv"], t_k)
    scores = q @ ad.swapaxes(k, -1, -2) * (1.0 / math.sqrt(d_head)) + Tensor(mask)
    attn = ad.softmax(scores, axis=-1)
    mixed = ad.reshape(ad.swapaxes(attn @ v, 1, 2), (batch, t_q, d))
    return mixed @ p[f"{prefix}.wo"] + p[f"{prefix}.bo"]


def _feed_forward(p: dict[str, Tensor], prefix: str, x: Tensor) -> Tensor:
    hidden = ad.relu(x @ p[f"{prefix}.w1"] + p[f"{prefix}.b1"])
    return hidden @ p[f"{prefix}.w2"] + p[f"{prefix}.b2"]


def _embed(p: dict[str, Tensor], ids: np.ndarray, d_model: int) -> Tensor:
    emb = ad.embedding(p["embed"], ids) * math.sqrt(d_model)
    return emb + Tensor(_positional_encoding(ids.shape[1], d_model))


def _encode(p: dict[str, Tensor], cfg: ModelConfig, src: np.ndarray,
            src_mask: np.ndarray) -> Tensor:
    x = _embed(p, src, cfg.d_model)
    for i in range(cfg.n_layers_enc):
        a = _attention(p, f"enc{i}.attn", x, x, src_mask, cfg.n_heads)
        x = _layer_norm(x + a, p[f"enc{i}.ln1.g"], p[f"enc{i}.ln1.b"])
        f = _feed_forward(p, f"enc{i}.ff", x)
        x = _layer_norm(x + f, p[f"enc{i}.ln2.g"], p[f"enc{i}.ln2.b"])
    return x


def _decode(p: dict[str, Tensor], cfg: ModelConfig, memory: Tensor,
            mem_mask: np.ndarray, tgt_in: np.ndarray) -> Tensor:
    t = tgt_in.shape[1]
    causal = np.triu(np.full((1, 1, t, t), NEG_MASK), k=1)
    x = _embed(p, tgt_in, cfg.d_model)
    for i in range(cfg.n_layers_dec):
        a = _attention(p, f"dec{i}.self", x, x, causal, cfg.n_heads)
        x = _layer_norm(x + a, p[f"dec{i}.ln1.g"], p[f"dec{i}.ln1.b"])
        c = _attention(p, f"dec{i}.cross", x, memory, mem_mask, cfg.n_heads)
        x = _layer_norm(x + c, p[f"dec{i}.ln2.g"], p[f"dec{i}.ln2.b"])
        f = _feed_forward(p, f"dec{i}.ff", x)
        x = _layer_norm(x + f, p[f"dec{i}.ln3.g"], p[f"dec{i}.ln3.b"])
    logits = x @ p["out_w"] + p["out_b"]
    return ad.softmax(logits, axis=-1)


def _validate_ids(seqs: Sequence[Sequence[int]], vocab_size: int, what: str,
                  budget: int) -> None:
    for seq in seqs:
        if len(seq) > budget:
            raise ValueError(f"{what} length {len(seq)} exceeds budget {budget}")
        for tok in seq:
            if not (0 <= tok < vocab_size):
                raise ValueError(f"{what} token id {tok} out of range [0, {vocab_size})")


def _pad_batch(seqs: Sequence[Sequence[int]]) -> tuple[np.ndarray, list[int]]:
    lengths = [len(s) for s in seqs]
    width = max(lengths)
    out = np.full((len(seqs), width), PAD_ID, dtype=np.int64)
    for i, seq in enumerate(seqs):
        out[i, : len(seq)] = seq
    return out, lengths


def forward_batch(
    params: dict[str, np.ndarray], cfg: ModelConfig,
    src_seqs: Sequence[Sequence[int]], tgt_seqs: Sequence[Sequence[int]],
) -> tuple[list[np.ndarray], ForwardCache]:
    """Teacher-forced forward over a batch.

    For each example, the decoder input is BOS followed by the target shifted
    right; row t of the returned (T_i, V) matrix is the distribution for
    target position t given the gold prefix. Padding within the batch never
    changes an example's distributions.
    """
    if len(src_seqs) != len(tgt_seqs) or not src_seqs:
        raise ValueError("need equal, non-zero numbers of source and target sequences")
    if any(len(s) == 0 for s in src_seqs) or any(len(t) == 0 for t in tgt_seqs):
        raise ValueError("empty source or target sequence")
    _validate_ids(src_seqs, cfg.vocab_size, "source", cfg.max_src_len)
    _validate_ids(tgt_seqs, cfg.vocab_size, "target", cfg.max_tgt_len)

    src, src_lengths = _pad_batch(src_seqs)
    tgt, tgt_lengths = _pad_batch(tgt_seqs)
    tgt_in = np.full_like(tgt, PAD_ID)
    tgt_in[:, 0] = BOS_ID
    tgt_in[:, 1:] = tgt[:, :-1]

    # Additive key mask: NEG_MASK at padded source positions.
    positions = np.arange(src.shape[1])
    src_mask = np.where(
        positions[None, :] < np.asarray(src_lengths)[:, None], 0.0, NEG_MASK
    )[:, None, None, :]

    p = {name: ad.parameter(arr, name) for name, arr in params.items()}
    memory = _encode(p, cfg, src, src_mask)
    probs = _decode(p, cfg, memory, src_mask, tgt_in)
    cache = ForwardCache(
        probs=probs, param_tensors=p, tgt_lengths=tgt_lengths,
        vocab_size=cfg.vocab_size,
    )
    per_example = [probs.data[i, : tgt_lengths[i]] for i in range(len(tgt_seqs))]
    return per_example, cache


def forward(
    params: dict[str, np.ndarray], cfg: ModelConfig,
    src_ids: Sequence[int], tgt_ids: Sequence[int],
) -> tuple[np.ndarray, ForwardCache]:
    """Single-example forward: (T, V) distributions plus the backward cache."""
    per_example, cache = forward_batch(params, cfg, [src_ids], [tgt_ids])
    return per_example[0], cache


def backward_batch(
    cache: ForwardCache, upstream: Sequence[np.ndarray]
) -> dict[str, np.ndarray]:
    """Map per-example gradients w.r.t. the output distributions to parameter
    gradients (summed over the batch)."""
    if len(upstream) != len(cache.tgt_lengths):
        raise ValueError("one upstream gradient per example required")
    seed = np.zeros(cache.probs.shape)
    for i, (grad, t_len) in enumerate(zip(upstream, cache.tgt_lengths)):
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != (t_len, cache.vocab_size):
            raise ValueError(
                f"example {i}: gradient shape {grad.shape} != ({t_len}, {cache.vocab_size})"
            )
        seed[i, :t_len] = grad
    ad.backward(cache.probs, seed)
    return {
        name: (t.grad if t.grad is not None else np.zeros(t.shape))
        for name, t in cache.param_tensors.items()
    }


def backward(cache: ForwardCache, upstream: np.ndarray) -> dict[str, np.ndarray]:
    """Single-example backward; ``upstream`` is (T, V)."""
    return backward_batch(cache, [upstream])


# ---------------------------------------------------------------------------
# Decoding
# ---------------------------------------------------------------------------

def _next_distributions(
    p: dict[str, Tensor], cfg: ModelConfig, memory: Tensor, mem_mask: np.ndarray,
    prefixes: Sequence[Sequence[int]],
) -> np.ndarray:
    """Next-token distribution for each prefix, given shared encoder memory
    broadcast over hypotheses. Returns (n_prefixes, V)."""
    n = len(prefixes)
    width = max(len(pre) for pre in prefixes) + 1
    tgt_in = np.full((n, width), PAD_ID, dtype=np.int64)
    tgt_in[:, 0] = BOS_ID
    for i, pre in enumerate(prefixes):
        tgt_in[i, 1 : 1 + len(pre)] = pre
    if memory.data.shape[0] != n:
        mem = Tensor(np.broadcast_to(memory.data, (n,) + memory.data.shape[1:]).copy())
        mask = np.broadcast_to(mem_mask, (n,) + mem_mask.shape[1:])
    else:
        mem, mask = Tensor(memory.data), mem_mask
    probs = _decode(p, cfg, mem, mask, tgt_in)
    rows = [probs.data[i, len(pre)] for i, pre in enumerate(prefixes)]
    return np.stack(rows)


def _encode_for_decoding(
    params: dict[str, np.ndarray], cfg: ModelConfig, src_ids: Sequence[int]
) -> tuple[dict[str, Tensor], Tensor, np.ndarray]:
    if not src_ids:
        raise ValueError("empty source sequence")
    _validate_ids([src_ids], cfg.vocab_size, "source", cfg.max_src_len)
    src = np.asarray([src_ids], dtype=np.int64)
    mask = np.zeros((1, 1, 1, src.shape[1]))
    p = {name: Tensor(arr) for name, arr in params.items()}
    return p, _encode(p, cfg, src, mask), mask


def greedy_decode(
    params: dict[str, np.ndarray], cfg: ModelConfig, src_ids: Sequence[int],
    max_steps: Optional[int] = None,
) -> list[int]:
    """Argmax decoding from BOS; ties go to the lowest token id. Stops at EOS
    (excluded from the output) or after ``max_steps`` tokens."""
    if max_steps is None:
        max_steps = cfg.max_tgt_len - 1
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    max_steps = min(max_steps, cfg.max_tgt_len - 1)
    p, memory, mask = _encode_for_decoding(params, cfg, src_ids)
    out: list[int] = []
    for _ in range(max_steps):
        dist = _next_distributions(p, cfg, memory, mask, [out])[0]
        token = int(np.argmax(dist))
        if token == EOS_ID:
            break
        out.append(token)
    return out


class _Hypothesis:
    __slots__ = ("tokens", "logprob", "n_emitted")

    def __init__(self, tokens: tuple[int, ...], logprob: float, n_emitted: int):
        self.tokens = tokens
        self.logprob = logprob
        self.n_emitted = n_emitted

    def normalized(self, exponent: float) -> float:
        return self.logprob / (self.n_emitted ** exponent)


def beam_decode(
    params: dict[str, np.ndarray], cfg: ModelConfig, src_ids: Sequence[int],
    beam: int = 4, max_steps: Optional[int] = None, length_norm: float = 1.0,
) -> list[int]:
    """Beam search over log-probabilities.

    Each step expands every active hypothesis by all tokens and keeps the
    ``beam`` best extensions by cumulative log-probability (ties broken by
    token id, then hypothesis order). Extensions emitting EOS retire to the
    finished pool, scored by logprob / n_emitted**length_norm where the EOS
    emission counts; hypotheses still active at ``max_steps`` are finalized
    as-is. With beam=1 this reduces exactly to greedy decoding.
    """
    if beam < 1:
        raise ValueError("beam width must be >= 1")
    if max_steps is None:
        max_steps = cfg.max_tgt_len - 1
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    max_steps = min(max_steps, cfg.max_tgt_len - 1)
    p, memory, mask = _encode_for_decoding(params, cfg, src_ids)

    active = [_Hypothesis((), 0.0, 0)]
    finished: list[_Hypothesis] = []
    floor = 1e-300  # keeps log() finite if softmax underflows

    for _ in range(max_steps):
        if not active:
            break
        dists = _next_distributions(p, cfg, memory, mask, [h.tokens for h in active])
        logps = np.log(np.maximum(dists, floor))
        candidates = [
            (h.logprob + logps[i, tok], tok, i)
            for i, h in enumerate(active)
            for tok in range(cfg.vocab_size)
        ]
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
        next_active: list[_Hypothesis] = []
        for logprob, tok, i in candidates[:beam]:
            parent = active[i]
            if tok == EOS_ID:
                finished.append(
                    _Hypothesis(parent.tokens, logprob, parent.n_emitted + 1)
                )
            else:
                next_active.append(
                    _Hypothesis(parent.tokens + (tok,), logprob, parent.n_emitted + 1)
                )
        active = next_active

    finished.extend(active)  # unfinished hypotheses finalized without EOS
    best = finished[0]
    best_score = best.normalized(length_norm)
    for hyp in finished[1:]:
        score = hyp.normalized(length_norm)
        if score > best_score:
            best, best_score = hyp, score
    return list(best.tokens)
