"""Training orchestration for the dual-prompt objective.

Every step runs each batch example through one forward pass per configured
control prompt plus one with the latent prompt, combines the branches with
:func:`promptsum.objective.multi_control_loss`, and applies Adam with
decoupled weight decay under a linear warmup + linear decay schedule.
Shuffling is a seeded permutation per epoch derived from (seed, epoch), so
training resumed from a checkpoint is bit-identical to an uninterrupted run.

Checkpoints are .npz containers holding the model config, the vocabulary,
all parameter arrays, Adam moments, the step counter and the RNG state,
with a format version field.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .corpus import EOS_ID, Vocab
from .objective import LOSS_PRESETS, LossBreakdown, LossWeights, multi_control_loss
from .prompts import ControlKind, PromptError, build_input, latent_prompt, render_prompt
from .seqmodel import ModelConfig, backward_batch, forward_batch, init_parameters
from .signals import AnnotatedExample

CHECKPOINT_FORMAT = "promptsum-checkpoint"
CHECKPOINT_VERSION = 1


class TrainerError(Exception):
    pass


class CheckpointError(Exception):
    pass


@dataclass(frozen=True)
class TrainConfig:
    control_kinds: tuple[ControlKind, ...]
    weights: LossWeights = LOSS_PRESETS["both"]
    lr_peak: float = 3e-4
    warmup_steps: int = 500
    total_steps: int = 2000
    batch_size: int = 8
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    seed: int = 0
    grad_clip: Optional[float] = 1.0

    def __post_init__(self):
        if not self.control_kinds:
            raise ValueError("at least one control kind is required")
        if ControlKind.LATENT in self.control_kinds:
            raise ValueError("the latent prompt is always trained; configure control kinds only")
        if self.warmup_steps > self.total_steps:
            raise ValueError("warmup_steps must be <= total_steps")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr_peak <= 0:
            raise ValueError("lr_peak must be positive")
        for beta in (self.adam_beta1, self.adam_beta2):
            if not 0.0 < beta < 1.0:
                raise ValueError("Adam betas must lie in (0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive or None")


@dataclass
class TrainState:
    params: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]
    step: int
    rng: np.random.Generator


def init_train_state(model_cfg: ModelConfig, train_cfg: TrainConfig) -> TrainState:
    params = init_parameters(model_cfg)
    return TrainState(
        params=params,
        adam_m={k: np.zeros_like(v) for k, v in params.items()},
        adam_v={k: np.zeros_like(v) for k, v in params.items()},
        step=0,
        rng=np.random.default_rng(train_cfg.seed),
    )


def lr_schedule(step: int, cfg: TrainConfig) -> float:
    """Linear ramp 0 -> lr_peak over warmup_steps, then linear decay to 0 at
    total_steps."""
    if step > cfg.total_steps:
        raise ValueError(f"step {step} beyond total_steps {cfg.total_steps}")
    if cfg.warmup_steps > 0 and step < cfg.warmup_steps:
        return cfg.lr_peak * step / cfg.warmup_steps
    if cfg.total_steps == cfg.warmup_steps:
        return cfg.lr_peak
    return cfg.lr_peak * (cfg.total_steps - step) / (cfg.total_steps - cfg.warmup_steps)


# ---------------------------------------------------------------------------
# Example encoding
# ---------------------------------------------------------------------------

def encode_gold(example, vocab: Vocab, model_cfg: ModelConfig) -> list[int]:
    """Gold target ids: the summary (truncated to budget) plus EOS."""
    ids = vocab.encode(example.summary)[: model_cfg.max_tgt_len - 1]
    return ids + [EOS_ID]

def encode_branch_input(
    ann: AnnotatedExample, kind: ControlKind, vocab: Vocab, model_cfg: ModelConfig
) -> list[int]:
    """Source ids for one branch: rendered prompt prepended to the document."""
    if kind is ControlKind.LATENT:
        prompt = latent_prompt()
    else:
        try:
            prompt = render_prompt(kind, ann.signals)
        except PromptError as exc:
            raise TrainerError(f"example {ann.id!r}: {exc}") from exc
    tokens = build_input(prompt, ann.example.document, model_cfg.max_src_len)
    return vocab.encode(tokens)


def examples_with_signals(
    annotated: Sequence[AnnotatedExample], kinds: Sequence[ControlKind]
) -> tuple[list[AnnotatedExample], int]:
    """Split off examples whose signals cannot render every configured kind
    (e.g. empty keywords). Returns (usable, n_dropped)."""
    usable = []
    dropped = 0
    for ann in annotated:
        try:
            for kind in kinds:
                render_prompt(kind, ann.signals)
        except PromptError:
            dropped += 1
            continue
        usable.append(ann)
    return usable, dropped


def build_training_vocab(
    annotated: Sequence[AnnotatedExample],
    kinds: Sequence[ControlKind],
    min_freq: int = 1,
) -> Vocab:
    """Corpus vocabulary extended with every prompt token seen in training,
    so control values receive real ids rather than UNK."""
    from .corpus import build_vocab

    extra: list[tuple[str, ...]] = [latent_prompt().tokens]
    for ann in annotated:
        for kind in kinds:
            try:
                extra.append(render_prompt(kind, ann.signals).tokens)
            except PromptError:
                continue
    return build_vocab([a.example for a in annotated], min_freq, extra)


# ---------------------------------------------------------------------------
# Optimization
# ---------------------------------------------------------------------------

def _clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> None:
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale


def _adam_update(state: TrainState, grads: dict[str, np.ndarray],
                 cfg: TrainConfig) -> float:
    lr = lr_schedule(state.step, cfg)
    t = state.step + 1
    bias1 = 1.0 - cfg.adam_beta1 ** t
    bias2 = 1.0 - cfg.adam_beta2 ** t
    for name in sorted(state.params):
        g = grads[name]
        m = state.adam_m[name]
        v = state.adam_v[name]
        m *= cfg.adam_beta1
        m += (1.0 - cfg.adam_beta1) * g
        v *= cfg.adam_beta2
        v += (1.0 - cfg.adam_beta2) * g * g
        update = (m / bias1) / (np.sqrt(v / bias2) + cfg.adam_eps)
        param = state.params[name]
        param -= lr * (update + cfg.weight_decay * param)
        if not np.isfinite(param).all():
            raise TrainerError(f"parameter {name!r} became non-finite at step {state.step}")
    return lr


def train_step(
    state: TrainState,
    batch: Sequence[AnnotatedExample],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    vocab: Vocab,
) -> LossBreakdown:
    """One optimization step over ``batch``; mutates ``state`` in place.

    Losses are averaged over the batch so weight settings are batch-size
    independent; the logged total is recomposed from the averaged components
    and therefore satisfies the combination identity exactly.
    """
    if not batch:
        raise TrainerError("empty batch")
    golds = [encode_gold(ann.example, vocab, model_cfg) for ann in batch]
    latent_src = [encode_branch_input(ann, ControlKind.LATENT, vocab, model_cfg)
                  for ann in batch]
    control_src = {
        kind: [encode_branch_input(ann, kind, vocab, model_cfg) for ann in batch]
        for kind in train_cfg.control_kinds
    }

    dists_l, cache_l = forward_batch(state.params, model_cfg, latent_src, golds)
    control_dists = {}
    control_caches = {}
    for kind in train_cfg.control_kinds:
        control_dists[kind], control_caches[kind] = forward_batch(
            state.params, model_cfg, control_src[kind], golds
        )

    n = len(batch)
    sums = {"nll_c": 0.0, "nll_l": 0.0, "cl_c_to_l": 0.0, "cl_l_to_c": 0.0}
    upstream_l: list[np.ndarray] = []
    upstream_c: dict[ControlKind, list[np.ndarray]] = {
        kind: [] for kind in train_cfg.control_kinds
    }
    for i in range(n):
        breakdown, grads_c, grad_l = multi_control_loss(
            [control_dists[kind][i] for kind in train_cfg.control_kinds],
            dists_l[i],
            golds[i],
            train_cfg.weights,
        )
        sums["nll_c"] += breakdown.nll_c
        sums["nll_l"] += breakdown.nll_l
        sums["cl_c_to_l"] += breakdown.cl_c_to_l
        sums["cl_l_to_c"] += breakdown.cl_l_to_c
        upstream_l.append(grad_l / n)
        for kind, grad_c in zip(train_cfg.control_kinds, grads_c):
            upstream_c[kind].append(grad_c / n)

    grads = backward_batch(cache_l, upstream_l)
    for kind in train_cfg.control_kinds:
        branch_grads = backward_batch(control_caches[kind], upstream_c[kind])
        for name, g in branch_grads.items():
            grads[name] += g

    if train_cfg.grad_clip is not None:
        _clip_gradients(grads, train_cfg.grad_clip)
    _adam_update(state, grads, train_cfg)
    state.step += 1

    means = {key: value / n for key, value in sums.items()}
    total = (
        means["nll_c"]
        + means["nll_l"]
        + train_cfg.weights.lambda1 * means["cl_c_to_l"]
        + train_cfg.weights.lambda2 * means["cl_l_to_c"]
    )
    return LossBreakdown(total=total, **means)


def _epoch_permutation(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def train(
    annotated: Sequence[AnnotatedExample],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    vocab: Vocab,
    state: Optional[TrainState] = None,
    on_step: Optional[Callable[[int, float, LossBreakdown], None]] = None,
) -> tuple[TrainState, list[dict]]:
    """Run (or resume) training to ``total_steps``.

    Returns the final state and one log record per executed step:
    {step, lr, nll_c, nll_l, cl_c_to_l, cl_l_to_c, total}.
    """
    if not annotated:
        raise TrainerError("empty training corpus")
    if state is None:
        state = init_train_state(model_cfg, train_cfg)
    batches_per_epoch = max(1, math.ceil(len(annotated) / train_cfg.batch_size))
    records: list[dict] = []
    while state.step < train_cfg.total_steps:
        step = state.step
        epoch, offset = divmod(step, batches_per_epoch)
        perm = _epoch_permutation(train_cfg.seed, epoch, len(annotated))
        idx = perm[offset * train_cfg.batch_size : (offset + 1) * train_cfg.batch_size]
        batch = [annotated[i] for i in idx]
        lr = lr_schedule(step, train_cfg)
        breakdown = train_step(state, batch, model_cfg, train_cfg, vocab)
        record = {"step": step, "lr": lr, **breakdown.to_dict()}
        records.append(record)
        if on_step is not None:
            on_step(step, lr, breakdown)
    return state, records


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(
    path, state: TrainState, model_cfg: ModelConfig, vocab: Vocab
) -> None:
    """Lossless .npz checkpoint: params, Adam moments, step, RNG state,
    model config and vocabulary."""
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model_config": model_cfg.to_dict(),
        "vocab_tokens": list(vocab.tokens()),
        "step": state.step,
        "rng_state": state.rng.bit_generator.state,
    }
    arrays: dict[str, np.ndarray] = {"__meta__": np.frombuffer(
        json.dumps(meta).encode("utf-8"), dtype=np.uint8
    )}
    for name, arr in state.params.items():
        arrays[f"param/{name}"] = arr
        arrays[f"adam_m/{name}"] = state.adam_m[name]
        arrays[f"adam_v/{name}"] = state.adam_v[name]
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> tuple[TrainState, ModelConfig, Vocab]:
    """Inverse of :func:`save_checkpoint`; raises CheckpointError on version
    mismatch or corruption."""
    try:
        with np.load(path) as data:
            arrays = {key: data[key] for key in data.files}
    except Exception as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint: {exc}") from exc
    if "__meta__" not in arrays:
        raise CheckpointError(f"{path}: missing checkpoint metadata")
    try:
        meta = json.loads(bytes(arrays["__meta__"]).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint metadata") from exc
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint version {meta.get('version')} != {CHECKPOINT_VERSION}"
        )
    model_cfg = ModelConfig.from_dict(meta["model_config"])
    vocab = Vocab(meta["vocab_tokens"])
    params: dict[str, np.ndarray] = {}
    adam_m: dict[str, np.ndarray] = {}
    adam_v: dict[str, np.ndarray] = {}
    for key, arr in arrays.items():
        if key.startswith("param/"):
            params[key[len("param/"):]] = arr
        elif key.startswith("adam_m/"):
            adam_m[key[len("adam_m/"):]] = arr
        elif key.startswith("adam_v/"):
            adam_v[key[len("adam_v/"):]] = arr
    if not params or set(params) != set(adam_m) or set(params) != set(adam_v):
        raise CheckpointError(f"{path}: incomplete parameter/moment arrays")
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng_state"]
    return (
        TrainState(params=params, adam_m=adam_m, adam_v=adam_v,
                   step=int(meta["step"]), rng=rng),
        model_cfg,
        vocab,
    )
