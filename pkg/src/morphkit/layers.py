# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: The morphkit contributors
"""Neural building blocks of the analyzer and its joint loss.

Activations are channels-last: a word is a ``(..., len, d)`` tensor, a
convolution produces ``(..., len - w + 1, N)`` and pooling halves the length
axis. Every function also accepts an unbatched input, since the leading axes
are carried through untouched.
"""

import logging
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np

from morphkit import autodiff as ad
from morphkit.autodiff import Tensor

logger = logging.getLogger(__name__)

#: Probability floor applied before taking logs in every cross-entropy term.
LOG_EPS = 1e-12

#: Score added to padded source positions before the attention softmax.
MASKED_SCORE = -1e9

TAG_TASKS = ("pos", "gender", "number", "person", "case", "tam")
TASKS = (*TAG_TASKS, "lemma")

#: Report labels for each task, as used in combined-accuracy rows.
TASK_LABELS = {
    "pos": "POS",
    "gender": "G",
    "number": "N",
    "person": "P",
    "case": "C",
    "tam": "TAM",
    "lemma": "L",
}

PoolMode = Literal["max", "avg"]


def embed(ids: np.ndarray, table: Tensor) -> Tensor:
    """Look up one embedding row per character id.

    Raises:
        ValueError: If an id falls outside the table
    """
    return ad.take(table, ids)


def gaussian_noise(
    x: Tensor, sigma: float, training: bool, rng: np.random.Generator
) -> Tensor:
    """Add zero-mean Gaussian noise in training mode; identity otherwise."""
    if sigma < 0:
        raise ValueError(f"Noise sigma must be non-negative, got {sigma}")
    if not training or sigma == 0:
        return x
    noise = rng.normal(0.0, sigma, size=x.shape).astype(x.dtype)
    return x + Tensor(noise)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1 / (1 - rate)``."""
    if not 0 <= rate < 1:
        raise ValueError(f"Dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return x * Tensor(keep)


@dataclass(frozen=True)
class ConvLayer:
    """One-dimensional convolution over the character axis.

    ``weight`` stacks the N filters of width ``width`` as a ``(width * d, N)``
    matrix, rows ordered by window offset then embedding dimension, with one
    bias per feature map.
    """

    width: int
    weight: Tensor
    bias: Tensor

    @property
    def feature_maps(self) -> int:
        return self.bias.shape[0]


def conv_forward(x: Tensor, layer: ConvLayer) -> Tensor:
    """ReLU feature maps of ``x`` of shape ``(..., len, d)``.

    Element ``i`` of map ``l`` is ``relu(sum(x[i:i+w] * H_l) + b_l)``; the
    output has ``len - w + 1`` positions.
    """
    length, dim = x.shape[-2], x.shape[-1]
    width = layer.width
    if length < width:
        raise ValueError(f"Convolution width {width} exceeds input length {length}")
    if layer.weight.shape[0] != width * dim:
        raise ValueError(
            f"Convolution weight shape {layer.weight.shape} does not match "
            f"width {width} and embedding dimension {dim}"
        )
    out_len = length - width + 1
    windows = ad.concat(
        [x[..., offset : offset + out_len, :] for offset in range(width)], axis=-1
    )
    return ad.relu(windows @ layer.weight + layer.bias)


def pool(x: Tensor, mode: PoolMode) -> Tensor:
    """Non-overlapping pooling with window 2 and stride 2 along the length axis.

    A trailing odd position is dropped, so the output length is ``len // 2``.
    """
    length = x.shape[-2]
    if length < 2:
        raise ValueError(f"Pooling needs at least 2 positions, got {length}")
    half = length // 2
    trimmed = x[..., : 2 * half, :] if length % 2 else x
    pairs = ad.reshape(trimmed, (*x.shape[:-2], half, 2, x.shape[-1]))
    if mode == "max":
        return ad.max(pairs, axis=-2)
    if mode == "avg":
        return ad.mean(pairs, axis=-2)
    raise ValueError(f"Unknown pooling mode {mode!r}")


def build_z(*pooled: Tensor) -> Tensor:
    """Concatenate pooled feature maps on the channel axis and flatten.

    The blocks are taken in the order given (max4, avg4, max5, avg5 for the
    reference architecture), so four ``(..., 7, N)`` blocks give a vector of
    length ``28 N``.
    """
    if not pooled:
        raise ValueError("build_z needs at least one pooled block")
    rows = {block.shape[-2] for block in pooled}
    if len(rows) != 1:
        raise ValueError(
            f"Pooled blocks differ in length: {[block.shape for block in pooled]}"
        )
    joined = ad.concat(list(pooled), axis=-1)
    lead = joined.shape[:-2]
    return ad.reshape(joined, (*lead, joined.shape[-2] * joined.shape[-1]))


def build_context_seq(z_vectors: Sequence[Tensor], cw: int) -> Tensor:
    """Arrange word vectors left context, word, right context along a new axis.

    Returns a ``(..., 2 cw + 1, F)`` sequence.
    """
    expected = 2 * cw + 1
    if len(z_vectors) != expected:
        raise ValueError(
            f"Context window {cw} needs {expected} word vectors, got {len(z_vectors)}"
        )
    return ad.stack(list(z_vectors), axis=-2)


@dataclass(frozen=True)
class GRUCell:
    """Update, reset and candidate gates for input size i and hidden size h."""

    w_z: Tensor
    u_z: Tensor
    b_z: Tensor
    w_r: Tensor
    u_r: Tensor
    b_r: Tensor
    w_h: Tensor
    u_h: Tensor
    b_h: Tensor

    def __post_init__(self) -> None:
        i, h = self.w_z.shape
        for name, expected in (
            ("w_r", (i, h)),
            ("w_h", (i, h)),
            ("u_z", (h, h)),
            ("u_r", (h, h)),
            ("u_h", (h, h)),
            ("b_z", (h,)),
            ("b_r", (h,)),
            ("b_h", (h,)),
        ):
            actual = getattr(self, name).shape
            if actual != expected:
                raise ValueError(f"GRU {name} has shape {actual}, expected {expected}")

    @property
    def input_size(self) -> int:
        return self.w_z.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.w_z.shape[1]


def gru_step(
    x_t: Tensor, h_prev: Tensor, cell: GRUCell, mask: np.ndarray | None = None
) -> Tensor:
    """One GRU update.

    ``mask`` (one flag per batch row) keeps ``h_prev`` for rows whose input
    is padding.
    """
    if x_t.shape[-1] != cell.input_size or h_prev.shape[-1] != cell.hidden_size:
        raise ValueError(
            f"GRU step shapes x {x_t.shape}, h {h_prev.shape} do not match cell "
            f"({cell.input_size}, {cell.hidden_size})"
        )
    z = ad.sigmoid(x_t @ cell.w_z + h_prev @ cell.u_z + cell.b_z)
    r = ad.sigmoid(x_t @ cell.w_r + h_prev @ cell.u_r + cell.b_r)
    candidate = ad.tanh(x_t @ cell.w_h + (r * h_prev) @ cell.u_h + cell.b_h)
    h_t = (1.0 - z) * h_prev + z * candidate
    if mask is None:
        return h_t
    keep = np.broadcast_to(
        np.asarray(mask, dtype=h_t.dtype)[..., None], h_t.shape
    ).copy()
    return h_t * Tensor(keep) + h_prev * Tensor(1.0 - keep)


def bigru_states(
    seq: Tensor, fwd: GRUCell, bwd: GRUCell, mask: np.ndarray | None = None
) -> tuple[Tensor, Tensor]:
    """Run both directions over ``seq`` of shape ``(..., T, F)``.

    Returns per-position states ``(..., T, 2h)`` and the concatenated final
    forward and backward states ``(..., 2h)``. Under a right-padding ``mask``
    the forward state stops at the last real position and the backward pass
    starts there.
    """
    steps = seq.shape[-2]
    if steps == 0:
        raise ValueError("BiGRU input sequence is empty")
    lead = seq.shape[:-2]
    h_f = Tensor(np.zeros((*lead, fwd.hidden_size), dtype=seq.dtype))
    h_b = Tensor(np.zeros((*lead, bwd.hidden_size), dtype=seq.dtype))
    forward_states: list[Tensor] = []
    backward_states: list[Tensor | None] = [None] * steps
    for t in range(steps):
        m = None if mask is None else mask[..., t]
        h_f = gru_step(seq[..., t, :], h_f, fwd, m)
        forward_states.append(h_f)
    for t in reversed(range(steps)):
        m = None if mask is None else mask[..., t]
        h_b = gru_step(seq[..., t, :], h_b, bwd, m)
        backward_states[t] = h_b
    per_step = ad.concat(
        [
            ad.stack(forward_states, axis=-2),
            ad.stack([s for s in backward_states if s is not None], axis=-2),
        ],
        axis=-1,
    )
    return per_step, ad.concat([h_f, h_b], axis=-1)


def bigru(
    seq: Tensor,
    fwd: GRUCell,
    bwd: GRUCell,
    output: Literal["last", "per-step"] = "last",
    mask: np.ndarray | None = None,
) -> Tensor:
    """Bidirectional GRU with either final-state or per-position output."""
    per_step, last = bigru_states(seq, fwd, bwd, mask)
    if output == "last":
        return last
    if output == "per-step":
        return per_step
    raise ValueError(f"Unknown BiGRU output mode {output!r}")


@dataclass(frozen=True)
class DenseHead:
    """Three dense layers: ReLU, tanh, then a softmax over ``n_classes``."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    w3: Tensor
    b3: Tensor

    def __post_init__(self) -> None:
        if self.n_classes < 2:
            raise ValueError(f"A tag head needs at least 2 classes, got {self.n_classes}")

    @property
    def n_classes(self) -> int:
        return self.b3.shape[0]


def dense_head(
    x: Tensor,
    feat: Tensor | None,
    head: DenseHead,
    training: bool = False,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Class probabilities for one tag from the shared state and its features."""
    if feat is not None and feat.shape[-1] > 0:
        x = ad.concat([x, feat], axis=-1)
    if x.shape[-1] != head.w1.shape[0]:
        raise ValueError(
            f"Head input size {x.shape[-1]} does not match weight {head.w1.shape}"
        )
    rng = rng or np.random.default_rng(0)
    hidden = ad.relu(x @ head.w1 + head.b1)
    hidden = dropout(hidden, dropout_rate, training, rng)
    hidden = ad.tanh(hidden @ head.w2 + head.b2)
    hidden = dropout(hidden, dropout_rate, training, rng)
    return ad.softmax(hidden @ head.w3 + head.b3, axis=-1)


@dataclass(frozen=True)
class LuongAttention:
    """General bilinear attention score with a learned positive scale.

    The scale is stored as its logarithm so it stays positive under
    unconstrained updates.
    """

    w_a: Tensor
    log_scale: Tensor


def luong_attention(
    h_t: Tensor,
    encoder_states: Tensor,
    attention: LuongAttention,
    mask: np.ndarray | None = None,
) -> tuple[Tensor, Tensor]:
    """Attend from decoder state ``(B, Hd)`` over encoder states ``(B, S, He)``.

    Returns the context vector ``(B, He)`` and alignment weights ``(B, S)``.
    Positions where ``mask`` is false get no weight.
    """
    if encoder_states.shape[-2] == 0:
        raise ValueError("Attention over an empty source sequence")
    batch, source, enc = encoder_states.shape
    query = h_t @ attention.w_a
    scores = ad.reshape(
        encoder_states @ ad.reshape(query, (batch, enc, 1)), (batch, source)
    )
    scores = scores * ad.exp(attention.log_scale)
    if mask is not None:
        penalty = np.where(np.asarray(mask, dtype=bool), 0.0, MASKED_SCORE)
        scores = scores + Tensor(penalty.astype(scores.dtype))
    weights = ad.softmax(scores, axis=-1)
    context = ad.reshape(
        ad.reshape(weights, (batch, 1, source)) @ encoder_states, (batch, enc)
    )
    return context, weights


@dataclass(frozen=True)
class LossWeights:
    """Contribution of each task to the joint loss."""

    pos: float = 0.7
    gender: float = 0.9
    number: float = 0.7
    person: float = 0.9
    case: float = 0.95
    tam: float = 0.7
    lemma: float = 0.3

    def __post_init__(self) -> None:
        for task, value in asdict(self).items():
            if not value >= 0:
                raise ValueError(f"Loss weight for {task} must be >= 0, got {value}")

    @classmethod
    def heuristic(cls, lam: float) -> "LossWeights":
        """One shared tag weight ``lam`` and a lemma weight of ``1 - lam``."""
        if not 0 <= lam <= 1:
            raise ValueError(f"Shared tag weight must be in [0, 1], got {lam}")
        lam = float(lam)
        return cls(lam, lam, lam, lam, lam, lam, round(1.0 - lam, 12))

    @classmethod
    def reference(cls) -> "LossWeights":
        """The calibrated operating point shipped as the default."""
        return cls()

    @classmethod
    def only(cls, task: str, weight: float = 1.0) -> "LossWeights":
        """Single-task weights: every other task contributes nothing."""
        if task not in TASKS:
            raise ValueError(f"Unknown task {task!r}")
        values = dict.fromkeys(TASKS, 0.0)
        values[task] = weight
        return cls(**values)

    def get(self, task: str) -> float:
        return float(getattr(self, task))

    def with_weight(self, task: str, value: float) -> "LossWeights":
        values = self.as_dict()
        if task not in values:
            raise ValueError(f"Unknown task {task!r}")
        values[task] = value
        return LossWeights(**values)

    def scaled(self, factor: float) -> "LossWeights":
        return LossWeights(**{k: v * factor for k, v in self.as_dict().items()})

    def active(self) -> tuple[str, ...]:
        return tuple(task for task in TASKS if self.get(task) > 0)

    def as_dict(self) -> dict[str, float]:
        return {task: float(value) for task, value in asdict(self).items()}


@dataclass(frozen=True)
class Predictions:
    """Model outputs for a batch: one ``(B, n)`` tensor per tag head and the
    per-step lemma distributions ``(B, T, V + 2)``."""

    tags: Mapping[str, Tensor] = field(default_factory=dict)
    lemma: Tensor | None = None


@dataclass(frozen=True)
class Targets:
    """Gold ids for a batch; ``lemma_mask`` marks real decoder targets."""

    tags: Mapping[str, np.ndarray] = field(default_factory=dict)
    lemma: np.ndarray | None = None
    lemma_mask: np.ndarray | None = None


def _target_log_prob(probs: Tensor, targets: np.ndarray) -> Tensor:
    classes = probs.shape[-1]
    if targets.size and (targets.min() < 0 or targets.max() >= classes):
        raise ValueError(f"Target id out of range [0, {classes})")
    one_hot = np.eye(classes, dtype=probs.dtype)[targets]
    return ad.log(ad.sum(probs * Tensor(one_hot), axis=-1), floor=LOG_EPS)


def task_losses(
    predictions: Predictions,
    targets: Targets,
    weights: LossWeights | None = None,
) -> dict[str, Tensor]:
    """Cross-entropy per task.

    Tag terms average over the batch; the lemma term averages over each
    example's target characters, then over the batch. Tasks with zero weight
    are not computed.
    """
    losses: dict[str, Tensor] = {}
    for task in TAG_TASKS:
        if weights is not None and weights.get(task) == 0:
            continue
        if task not in predictions.tags or task not in targets.tags:
            continue
        log_p = _target_log_prob(predictions.tags[task], targets.tags[task])
        losses[task] = -ad.mean(log_p)

    lemma_active = weights is None or weights.lemma > 0
    if lemma_active and predictions.lemma is not None and targets.lemma is not None:
        probs = predictions.lemma
        steps = probs.shape[-2]
        gold = targets.lemma[:, :steps]
        if targets.lemma_mask is None:
            mask = np.ones(gold.shape, dtype=probs.dtype)
        else:
            mask = targets.lemma_mask[:, :steps].astype(probs.dtype)
        lengths = np.maximum(mask.sum(axis=-1), 1.0)
        log_p = _target_log_prob(probs, gold) * Tensor(mask)
        per_example = ad.sum(log_p, axis=-1) * Tensor(1.0 / lengths)
        losses["lemma"] = -ad.mean(per_example)
    return losses


def combine_losses(losses: Mapping[str, Tensor], weights: LossWeights) -> Tensor:
    """Weighted sum of task losses; zero-weight tasks are left out."""
    total: Tensor | None = None
    for task, loss in losses.items():
        w = weights.get(task)
        if w == 0:
            continue
        term = loss * w
        total = term if total is None else total + term
    if total is None:
        dtype = next(iter(losses.values())).dtype if losses else np.float64
        return Tensor(np.zeros((), dtype=dtype))
    return total


def joint_loss(
    predictions: Predictions, targets: Targets, weights: LossWeights
) -> Tensor:
    """The weighted multi-task cross-entropy over six tags and the lemma."""
    return combine_losses(task_losses(predictions, targets, weights), weights)
