# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: The morphkit contributors
"""The joint analyzer: a context-aware tag predictor and an attentional
lemma predictor sharing one character embedding table.

Tag predictor: every word of the ``2 cw + 1`` window is embedded, convolved
at each filter width, pooled and flattened into one vector; a BiGRU runs over
the window and its final state feeds six dense heads, each also reading its
own masked linguistic features.

Lemma predictor: a BiGRU encodes the current word only; a GRU decoder with
bilinear attention emits one character distribution per step over the
vocabulary plus start and stop symbols.
"""

import logging
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Literal

import numpy as np

from morphkit import autodiff as ad
from morphkit.autodiff import Parameters, Tensor
from morphkit.corpus import (
    CharVocab,
    EncodedExample,
    Sentence,
    TagDomains,
    TagSet,
    encode_context,
    encode_examples,
    encode_word,
    pooled_length,
)
from morphkit.errors import IngestionError
from morphkit.layers import (
    LOG_EPS,
    TAG_TASKS,
    ConvLayer,
    DenseHead,
    GRUCell,
    LossWeights,
    LuongAttention,
    Predictions,
    Targets,
    bigru,
    bigru_states,
    build_context_seq,
    build_z,
    conv_forward,
    dense_head,
    dropout,
    embed,
    gaussian_noise,
    gru_step,
    luong_attention,
    pool,
)
from morphkit.lingfeat import (
    FEATURE_POOL,
    FeatureMask,
    PhonoTable,
    load_phono_table,
    parse_phono_table,
    reference_languages,
    reference_mask,
    sentence_features,
)
from morphkit.logs import plural
from morphkit.output import dump_yaml, load_yaml, write_atomic

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1

PoolingMode = Literal["max+avg", "max", "avg"]
FeatureMode = Literal["optimized", "all", "none"]

#: Attention variants that have a config name but no implementation.
RESERVED_ATTENTION = ("bahdanau", "monotonic")


@dataclass(frozen=True)
class ModelConfig:
    len_max: int = 18
    cw: int = 4
    embedding_dim: int = 64
    feature_maps: int = 64
    filter_widths: tuple[int, ...] = (4, 5)
    gru_hidden: int = 64
    head_sizes: tuple[int, int] = (64, 128)
    embedding_dropout: float = 0.5
    head_dropout: float = 0.5
    noise_sigma: float = 0.1
    encoder_hidden: int = 64
    decoder_hidden: int = 128
    attention: str = "luong"
    pooling: PoolingMode = "max+avg"
    tie_conv_weights: bool = False
    feature_mode: FeatureMode = "optimized"
    precision: Literal["float64", "float32"] = "float64"
    beam_width: int = 4
    length_normalize: bool = False

    def __post_init__(self) -> None:
        if self.attention in RESERVED_ATTENTION:
            raise ValueError(f"{self.attention} attention is not implemented; use 'luong'")
        if self.attention != "luong":
            raise ValueError(f"Unknown attention {self.attention!r}")
        if self.pooling not in ("max+avg", "max", "avg"):
            raise ValueError(f"Unknown pooling {self.pooling!r}")
        if self.feature_mode not in ("optimized", "all", "none"):
            raise ValueError(f"Unknown feature mode {self.feature_mode!r}")
        if self.precision not in ("float64", "float32"):
            raise ValueError(f"Unknown precision {self.precision!r}")
        if self.cw < 0:
            raise ValueError(f"cw must be >= 0, got {self.cw}")
        if not self.filter_widths:
            raise ValueError("At least one filter width is required")
        if self.len_max < max(self.filter_widths) + 1:
            raise ValueError(
                f"len_max {self.len_max} is too short for filter width "
                f"{max(self.filter_widths)}"
            )
        pooled = {pooled_length(self.len_max, w) for w in self.filter_widths}
        if len(pooled) != 1:
            raise ValueError(
                f"Filter widths {self.filter_widths} pool to different lengths "
                f"{sorted(pooled)} at len_max {self.len_max}"
            )
        if self.beam_width < 1:
            raise ValueError(f"beam_width must be >= 1, got {self.beam_width}")
        for name in ("embedding_dropout", "head_dropout"):
            rate = getattr(self, name)
            if not 0 <= rate < 1:
                raise ValueError(f"{name} must be in [0, 1), got {rate}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")

    @property
    def slots(self) -> int:
        return 2 * self.cw + 1

    @property
    def pool_modes(self) -> tuple[str, ...]:
        return ("max", "avg") if self.pooling == "max+avg" else (self.pooling,)

    @property
    def pooled_width(self) -> int:
        return pooled_length(self.len_max, self.filter_widths[0])

    @property
    def z_size(self) -> int:
        blocks = len(self.filter_widths) * len(self.pool_modes)
        return self.pooled_width * blocks * self.feature_maps

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.precision)

    def to_dict(self) -> dict[str, Any]:
        return {
            k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"Unknown model config keys: {', '.join(sorted(unknown))}")
        values = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
        return cls(**values)


@dataclass(frozen=True, eq=False)
class Batch:
    """Stacked example arrays; slot order is left context, word, right context."""

    slot_ids: np.ndarray
    word_ids: np.ndarray
    tags: np.ndarray
    lemma_ids: np.ndarray
    features: np.ndarray | None = None

    @classmethod
    def from_examples(cls, examples: Sequence[EncodedExample]) -> "Batch":
        if not examples:
            raise ValueError("Cannot build an empty batch")
        words = np.stack([e.word_ids for e in examples])
        context = np.stack([e.context_ids for e in examples])
        cw = context.shape[1] // 2
        slots = np.concatenate(
            [context[:, :cw], words[:, None, :], context[:, cw:]], axis=1
        )
        has_features = all(e.features is not None for e in examples)
        return cls(
            slot_ids=slots,
            word_ids=words,
            tags=np.stack([e.gold_tags for e in examples]),
            lemma_ids=np.stack([e.gold_lemma_ids for e in examples]),
            features=np.stack([e.features for e in examples]) if has_features else None,  # type: ignore[misc]
        )

    def __len__(self) -> int:
        return len(self.word_ids)

    @property
    def lemma_steps(self) -> int:
        """Teacher-forced decoder steps needed by the longest lemma in the batch."""
        return int(np.max(np.count_nonzero(self.lemma_ids, axis=1))) - 1

    def targets(self) -> Targets:
        steps = self.lemma_steps
        gold = self.lemma_ids[:, 1 : steps + 1]
        return Targets(
            tags={tag: self.tags[:, i] for i, tag in enumerate(TAG_TASKS)},
            lemma=gold,
            lemma_mask=gold != 0,
        )


def resolve_masks(
    feature_mode: FeatureMode,
    masks: Mapping[str, FeatureMask] | None,
    language: str,
) -> dict[str, FeatureMask]:
    """Per-tag masks for a feature mode.

    ``optimized`` uses the given masks and falls back to the bundled
    reference set of ``language`` for tags without one.
    """
    if feature_mode == "all":
        return {tag: FeatureMask.all() for tag in TAG_TASKS}
    if feature_mode == "none":
        return {tag: FeatureMask.none() for tag in TAG_TASKS}
    masks = dict(masks or {})
    missing = [tag for tag in TAG_TASKS if tag not in masks]
    if missing:
        if language not in reference_languages():
            raise ValueError(
                f"No feature masks for {', '.join(missing)} and no reference set "
                f"for language {language!r}"
            )
        for tag in missing:
            masks[tag] = reference_mask(language, tag)
        logger.debug(f"Using reference {language} masks for {', '.join(missing)}")
    return {tag: masks[tag] for tag in TAG_TASKS}


def _glorot(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_in, fan_out = shape[0], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _gru_shapes(prefix: str, inputs: int, hidden: int) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for gate in ("z", "r", "h"):
        shapes[f"{prefix}/w_{gate}"] = (inputs, hidden)
        shapes[f"{prefix}/u_{gate}"] = (hidden, hidden)
        shapes[f"{prefix}/b_{gate}"] = (hidden,)
    return shapes


def parameter_shapes(
    config: ModelConfig,
    vocab: CharVocab,
    domains: TagDomains,
    masks: Mapping[str, FeatureMask],
) -> dict[str, tuple[int, ...]]:
    """Names and shapes of every trainable tensor, in initialization order."""
    d = config.embedding_dim
    shapes: dict[str, tuple[int, ...]] = {"embedding/table": (vocab.size, d)}
    conv_slots = ["shared"] if config.tie_conv_weights else [str(s) for s in range(config.slots)]
    for slot in conv_slots:
        for width in config.filter_widths:
            shapes[f"tag/conv/{slot}/w{width}/weight"] = (width * d, config.feature_maps)
            shapes[f"tag/conv/{slot}/w{width}/bias"] = (config.feature_maps,)
    shapes.update(_gru_shapes("tag/gru/fwd", config.z_size, config.gru_hidden))
    shapes.update(_gru_shapes("tag/gru/bwd", config.z_size, config.gru_hidden))
    first, second = config.head_sizes
    for tag in TAG_TASKS:
        inputs = 2 * config.gru_hidden + masks[tag].count
        shapes[f"tag/head/{tag}/w1"] = (inputs, first)
        shapes[f"tag/head/{tag}/b1"] = (first,)
        shapes[f"tag/head/{tag}/w2"] = (first, second)
        shapes[f"tag/head/{tag}/b2"] = (second,)
        shapes[f"tag/head/{tag}/w3"] = (second, domains[tag].n_classes)
        shapes[f"tag/head/{tag}/b3"] = (domains[tag].n_classes,)

    enc, dec = config.encoder_hidden, config.decoder_hidden
    shapes["lemma/special"] = (2, d)
    shapes.update(_gru_shapes("lemma/enc/fwd", d, enc))
    shapes.update(_gru_shapes("lemma/enc/bwd", d, enc))
    shapes["lemma/bridge/w"] = (2 * enc, dec)
    shapes["lemma/bridge/b"] = (dec,)
    shapes.update(_gru_shapes("lemma/dec", d, dec))
    shapes["lemma/attn/w_a"] = (dec, 2 * enc)
    shapes["lemma/attn/log_scale"] = ()
    shapes["lemma/combine/w"] = (2 * enc + dec, dec)
    shapes["lemma/combine/b"] = (dec,)
    shapes["lemma/out/w"] = (dec, vocab.output_size)
    shapes["lemma/out/b"] = (vocab.output_size,)
    return shapes


def init_parameters(
    shapes: Mapping[str, tuple[int, ...]], seed: int, dtype: np.dtype
) -> dict[str, np.ndarray]:
    """Glorot-uniform matrices, zero biases, N(0, 0.1) character embeddings."""
    rng = np.random.default_rng(seed)
    values: dict[str, np.ndarray] = {}
    for name, shape in shapes.items():
        if name in ("embedding/table", "lemma/special"):
            value = rng.normal(0.0, 0.1, size=shape)
        elif len(shape) >= 2:
            value = _glorot(rng, shape)
        else:
            value = np.zeros(shape)
        values[name] = value.astype(dtype)
    return values


class MorphAnalyzer:
    """The trainable analyzer and its fixed companions.

    ``params`` holds every tensor; the layer views (:meth:`conv_layer`,
    :meth:`head` and so on) are rebuilt from it on each call so they always
    see the latest parameter values.
    """

    def __init__(
        self,
        config: ModelConfig,
        vocab: CharVocab,
        domains: TagDomains,
        masks: Mapping[str, FeatureMask] | None = None,
        table: PhonoTable | None = None,
        params: Mapping[str, np.ndarray] | None = None,
        *,
        language: str = "hindi",
        seed: int = 0,
    ) -> None:
        self.config = config
        self.vocab = vocab
        self.domains = domains
        self.language = language
        self.table = table or load_phono_table()
        self.masks = resolve_masks(config.feature_mode, masks, language)
        shapes = parameter_shapes(config, vocab, domains, self.masks)
        if params is None:
            values = init_parameters(shapes, seed, config.dtype)
        else:
            values = _check_parameters(shapes, params, config.dtype)
        self.params = Parameters(values)
        logger.debug(f"Model has {self.params.count()} parameters in {len(self.params)} tensors")

    @property
    def dtype(self) -> np.dtype:
        return self.config.dtype

    def _p(self, name: str) -> Tensor:
        return self.params[name]

    def conv_layer(self, slot: int, width: int) -> ConvLayer:
        key = "shared" if self.config.tie_conv_weights else str(slot)
        prefix = f"tag/conv/{key}/w{width}"
        return ConvLayer(width, self._p(f"{prefix}/weight"), self._p(f"{prefix}/bias"))

    def gru(self, prefix: str) -> GRUCell:
        return GRUCell(
            **{
                f"{kind}_{gate}": self._p(f"{prefix}/{kind}_{gate}")
                for gate in ("z", "r", "h")
                for kind in ("w", "u", "b")
            }
        )

    def head(self, tag: str) -> DenseHead:
        prefix = f"tag/head/{tag}"
        return DenseHead(*(self._p(f"{prefix}/{n}") for n in ("w1", "b1", "w2", "b2", "w3", "b3")))

    def attention(self) -> LuongAttention:
        return LuongAttention(self._p("lemma/attn/w_a"), self._p("lemma/attn/log_scale"))

    def featurize(self, sentence: Sentence | Sequence[str]) -> np.ndarray:
        surfaces = sentence.surfaces if isinstance(sentence, Sentence) else list(sentence)
        return sentence_features(surfaces, self.table, encoding="neural")

    def encode(
        self, sentences: Sequence[Sentence], truncate: bool = False
    ) -> list[EncodedExample]:
        featurize = None if self.config.feature_mode == "none" else self.featurize
        return encode_examples(
            sentences,
            self.vocab,
            self.config.cw,
            self.config.len_max,
            self.domains,
            truncate=truncate,
            featurize=featurize,
        )

    def _check_batch(self, batch: Batch) -> None:
        expected = (self.config.slots, self.config.len_max)
        if batch.slot_ids.shape[1:] != expected:
            raise ValueError(
                f"Batch word slots {batch.slot_ids.shape[1:]} do not match the "
                f"model's (2 cw + 1, len_max) = {expected}"
            )

    def tag_forward(
        self, batch: Batch, training: bool = False, rng: np.random.Generator | None = None
    ) -> dict[str, Tensor]:
        """Class probabilities ``(B, n_tag)`` for each of the six tags."""
        self._check_batch(batch)
        cfg = self.config
        rng = rng or np.random.default_rng(0)
        chars = embed(batch.slot_ids, self._p("embedding/table"))
        chars = dropout(chars, cfg.embedding_dropout, training, rng)
        chars = gaussian_noise(chars, cfg.noise_sigma, training, rng)

        words: list[Tensor] = []
        for slot in range(cfg.slots):
            x = chars[:, slot]
            blocks = []
            for width in cfg.filter_widths:
                maps = conv_forward(x, self.conv_layer(slot, width))
                blocks.extend(pool(maps, mode) for mode in cfg.pool_modes)  # type: ignore[arg-type]
            words.append(build_z(*blocks))
        sequence = build_context_seq(words, cfg.cw)
        shared = bigru(sequence, self.gru("tag/gru/fwd"), self.gru("tag/gru/bwd"), "last")

        out: dict[str, Tensor] = {}
        for tag in TAG_TASKS:
            mask = self.masks[tag]
            feat = None
            if mask.count:
                if batch.features is None:
                    raise ValueError(f"The {tag} head needs linguistic features")
                feat = Tensor(batch.features[:, mask.indices].astype(self.dtype))
            out[tag] = dense_head(
                shared, feat, self.head(tag), training, cfg.head_dropout, rng
            )
        return out

    def _encode_word(
        self, word_ids: np.ndarray, training: bool, rng: np.random.Generator
    ) -> tuple[Tensor, Tensor, np.ndarray]:
        present = word_ids != self.vocab.pad_id
        if not np.all(present.any(axis=-1)):
            raise ValueError("Cannot lemmatize an empty word")
        chars = embed(word_ids, self._p("embedding/table"))
        chars = dropout(chars, self.config.embedding_dropout, training, rng)
        states, last = bigru_states(
            chars, self.gru("lemma/enc/fwd"), self.gru("lemma/enc/bwd"), present
        )
        h0 = ad.tanh(last @ self._p("lemma/bridge/w") + self._p("lemma/bridge/b"))
        return states, h0, present

    def _decoder_table(self) -> Tensor:
        return ad.concat([self._p("embedding/table"), self._p("lemma/special")], axis=0)

    def _decode_step(
        self,
        prev_ids: np.ndarray,
        h: Tensor,
        states: Tensor,
        present: np.ndarray,
        table: Tensor,
    ) -> tuple[Tensor, Tensor]:
        x = embed(prev_ids, table)
        h = gru_step(x, h, self.gru("lemma/dec"))
        context, _ = luong_attention(h, states, self.attention(), present)
        attended = ad.tanh(
            ad.concat([context, h], axis=-1) @ self._p("lemma/combine/w")
            + self._p("lemma/combine/b")
        )
        probs = ad.softmax(attended @ self._p("lemma/out/w") + self._p("lemma/out/b"), axis=-1)
        return probs, h

    def lemma_forward(
        self, batch: Batch, training: bool = False, rng: np.random.Generator | None = None
    ) -> Tensor:
        """Teacher-forced character distributions ``(B, T, V + 2)``.

        Step ``t`` reads gold symbol ``t`` (the start symbol first) and
        predicts symbol ``t + 1``; ``T`` covers the longest lemma plus stop.
        """
        rng = rng or np.random.default_rng(0)
        states, h, present = self._encode_word(batch.word_ids, training, rng)
        table = self._decoder_table()
        steps = batch.lemma_steps
        outputs = []
        for t in range(steps):
            probs, h = self._decode_step(batch.lemma_ids[:, t], h, states, present, table)
            outputs.append(probs)
        return ad.stack(outputs, axis=1)

    def forward(
        self,
        batch: Batch,
        training: bool = False,
        rng: np.random.Generator | None = None,
        weights: LossWeights | None = None,
    ) -> Predictions:
        """Both predictors; a component whose weights are all zero is skipped."""
        rng = rng or np.random.default_rng(0)
        tags_active = weights is None or any(weights.get(t) > 0 for t in TAG_TASKS)
        lemma_active = weights is None or weights.lemma > 0
        tags = self.tag_forward(batch, training, rng) if tags_active else {}
        lemma = self.lemma_forward(batch, training, rng) if lemma_active else None
        return Predictions(tags=tags, lemma=lemma)

    def beam_decode(
        self,
        word_ids: np.ndarray,
        width: int | None = None,
        max_len: int | None = None,
    ) -> "BeamHypothesis":
        """Best lemma hypothesis for one word; ids exclude the stop symbol."""
        width = self.config.beam_width if width is None else width
        max_len = self.config.len_max + 2 if max_len is None else max_len
        rng = np.random.default_rng(0)
        states, h0, present = self._encode_word(np.asarray(word_ids)[None, :], False, rng)
        table = self._decoder_table()

        def step(h: Tensor, prev: int) -> tuple[np.ndarray, Tensor]:
            probs, h_next = self._decode_step(np.array([prev]), h, states, present, table)
            return np.log(np.maximum(probs.data[0], LOG_EPS)), h_next

        best = beam_search(
            step,
            h0,
            self.vocab.start_id,
            self.vocab.stop_id,
            width,
            max_len,
            self.config.length_normalize,
        )
        if best.finished:
            return BeamHypothesis(best.ids[:-1], best.log_prob, best.state, True)
        return best


@dataclass(frozen=True)
class BeamHypothesis:
    ids: tuple[int, ...]
    log_prob: float
    state: Any = field(default=None, compare=False, repr=False)
    finished: bool = False

    def score(self, length_normalize: bool = False) -> float:
        if length_normalize:
            return self.log_prob / max(len(self.ids), 1)
        return self.log_prob


StepFn = Callable[[Any, int], tuple[np.ndarray, Any]]


def _rank(h: BeamHypothesis, length_normalize: bool) -> tuple[float, tuple[int, ...]]:
    return (-h.score(length_normalize), h.ids)


def beam_search(
    step: StepFn,
    init_state: Any,
    start_id: int,
    stop_id: int | None,
    width: int,
    max_len: int,
    length_normalize: bool = False,
) -> BeamHypothesis:
    """Length-capped beam search over a step function.

    ``step(state, previous_symbol)`` returns log-probabilities over symbols
    and the next state. A hypothesis that emits ``stop_id`` is frozen. The
    result is the best finished hypothesis, or the best live one when none
    finished within ``max_len`` steps. Ties go to the smaller symbol sequence.
    """
    if width < 1:
        raise ValueError(f"Beam width must be >= 1, got {width}")
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    beams = [BeamHypothesis((), 0.0, init_state)]
    finished: list[BeamHypothesis] = []
    for _ in range(max_len):
        candidates: list[BeamHypothesis] = []
        for hyp in beams:
            previous = hyp.ids[-1] if hyp.ids else start_id
            log_probs, state = step(hyp.state, previous)
            for symbol in np.argsort(-log_probs, kind="stable")[:width]:
                symbol = int(symbol)
                candidates.append(
                    BeamHypothesis(
                        hyp.ids + (symbol,),
                        hyp.log_prob + float(log_probs[symbol]),
                        state,
                        stop_id is not None and symbol == stop_id,
                    )
                )
        candidates.sort(key=lambda h: _rank(h, length_normalize))
        beams = []
        for candidate in candidates[:width]:
            (finished if candidate.finished else beams).append(candidate)
        if not beams:
            break
        if finished and not length_normalize:
            # Log-probabilities only fall as hypotheses grow.
            best_done = min(finished, key=lambda h: _rank(h, False))
            if all(b.log_prob < best_done.log_prob for b in beams):
                break
    pool_ = finished or beams
    return min(pool_, key=lambda h: _rank(h, length_normalize))


@dataclass(frozen=True, eq=False)
class Analysis:
    surface: str
    tags: TagSet | None = None
    lemma: str | None = None
    probabilities: Mapping[str, np.ndarray] = field(default_factory=dict)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def analyze(
    sentence: Sentence | Sequence[str], model: MorphAnalyzer
) -> list[Analysis]:
    """Tags and lemma for every token of one sentence.

    A token longer than ``len_max`` gets an error entry and the rest of the
    sentence is still analyzed; characters outside the vocabulary read as
    the unknown character.
    """
    surfaces = sentence.surfaces if isinstance(sentence, Sentence) else list(sentence)
    if not surfaces:
        return []
    cfg = model.config
    vocab = model.vocab
    features = None if cfg.feature_mode == "none" else model.featurize(surfaces)
    examples: list[EncodedExample] = []
    rows: list[int] = []
    results: list[Analysis | None] = [None] * len(surfaces)
    for i, surface in enumerate(surfaces):
        try:
            word_ids = encode_word(vocab, surface, cfg.len_max)
        except IngestionError as e:
            results[i] = Analysis(surface=surface, error=str(e))
            continue
        examples.append(
            EncodedExample(
                word_ids=word_ids,
                context_ids=encode_context(surfaces, i, vocab, cfg.cw, cfg.len_max),
                gold_tags=np.zeros(len(TAG_TASKS), dtype=np.int64),
                gold_lemma_ids=np.zeros(cfg.len_max + 2, dtype=np.int64),
                position=i,
                features=None if features is None else features[i],
            )
        )
        rows.append(i)
    if examples:
        batch = Batch.from_examples(examples)
        probs = model.tag_forward(batch)
        for j, i in enumerate(rows):
            ids = [int(np.argmax(probs[tag].data[j])) for tag in TAG_TASKS]
            lemma = model.beam_decode(batch.word_ids[j])
            results[i] = Analysis(
                surface=surfaces[i],
                tags=model.domains.decode(ids),
                lemma=vocab.decode(lemma.ids),
                probabilities={tag: probs[tag].data[j].copy() for tag in TAG_TASKS},
            )
    return [r for r in results if r is not None]


def analyze_corpus(
    sentences: Sequence[Sentence | Sequence[str]], model: MorphAnalyzer, jobs: int = 1
) -> list[list[Analysis]]:
    """Analyze sentences, ``jobs`` at a time; output order follows input order."""
    if jobs > 1 and len(sentences) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            out = list(executor.map(lambda s: analyze(s, model), sentences))
    else:
        out = [analyze(s, model) for s in sentences]
    errors = sum(1 for s in out for a in s if not a.ok)
    tokens = sum(len(s) for s in out)
    logger.info(
        f"Analyzed {tokens} token{plural(tokens)} in {len(out)} sentence{plural(len(out))}"
        + (f", {errors} rejected" if errors else "")
    )
    return out


def tag_forward(
    example: EncodedExample | Batch, model: MorphAnalyzer, training: bool = False
) -> dict[str, Tensor]:
    batch = example if isinstance(example, Batch) else Batch.from_examples([example])
    return model.tag_forward(batch, training)


def lemma_forward_teacher_forced(
    word_ids: np.ndarray, gold_lemma_ids: np.ndarray, model: MorphAnalyzer
) -> Tensor:
    """Per-step distributions ``(T, V + 2)`` for one word under teacher forcing."""
    word_ids = np.asarray(word_ids)
    batch = Batch(
        slot_ids=np.zeros((1, model.config.slots, model.config.len_max), dtype=np.int64),
        word_ids=word_ids[None, :],
        tags=np.zeros((1, len(TAG_TASKS)), dtype=np.int64),
        lemma_ids=np.asarray(gold_lemma_ids)[None, :],
    )
    return model.lemma_forward(batch)[0]


def beam_decode(
    word_ids: np.ndarray,
    model: MorphAnalyzer,
    width: int | None = None,
    max_len: int | None = None,
) -> tuple[int, ...]:
    return model.beam_decode(word_ids, width, max_len).ids


def _check_parameters(
    shapes: Mapping[str, tuple[int, ...]],
    params: Mapping[str, np.ndarray],
    dtype: np.dtype,
) -> dict[str, np.ndarray]:
    missing = [n for n in shapes if n not in params]
    unexpected = [n for n in params if n not in shapes]
    if missing or unexpected:
        raise ValueError(
            f"Checkpoint parameters do not match the model: missing {missing[:5]}, "
            f"unexpected {unexpected[:5]}"
        )
    out = {}
    for name, shape in shapes.items():
        value = np.asarray(params[name])
        if value.shape != shape:
            raise ValueError(f"Parameter {name} has shape {value.shape}, expected {shape}")
        out[name] = value.astype(dtype)
    return out


def save_model(
    path: Path, model: MorphAnalyzer, extra: Mapping[str, Any] | None = None
) -> Path:
    """Write a self-describing checkpoint: parameters plus a YAML manifest."""
    manifest: dict[str, Any] = {
        "format_version": MODEL_FORMAT_VERSION,
        "language": model.language,
        "config": model.config.to_dict(),
        "vocab": {"chars": list(model.vocab.chars), "fingerprint": model.vocab.fingerprint()},
        "domains": model.domains.to_dict(),
        "masks": {tag: mask.bitstring for tag, mask in model.masks.items()},
        "phonology": model.table.source_text,
    }
    if extra:
        manifest["run"] = dict(extra)
    ad.save_parameters(path, model.params, manifest=dump_yaml(manifest))
    logger.info(f"Saved model to {path}")
    return path


def load_model(path: Path) -> MorphAnalyzer:
    """Restore a model written by :func:`save_model`.

    Raises:
        FileNotFoundError: If the checkpoint does not exist
        ValueError: On a version, vocabulary or parameter mismatch
    """
    params, text = ad.load_parameters(path)
    manifest = load_yaml(text) if text else None
    if not isinstance(manifest, dict):
        raise ValueError(f"{path}: checkpoint has no model manifest")
    version = manifest.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(
            f"{path}: unsupported model format {version}, expected {MODEL_FORMAT_VERSION}"
        )
    vocab = CharVocab(tuple(manifest["vocab"]["chars"]))
    if vocab.fingerprint() != manifest["vocab"]["fingerprint"]:
        raise ValueError(f"{path}: vocabulary fingerprint does not match its table")
    masks = {
        tag: FeatureMask.from_bitstring(bits, FEATURE_POOL)
        for tag, bits in manifest["masks"].items()
    }
    table_text = manifest.get("phonology") or ""
    table = parse_phono_table(table_text, f"{path}:phonology") if table_text else None
    return MorphAnalyzer(
        ModelConfig.from_dict(manifest["config"]),
        vocab,
        TagDomains.from_dict(manifest["domains"]),
        masks,
        table,
        params,
        language=manifest.get("language", "hindi"),
    )


ANALYSIS_COLUMNS = ("surface", "lemma", *TAG_TASKS)
_ERROR_PREFIX = "# error: "


def write_analyses(path: Path, analyses: Sequence[Sequence[Analysis]]) -> Path:
    """Write analyses as treebank-style rows, a blank line after each sentence.

    A rejected token is written as ``# error: <surface>: <message>`` in its row.
    """

    def write(f: Any) -> None:
        for sentence in analyses:
            for a in sentence:
                if a.error is not None:
                    f.write(f"{_ERROR_PREFIX}{a.surface}: {a.error}\n")
                elif a.tags is not None:
                    f.write("\t".join((a.surface, a.lemma or "", *a.tags.as_tuple())) + "\n")
            f.write("\n")

    return write_atomic(path, write)


def read_analyses(path: Path) -> list[list[Analysis]]:
    """Read an analysis file back, keeping error rows in place."""
    if not path.exists():
        raise FileNotFoundError(f"Analysis file not found: {path}")
    sentences: list[list[Analysis]] = []
    current: list[Analysis] = []
    for line_number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            if current:
                sentences.append(current)
                current = []
            continue
        if line.startswith(_ERROR_PREFIX):
            surface, _, message = line[len(_ERROR_PREFIX) :].partition(": ")
            current.append(Analysis(surface=surface, error=message))
            continue
        cells = line.split("\t")
        if len(cells) != len(ANALYSIS_COLUMNS):
            raise ValueError(
                f"{path}:{line_number}: expected {len(ANALYSIS_COLUMNS)} columns, "
                f"found {len(cells)}"
            )
        current.append(
            Analysis(surface=cells[0], lemma=cells[1], tags=TagSet(*cells[2:]))
        )
    if current:
        sentences.append(current)
    return sentences
