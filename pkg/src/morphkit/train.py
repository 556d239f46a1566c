# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: The morphkit contributors
"""Joint training, progressive freezing, loss-weight calibration and the
single-task versus multi-task comparison.

Training minimizes the weighted sum of the seven task losses with Adadelta.
When the summed tag loss on the dev split stops improving, the tag predictor
and the shared embedding are frozen and training continues on the lemma
predictor alone until its own dev loss stops improving.
"""

import logging
import math
from collections.abc import Callable, Iterator, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Literal

import numpy as np

from morphkit import autodiff as ad
from morphkit.autodiff import Gradients, Parameters
from morphkit.corpus import EncodedCorpus, EncodedExample, SplitCorpus
from morphkit.errors import TrainingError
from morphkit.evaluate import char_bleu, tag_f1
from morphkit.layers import TAG_TASKS, TASK_LABELS, TASKS, LossWeights, combine_losses, task_losses
from morphkit.logs import plural
from morphkit.model import Batch, MorphAnalyzer
from morphkit.output import read_yaml, render_template, write_csv, write_yaml

logger = logging.getLogger(__name__)

#: Parameter groups frozen once the tag predictor has converged.
TAG_GROUPS = ("embedding", "tag")

CALIBRATION_GRID = tuple(round(0.1 * i, 1) for i in range(11))
#: Candidate absolute weights tried for one tag during fine-tuning.
NEIGHBORHOOD = (0.8, 0.9, 0.95, 1.0)
#: Tags whose weights are fine-tuned after the grid sweep.
TUNED_TAGS = ("gender", "person", "case")


@dataclass(frozen=True)
class TrainConfig:
    optimizer: Literal["adadelta"] = "adadelta"
    learning_rate: float = 1.0
    rho: float = 0.95
    eps: float = 1e-6
    batch_size: int = 32
    max_epochs: int = 200
    patience: float = 5
    lemma_patience: float = 5
    min_delta: float = 1e-4
    max_grad_norm: float | None = None
    seed: int = 0
    eval_bleu: bool = True

    def __post_init__(self) -> None:
        if self.optimizer != "adadelta":
            raise ValueError(f"Unknown optimizer {self.optimizer!r}; only 'adadelta' is supported")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 < self.rho < 1:
            raise ValueError(f"rho must be in (0, 1), got {self.rho}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        for name in ("patience", "lemma_patience"):
            value = getattr(self, name)
            if not (math.isinf(value) or (value >= 1 and float(value).is_integer())):
                raise ValueError(f"{name} must be a whole number >= 1 or inf, got {value}")
        if self.max_grad_norm is not None and not self.max_grad_norm > 0:
            raise ValueError(f"max_grad_norm must be > 0, got {self.max_grad_norm}")


@dataclass(frozen=True, eq=False)
class AdadeltaState:
    square_grad: np.ndarray
    square_update: np.ndarray

    @classmethod
    def zeros_like(cls, value: np.ndarray) -> "AdadeltaState":
        return cls(np.zeros_like(value), np.zeros_like(value))


def adadelta_update(
    param: np.ndarray,
    grad: np.ndarray,
    state: AdadeltaState,
    lr: float = 1.0,
    rho: float = 0.95,
    eps: float = 1e-6,
) -> tuple[np.ndarray, AdadeltaState]:
    """One Adadelta step; returns the new value and state without mutating inputs."""
    if param.shape != grad.shape:
        raise ValueError(f"Gradient shape {grad.shape} does not match parameter {param.shape}")
    square_grad = rho * state.square_grad + (1 - rho) * grad * grad
    delta = -np.sqrt(state.square_update + eps) / np.sqrt(square_grad + eps) * grad
    square_update = rho * state.square_update + (1 - rho) * delta * delta
    return param + lr * delta, AdadeltaState(square_grad, square_update)


class Adadelta:
    """Adadelta over a parameter table, skipping frozen groups."""

    def __init__(
        self,
        params: Parameters,
        lr: float = 1.0,
        rho: float = 0.95,
        eps: float = 1e-6,
        max_grad_norm: float | None = None,
    ) -> None:
        self.params = params
        self.lr = lr
        self.rho = rho
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.frozen: set[str] = set()
        self.states: dict[str, AdadeltaState] = {}

    @classmethod
    def from_config(cls, params: Parameters, cfg: TrainConfig) -> "Adadelta":
        return cls(params, cfg.learning_rate, cfg.rho, cfg.eps, cfg.max_grad_norm)

    def freeze(self, groups: Sequence[str]) -> None:
        self.frozen.update(groups)

    def trainable(self) -> list[str]:
        return [name for name in self.params if self.params.group_of(name) not in self.frozen]

    def step(self, grads: Gradients) -> float:
        """Apply one update; returns the global gradient norm before clamping."""
        names = self.trainable()
        norm = grads.global_norm(names)
        scale = 1.0
        if self.max_grad_norm is not None and norm > self.max_grad_norm:
            scale = self.max_grad_norm / norm
        for name in names:
            value = self.params[name].data
            grad = grads[name] * scale if scale != 1.0 else grads[name]
            state = self.states.get(name) or AdadeltaState.zeros_like(value)
            updated, self.states[name] = adadelta_update(
                value, grad.astype(value.dtype), state, self.lr, self.rho, self.eps
            )
            self.params[name] = updated.astype(value.dtype)
        return norm


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    dev_loss: Mapping[str, float]
    dev_f1: Mapping[str, float] = field(default_factory=dict)
    dev_bleu: float | None = None
    frozen: tuple[str, ...] = ()

    def tag_loss(self, tags: Sequence[str] = TAG_TASKS) -> float:
        """Summed dev loss of ``tags``."""
        return float(sum(self.dev_loss[t] for t in tags if t in self.dev_loss))


@dataclass
class TrainingHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def last(self) -> EpochRecord:
        if not self.records:
            raise ValueError("Training history is empty")
        return self.records[-1]

    def tag_losses(self, tags: Sequence[str] = TAG_TASKS) -> list[float]:
        return [r.tag_loss(tags) for r in self.records]

    def lemma_losses(self, since_epoch: int = 0) -> list[float]:
        return [r.dev_loss["lemma"] for r in self.records if r.epoch >= since_epoch]


def write_training_log(path: Path, history: TrainingHistory) -> Path:
    """One CSV row per epoch: dev loss per task, dev F1 per tag, dev BLEU and freeze flags."""
    header = (
        "epoch",
        "train_loss",
        *(f"dev_loss_{TASK_LABELS[t]}" for t in TASKS),
        *(f"dev_f1_{TASK_LABELS[t]}" for t in TAG_TASKS),
        "dev_bleu",
        "embedding_frozen",
        "tag_frozen",
    )
    rows = (
        (
            r.epoch,
            r.train_loss,
            *(r.dev_loss.get(t, "") for t in TASKS),
            *(r.dev_f1.get(t, "") for t in TAG_TASKS),
            "" if r.dev_bleu is None else r.dev_bleu,
            "embedding" in r.frozen,
            "tag" in r.frozen,
        )
        for r in history.records
    )
    return write_csv(path, header, rows)


@dataclass(frozen=True)
class FreezeState:
    frozen: tuple[str, ...] = ()
    freeze_epoch: int | None = None
    stopped: bool = False
    reason: str = ""

    @property
    def lemma_only(self) -> bool:
        return all(group in self.frozen for group in TAG_GROUPS)


def plateaued(losses: Sequence[float], patience: float, min_delta: float) -> bool:
    """True when none of the last ``patience`` losses beat the earlier best by ``min_delta``."""
    if math.isinf(patience):
        return False
    window = int(patience)
    if len(losses) <= window:
        return False
    best_before = min(losses[:-window])
    return min(losses[-window:]) > best_before - min_delta


def progressive_freeze(
    state: FreezeState,
    history: TrainingHistory,
    cfg: TrainConfig,
    weights: LossWeights,
) -> FreezeState:
    """Next freeze state after the latest epoch of ``history``."""
    if state.stopped or not history.records:
        return state
    epoch = history.last.epoch
    trained_tags = [t for t in TAG_TASKS if weights.get(t) > 0]
    tags_active = bool(trained_tags)
    lemma_active = weights.lemma > 0
    if tags_active and not state.lemma_only:
        if not plateaued(history.tag_losses(trained_tags), cfg.patience, cfg.min_delta):
            return state
        if not lemma_active:
            return replace(state, stopped=True, reason=f"tag dev loss stopped improving at epoch {epoch}")
        return replace(state, frozen=TAG_GROUPS, freeze_epoch=epoch)
    if lemma_active:
        since = state.freeze_epoch if state.freeze_epoch is not None else 0
        if plateaued(history.lemma_losses(since), cfg.lemma_patience, cfg.min_delta):
            return replace(state, stopped=True, reason=f"lemma dev loss stopped improving at epoch {epoch}")
    return state


@dataclass
class TrainResult:
    model: MorphAnalyzer
    history: TrainingHistory
    freeze: FreezeState
    weights: LossWeights


def encode_split(model: MorphAnalyzer, split: SplitCorpus, truncate: bool = False) -> EncodedCorpus:
    """Encode the three splits for ``model``, with its linguistic features."""
    return EncodedCorpus(
        train=model.encode(split.train, truncate),
        dev=model.encode(split.dev, truncate),
        test=model.encode(split.test, truncate),
        vocab=model.vocab,
        domains=model.domains,
        len_max=model.config.len_max,
        cw=model.config.cw,
    )


def iter_batches(
    examples: Sequence[EncodedExample],
    batch_size: int,
    rng: np.random.Generator | None = None,
) -> Iterator[Batch]:
    """Mini-batches in order, or shuffled by ``rng``."""
    order = np.arange(len(examples)) if rng is None else rng.permutation(len(examples))
    for start in range(0, len(order), batch_size):
        yield Batch.from_examples([examples[i] for i in order[start : start + batch_size]])


def _effective_weights(weights: LossWeights, state: FreezeState) -> LossWeights:
    if not state.lemma_only:
        return weights
    return LossWeights.only("lemma", weights.lemma)


def train_step(
    model: MorphAnalyzer,
    optimizer: Adadelta,
    batch: Batch,
    weights: LossWeights,
    rng: np.random.Generator,
    *,
    epoch: int = 0,
    step: int = 0,
) -> tuple[float, Gradients]:
    """Forward, backward and update on one batch; returns the joint loss and gradients.

    Raises:
        TrainingError: If any task loss is not finite
    """
    with ad.Tape() as tape:
        predictions = model.forward(batch, training=True, rng=rng, weights=weights)
        losses = task_losses(predictions, batch.targets(), weights)
        for task, loss in losses.items():
            if not np.isfinite(loss.item()):
                raise TrainingError(TASK_LABELS[task], epoch, step, loss.item())
        total = combine_losses(losses, weights)
    grads = ad.backward(tape, total).bind(model.params)
    optimizer.step(grads)
    return total.item(), grads


def predict_tags(model: MorphAnalyzer, examples: Sequence[EncodedExample], batch_size: int = 256) -> np.ndarray:
    """Predicted tag ids ``(n, 6)``."""
    out = []
    for batch in iter_batches(examples, batch_size):
        probs = model.tag_forward(batch)
        out.append(np.stack([np.argmax(probs[t].data, axis=-1) for t in TAG_TASKS], axis=1))
    return np.concatenate(out) if out else np.zeros((0, len(TAG_TASKS)), dtype=np.int64)


def predict_lemmas(model: MorphAnalyzer, examples: Sequence[EncodedExample]) -> list[str]:
    return [model.vocab.decode(model.beam_decode(e.word_ids).ids) for e in examples]


def gold_lemmas(model: MorphAnalyzer, examples: Sequence[EncodedExample]) -> list[str]:
    return [model.vocab.decode(e.gold_lemma_ids) for e in examples]


def score_examples(
    model: MorphAnalyzer, examples: Sequence[EncodedExample], lemma: bool = True
) -> dict[str, float]:
    """Accuracy per tag and, with ``lemma``, exact-match lemma accuracy."""
    if not examples:
        raise ValueError("Nothing to score: no examples")
    predicted = predict_tags(model, examples)
    gold = np.stack([e.gold_tags for e in examples])
    scores = {tag: float(np.mean(predicted[:, i] == gold[:, i])) for i, tag in enumerate(TAG_TASKS)}
    if lemma:
        pairs = zip(predict_lemmas(model, examples), gold_lemmas(model, examples), strict=True)
        scores["lemma"] = float(np.mean([p == g for p, g in pairs]))
    return scores


def dev_metrics(
    model: MorphAnalyzer,
    examples: Sequence[EncodedExample],
    *,
    bleu: bool = True,
    batch_size: int = 256,
) -> tuple[dict[str, float], dict[str, float], float | None]:
    """Dev loss per task, macro F1 per tag and corpus char BLEU."""
    totals = dict.fromkeys(TASKS, 0.0)
    for batch in iter_batches(examples, batch_size):
        losses = task_losses(model.forward(batch), batch.targets())
        for task, loss in losses.items():
            totals[task] += loss.item() * len(batch)
    dev_loss = {task: value / len(examples) for task, value in totals.items()}

    predicted = predict_tags(model, examples)
    domains = model.domains
    pred_sets = [domains.decode(row) for row in predicted]
    gold_sets = [domains.decode(e.gold_tags) for e in examples]
    f1 = {tag: tag_f1(pred_sets, gold_sets, tag) for tag in TAG_TASKS}
    score = None
    if bleu:
        score = char_bleu(predict_lemmas(model, examples), gold_lemmas(model, examples))
    return dev_loss, f1, score


def train_joint(
    corpus: EncodedCorpus,
    model: MorphAnalyzer,
    weights: LossWeights,
    cfg: TrainConfig,
) -> TrainResult:
    """Train ``model`` in place on the train split, monitoring the dev split.

    Raises:
        ValueError: If the train split is empty
        TrainingError: If a task loss becomes non-finite
    """
    if not corpus.train:
        raise ValueError("Cannot train on an empty train split")
    monitor = corpus.dev
    if not monitor:
        logger.warning("Dev split is empty; monitoring the train split instead")
        monitor = corpus.train
    rng = np.random.default_rng(cfg.seed)
    optimizer = Adadelta.from_config(model.params, cfg)
    history = TrainingHistory()
    state = FreezeState()
    logger.info(
        f"Training on {len(corpus.train)} example{plural(len(corpus.train))} for up to "
        f"{cfg.max_epochs} epoch{plural(cfg.max_epochs)} with weights {weights.as_dict()}"
    )
    for epoch in range(1, cfg.max_epochs + 1):
        active = _effective_weights(weights, state)
        total, seen = 0.0, 0
        for step, batch in enumerate(iter_batches(corpus.train, cfg.batch_size, rng)):
            loss, _ = train_step(model, optimizer, batch, active, rng, epoch=epoch, step=step)
            total += loss * len(batch)
            seen += len(batch)
        dev_loss, f1, bleu = dev_metrics(model, monitor, bleu=cfg.eval_bleu and weights.lemma > 0)
        record = EpochRecord(epoch, total / seen, dev_loss, f1, bleu, tuple(sorted(optimizer.frozen)))
        history.append(record)
        logger.info(
            f"Epoch {epoch}: train loss {record.train_loss:.4f}, dev tag loss "
            f"{record.tag_loss():.4f}, dev lemma loss {dev_loss['lemma']:.4f}"
            + (f", dev BLEU {bleu:.2f}" if bleu is not None else "")
        )
        previous = state
        state = progressive_freeze(state, history, cfg, weights)
        if state.frozen != previous.frozen:
            optimizer.freeze(state.frozen)
            logger.info(f"Froze {', '.join(state.frozen)} after epoch {epoch}; training the lemma predictor only")
        if state.stopped:
            logger.info(f"Stopping: {state.reason}")
            break
    return TrainResult(model, history, state, weights)


@dataclass(frozen=True)
class RunMetrics:
    """Dev metrics of one finished training run."""

    f1: Mapping[str, float]
    bleu: float
    epochs: int

    def value(self, task: str) -> float:
        """Task metric on a 0-1 scale; the lemma uses BLEU / 100."""
        return self.bleu / 100 if task == "lemma" else self.f1[task]


ModelFactory = Callable[[], MorphAnalyzer]


def _run(corpus: EncodedCorpus, factory: ModelFactory, weights: LossWeights, cfg: TrainConfig) -> RunMetrics:
    result = train_joint(corpus, factory(), weights, cfg)
    last = result.history.last
    bleu = last.dev_bleu
    if bleu is None:
        monitor = corpus.dev or corpus.train
        bleu = char_bleu(predict_lemmas(result.model, monitor), gold_lemmas(result.model, monitor))
    return RunMetrics(dict(last.dev_f1), float(bleu), last.epoch)


def _run_all(
    corpus: EncodedCorpus,
    factory: ModelFactory,
    runs: Sequence[LossWeights],
    cfg: TrainConfig,
    jobs: int,
) -> list[RunMetrics]:
    if jobs > 1 and len(runs) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            return list(executor.map(lambda w: _run(corpus, factory, w, cfg), runs))
    return [_run(corpus, factory, w, cfg) for w in runs]


@dataclass(frozen=True)
class CalibrationRow:
    weights: LossWeights
    metrics: RunMetrics
    phase: int = 1
    accepted: bool = True

    @property
    def objective(self) -> float:
        return float(np.mean([self.metrics.value(t) for t in TASKS]))


@dataclass(frozen=True)
class CalibrationResult:
    rows: list[CalibrationRow]
    chosen_lambda: float
    weights: LossWeights

    @property
    def grid(self) -> list[CalibrationRow]:
        return [r for r in self.rows if r.phase == 1]


def calibrate_lambdas(
    corpus: EncodedCorpus,
    factory: ModelFactory,
    cfg: TrainConfig,
    *,
    grid: Sequence[float] = CALIBRATION_GRID,
    tuned_tags: Sequence[str] = TUNED_TAGS,
    neighborhood: Sequence[float] = NEIGHBORHOOD,
    tolerance: float = 0.005,
    jobs: int = 1,
) -> CalibrationResult:
    """Sweep the shared tag weight, then fine-tune individual tag weights.

    The sweep trains one model per grid point with every tag at ``lam`` and the
    lemma at ``1 - lam``, and keeps the point with the best mean dev metric.
    Each tag of ``tuned_tags`` then tries the weights of ``neighborhood``; a
    change is kept only if it improves that tag's F1 and no other task's metric
    drops by more than ``tolerance``.
    """
    cfg = replace(cfg, eval_bleu=True)
    sweep = [LossWeights.heuristic(lam) for lam in grid]
    logger.info(f"Calibrating over {len(sweep)} grid point{plural(len(sweep))}")
    metrics = _run_all(corpus, factory, sweep, cfg, jobs)
    rows = [CalibrationRow(w, m) for w, m in zip(sweep, metrics, strict=True)]
    best = max(rows, key=lambda r: r.objective)
    chosen = best.weights.pos
    logger.info(f"Best shared tag weight {chosen} (lemma {best.weights.lemma})")

    current = best
    for tag in tuned_tags:
        candidates = [current.weights.with_weight(tag, v) for v in neighborhood if v != current.weights.get(tag)]
        if not candidates:
            continue
        results = _run_all(corpus, factory, candidates, cfg, jobs)
        for weights, result in zip(candidates, results, strict=True):
            gain = result.value(tag) - current.metrics.value(tag)
            drops = [
                t for t in TASKS if t != tag and current.metrics.value(t) - result.value(t) > tolerance
            ]
            accepted = gain > 0 and not drops
            rows.append(CalibrationRow(weights, result, phase=2, accepted=accepted))
            if accepted:
                logger.info(f"Accepted {TASK_LABELS[tag]} weight {weights.get(tag)} (+{gain:.4f} F1)")
                current = CalibrationRow(weights, result, phase=2)
    return CalibrationResult(rows, chosen, current.weights)


def write_calibration(result: CalibrationResult, directory: Path) -> list[Path]:
    """Write ``calibration.csv`` (one row per run) and ``weights.yaml``."""
    header = (
        "phase",
        *(f"weight_{TASK_LABELS[t]}" for t in TASKS),
        *(f"dev_f1_{TASK_LABELS[t]}" for t in TAG_TASKS),
        "dev_bleu",
        "epochs",
        "accepted",
    )
    rows = (
        (
            r.phase,
            *(r.weights.get(t) for t in TASKS),
            *(r.metrics.f1[t] for t in TAG_TASKS),
            r.metrics.bleu,
            r.metrics.epochs,
            r.accepted,
        )
        for r in result.rows
    )
    doc = {"chosen_lambda": result.chosen_lambda, "weights": result.weights.as_dict()}
    return [
        write_csv(directory / "calibration.csv", header, rows),
        write_yaml(directory / "weights.yaml", doc),
    ]


def load_weights(path: Path) -> LossWeights:
    """Read the loss weights of a ``weights.yaml`` written by calibration."""
    doc = read_yaml(path)
    if not isinstance(doc, dict) or not isinstance(doc.get("weights"), dict):
        raise ValueError(f"{path}: expected a 'weights' mapping")
    unknown = set(doc["weights"]) - set(TASKS)
    if unknown:
        raise ValueError(f"{path}: unknown tasks {', '.join(sorted(unknown))}")
    return LossWeights(**{k: float(v) for k, v in doc["weights"].items()})


COMPARISON_TEMPLATE = """\
Single-task versus multi-task dev scores (F1; lemma is char BLEU / 100)

{{#rows}}
  {{label}}: single {{single}}, joint {{joint}} ({{delta}})
{{/rows}}
"""

MT_RUN = "MT"


@dataclass(frozen=True)
class ComparisonReport:
    """Dev metrics per run: one run per task trained alone, plus the joint run."""

    runs: Mapping[str, RunMetrics]

    def rows(self) -> list[tuple[str, float, float]]:
        """``(task label, single-task score, joint score)`` per task."""
        joint = self.runs[MT_RUN]
        return [(TASK_LABELS[t], self.runs[TASK_LABELS[t]].value(t), joint.value(t)) for t in TASKS]

    def render_text(self) -> str:
        context: dict[str, Any] = {
            "rows": [
                {"label": label, "single": f"{s:.4f}", "joint": f"{j:.4f}", "delta": f"{j - s:+.4f}"}
                for label, s, j in self.rows()
            ]
        }
        return render_template(COMPARISON_TEMPLATE, context)

    def write_report_csv(self, path: Path) -> Path:
        header = ("run", *(TASK_LABELS[t] for t in TASKS), "epochs")
        rows = (
            (name, *(m.value(t) for t in TASKS), m.epochs) for name, m in self.runs.items()
        )
        return write_csv(path, header, rows)


def run_individual_vs_mt(
    corpus: EncodedCorpus,
    factory: ModelFactory,
    cfg: TrainConfig,
    weights: LossWeights | None = None,
    *,
    jobs: int = 1,
) -> ComparisonReport:
    """Train each task alone and all tasks jointly from the same initialization."""
    weights = weights or LossWeights.reference()
    cfg = replace(cfg, eval_bleu=True)
    names = [*(TASK_LABELS[t] for t in TASKS), MT_RUN]
    runs = [*(LossWeights.only(t) for t in TASKS), weights]
    logger.info(f"Comparing {len(TASKS)} single-task runs with the joint run")
    metrics = _run_all(corpus, factory, runs, cfg, jobs)
    return ComparisonReport(dict(zip(names, metrics, strict=True)))
