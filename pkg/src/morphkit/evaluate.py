# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: The morphkit contributors
"""Scoring predicted analyses against gold annotations.

Tags are compared by label string, so reports do not depend on the id
layout of a particular checkpoint. A token the analyzer rejected counts as
wrong on every field.
"""

import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import distance
import grapheme
import numpy as np
from sacrebleu.metrics import BLEU

from morphkit.corpus import CharVocab, Sentence, TagSet, Token
from morphkit.layers import TAG_TASKS, TASK_LABELS
from morphkit.logs import plural
from morphkit.model import Analysis
from morphkit.output import render_template, write_csv, write_text

logger = logging.getLogger(__name__)

BleuMode = Literal["corpus", "sentence"]

#: Field label -> task name; "L" is the lemma.
FIELDS = {label: task for task, label in TASK_LABELS.items()}

#: Combined rows of the report, in display order.
COMBINATIONS = (
    "L + C",
    "G + N + P",
    "G + N + P + C",
    "L + G + N + P",
    "L + G + N + P + C",
    "L + POS + G + N + P + C + TAM",
)

ERROR_CATEGORIES = (
    "hyphenated",
    "single-character",
    "oov-character",
    "last-char-recurrence",
    "lemma-off-by-one",
)


def _check_aligned(pred: Sequence[object], gold: Sequence[object]) -> None:
    if len(pred) != len(gold):
        raise ValueError(f"{len(pred)} predictions for {len(gold)} gold tokens")
    if not gold:
        raise ValueError("Nothing to score: no gold tokens")


def tag_accuracy(
    pred: Sequence[TagSet | None], gold: Sequence[TagSet], tag: str
) -> float:
    """Fraction of tokens whose predicted ``tag`` label equals the gold one."""
    _check_aligned(pred, gold)
    if tag not in TAG_TASKS:
        raise ValueError(f"Unknown tag {tag!r}")
    hits = sum(1 for p, g in zip(pred, gold, strict=True) if p is not None and p.get(tag) == g.get(tag))
    return hits / len(gold)


def parse_combination(combo: str | Iterable[str]) -> tuple[str, ...]:
    """Field names of a combination such as ``"G + N + P"``, as task names.

    Raises:
        ValueError: On a field name that is not a tag label, a task or ``L``
    """
    names = [n.strip() for n in combo.split("+")] if isinstance(combo, str) else list(combo)
    tasks = []
    for name in names:
        if name in FIELDS:
            tasks.append(FIELDS[name])
        elif name in TASK_LABELS:
            tasks.append(name)
        else:
            raise ValueError(f"Unknown field {name!r} in combination")
    if not tasks:
        raise ValueError("Empty combination")
    return tuple(dict.fromkeys(tasks))


def _field_matches(p: Token | None, g: Token, task: str) -> bool:
    if p is None:
        return False
    if task == "lemma":
        return p.lemma == g.lemma
    return p.tags.get(task) == g.tags.get(task)


def combined_accuracy(
    pred: Sequence[Token | None], gold: Sequence[Token], combo: str | Iterable[str]
) -> float:
    """Fraction of tokens right on every field of ``combo``."""
    tasks = parse_combination(combo)
    _check_aligned(pred, gold)
    hits = sum(
        1
        for p, g in zip(pred, gold, strict=True)
        if all(_field_matches(p, g, task) for task in tasks)
    )
    return hits / len(gold)


def levenshtein(a: str, b: str, graphemes: bool = False) -> int:
    """Unit-cost edit distance over code points, or over grapheme clusters."""
    if graphemes:
        return int(distance.levenshtein(tuple(grapheme.graphemes(a)), tuple(grapheme.graphemes(b))))
    return int(distance.levenshtein(a, b))


def char_bleu(
    pred: Sequence[str],
    gold: Sequence[str],
    max_n: int = 4,
    mode: BleuMode = "corpus",
) -> float:
    """Character BLEU in [0, 100].

    ``corpus`` pools n-gram counts over all lemmas without smoothing, so a
    zero precision at any order scores 0. Orders longer than the longest gold
    lemma have no n-grams at all and are left out. ``sentence`` averages
    add-one smoothed per-lemma scores.
    """
    _check_aligned(pred, gold)
    if mode == "corpus":
        longest = max((len("".join(g.split())) for g in gold), default=0)
        order = max(1, min(max_n, longest))
        metric = BLEU(tokenize="char", smooth_method="none", max_ngram_order=order)
        # exp(log(100)) is not exactly 100 in floating point.
        return round(float(metric.corpus_score(list(pred), [list(gold)]).score), 9)
    if mode == "sentence":
        metric = BLEU(
            tokenize="char",
            smooth_method="add-k",
            smooth_value=1,
            max_ngram_order=max_n,
            effective_order=True,
        )
        scores = [metric.sentence_score(p, [g]).score for p, g in zip(pred, gold, strict=True)]
        return float(np.mean(scores))
    raise ValueError(f"Unknown BLEU mode {mode!r}")


@dataclass(frozen=True)
class ClassCounts:
    label: str
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


def per_class_counts(
    pred: Sequence[TagSet | None], gold: Sequence[TagSet], tag: str
) -> list[ClassCounts]:
    """True/false positives and false negatives per label seen in either list."""
    _check_aligned(pred, gold)
    predicted = [p.get(tag) if p is not None else None for p in pred]
    actual = [g.get(tag) for g in gold]
    labels = sorted({label for label in (*predicted, *actual) if label is not None})
    out = []
    for label in labels:
        tp = sum(1 for p, g in zip(predicted, actual, strict=True) if p == label and g == label)
        fp = sum(1 for p, g in zip(predicted, actual, strict=True) if p == label and g != label)
        fn = sum(1 for p, g in zip(predicted, actual, strict=True) if p != label and g == label)
        out.append(ClassCounts(label, tp, fp, fn))
    return out


def tag_f1(pred: Sequence[TagSet | None], gold: Sequence[TagSet], tag: str) -> float:
    """Macro-averaged F1 over the labels of ``tag``."""
    counts = per_class_counts(pred, gold, tag)
    return float(np.mean([c.f1 for c in counts])) if counts else 0.0


def error_report(
    pred: Sequence[Token | None],
    gold: Sequence[Token],
    vocab: CharVocab | None = None,
) -> dict[str, int]:
    """Count mispredicted tokens per heuristic category.

    A token can fall into several categories; tokens predicted right on every
    field are not counted. ``oov-character`` needs ``vocab``.
    """
    _check_aligned(pred, gold)
    counts = dict.fromkeys(ERROR_CATEGORIES, 0)
    fields_ = parse_combination(COMBINATIONS[-1])
    for p, g in zip(pred, gold, strict=True):
        if all(_field_matches(p, g, task) for task in fields_):
            continue
        if "-" in g.surface:
            counts["hyphenated"] += 1
        if len(g.surface) == 1:
            counts["single-character"] += 1
        if vocab is not None and any(c not in vocab.char_to_id for c in g.surface):
            counts["oov-character"] += 1
        if p is None or p.lemma == g.lemma:
            continue
        if g.lemma and p.lemma == g.lemma + g.lemma[-1]:
            counts["last-char-recurrence"] += 1
        if levenshtein(p.lemma, g.lemma) == 1:
            counts["lemma-off-by-one"] += 1
    return counts


REPORT_TEMPLATE = """\
Evaluated {{tokens}} tokens{{#rejected}} ({{rejected}} rejected by the analyzer){{/rejected}}

Accuracy
{{#rows}}
  {{label}}: {{value}}
{{/rows}}

Lemma
  char BLEU (corpus): {{bleu_corpus}}
  char BLEU (mean sentence): {{bleu_sentence}}
  mean Levenshtein: {{mean_levenshtein}}

Macro F1
{{#f1}}
  {{label}}: {{value}}
{{/f1}}

Error categories (heuristic)
{{#errors}}
  {{label}}: {{value}}
{{/errors}}
"""


@dataclass(frozen=True)
class EvalReport:
    tokens: int
    accuracy: Mapping[str, float]
    combined: Mapping[str, float]
    bleu_corpus: float
    bleu_sentence: float
    mean_levenshtein: float
    tag_f1: Mapping[str, float] = field(default_factory=dict)
    errors: Mapping[str, int] = field(default_factory=dict)
    rejected: int = 0
    per_class: Mapping[str, list[ClassCounts]] = field(default_factory=dict, repr=False)

    def rows(self) -> list[tuple[str, float]]:
        """Accuracy rows: single fields in label order, then the combinations."""
        singles = [(TASK_LABELS[t], self.accuracy[t]) for t in ("lemma", *TAG_TASKS)]
        return singles + [(c, self.combined[c]) for c in COMBINATIONS]

    def render_text(self) -> str:
        context = {
            "tokens": self.tokens,
            "rejected": self.rejected,
            "rows": [{"label": k, "value": f"{v:.4f}"} for k, v in self.rows()],
            "bleu_corpus": f"{self.bleu_corpus:.3f}",
            "bleu_sentence": f"{self.bleu_sentence:.3f}",
            "mean_levenshtein": f"{self.mean_levenshtein:.3f}",
            "f1": [{"label": TASK_LABELS[t], "value": f"{v:.4f}"} for t, v in self.tag_f1.items()],
            "errors": [{"label": k, "value": v} for k, v in self.errors.items()],
        }
        return render_template(REPORT_TEMPLATE, context)

    def write_report_csv(self, path: Path) -> Path:
        rows: list[tuple[str, str, float]] = [("accuracy", k, v) for k, v in self.rows()]
        rows += [
            ("lemma", "bleu_corpus", self.bleu_corpus),
            ("lemma", "bleu_sentence", self.bleu_sentence),
            ("lemma", "mean_levenshtein", self.mean_levenshtein),
        ]
        rows += [("macro_f1", TASK_LABELS[t], v) for t, v in self.tag_f1.items()]
        rows += [("errors", k, float(v)) for k, v in self.errors.items()]
        return write_csv(path, ("section", "name", "value"), rows)

    def write_per_class_csv(self, path: Path) -> Path:
        rows = (
            (TASK_LABELS[tag], c.label, c.tp, c.fp, c.fn, c.precision, c.recall, c.f1)
            for tag, counts in self.per_class.items()
            for c in counts
        )
        header = ("tag", "label", "tp", "fp", "fn", "precision", "recall", "f1")
        return write_csv(path, header, rows)


def _as_token(a: Analysis) -> Token | None:
    if a.error is not None or a.tags is None:
        return None
    return Token(surface=a.surface, lemma=a.lemma or "", tags=a.tags)


def evaluate_tokens(
    pred: Sequence[Token | None],
    gold: Sequence[Token],
    *,
    graphemes: bool = False,
    vocab: CharVocab | None = None,
) -> EvalReport:
    _check_aligned(pred, gold)
    pred_tags = [p.tags if p is not None else None for p in pred]
    gold_tags = [g.tags for g in gold]
    pred_lemmas = [p.lemma if p is not None else "" for p in pred]
    gold_lemmas = [g.lemma for g in gold]
    accuracy = {tag: tag_accuracy(pred_tags, gold_tags, tag) for tag in TAG_TASKS}
    accuracy["lemma"] = combined_accuracy(pred, gold, ["lemma"])
    return EvalReport(
        tokens=len(gold),
        accuracy=accuracy,
        combined={c: combined_accuracy(pred, gold, c) for c in COMBINATIONS},
        bleu_corpus=char_bleu(pred_lemmas, gold_lemmas, mode="corpus"),
        bleu_sentence=char_bleu(pred_lemmas, gold_lemmas, mode="sentence"),
        mean_levenshtein=float(
            np.mean([levenshtein(p, g, graphemes) for p, g in zip(pred_lemmas, gold_lemmas, strict=True)])
        ),
        tag_f1={tag: tag_f1(pred_tags, gold_tags, tag) for tag in TAG_TASKS},
        errors=error_report(pred, gold, vocab),
        rejected=sum(1 for p in pred if p is None),
        per_class={tag: per_class_counts(pred_tags, gold_tags, tag) for tag in TAG_TASKS},
    )


def evaluate_analyses(
    pred: Sequence[Sequence[Analysis]],
    gold: Sequence[Sentence],
    *,
    graphemes: bool = False,
    vocab: CharVocab | None = None,
) -> EvalReport:
    """Score analyzed sentences against the gold sentences they came from.

    Raises:
        ValueError: If sentences or tokens do not line up
    """
    if len(pred) != len(gold):
        raise ValueError(f"{len(pred)} analyzed sentences for {len(gold)} gold sentences")
    pred_tokens: list[Token | None] = []
    gold_tokens: list[Token] = []
    for index, (analyses, sentence) in enumerate(zip(pred, gold, strict=True)):
        surfaces = [a.surface for a in analyses]
        if surfaces != sentence.surfaces:
            raise ValueError(f"Sentence {index + 1}: analyzed tokens do not match the gold tokens")
        pred_tokens.extend(_as_token(a) for a in analyses)
        gold_tokens.extend(sentence.tokens)
    report = evaluate_tokens(pred_tokens, gold_tokens, graphemes=graphemes, vocab=vocab)
    logger.info(
        f"Scored {report.tokens} token{plural(report.tokens)}: full analysis "
        f"{report.combined[COMBINATIONS[-1]]:.4f}, char BLEU {report.bleu_corpus:.2f}"
    )
    return report


def write_report(report: EvalReport, directory: Path) -> list[Path]:
    """Write ``report.txt``, ``report.csv`` and ``per_class.csv`` into ``directory``."""
    return [
        write_text(directory / "report.txt", report.render_text()),
        report.write_report_csv(directory / "report.csv"),
        report.write_per_class_csv(directory / "per_class.csv"),
    ]
