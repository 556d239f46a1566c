# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: The morphkit contributors
"""Shared test helpers."""

import textwrap
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from morphkit.corpus import (
    Sentence,
    SplitCorpus,
    TagSet,
    Token,
    build_domains,
    build_vocab,
    split_corpus,
)
from morphkit.lingfeat import PhonoTable, parse_phono_table
from morphkit.model import ModelConfig, MorphAnalyzer
from morphkit.synthetic import synthetic_corpus

#: Four Latin letters, enough to exercise every kind of phonology slot.
TINY_PHONOLOGY = textwrap.dedent(
    """\
    # test table
    !schema=test pool=64
    a\ttype=vowel;height=B;length=L;type1=L;type2=V
    e\ttype=vowel;origin=DN;height=F;length=S
    k\ttype=consonant;aspiration=VL;place=V;manner=SP
    n\ttype=consonant;place=D;manner=N
    """
)


def tiny_table() -> PhonoTable:
    return parse_phono_table(TINY_PHONOLOGY, "tiny")


def toy_config(**overrides: Any) -> ModelConfig:
    """A model small enough to train in a test, with every source of noise off.

    ``len_max`` 8 with widths 4 and 5 pools both maps to two positions.
    """
    values: dict[str, Any] = {
        "len_max": 8,
        "cw": 1,
        "embedding_dim": 4,
        "feature_maps": 3,
        "filter_widths": (4, 5),
        "gru_hidden": 4,
        "head_sizes": (5, 6),
        "embedding_dropout": 0.0,
        "head_dropout": 0.0,
        "noise_sigma": 0.0,
        "encoder_hidden": 4,
        "decoder_hidden": 5,
        "feature_mode": "none",
        "beam_width": 3,
    }
    values.update(overrides)
    return ModelConfig(**values)


def toy_sentences(n: int = 6, seed: int = 0) -> list[Sentence]:
    return synthetic_corpus(n, seed)


def toy_model(
    sentences: Sequence[Sentence] | None = None,
    config: ModelConfig | None = None,
    seed: int = 0,
    **kwargs: Any,
) -> MorphAnalyzer:
    """An untrained analyzer whose vocabulary and domains come from ``sentences``."""
    sentences = list(sentences) if sentences is not None else toy_sentences()
    return MorphAnalyzer(
        config or toy_config(),
        build_vocab(sentences),
        build_domains(sentences),
        seed=seed,
        **kwargs,
    )


def toy_split(n: int = 10, seed: int = 0) -> SplitCorpus:
    return split_corpus(toy_sentences(n, seed), (0.8, 0.2, 0.0), seed)


def sentence(*rows: tuple[str, str, str]) -> Sentence:
    """Build a sentence from ``(surface, lemma, pos)`` rows."""
    return Sentence(tuple(Token(s, lemma, TagSet(pos=pos)) for s, lemma, pos in rows))


def write_file(directory: Path, name: str, content: str) -> Path:
    path = directory / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(textwrap.dedent(content), encoding="utf-8")
    return path


def treebank(*rows: str) -> str:
    """Treebank text from space-separated rows; an empty row ends a sentence."""
    lines = ["\t".join(row.split()) if row else "" for row in rows]
    return "\n".join(lines) + "\n"
