# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: The morphkit contributors
"""Tests for the toy treebank generator."""

from pathlib import Path

import pytest

from morphkit.corpus import parse_treebank
from morphkit.synthetic import POSTPOSITIONS, synthetic_corpus, write_synthetic_treebank


def test_same_seed_same_corpus() -> None:
    assert synthetic_corpus(20, seed=3) == synthetic_corpus(20, seed=3)
    assert synthetic_corpus(20, seed=3) != synthetic_corpus(20, seed=4)


def test_nouns_before_a_postposition_are_oblique() -> None:
    for sentence in synthetic_corpus(200):
        tokens = sentence.tokens
        for current, following in zip(tokens, tokens[1:]):
            if current.tags.pos == "NN":
                expected = "o" if following.surface in POSTPOSITIONS else "d"
                assert current.tags.case == expected, sentence.surfaces


def test_adjectives_agree_with_their_noun() -> None:
    seen = 0
    for sentence in synthetic_corpus(200):
        tokens = sentence.tokens
        for adjective, noun in zip(tokens, tokens[1:]):
            if adjective.tags.pos != "JJ":
                continue
            seen += 1
            assert noun.tags.pos == "NN"
            assert adjective.tags.gender == noun.tags.gender
            if noun.tags.gender == "m":
                assert adjective.tags.number == noun.tags.number
    assert seen > 0


def test_sentences_end_in_a_verb_and_fit_the_toy_len_max() -> None:
    for sentence in synthetic_corpus(200):
        assert sentence.tokens[-1].tags.pos == "VM"
        assert sentence.tokens[-1].lemma.endswith("na")
        for token in sentence.tokens:
            assert len(token.surface) <= 8
            assert len(token.lemma) <= 8


def test_needs_a_sentence() -> None:
    with pytest.raises(ValueError, match="n_sentences must be >= 1"):
        synthetic_corpus(0)


def test_written_treebank_parses_back(tmp_path: Path) -> None:
    path = write_synthetic_treebank(tmp_path / "toy.txt", 15, seed=2)
    assert parse_treebank(path) == synthetic_corpus(15, seed=2)
