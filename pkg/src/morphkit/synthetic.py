# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: The morphkit contributors
"""A small rule-generated treebank for smoke runs and capacity checks.

The toy language has masculine and feminine nouns, adjectives that agree
with their noun, four postpositions and inflected verbs. Every tag and lemma
is a function of the surface form and of the next word: a noun directly
before a postposition is oblique, so ``larke`` is a masculine plural in
direct case on its own but a masculine singular oblique before ``ko``.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from morphkit.corpus import Sentence, TagSet, Token, format_treebank
from morphkit.output import write_text

MASCULINE_STEMS = ("lark", "ghod", "kamr", "kutt")
FEMININE_STEMS = ("ladk", "chid", "bill", "nad")
ADJECTIVE_STEMS = ("bad", "chhot", "acch")
VERB_STEMS = ("chal", "padh", "likh", "dekh")
POSTPOSITIONS = ("ne", "ko", "se", "mein")

#: (gender, number, case) -> noun ending
NOUN_ENDINGS = {
    ("m", "sg", "d"): "a",
    ("m", "pl", "d"): "e",
    ("m", "sg", "o"): "e",
    ("m", "pl", "o"): "on",
    ("f", "sg", "d"): "i",
    ("f", "pl", "d"): "iyan",
    ("f", "sg", "o"): "i",
    ("f", "pl", "o"): "iyon",
}

#: verb ending -> (gender, number, person, tam)
VERB_ENDINGS = {
    "ta": ("m", "sg", "3", "ta"),
    "te": ("m", "pl", "3", "ta"),
    "ti": ("f", "sg", "3", "ta"),
    "unga": ("m", "sg", "1", "ga"),
    "ega": ("m", "sg", "3", "ga"),
    "egi": ("f", "sg", "3", "ga"),
}


@dataclass(frozen=True)
class _NounPhrase:
    stem: str
    gender: str
    number: str
    adjective: str | None
    postposition: str | None


def _adjective_token(stem: str, gender: str, number: str) -> Token:
    if gender == "f":
        ending, number = "i", "sg"
    else:
        ending = "a" if number == "sg" else "e"
    return Token(stem + ending, stem + "a", TagSet(pos="JJ", gender=gender, number=number))


def _noun_phrase_tokens(np_: _NounPhrase) -> list[Token]:
    tokens = []
    if np_.adjective is not None:
        tokens.append(_adjective_token(np_.adjective, np_.gender, np_.number))
    case = "o" if np_.postposition else "d"
    ending = NOUN_ENDINGS[(np_.gender, np_.number, case)]
    lemma = np_.stem + ("a" if np_.gender == "m" else "i")
    tags = TagSet(pos="NN", gender=np_.gender, number=np_.number, person="3", case=case)
    tokens.append(Token(np_.stem + ending, lemma, tags))
    if np_.postposition:
        tokens.append(Token(np_.postposition, np_.postposition, TagSet(pos="PSP")))
    return tokens


def synthetic_sentence(rng: np.random.Generator) -> Sentence:
    tokens: list[Token] = []
    for _ in range(int(rng.integers(1, 3))):
        gender = "m" if rng.random() < 0.5 else "f"
        stems = MASCULINE_STEMS if gender == "m" else FEMININE_STEMS
        phrase = _NounPhrase(
            stem=str(rng.choice(stems)),
            gender=gender,
            number="sg" if rng.random() < 0.5 else "pl",
            adjective=str(rng.choice(ADJECTIVE_STEMS)) if rng.random() < 0.5 else None,
            postposition=str(rng.choice(POSTPOSITIONS)) if rng.random() < 0.5 else None,
        )
        tokens.extend(_noun_phrase_tokens(phrase))
    stem = str(rng.choice(VERB_STEMS))
    ending = str(rng.choice(list(VERB_ENDINGS)))
    gender, number, person, tam = VERB_ENDINGS[ending]
    tags = TagSet(pos="VM", gender=gender, number=number, person=person, tam=tam)
    tokens.append(Token(stem + ending, stem + "na", tags))
    return Sentence(tuple(tokens))


def synthetic_corpus(n_sentences: int = 50, seed: int = 0) -> list[Sentence]:
    """``n_sentences`` sentences of the toy language, identical for equal seeds."""
    if n_sentences < 1:
        raise ValueError(f"n_sentences must be >= 1, got {n_sentences}")
    rng = np.random.default_rng(seed)
    return [synthetic_sentence(rng) for _ in range(n_sentences)]


def write_synthetic_treebank(path: Path, n_sentences: int = 50, seed: int = 0) -> Path:
    """Write the toy corpus in the default eight-column treebank layout."""
    return write_text(path, format_treebank(synthetic_corpus(n_sentences, seed)))
