# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: The morphkit contributors
"""Treebank ingestion, character vocabulary, example encoding and splits.

A treebank is UTF-8 text with one token per line and a blank line between
sentences. Columns are tab separated in the order a corpus manifest declares,
for example::

    columns=surface,lemma,pos,gender,number,person,case,tam

Tag values ``-`` and ``_`` mean "not applicable" and map to the ``Unk``
label; ``any`` stays a label of its own. A column holding several
``|``-separated candidate analyses keeps the first one.
"""

import hashlib
import io
import logging
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np

from morphkit.errors import CorpusError, IngestionError
from morphkit.layers import TAG_TASKS, TASK_LABELS
from morphkit.logs import plural
from morphkit.output import write_atomic

logger = logging.getLogger(__name__)

UNK_LABEL = "Unk"
ANY_LABEL = "any"
NOT_APPLICABLE = frozenset({"-", "_"})
CANDIDATE_SEPARATOR = "|"
#: Stand-in printed for characters outside the vocabulary.
UNKNOWN_CHAR = "�"

TAG_COLUMNS = TAG_TASKS
#: Columns that may hold several "|"-separated candidate analyses.
CANDIDATE_COLUMNS = frozenset({"lemma", *TAG_COLUMNS})
DEFAULT_COLUMNS = ("surface", "lemma", *TAG_COLUMNS)
#: Column names that are read but not used, such as CoNLL token ids.
IGNORED_COLUMNS = frozenset({"skip", "_"})

CACHE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class CharVocab:
    """Character table shared by the words and lemmas of a corpus.

    Id 0 is padding, id 1 stands for any unseen character, and the sorted
    characters follow from id 2.
    """

    chars: tuple[str, ...]
    pad_id: int = 0
    unk_char_id: int = 1

    def __post_init__(self) -> None:
        if self.pad_id == self.unk_char_id:
            raise ValueError("Padding and unknown-character ids must differ")
        if {self.pad_id, self.unk_char_id} != {0, 1}:
            raise ValueError("Sentinel ids must be 0 and 1")
        if len(set(self.chars)) != len(self.chars):
            raise ValueError("Vocabulary characters must be unique")

    @cached_property
    def char_to_id(self) -> dict[str, int]:
        return {char: index + 2 for index, char in enumerate(self.chars)}

    @property
    def size(self) -> int:
        return len(self.chars) + 2

    @property
    def start_id(self) -> int:
        """Decoder start symbol, just past the character ids."""
        return self.size

    @property
    def stop_id(self) -> int:
        return self.size + 1

    @property
    def output_size(self) -> int:
        """Number of decoder output classes: characters plus start and stop."""
        return self.size + 2

    def encode_char(self, char: str) -> int:
        return self.char_to_id.get(char, self.unk_char_id)

    def encode(self, text: str) -> list[int]:
        return [self.encode_char(char) for char in text]

    def decode(self, ids: Iterable[int]) -> str:
        """Turn ids back into text, dropping padding and decoder symbols."""
        out = []
        for raw in ids:
            i = int(raw)
            if i == self.pad_id or i >= self.size:
                continue
            out.append(UNKNOWN_CHAR if i == self.unk_char_id else self.chars[i - 2])
        return "".join(out)

    def fingerprint(self) -> str:
        """Stable hash of the ordered character table."""
        digest = hashlib.blake2b("\n".join(self.chars).encode(), digest_size=8)
        return digest.hexdigest()


@dataclass(frozen=True)
class TagDomain:
    """The closed label set of one tag, ``Unk`` always included."""

    tag: str
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.tag not in TAG_COLUMNS:
            raise ValueError(f"Unknown tag {self.tag!r}")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"Duplicate labels in {self.tag} domain: {self.labels}")
        if UNK_LABEL not in self.labels:
            raise ValueError(f"The {self.tag} domain has no {UNK_LABEL!r} label")

    @property
    def n_classes(self) -> int:
        return len(self.labels)

    @cached_property
    def _index(self) -> dict[str, int]:
        return {label: i for i, label in enumerate(self.labels)}

    def __contains__(self, label: object) -> bool:
        return label in self._index

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise ValueError(f"Unknown {self.tag} label {label!r}") from None

    def label(self, index: int) -> str:
        return self.labels[index]


@dataclass(frozen=True)
class TagSet:
    """One token's labels for the six tags, after normalization."""

    pos: str = UNK_LABEL
    gender: str = UNK_LABEL
    number: str = UNK_LABEL
    person: str = UNK_LABEL
    case: str = UNK_LABEL
    tam: str = UNK_LABEL

    def get(self, tag: str) -> str:
        return getattr(self, tag)

    def as_tuple(self) -> tuple[str, ...]:
        return tuple(self.get(tag) for tag in TAG_COLUMNS)


@dataclass(frozen=True)
class TagDomains:
    """The six tag domains of a corpus, fixed once ingestion is done."""

    domains: dict[str, TagDomain]

    def __post_init__(self) -> None:
        missing = [tag for tag in TAG_COLUMNS if tag not in self.domains]
        if missing:
            raise ValueError(f"Missing tag domains: {', '.join(missing)}")

    def __getitem__(self, tag: str) -> TagDomain:
        return self.domains[tag]

    def sizes(self) -> dict[str, int]:
        return {tag: self.domains[tag].n_classes for tag in TAG_COLUMNS}

    def encode(self, tags: TagSet) -> np.ndarray:
        """Label ids in tag order.

        Raises:
            ValueError: If a label is outside its domain
        """
        return np.array(
            [self.domains[tag].index(tags.get(tag)) for tag in TAG_COLUMNS],
            dtype=np.int64,
        )

    def decode(self, ids: Sequence[int]) -> TagSet:
        return TagSet(
            **{
                tag: self.domains[tag].label(int(i))
                for tag, i in zip(TAG_COLUMNS, ids, strict=True)
            }
        )

    def check(self, tags: TagSet) -> str | None:
        """Return the first tag whose label is unknown, if any."""
        for tag in TAG_COLUMNS:
            if tags.get(tag) not in self.domains[tag]:
                return tag
        return None

    def to_dict(self) -> dict[str, list[str]]:
        return {tag: list(self.domains[tag].labels) for tag in TAG_COLUMNS}

    @classmethod
    def from_dict(cls, data: dict[str, Sequence[str]]) -> "TagDomains":
        return cls({tag: TagDomain(tag, tuple(data[tag])) for tag in TAG_COLUMNS})


@dataclass(frozen=True)
class Token:
    surface: str
    lemma: str
    tags: TagSet = field(default_factory=TagSet)

    def __post_init__(self) -> None:
        if not self.surface:
            raise ValueError("Token surface must be non-empty")


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]

    def __post_init__(self) -> None:
        if not self.tokens:
            raise ValueError("A sentence needs at least one token")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def surfaces(self) -> list[str]:
        return [token.surface for token in self.tokens]


@dataclass(frozen=True)
class ColumnSchema:
    """Column order of a treebank file."""

    columns: tuple[str, ...] = DEFAULT_COLUMNS

    def __post_init__(self) -> None:
        known = {"surface", "lemma", *TAG_COLUMNS}
        for name in self.columns:
            if name not in known and name not in IGNORED_COLUMNS:
                raise ValueError(f"Unknown treebank column {name!r}")
        used = [name for name in self.columns if name not in IGNORED_COLUMNS]
        if len(set(used)) != len(used):
            raise ValueError(f"Duplicate treebank columns in {self.columns}")
        if "surface" not in self.columns:
            raise ValueError("A treebank schema needs a 'surface' column")

    @classmethod
    def parse(cls, text: str) -> "ColumnSchema":
        return cls(tuple(name.strip() for name in text.split(",") if name.strip()))


@dataclass
class DuplicateReport:
    """Tokens that carried several candidate analyses; the first was kept."""

    count: int = 0
    locations: list[tuple[Path, int, str]] = field(default_factory=list)

    def record(self, path: Path, line: int, surface: str) -> None:
        self.count += 1
        self.locations.append((path, line, surface))


def _has_candidates(value: str) -> bool:
    # A lone "|" is the lemma of the "|" token, not an empty pair of candidates.
    return CANDIDATE_SEPARATOR in value and value.strip() != CANDIDATE_SEPARATOR


def _normalize_label(raw: str) -> str:
    value = raw.strip()
    if value in NOT_APPLICABLE or not value:
        return UNK_LABEL
    return value


def parse_treebank(
    path: Path,
    schema: ColumnSchema | None = None,
    domains: TagDomains | None = None,
    duplicates: DuplicateReport | None = None,
) -> list[Sentence]:
    """Read a treebank file into sentences.

    Without ``domains`` any label is accepted (the domain-building pass);
    with them, a label outside its domain is an error.

    Raises:
        FileNotFoundError: If ``path`` does not exist
        CorpusError: On a malformed line or an unknown label
    """
    if not path.exists():
        raise FileNotFoundError(f"Treebank file not found: {path}")
    schema = schema or ColumnSchema()
    text = path.read_text(encoding="utf-8")
    return parse_treebank_text(text, path, schema, domains, duplicates)


def parse_treebank_text(
    text: str,
    path: Path,
    schema: ColumnSchema,
    domains: TagDomains | None = None,
    duplicates: DuplicateReport | None = None,
) -> list[Sentence]:
    sentences: list[Sentence] = []
    current: list[Token] = []
    width = len(schema.columns)
    for line_number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.rstrip("\r\n")
        if not line.strip():
            if current:
                sentences.append(Sentence(tuple(current)))
                current = []
            continue
        cells = line.split("\t")
        if len(cells) != width:
            raise CorpusError(
                f"expected {width} columns, found {len(cells)}", path, line_number
            )
        values = dict(zip(schema.columns, cells, strict=True))
        candidates = [k for k, v in values.items() if k in CANDIDATE_COLUMNS and _has_candidates(v)]
        for key in candidates:
            values[key] = values[key].split(CANDIDATE_SEPARATOR, 1)[0]
        multiple = bool(candidates)
        surface = values["surface"].strip()
        if not surface:
            raise CorpusError("empty surface form", path, line_number)
        if multiple and duplicates is not None:
            duplicates.record(path, line_number, surface)
        tags = TagSet(
            **{
                tag: _normalize_label(values[tag]) if tag in values else UNK_LABEL
                for tag in TAG_COLUMNS
            }
        )
        if domains is not None:
            bad = domains.check(tags)
            if bad is not None:
                raise CorpusError(
                    f"unknown {TASK_LABELS[bad]} label {tags.get(bad)!r}",
                    path,
                    line_number,
                )
        lemma = values.get("lemma", "").strip()
        current.append(Token(surface=surface, lemma=lemma, tags=tags))
    if current:
        sentences.append(Sentence(tuple(current)))
    logger.debug(f"Parsed {len(sentences)} sentence{plural(len(sentences))} from {path}")
    return sentences


def format_treebank(sentences: Iterable[Sentence]) -> str:
    """Render sentences in the default column order."""
    out = io.StringIO()
    for sentence in sentences:
        for token in sentence.tokens:
            out.write("\t".join((token.surface, token.lemma, *token.tags.as_tuple())))
            out.write("\n")
        out.write("\n")
    return out.getvalue()


def read_token_file(path: Path) -> list[list[str]]:
    """Read unannotated input: one token per line, blank line between sentences.

    Only the first tab-separated column is used, so a treebank file can be
    analyzed as is.
    """
    if not path.exists():
        raise FileNotFoundError(f"Input file not found: {path}")
    sentences: list[list[str]] = []
    current: list[str] = []
    for raw_line in path.read_text(encoding="utf-8").splitlines():
        if not raw_line.strip():
            if current:
                sentences.append(current)
                current = []
            continue
        current.append(raw_line.split("\t", 1)[0].strip())
    if current:
        sentences.append(current)
    return sentences


@dataclass(frozen=True)
class CorpusManifest:
    """A corpus manifest: the column schema and where the data lives.

    Either ``data`` (an unsplit treebank) or ``train`` with optional ``dev``
    and ``test`` files is given.
    """

    path: Path
    schema: ColumnSchema
    language: str = "hindi"
    data: Path | None = None
    train: Path | None = None
    dev: Path | None = None
    test: Path | None = None


_MANIFEST_KEYS = ("columns", "language", "data", "train", "dev", "test")


def load_manifest(path: Path) -> CorpusManifest:
    """Parse a ``key=value`` corpus manifest; paths resolve next to it.

    Raises:
        FileNotFoundError: If the manifest does not exist
        CorpusError: On a malformed or unknown entry
    """
    if not path.exists():
        raise FileNotFoundError(f"Corpus manifest not found: {path}")
    values: dict[str, str] = {}
    for line_number, raw_line in enumerate(
        path.read_text(encoding="utf-8").splitlines(), start=1
    ):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CorpusError("expected key=value", path, line_number)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _MANIFEST_KEYS:
            raise CorpusError(f"unknown manifest key {key!r}", path, line_number)
        if key in values:
            raise CorpusError(f"duplicate manifest key {key!r}", path, line_number)
        values[key] = value

    try:
        schema = ColumnSchema.parse(values["columns"]) if "columns" in values else ColumnSchema()
    except ValueError as e:
        raise CorpusError(str(e), path) from e

    def resolve(key: str) -> Path | None:
        return path.parent / values[key] if key in values else None

    manifest = CorpusManifest(
        path=path,
        schema=schema,
        language=values.get("language", "hindi"),
        data=resolve("data"),
        train=resolve("train"),
        dev=resolve("dev"),
        test=resolve("test"),
    )
    if (manifest.data is None) == (manifest.train is None):
        raise CorpusError("give either 'data' or 'train'", path)
    return manifest


def build_vocab(sentences: Iterable[Sentence]) -> CharVocab:
    """Collect every character of surfaces and lemmas, sorted by code point."""
    chars: set[str] = set()
    count = 0
    for sentence in sentences:
        for token in sentence.tokens:
            chars.update(token.surface)
            chars.update(token.lemma)
            count += 1
    if not count:
        raise ValueError("Cannot build a vocabulary from an empty corpus")
    return CharVocab(tuple(sorted(chars)))


def build_domains(sentences: Iterable[Sentence]) -> TagDomains:
    """Gather the observed labels of each tag; ``Unk`` comes first."""
    observed: dict[str, set[str]] = {tag: set() for tag in TAG_COLUMNS}
    for sentence in sentences:
        for token in sentence.tokens:
            for tag in TAG_COLUMNS:
                observed[tag].add(token.tags.get(tag))
    domains = {}
    for tag in TAG_COLUMNS:
        labels = sorted(observed[tag] - {UNK_LABEL})
        if len(labels) == 0:
            # A head needs two classes even when a tag is never annotated.
            labels = [ANY_LABEL]
        domains[tag] = TagDomain(tag, (UNK_LABEL, *labels))
    return TagDomains(domains)


def pooled_length(len_max: int, width: int) -> int:
    return (len_max - width + 1) // 2


def fit_len_max(sentences: Iterable[Sentence], widths: Sequence[int] = (4, 5)) -> int:
    """Longest surface or lemma, raised until every filter pools to one length."""
    longest = 0
    for sentence in sentences:
        for token in sentence.tokens:
            longest = max(longest, len(token.surface), len(token.lemma))
    length = max(longest, max(widths) + 1)
    while len({pooled_length(length, w) for w in widths}) != 1:
        length += 1
    return length


@dataclass(frozen=True, eq=False)
class EncodedExample:
    """One token in context, as fixed-shape id arrays.

    ``context_ids`` holds ``2 cw`` rows: the ``cw`` left neighbours nearest
    last, then the right neighbours nearest first. ``gold_lemma_ids`` is
    ``[start, chars..., stop]`` padded to ``len_max + 2``.
    """

    word_ids: np.ndarray
    context_ids: np.ndarray
    gold_tags: np.ndarray
    gold_lemma_ids: np.ndarray
    position: int
    sentence_index: int = 0
    features: np.ndarray | None = None

    @property
    def lemma_steps(self) -> int:
        """Decoder steps under teacher forcing: lemma characters plus stop."""
        return int(np.count_nonzero(self.gold_lemma_ids)) - 1


def _pad_ids(
    vocab: CharVocab, text: str, len_max: int, truncate: bool, what: str
) -> np.ndarray:
    if len(text) > len_max:
        if not truncate:
            raise IngestionError(text, f"{what} length {len(text)} exceeds len_max {len_max}")
        text = text[:len_max]
    ids = np.full(len_max, vocab.pad_id, dtype=np.int64)
    ids[: len(text)] = vocab.encode(text)
    return ids


def encode_word(vocab: CharVocab, word: str, len_max: int, truncate: bool = False) -> np.ndarray:
    """Character ids of a word padded to ``len_max``.

    Raises:
        IngestionError: If the word is too long and ``truncate`` is off
    """
    return _pad_ids(vocab, word, len_max, truncate, "word")


def encode_lemma(vocab: CharVocab, lemma: str, len_max: int, truncate: bool = False) -> np.ndarray:
    if len(lemma) > len_max:
        if not truncate:
            raise IngestionError(lemma, f"lemma length {len(lemma)} exceeds len_max {len_max}")
        lemma = lemma[:len_max]
    ids = np.full(len_max + 2, vocab.pad_id, dtype=np.int64)
    ids[0] = vocab.start_id
    ids[1 : len(lemma) + 1] = vocab.encode(lemma)
    ids[len(lemma) + 1] = vocab.stop_id
    return ids


def encode_context(
    surfaces: Sequence[str],
    index: int,
    vocab: CharVocab,
    cw: int,
    len_max: int,
) -> np.ndarray:
    """Context rows for the word at ``index``; neighbours over len_max are cut.

    Slots past a sentence boundary stay all padding.
    """
    rows = np.full((2 * cw, len_max), vocab.pad_id, dtype=np.int64)
    slot = 0
    for offset in [*range(-cw, 0), *range(1, cw + 1)]:
        neighbour = index + offset
        if 0 <= neighbour < len(surfaces):
            rows[slot] = _pad_ids(vocab, surfaces[neighbour], len_max, True, "context")
        slot += 1
    return rows


Featurizer = Callable[[Sentence], np.ndarray]


def encode_examples(
    sentences: Sequence[Sentence],
    vocab: CharVocab,
    cw: int,
    len_max: int,
    domains: TagDomains,
    *,
    truncate: bool = False,
    featurize: Featurizer | None = None,
) -> list[EncodedExample]:
    """One example per token with its context window.

    ``featurize`` returns the linguistic feature rows of a sentence, one per
    token, when the model consumes them.

    Raises:
        IngestionError: If a word or lemma is longer than ``len_max`` and
            ``truncate`` is off
    """
    if cw < 0:
        raise ValueError(f"Context window must be >= 0, got {cw}")
    if len_max < 1:
        raise ValueError(f"len_max must be >= 1, got {len_max}")
    examples: list[EncodedExample] = []
    for sentence_index, sentence in enumerate(sentences):
        surfaces = sentence.surfaces
        feature_rows = featurize(sentence) if featurize is not None else None
        for position, token in enumerate(sentence.tokens):
            examples.append(
                EncodedExample(
                    word_ids=encode_word(vocab, token.surface, len_max, truncate),
                    context_ids=encode_context(surfaces, position, vocab, cw, len_max),
                    gold_tags=domains.encode(token.tags),
                    gold_lemma_ids=encode_lemma(vocab, token.lemma, len_max, truncate),
                    position=position,
                    sentence_index=sentence_index,
                    features=None if feature_rows is None else feature_rows[position],
                )
            )
    return examples


@dataclass(frozen=True)
class SplitCorpus:
    train: tuple[Sentence, ...]
    dev: tuple[Sentence, ...] = ()
    test: tuple[Sentence, ...] = ()

    def all(self) -> tuple[Sentence, ...]:
        return (*self.train, *self.dev, *self.test)


def split_corpus(
    sentences: Sequence[Sentence],
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> SplitCorpus:
    """Shuffle sentences with ``seed`` and cut them into train, dev and test."""
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ValueError(f"Split ratios must be three non-negative values, got {ratios}")
    if abs(float(np.sum(ratios)) - 1.0) > 1e-9:
        raise ValueError(f"Split ratios must sum to 1, got {tuple(ratios)}")
    order = np.random.default_rng(seed).permutation(len(sentences))
    n_train = round(ratios[0] * len(sentences))
    n_dev = min(round(ratios[1] * len(sentences)), len(sentences) - n_train)
    picked = [sentences[i] for i in order]
    return SplitCorpus(
        train=tuple(picked[:n_train]),
        dev=tuple(picked[n_train : n_train + n_dev]),
        test=tuple(picked[n_train + n_dev :]),
    )


def load_split(
    manifest: CorpusManifest,
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
    seed: int = 0,
    duplicates: DuplicateReport | None = None,
) -> SplitCorpus:
    """Read the treebank files a manifest names; an unsplit corpus is split."""
    if manifest.data is not None:
        sentences = parse_treebank(manifest.data, manifest.schema, duplicates=duplicates)
        return split_corpus(sentences, ratios, seed)

    def read(p: Path | None) -> tuple[Sentence, ...]:
        if p is None:
            return ()
        return tuple(parse_treebank(p, manifest.schema, duplicates=duplicates))

    return SplitCorpus(train=read(manifest.train), dev=read(manifest.dev), test=read(manifest.test))


@dataclass(frozen=True)
class CorpusCache:
    """An ingested corpus: splits plus everything needed to re-encode them."""

    vocab: CharVocab
    domains: TagDomains
    split: SplitCorpus
    len_max: int
    cw: int
    language: str = "hindi"


def write_corpus_cache(path: Path, cache: CorpusCache) -> Path:
    """Save an ingested corpus as an ``.npz`` archive.

    The archive stores a format version, the vocabulary characters, the tag
    domains and the three splits as treebank text in the default columns.
    """
    arrays: dict[str, np.ndarray] = {
        "format_version": np.array(CACHE_FORMAT_VERSION),
        "vocab": np.array("\n".join(cache.vocab.chars)),
        "len_max": np.array(cache.len_max),
        "cw": np.array(cache.cw),
        "language": np.array(cache.language),
    }
    for tag in TAG_COLUMNS:
        arrays[f"domain_{tag}"] = np.array("\n".join(cache.domains[tag].labels))
    for name in ("train", "dev", "test"):
        arrays[f"split_{name}"] = np.array(format_treebank(getattr(cache.split, name)))

    def write(f: Any) -> None:
        buffer = io.BytesIO()
        np.savez(buffer, **arrays)
        f.write(buffer.getvalue())

    write_atomic(path, write, binary=True)
    logger.info(f"Wrote corpus cache {path}")
    return path


def load_corpus_cache(path: Path) -> CorpusCache:
    """Load a corpus written by :func:`write_corpus_cache`.

    Raises:
        FileNotFoundError: If the cache does not exist
        CorpusError: On a format version this release does not read
    """
    if not path.exists():
        raise FileNotFoundError(f"Corpus cache not found: {path}")
    with np.load(path, allow_pickle=False) as archive:
        version = int(archive["format_version"]) if "format_version" in archive.files else None
        if version != CACHE_FORMAT_VERSION:
            raise CorpusError(
                f"unsupported corpus cache format {version}, expected {CACHE_FORMAT_VERSION}",
                path,
            )
        raw_chars = str(archive["vocab"])
        vocab = CharVocab(tuple(raw_chars.split("\n")) if raw_chars else ())
        domains = TagDomains.from_dict(
            {tag: str(archive[f"domain_{tag}"]).split("\n") for tag in TAG_COLUMNS}
        )
        schema = ColumnSchema()
        splits = {
            name: tuple(
                parse_treebank_text(str(archive[f"split_{name}"]), path, schema, domains)
            )
            for name in ("train", "dev", "test")
        }
        return CorpusCache(
            vocab=vocab,
            domains=domains,
            split=SplitCorpus(**splits),
            len_max=int(archive["len_max"]),
            cw=int(archive["cw"]),
            language=str(archive["language"]),
        )


@dataclass(frozen=True)
class EncodedCorpus:
    train: list[EncodedExample]
    dev: list[EncodedExample]
    test: list[EncodedExample]
    vocab: CharVocab
    domains: TagDomains
    len_max: int
    cw: int


def encode_corpus(
    cache: CorpusCache,
    *,
    truncate: bool = False,
    featurize: Featurizer | None = None,
) -> EncodedCorpus:
    """Encode the three splits of an ingested corpus."""

    def encode(sentences: Sequence[Sentence]) -> list[EncodedExample]:
        return encode_examples(
            sentences,
            cache.vocab,
            cache.cw,
            cache.len_max,
            cache.domains,
            truncate=truncate,
            featurize=featurize,
        )

    encoded = EncodedCorpus(
        train=encode(cache.split.train),
        dev=encode(cache.split.dev),
        test=encode(cache.split.test),
        vocab=cache.vocab,
        domains=cache.domains,
        len_max=cache.len_max,
        cw=cache.cw,
    )
    logger.info(
        f"Encoded {len(encoded.train)} train, {len(encoded.dev)} dev and "
        f"{len(encoded.test)} test token{plural(len(encoded.test))}"
    )
    return encoded
