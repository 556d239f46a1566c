# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: The morphkit contributors
"""Tests for treebank ingestion, encoding and corpus caches."""

from pathlib import Path

import numpy as np
import pytest
from conftest import sentence, toy_sentences, treebank, write_file

from morphkit.corpus import (
    ANY_LABEL,
    UNK_LABEL,
    UNKNOWN_CHAR,
    CharVocab,
    ColumnSchema,
    CorpusCache,
    DuplicateReport,
    TagSet,
    build_domains,
    build_vocab,
    encode_context,
    encode_corpus,
    encode_examples,
    encode_lemma,
    encode_word,
    fit_len_max,
    format_treebank,
    load_corpus_cache,
    load_manifest,
    load_split,
    parse_treebank,
    read_token_file,
    split_corpus,
    write_corpus_cache,
)
from morphkit.errors import CorpusError, IngestionError

TREEBANK = treebank(
    "ladka ladka NN m sg 3 d _",
    "chalta chalna VM m sg 3 _ ta",
    "",
    "ladki ladki NN f sg - d -",
    "ko ko PSP _ _ _ _ _",
)


def test_parse_treebank_normalizes_labels(tmp_path: Path) -> None:
    path = write_file(tmp_path, "hi.tsv", TREEBANK)
    sentences = parse_treebank(path)

    assert [len(s) for s in sentences] == [2, 2]
    first = sentences[0].tokens[0]
    assert first.surface == "ladka"
    assert first.tags == TagSet("NN", "m", "sg", "3", "d", UNK_LABEL)
    assert sentences[1].tokens[0].tags.person == UNK_LABEL
    assert sentences[1].tokens[1].tags.as_tuple() == ("PSP", *([UNK_LABEL] * 5))


def test_parse_treebank_keeps_first_candidate(tmp_path: Path) -> None:
    path = write_file(tmp_path, "hi.tsv", treebank("ghar ghar|ghara NN m sg|pl 3 d _"))
    duplicates = DuplicateReport()

    (only,) = parse_treebank(path, duplicates=duplicates)

    assert only.tokens[0].surface == "ghar"
    assert only.tokens[0].lemma == "ghar"
    assert only.tokens[0].tags.number == "sg"
    assert duplicates.count == 1
    assert duplicates.locations == [(path, 1, "ghar")]


def test_punctuation_tokens_are_ordinary_rows(tmp_path: Path) -> None:
    """``#`` and ``|`` are tokens like any other, not comments or candidate lists."""
    path = write_file(
        tmp_path,
        "punct.tsv",
        treebank("a a NN _ _ _ _ _", "# # PUNC - - - - -", "| | PUNC - - - - -"),
    )
    duplicates = DuplicateReport()

    (only,) = parse_treebank(path, duplicates=duplicates)

    assert only.surfaces == ["a", "#", "|"]
    assert [t.lemma for t in only.tokens] == ["a", "#", "|"]
    assert only.tokens[1].tags.pos == "PUNC"
    assert duplicates.count == 0


def test_candidates_are_never_split_in_the_surface(tmp_path: Path) -> None:
    path = write_file(tmp_path, "hi.tsv", treebank("a|b a|b NN _ _ _ _ _"))
    duplicates = DuplicateReport()

    (only,) = parse_treebank(path, duplicates=duplicates)

    assert only.tokens[0].surface == "a|b"
    assert only.tokens[0].lemma == "a"
    assert duplicates.count == 1


def test_parse_treebank_reports_bad_rows(tmp_path: Path) -> None:
    path = write_file(tmp_path, "bad.tsv", treebank("ladka ladka NN m sg 3 d _", "oops NN"))
    with pytest.raises(CorpusError, match=r"bad\.tsv:2: expected 8 columns, found 2"):
        parse_treebank(path)


def test_parse_treebank_checks_domains(tmp_path: Path) -> None:
    domains = build_domains([sentence(("a", "a", "NN"))])
    path = write_file(tmp_path, "hi.tsv", treebank("b b VM _ _ _ _ _"))
    with pytest.raises(CorpusError, match="unknown POS label 'VM'"):
        parse_treebank(path, domains=domains)


def test_parse_treebank_missing_file(tmp_path: Path) -> None:
    with pytest.raises(FileNotFoundError, match="Treebank file not found"):
        parse_treebank(tmp_path / "nope.tsv")


def test_custom_column_order(tmp_path: Path) -> None:
    schema = ColumnSchema.parse("skip, surface, pos, lemma")
    path = write_file(tmp_path, "conll.tsv", treebank("1 ghar NN ghar", "2 se PSP se"))

    (only,) = parse_treebank(path, schema)

    assert only.surfaces == ["ghar", "se"]
    assert only.tokens[1].lemma == "se"
    assert only.tokens[0].tags.gender == UNK_LABEL


def test_column_schema_validation() -> None:
    with pytest.raises(ValueError, match="Unknown treebank column 'mood'"):
        ColumnSchema.parse("surface,mood")
    with pytest.raises(ValueError, match="needs a 'surface' column"):
        ColumnSchema.parse("lemma,pos")
    with pytest.raises(ValueError, match="Duplicate"):
        ColumnSchema.parse("surface,pos,pos")


def test_format_treebank_reads_back(tmp_path: Path) -> None:
    sentences = toy_sentences(4)
    path = write_file(tmp_path, "toy.tsv", format_treebank(sentences))
    assert parse_treebank(path) == sentences


def test_read_token_file_uses_first_column(tmp_path: Path) -> None:
    path = write_file(tmp_path, "in.txt", "ladka\tignored\nchalta\n#\n\n\nko\n")
    assert read_token_file(path) == [["ladka", "chalta", "#"], ["ko"]]


def test_vocab_ids_and_decoding() -> None:
    vocab = build_vocab([sentence(("ba", "ab", "NN"), ("c", "c", "NN"))])

    assert vocab.chars == ("a", "b", "c")
    assert vocab.size == 5
    assert (vocab.start_id, vocab.stop_id, vocab.output_size) == (5, 6, 7)
    assert vocab.encode("cab") == [4, 2, 3]
    assert vocab.encode("z") == [vocab.unk_char_id]
    assert vocab.decode([4, 2, 0, 5, 6, 1]) == "ca" + UNKNOWN_CHAR
    assert vocab.fingerprint() == CharVocab(("a", "b", "c")).fingerprint()
    assert vocab.fingerprint() != CharVocab(("a", "c", "b")).fingerprint()


def test_vocab_rejects_empty_corpus() -> None:
    with pytest.raises(ValueError, match="empty corpus"):
        build_vocab([])


def test_domains_include_unk_and_pad_unannotated_tags() -> None:
    domains = build_domains([sentence(("ghar", "ghar", "NN"), ("se", "se", "PSP"))])

    assert domains["pos"].labels == (UNK_LABEL, "NN", "PSP")
    assert domains["tam"].labels == (UNK_LABEL, ANY_LABEL)
    assert domains.sizes()["pos"] == 3
    ids = domains.encode(TagSet(pos="PSP"))
    assert ids.tolist() == [2, 0, 0, 0, 0, 0]
    assert domains.decode(ids) == TagSet(pos="PSP")
    with pytest.raises(ValueError, match="Unknown pos label 'VM'"):
        domains.encode(TagSet(pos="VM"))


def test_encode_word_and_lemma() -> None:
    vocab = CharVocab(("a", "b"))
    np.testing.assert_array_equal(encode_word(vocab, "ab", 4), [2, 3, 0, 0])
    np.testing.assert_array_equal(encode_lemma(vocab, "ba", 4), [4, 3, 2, 5, 0, 0])
    with pytest.raises(IngestionError, match="exceeds len_max 4"):
        encode_word(vocab, "aaaaa", 4)
    np.testing.assert_array_equal(encode_word(vocab, "aaaab", 4, truncate=True), [2, 2, 2, 2])


def test_context_window_order_and_boundaries() -> None:
    vocab = CharVocab(("a", "b", "c"))
    rows = encode_context(["a", "b", "c"], 0, vocab, cw=2, len_max=3)
    # Left neighbours (both before the sentence start), then right neighbours nearest first.
    np.testing.assert_array_equal(rows[:, 0], [0, 0, 3, 4])


def test_encode_examples_one_per_token() -> None:
    sentences = toy_sentences(3)
    vocab, domains = build_vocab(sentences), build_domains(sentences)

    examples = encode_examples(sentences, vocab, 2, 8, domains)

    assert len(examples) == sum(len(s) for s in sentences)
    first = examples[0]
    assert first.word_ids.shape == (8,)
    assert first.context_ids.shape == (4, 8)
    assert first.gold_lemma_ids[0] == vocab.start_id
    assert first.lemma_steps == len(sentences[0].tokens[0].lemma) + 1
    assert first.features is None
    assert examples[-1].sentence_index == 2


def test_fit_len_max_pools_filters_equally() -> None:
    sentences = [sentence(("abcdefghijklmnop", "a", "NN"))]
    length = fit_len_max(sentences, (4, 5))
    assert length >= 16
    assert (length - 4 + 1) // 2 == (length - 5 + 1) // 2
    assert fit_len_max([sentence(("ab", "a", "NN"))], (4, 5)) == 6


def test_split_corpus_is_seeded_and_complete() -> None:
    sentences = toy_sentences(10)
    first = split_corpus(sentences, (0.8, 0.1, 0.1), seed=3)
    second = split_corpus(sentences, (0.8, 0.1, 0.1), seed=3)

    assert first == second
    assert (len(first.train), len(first.dev), len(first.test)) == (8, 1, 1)
    assert sorted(map(repr, first.all())) == sorted(map(repr, sentences))
    with pytest.raises(ValueError, match="sum to 1"):
        split_corpus(sentences, (0.5, 0.1, 0.1))


def test_manifest_with_unsplit_data(tmp_path: Path) -> None:
    write_file(tmp_path, "data/all.tsv", format_treebank(toy_sentences(10)))
    manifest_path = write_file(
        tmp_path,
        "hi.manifest",
        """\
        # Hindi toy corpus
        columns=surface,lemma,pos,gender,number,person,case,tam
        language=hindi
        data=data/all.tsv
        """,
    )

    manifest = load_manifest(manifest_path)
    split = load_split(manifest, (0.6, 0.2, 0.2), seed=0)

    assert manifest.data == tmp_path / "data/all.tsv"
    assert (len(split.train), len(split.dev), len(split.test)) == (6, 2, 2)


def test_manifest_with_presplit_files(tmp_path: Path) -> None:
    write_file(tmp_path, "train.tsv", format_treebank(toy_sentences(3)))
    write_file(tmp_path, "dev.tsv", format_treebank(toy_sentences(2, seed=1)))
    path = write_file(tmp_path, "m", "language=urdu\ntrain=train.tsv\ndev=dev.tsv\n")

    manifest = load_manifest(path)
    split = load_split(manifest)

    assert manifest.language == "urdu"
    assert (len(split.train), len(split.dev), len(split.test)) == (3, 2, 0)


@pytest.mark.parametrize(
    ("content", "message"),
    [
        ("data=a\ntrain=b\n", "either 'data' or 'train'"),
        ("", "either 'data' or 'train'"),
        ("data=a\nformat=x\n", "unknown manifest key 'format'"),
        ("data=a\ndata=b\n", "duplicate manifest key 'data'"),
        ("data\n", "expected key=value"),
        ("columns=surface,mood\ndata=a\n", "Unknown treebank column"),
    ],
)
def test_manifest_errors(tmp_path: Path, content: str, message: str) -> None:
    path = write_file(tmp_path, "bad.manifest", content)
    with pytest.raises(CorpusError, match=message):
        load_manifest(path)


def test_corpus_cache_round_trip(tmp_path: Path) -> None:
    sentences = toy_sentences(10)
    split = split_corpus(sentences, (0.6, 0.2, 0.2), seed=1)
    cache = CorpusCache(
        vocab=build_vocab(sentences),
        domains=build_domains(sentences),
        split=split,
        len_max=8,
        cw=2,
        language="urdu",
    )

    loaded = load_corpus_cache(write_corpus_cache(tmp_path / "corpus.npz", cache))

    assert loaded == cache
    encoded = encode_corpus(loaded)
    assert len(encoded.train) == sum(len(s) for s in split.train)
    assert encoded.cw == 2


def test_corpus_cache_version_mismatch(tmp_path: Path) -> None:
    path = tmp_path / "old.npz"
    np.savez(path, format_version=np.array(0))
    with pytest.raises(CorpusError, match="unsupported corpus cache format 0"):
        load_corpus_cache(path)
