# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: The morphkit contributors
"""The pipeline stages behind each CLI subcommand.

Every stage reads its inputs from files, writes its artifacts into an output
directory and wraps any failure in :class:`~morphkit.errors.StageError`.
"""

import logging
from collections.abc import Callable, Iterator, Mapping, Sequence
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

from morphkit.config import RunConfig
from morphkit.corpus import (
    CorpusCache,
    DuplicateReport,
    build_domains,
    build_vocab,
    fit_len_max,
    load_corpus_cache,
    load_manifest,
    load_split,
    parse_treebank,
    read_token_file,
    split_corpus,
    write_corpus_cache,
)
from morphkit.errors import StageError
from morphkit.evaluate import EvalReport, evaluate_analyses, write_report
from morphkit.layers import TAG_TASKS, TASK_LABELS, LossWeights
from morphkit.lingfeat import FEATURE_POOL, FeatureMask, load_phono_table
from morphkit.logs import plural
from morphkit.model import (
    MorphAnalyzer,
    analyze_corpus,
    load_model,
    read_analyses,
    save_model,
    write_analyses,
)
from morphkit.output import write_text
from morphkit.select import (
    FitnessOracle,
    build_feature_dataset,
    ga_run,
    pareto_front,
    read_mask_file,
    write_mask_file,
    write_pareto_csv,
    write_trace_csv,
)
from morphkit.synthetic import synthetic_corpus
from morphkit.train import (
    CalibrationResult,
    ComparisonReport,
    TrainResult,
    calibrate_lambdas,
    encode_split,
    load_weights,
    run_individual_vs_mt,
    train_joint,
    write_calibration,
    write_training_log,
)

logger = logging.getLogger(__name__)

CORPUS_CACHE = "corpus.npz"
MODEL_FILE = "model.npz"
TRAINING_LOG = "training_log.csv"


@contextmanager
def _stage(name: str) -> Iterator[None]:
    logger.info(f"Stage {name}")
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        raise StageError(name, e) from e


def resolve_tag(name: str) -> str:
    """Task name for a tag given as a task (``case``) or a label (``C``)."""
    labels = {label.lower(): task for task, label in TASK_LABELS.items() if task in TAG_TASKS}
    key = name.strip().lower()
    if key in TAG_TASKS:
        return key
    if key in labels:
        return labels[key]
    raise ValueError(f"Unknown tag {name!r}; expected one of {', '.join(TAG_TASKS)}")


def mask_path(directory: Path, tag: str) -> Path:
    return directory / f"features.{tag}.mask"


def load_masks(directory: Path | None) -> dict[str, FeatureMask]:
    """Masks found in ``directory``; tags without a file are left out."""
    if directory is None:
        return {}
    masks = {}
    for tag in TAG_TASKS:
        path = mask_path(directory, tag)
        if path.exists():
            stored, mask = read_mask_file(path)
            if stored != tag:
                raise ValueError(f"{path} holds a mask for {stored!r}, not {tag!r}")
            masks[tag] = mask
    logger.debug(f"Loaded {len(masks)} feature mask{plural(len(masks))} from {directory}")
    return masks


def ingest(
    config: RunConfig,
    out_dir: Path,
    *,
    manifest: Path | None = None,
    synthetic: int | None = None,
) -> Path:
    """Read, split and index a corpus and write ``corpus.npz``."""
    with _stage("ingest"):
        seed = config.train.seed
        language = "hindi"
        duplicates = DuplicateReport()
        if synthetic is not None:
            split = split_corpus(synthetic_corpus(synthetic, seed), config.corpus.split, seed)
        else:
            manifest_path = manifest or config.corpus.manifest
            if manifest_path is None:
                raise ValueError("No corpus manifest given")
            parsed = load_manifest(manifest_path)
            language = parsed.language
            split = load_split(parsed, config.corpus.split, seed, duplicates)
        sentences = split.all()
        if not sentences:
            raise ValueError("The corpus has no sentences")
        if duplicates.count:
            logger.warning(
                f"{duplicates.count} token{plural(duplicates.count)} had several candidate "
                "analyses; kept the first"
            )
        len_max = config.model.len_max
        if config.corpus.fit_len_max:
            len_max = fit_len_max(sentences, config.model.filter_widths)
            logger.info(f"Fitted len_max to {len_max}")
        cache = CorpusCache(
            vocab=build_vocab(sentences),
            domains=build_domains(sentences),
            split=split,
            len_max=len_max,
            cw=config.model.cw,
            language=language,
        )
        logger.info(
            f"Ingested {len(split.train)}/{len(split.dev)}/{len(split.test)} train/dev/test "
            f"sentences, {cache.vocab.size - 2} characters"
        )
        return write_corpus_cache(out_dir / CORPUS_CACHE, cache)


def _model_config(config: RunConfig, cache: CorpusCache) -> RunConfig:
    return replace(config, model=replace(config.model, len_max=cache.len_max, cw=cache.cw))


def select_features(
    config: RunConfig,
    cache_path: Path,
    out_dir: Path,
    *,
    tags: Sequence[str] | None = None,
    jobs: int = 1,
) -> dict[str, FeatureMask]:
    """Evolve one feature mask per tag and write the mask, trace and front files."""
    with _stage("select-features"):
        cache = load_corpus_cache(cache_path)
        table = load_phono_table()
        selected = [resolve_tag(t) for t in tags] if tags else list(TAG_TASKS)
        masks = {}
        for tag in selected:
            dataset = build_feature_dataset(cache.split.train, tag, cache.domains, table)
            oracle = FitnessOracle.for_dataset(dataset, config.rf, config.ga, jobs)
            best, report = ga_run(dataset, len(FEATURE_POOL), config.ga, config.rf, oracle=oracle)
            mask = best.to_mask()
            write_mask_file(mask_path(out_dir, tag), tag, mask, best.fitness)
            write_trace_csv(out_dir / f"trace.{tag}.csv", report)
            write_pareto_csv(out_dir / f"pareto.{tag}.csv", pareto_front(report.evaluated))
            masks[tag] = mask
        return masks


def _factory(
    config: RunConfig, cache: CorpusCache, masks: Mapping[str, FeatureMask]
) -> Callable[[], MorphAnalyzer]:
    table = load_phono_table()

    def build() -> MorphAnalyzer:
        return MorphAnalyzer(
            config.model,
            cache.vocab,
            cache.domains,
            masks,
            table,
            language=cache.language,
            seed=config.train.seed,
        )

    return build


def train(
    config: RunConfig,
    cache_path: Path,
    out_dir: Path,
    *,
    masks_dir: Path | None = None,
    weights_path: Path | None = None,
) -> TrainResult:
    """Train the joint model and write ``model.npz`` and ``training_log.csv``."""
    with _stage("train"):
        cache = load_corpus_cache(cache_path)
        config = _model_config(config, cache)
        weights = load_weights(weights_path) if weights_path is not None else config.loss
        model = _factory(config, cache, load_masks(masks_dir))()
        corpus = encode_split(model, cache.split, config.corpus.truncate)
        result = train_joint(corpus, model, weights, config.train)
        write_training_log(out_dir / TRAINING_LOG, result.history)
        extra = {"config": config.to_dict(), "weights": weights.as_dict()}
        save_model(out_dir / MODEL_FILE, result.model, extra)
        return result


def calibrate(
    config: RunConfig,
    cache_path: Path,
    out_dir: Path,
    *,
    masks_dir: Path | None = None,
    jobs: int = 1,
) -> CalibrationResult:
    """Sweep and fine-tune the loss weights; writes ``calibration.csv`` and ``weights.yaml``."""
    with _stage("calibrate"):
        cache = load_corpus_cache(cache_path)
        config = _model_config(config, cache)
        factory = _factory(config, cache, load_masks(masks_dir))
        corpus = encode_split(factory(), cache.split, config.corpus.truncate)
        section = config.calibrate
        cfg = replace(config.train, max_epochs=section.max_epochs)
        result = calibrate_lambdas(
            corpus,
            factory,
            cfg,
            tuned_tags=[resolve_tag(t) for t in section.tuned_tags],
            neighborhood=section.neighborhood,
            tolerance=section.tolerance,
            jobs=jobs,
        )
        write_calibration(result, out_dir)
        return result


def analyze(model_path: Path, input_path: Path, out_path: Path, *, jobs: int = 1) -> Path:
    """Analyze every token of a token file and write the analysis TSV."""
    with _stage("analyze"):
        model = load_model(model_path)
        sentences = read_token_file(input_path)
        return write_analyses(out_path, analyze_corpus(sentences, model, jobs))


def evaluate(
    config: RunConfig,
    pred_path: Path,
    gold_path: Path,
    out_dir: Path,
    *,
    model_path: Path | None = None,
) -> EvalReport:
    """Score an analysis file against a gold treebank and write the report files."""
    with _stage("evaluate"):
        pred = read_analyses(pred_path)
        gold = parse_treebank(gold_path)
        vocab = load_model(model_path).vocab if model_path is not None else None
        report = evaluate_analyses(pred, gold, graphemes=config.eval.graphemes, vocab=vocab)
        write_report(report, out_dir)
        return report


def compare_mt(
    config: RunConfig,
    cache_path: Path,
    out_dir: Path,
    *,
    masks_dir: Path | None = None,
    weights_path: Path | None = None,
    jobs: int = 1,
) -> ComparisonReport:
    """Train every task alone and jointly; writes ``comparison.txt`` and ``comparison.csv``."""
    with _stage("compare-mt"):
        cache = load_corpus_cache(cache_path)
        config = _model_config(config, cache)
        weights: LossWeights = load_weights(weights_path) if weights_path is not None else config.loss
        factory = _factory(config, cache, load_masks(masks_dir))
        corpus = encode_split(factory(), cache.split, config.corpus.truncate)
        report = run_individual_vs_mt(corpus, factory, config.train, weights, jobs=jobs)
        write_text(out_dir / "comparison.txt", report.render_text())
        report.write_report_csv(out_dir / "comparison.csv")
        return report
