# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: The morphkit contributors
"""Command-line interface for morphkit."""

import logging
import sys
from collections.abc import Callable
from dataclasses import replace
from pathlib import Path
from typing import TypeVar

import click

from morphkit import __version__, pipeline
from morphkit.config import RunConfig, load_run_config
from morphkit.errors import StageError
from morphkit.logs import setup_logging

logger = logging.getLogger(__name__)

T = TypeVar("T")

DEFAULT_RUN_DIR = Path("run")


def _run(action: Callable[[], T]) -> T:
    """Run a pipeline stage, turning failures into a message and an exit code."""
    try:
        return action()
    except StageError as e:
        click.echo(f"Error in {e.stage}: {e}", err=True)
        sys.exit(1)
    except FileNotFoundError as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(1)
    except ValueError as e:
        click.echo(f"Configuration error: {e}", err=True)
        sys.exit(1)
    except RuntimeError as e:
        click.echo(f"Runtime error: {e}", err=True)
        sys.exit(1)
    except KeyboardInterrupt:
        click.echo("\nInterrupted by user", err=True)
        sys.exit(130)


def _config(
    path: Path | None,
    seed: int | None = None,
    epochs: int | None = None,
    fit_len_max: bool | None = None,
) -> RunConfig:
    config = load_run_config(path) if path is not None else RunConfig()
    return config.with_overrides(seed=seed, epochs=epochs, fit_len_max=fit_len_max)


def _corpus_path(config: RunConfig, corpus: Path | None, out_dir: Path) -> Path:
    if corpus is not None:
        return corpus
    return config.corpus.cache or out_dir / pipeline.CORPUS_CACHE


config_option = click.option(
    "--config",
    "-c",
    "config_path",
    type=click.Path(exists=False, dir_okay=False, path_type=Path),
    default=None,
    help="Run configuration (TOML); built-in defaults apply without one",
)
seed_option = click.option(
    "--seed",
    type=int,
    default=None,
    envvar="MORPHKIT_SEED",
    help="Seed for every random choice [default: the config value, 0]",
)
jobs_option = click.option(
    "--jobs",
    "-j",
    type=click.IntRange(min=1),
    default=1,
    help="Worker threads",
    show_default=True,
)
out_dir_option = click.option(
    "--out",
    "-o",
    "out_dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=DEFAULT_RUN_DIR,
    help="Output directory",
    show_default=True,
)
corpus_option = click.option(
    "--corpus",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help=f"Corpus cache written by ingest [default: <out>/{pipeline.CORPUS_CACHE}]",
)
masks_option = click.option(
    "--masks",
    "masks_dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Directory of features.<tag>.mask files; the bundled reference masks fill gaps",
)
weights_option = click.option(
    "--weights",
    "weights_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="weights.yaml from calibrate [default: the [loss] table: 0.7 per tag, "
    "G 0.9, P 0.9, C 0.95, lemma 0.3]",
)
epochs_option = click.option(
    "--epochs",
    type=click.IntRange(min=1),
    default=None,
    help="Maximum training epochs [default: 200]",
)


@click.group()
@click.version_option(version=__version__, prog_name="morphkit")
@click.option("--verbose", "-v", is_flag=True, help="Show detailed output")
def main(verbose: bool) -> None:
    """Joint morphological tagging and lemmatization."""
    setup_logging(verbose=verbose)


@main.command()
@config_option
@click.option(
    "--manifest",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Corpus manifest [default: [corpus] manifest]",
)
@click.option(
    "--synthetic",
    type=click.IntRange(min=1),
    default=None,
    metavar="SENTENCES",
    help="Generate the toy corpus instead of reading a manifest",
)
@click.option(
    "--fit-lenmax/--no-fit-lenmax",
    default=None,
    help="Fit len_max to the longest word [default: off, len_max 18]",
)
@seed_option
@out_dir_option
def ingest(
    config_path: Path | None,
    manifest: Path | None,
    synthetic: int | None,
    fit_lenmax: bool | None,
    seed: int | None,
    out_dir: Path,
) -> None:
    """Read, split and index a treebank."""
    _run(
        lambda: pipeline.ingest(
            _config(config_path, seed, fit_len_max=fit_lenmax),
            out_dir,
            manifest=manifest,
            synthetic=synthetic,
        )
    )


@main.command("select-features")
@config_option
@corpus_option
@click.option(
    "--tag",
    "tags",
    multiple=True,
    help="Tag to select features for, by name or label (POS, G, N, P, C, TAM) "
    "[default: all six]",
)
@seed_option
@jobs_option
@out_dir_option
def select_features(
    config_path: Path | None,
    corpus: Path | None,
    tags: tuple[str, ...],
    seed: int | None,
    jobs: int,
    out_dir: Path,
) -> None:
    """Choose linguistic features per tag with the genetic search."""

    def action() -> None:
        config = _config(config_path, seed)
        pipeline.select_features(
            config, _corpus_path(config, corpus, out_dir), out_dir, tags=tags or None, jobs=jobs
        )

    _run(action)


@main.command()
@config_option
@corpus_option
@masks_option
@weights_option
@seed_option
@epochs_option
@out_dir_option
def train(
    config_path: Path | None,
    corpus: Path | None,
    masks_dir: Path | None,
    weights_path: Path | None,
    seed: int | None,
    epochs: int | None,
    out_dir: Path,
) -> None:
    """Train the joint tagger and lemmatizer (cw 4, beam width 4, dropout 0.5 by default)."""

    def action() -> None:
        config = _config(config_path, seed, epochs)
        pipeline.train(
            config,
            _corpus_path(config, corpus, out_dir),
            out_dir,
            masks_dir=masks_dir,
            weights_path=weights_path,
        )

    _run(action)


@main.command()
@config_option
@corpus_option
@masks_option
@seed_option
@jobs_option
@click.option(
    "--epochs",
    type=click.IntRange(min=1),
    default=None,
    help="Maximum epochs of each calibration run [default: 20]",
)
@out_dir_option
def calibrate(
    config_path: Path | None,
    corpus: Path | None,
    masks_dir: Path | None,
    seed: int | None,
    jobs: int,
    epochs: int | None,
    out_dir: Path,
) -> None:
    """Sweep the shared tag weight over 0.0 to 1.0, then fine-tune G, P and C."""

    def action() -> None:
        config = _config(config_path, seed)
        if epochs is not None:
            config = replace(config, calibrate=replace(config.calibrate, max_epochs=epochs))
        pipeline.calibrate(
            config, _corpus_path(config, corpus, out_dir), out_dir, masks_dir=masks_dir, jobs=jobs
        )

    _run(action)


@main.command()
@click.option(
    "--model",
    "model_path",
    type=click.Path(dir_okay=False, path_type=Path),
    required=True,
    help="Model checkpoint written by train",
)
@click.option(
    "--input",
    "input_path",
    type=click.Path(dir_okay=False, path_type=Path),
    required=True,
    help="Token file: one token per line, blank line between sentences",
)
@click.option(
    "--out",
    "-o",
    "out_path",
    type=click.Path(dir_okay=False, path_type=Path),
    required=True,
    help="Analysis file to write",
)
@jobs_option
def analyze(model_path: Path, input_path: Path, out_path: Path, jobs: int) -> None:
    """Tag and lemmatize every token of a token file."""
    _run(lambda: pipeline.analyze(model_path, input_path, out_path, jobs=jobs))


@main.command()
@config_option
@click.option(
    "--pred",
    "pred_path",
    type=click.Path(dir_okay=False, path_type=Path),
    required=True,
    help="Analysis file written by analyze",
)
@click.option(
    "--gold",
    "gold_path",
    type=click.Path(dir_okay=False, path_type=Path),
    required=True,
    help="Gold treebank in the default eight columns",
)
@click.option(
    "--model",
    "model_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Checkpoint whose vocabulary defines out-of-vocabulary characters",
)
@click.option(
    "--graphemes",
    is_flag=True,
    default=None,
    help="Edit distance over grapheme clusters instead of code points",
)
@out_dir_option
def evaluate(
    config_path: Path | None,
    pred_path: Path,
    gold_path: Path,
    model_path: Path | None,
    graphemes: bool | None,
    out_dir: Path,
) -> None:
    """Score analyses against gold annotations."""

    def action() -> None:
        config = _config(config_path)
        if graphemes:
            config = replace(config, eval=replace(config.eval, graphemes=True))
        report = pipeline.evaluate(config, pred_path, gold_path, out_dir, model_path=model_path)
        click.echo(report.render_text(), nl=False)

    _run(action)


@main.command("compare-mt")
@config_option
@corpus_option
@masks_option
@weights_option
@seed_option
@epochs_option
@jobs_option
@out_dir_option
def compare_mt(
    config_path: Path | None,
    corpus: Path | None,
    masks_dir: Path | None,
    weights_path: Path | None,
    seed: int | None,
    epochs: int | None,
    jobs: int,
    out_dir: Path,
) -> None:
    """Train each task alone and all tasks jointly, and compare dev scores."""

    def action() -> None:
        config = _config(config_path, seed, epochs)
        report = pipeline.compare_mt(
            config,
            _corpus_path(config, corpus, out_dir),
            out_dir,
            masks_dir=masks_dir,
            weights_path=weights_path,
            jobs=jobs,
        )
        click.echo(report.render_text(), nl=False)

    _run(action)


if __name__ == "__main__":
    main()
