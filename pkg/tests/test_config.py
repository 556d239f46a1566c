# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: The morphkit contributors
"""Tests for run configuration parsing and validation."""

import re
from pathlib import Path

import pytest
from conftest import write_file

from morphkit.config import RunConfig, load_run_config, load_toml_file

TOY_CONFIG = Path(__file__).parent.parent / "conf" / "toy.toml"


def test_bundled_toy_config_loads() -> None:
    config = load_run_config(TOY_CONFIG)

    assert config.source == TOY_CONFIG
    assert config.corpus.split == (0.8, 0.2, 0.0)
    assert config.model.len_max == 8
    assert config.model.head_sizes == (16, 16)
    assert config.train.patience == 20
    assert config.loss.gender == 0.7
    assert config.loss.lemma == 0.3
    assert config.ga.population == 20
    assert config.rf.trees == 5
    assert config.calibrate.max_epochs == 30


def test_defaults_without_tables(tmp_path: Path) -> None:
    config = load_run_config(write_file(tmp_path, "empty.toml", ""))
    assert config == RunConfig()


def test_unknown_field_reports_its_line(tmp_path: Path) -> None:
    path = write_file(
        tmp_path,
        "run.toml",
        """\
        [train]
        batch_size = 4

        [model]
        len_max = 8
        # a comment
        colour = "red"
        """,
    )
    expected = f"Unknown field in [model]: 'colour' on line 7 in {path}"
    with pytest.raises(ValueError, match=re.escape(expected)):
        load_run_config(path)


def test_unknown_table_is_a_top_level_field(tmp_path: Path) -> None:
    path = write_file(tmp_path, "run.toml", "[model]\ncw = 1\n\n[optimizer]\nname = 'sgd'\n")
    with pytest.raises(ValueError, match=re.escape("Unknown field in top level: 'optimizer' on line 4")):
        load_run_config(path)


def test_section_must_be_a_table(tmp_path: Path) -> None:
    path = write_file(tmp_path, "run.toml", "model = 3\n")
    with pytest.raises(ValueError, match=re.escape("[model] must be a table")):
        load_run_config(path)


@pytest.mark.parametrize(
    ("content", "message"),
    [
        ('[model]\nattention = "bahdanau"\n', "bahdanau attention is not implemented"),
        ("[train]\npatience = 2.5\n", "patience must be a whole number"),
        ("[loss]\nlemma = -1.0\n", "lemma"),
        ("[corpus]\nsplit = [0.5, 0.1]\n", "split"),
    ],
)
def test_invalid_values_name_the_file(tmp_path: Path, content: str, message: str) -> None:
    path = write_file(tmp_path, "bad.toml", content)
    with pytest.raises(ValueError, match=f"Invalid configuration in {re.escape(str(path))}.*{message}"):
        load_run_config(path)


def test_relative_paths_resolve_next_to_the_file(tmp_path: Path) -> None:
    path = write_file(
        tmp_path,
        "conf/run.toml",
        """\
        [corpus]
        manifest = "../data/hi.manifest"
        cache = "/var/cache/corpus.npz"
        """,
    )

    config = load_run_config(path)

    assert config.corpus.manifest == tmp_path / "conf" / "../data/hi.manifest"
    assert config.corpus.cache == Path("/var/cache/corpus.npz")


def test_overrides_apply_on_top_of_the_file() -> None:
    config = load_run_config(TOY_CONFIG).with_overrides(seed=7, epochs=3, fit_len_max=True)

    assert config.train.seed == 7
    assert config.ga.seed == 7
    assert config.train.max_epochs == 3
    assert config.corpus.fit_len_max
    assert config.model.len_max == 8


def test_overrides_default_to_file_values() -> None:
    config = load_run_config(TOY_CONFIG)
    assert config.with_overrides() == config


def test_dict_round_trip() -> None:
    config = load_run_config(TOY_CONFIG)
    assert RunConfig.from_dict(config.to_dict()) == config
    with pytest.raises(ValueError, match="Unknown config sections: decoder"):
        RunConfig.from_dict({"decoder": {}})


def test_missing_and_malformed_files(tmp_path: Path) -> None:
    with pytest.raises(FileNotFoundError, match="Config file not found"):
        load_run_config(tmp_path / "absent.toml")
    path = write_file(tmp_path, "broken.toml", "[model\n")
    with pytest.raises(ValueError, match="Failed to parse TOML file"):
        load_toml_file(path)


def test_unknown_top_level_key_and_commented_lookalike(tmp_path: Path) -> None:
    path = write_file(
        tmp_path,
        "run.toml",
        """\
        # colour = "red"
        colour = "blue # not a comment"

        [model]
        cw = 1
        """,
    )
    with pytest.raises(ValueError, match=re.escape("Unknown field in top level: 'colour' on line 2")):
        load_run_config(path)
