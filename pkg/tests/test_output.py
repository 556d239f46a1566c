# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: The morphkit contributors
"""Tests for artifact writing and logging helpers."""

import logging
from pathlib import Path

import pytest
from pystache.context import KeyNotFoundError

from morphkit.logs import plural, setup_logging
from morphkit.output import (
    dump_yaml,
    read_yaml,
    render_template,
    write_atomic,
    write_csv,
    write_text,
    write_yaml,
)


def test_write_atomic_creates_parents(tmp_path: Path) -> None:
    path = write_text(tmp_path / "a" / "b" / "out.txt", "hello\n")
    assert path.read_text() == "hello\n"


def test_failed_write_keeps_previous_file(tmp_path: Path) -> None:
    path = write_text(tmp_path / "report.txt", "old\n")

    def explode(f) -> None:
        f.write("half")
        raise RuntimeError("disk on fire")

    with pytest.raises(RuntimeError, match="disk on fire"):
        write_atomic(path, explode)

    assert path.read_text() == "old\n"
    assert [p.name for p in tmp_path.iterdir()] == ["report.txt"]


def test_csv_cells(tmp_path: Path) -> None:
    path = write_csv(tmp_path / "t.csv", ("name", "flag", "value"), [("a", True, 0.1), ("b", False, 2)])
    assert path.read_text() == "name,flag,value\na,1,0.1\nb,0,2\n"


def test_yaml_keeps_key_order_and_unicode(tmp_path: Path) -> None:
    doc = {"zeta": 1, "alpha": ["लड़का", "ghar"]}
    text = dump_yaml(doc)
    assert text.index("zeta") < text.index("alpha")
    assert "लड़का" in text
    assert read_yaml(write_yaml(tmp_path / "d.yaml", doc)) == doc


def test_read_yaml_names_the_file(tmp_path: Path) -> None:
    path = write_text(tmp_path / "bad.yaml", "key: [unclosed\n")
    with pytest.raises(ValueError, match="Failed to parse YAML file .*bad.yaml"):
        read_yaml(path)


def test_render_template_is_strict_and_unescaped() -> None:
    assert render_template("{{a}} & {{b}}", {"a": "<x>", "b": 1}) == "<x> & 1"
    with pytest.raises(KeyNotFoundError):
        render_template("{{missing}}", {})


@pytest.mark.parametrize(("count", "suffix"), [(0, "s"), (1, ""), (2, "s")])
def test_plural(count: int, suffix: str) -> None:
    assert plural(count) == suffix


def test_setup_logging_replaces_its_handler() -> None:
    root = logging.getLogger()
    before, level = list(root.handlers), root.level
    try:
        setup_logging()
        setup_logging(verbose=True)
        ours = [h for h in root.handlers if h.get_name() == "morphkit-console"]
        assert len(ours) == 1
        assert root.level == logging.DEBUG
    finally:
        for handler in list(root.handlers):
            if handler not in before:
                root.removeHandler(handler)
        root.setLevel(level)
