# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: The morphkit contributors
"""Artifact writing: atomic file replacement, YAML, CSV and text reports.

Every file the pipeline produces goes through :func:`write_atomic`, so an
interrupted run leaves either the previous artifact or the new one, never a
truncated file.
"""

import csv
import io
import logging
import os
import tempfile
from collections.abc import Callable, Iterable, Mapping, Sequence
from pathlib import Path
from typing import IO, Any

import pystache
import yaml
from pystache.common import MissingTags

logger = logging.getLogger(__name__)

YAML_LOADER: type[yaml.SafeLoader] = getattr(yaml, "CSafeLoader", yaml.SafeLoader)
YAML_DUMPER: type[yaml.SafeDumper] = getattr(yaml, "CSafeDumper", yaml.SafeDumper)


def write_atomic(
    path: Path, write: Callable[[IO[Any]], None], binary: bool = False
) -> Path:
    """Write ``path`` through a temporary sibling file and rename it in place.

    Args:
        path: Destination file; parent directories are created
        write: Called with the open temporary file
        binary: Open the temporary file in binary mode

    Returns:
        The destination path
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        if binary:
            with os.fdopen(fd, "wb") as f:
                write(f)
        else:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
                write(f)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    logger.debug(f"Wrote {path}")
    return path


def write_text(path: Path, text: str) -> Path:
    return write_atomic(path, lambda f: f.write(text))


def dump_yaml(doc: Any) -> str:
    """Serialize a single YAML document in block style, keeping key order."""
    stream = io.StringIO()
    yaml.dump(
        doc,
        stream,
        Dumper=YAML_DUMPER,
        default_flow_style=False,
        sort_keys=False,
        allow_unicode=True,
    )
    return stream.getvalue()


def load_yaml(content: str) -> Any:
    return yaml.load(content, Loader=YAML_LOADER)


def write_yaml(path: Path, doc: Any) -> Path:
    return write_text(path, dump_yaml(doc))


def read_yaml(path: Path) -> Any:
    """Parse a YAML file, reporting the file name on a syntax error."""
    try:
        return load_yaml(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ValueError(f"Failed to parse YAML file {path}: {e}") from e


def write_csv(
    path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]
) -> Path:
    """Write a CSV file with a header row; floats keep full repr precision."""

    def write(f: IO[Any]) -> None:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(value) for value in row])

    return write_atomic(path, write)


def _csv_cell(value: Any) -> Any:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return value


def render_template(template: str, context: Mapping[str, Any]) -> str:
    """Render a mustache template as plain text; a missing key is an error."""
    renderer = pystache.Renderer(missing_tags=MissingTags.strict, escape=lambda s: s)
    return renderer.render(template, context)
