# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: The morphkit contributors
"""Run configuration: a TOML file with one table per pipeline concern."""

import dataclasses
import tomllib
from collections.abc import Collection, Mapping
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from morphkit.layers import LossWeights
from morphkit.model import ModelConfig
from morphkit.select import GAConfig, RFConfig
from morphkit.train import NEIGHBORHOOD, TUNED_TAGS, TrainConfig

DEFAULT_SPLIT = (0.8, 0.1, 0.1)


def load_toml_file(path: Path) -> dict:
    """Parse a TOML file, reporting the file name on a syntax error."""
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ValueError(f"Failed to parse TOML file {path}: {e}") from e


def validate_known_fields(
    table_name: str | None,
    data: Mapping[str, Any],
    allowed_fields: Collection[str],
    source_file: Path,
) -> None:
    """Raise if a parsed TOML table holds keys no config section declares.

    ``table_name`` is the ``[header]`` the keys were read from, or None for
    the top level, where every key names a section.
    """
    unknown = sorted(set(data) - set(allowed_fields))
    if not unknown:
        return
    lines = source_file.read_text(encoding="utf-8").splitlines()
    located = []
    for name in unknown:
        line_number = _find_field_line(lines, name, table_name)
        located.append(repr(name) if line_number is None else f"{name!r} on line {line_number}")
    suffix = "s" if len(unknown) != 1 else ""
    where = table_name or "top level"
    raise ValueError(f"Unknown field{suffix} in {where}: {', '.join(located)} in {source_file}")


def _find_field_line(lines: list[str], name: str, table_name: str | None) -> int | None:
    table: str | None = None
    for line_number, line in enumerate(lines, start=1):
        stripped = _strip_toml_comment(line).strip()
        if stripped.startswith("["):
            table = stripped
            if table_name is None and table == f"[{name}]":
                return line_number
            continue
        key, equals, _ = stripped.partition("=")
        if table == table_name and equals and key.strip() == name:
            return line_number
    return None


def _strip_toml_comment(line: str) -> str:
    quote: str | None = None
    escaped = False
    for index, char in enumerate(line):
        if escaped:
            escaped = False
            continue
        if char == "\\" and quote == '"':
            escaped = True
            continue
        if char in {'"', "'"}:
            if quote is None:
                quote = char
            elif quote == char:
                quote = None
            continue
        if char == "#" and quote is None:
            return line[:index]
    return line


@dataclass(frozen=True)
class CorpusSection:
    manifest: Path | None = None
    cache: Path | None = None
    split: tuple[float, ...] = DEFAULT_SPLIT
    fit_len_max: bool = False
    truncate: bool = False

    def __post_init__(self) -> None:
        if len(self.split) != 3:
            raise ValueError(f"split needs train, dev and test ratios, got {list(self.split)}")
        if abs(sum(self.split) - 1.0) > 1e-6:
            raise ValueError(f"split ratios must sum to 1, got {list(self.split)}")


@dataclass(frozen=True)
class EvalSection:
    graphemes: bool = False


@dataclass(frozen=True)
class CalibrateSection:
    max_epochs: int = 20
    tuned_tags: tuple[str, ...] = TUNED_TAGS
    neighborhood: tuple[float, ...] = NEIGHBORHOOD
    tolerance: float = 0.005


#: TOML table name -> RunConfig attribute and section type.
SECTIONS: dict[str, type] = {
    "corpus": CorpusSection,
    "model": ModelConfig,
    "train": TrainConfig,
    "loss": LossWeights,
    "ga": GAConfig,
    "rf": RFConfig,
    "eval": EvalSection,
    "calibrate": CalibrateSection,
}


@dataclass(frozen=True)
class RunConfig:
    corpus: CorpusSection = field(default_factory=CorpusSection)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossWeights = field(default_factory=LossWeights.reference)
    ga: GAConfig = field(default_factory=GAConfig)
    rf: RFConfig = field(default_factory=RFConfig)
    eval: EvalSection = field(default_factory=EvalSection)
    calibrate: CalibrateSection = field(default_factory=CalibrateSection)
    source: Path | None = field(default=None, compare=False)

    def with_overrides(
        self,
        *,
        seed: int | None = None,
        epochs: int | None = None,
        fit_len_max: bool | None = None,
    ) -> "RunConfig":
        """Apply command-line flags on top of the file values."""
        out = self
        if seed is not None:
            out = replace(out, train=replace(out.train, seed=seed), ga=replace(out.ga, seed=seed))
        if epochs is not None:
            out = replace(out, train=replace(out.train, max_epochs=epochs))
        if fit_len_max is not None:
            out = replace(out, corpus=replace(out.corpus, fit_len_max=fit_len_max))
        return out

    def to_dict(self) -> dict[str, Any]:
        return {name: _section_to_dict(getattr(self, name)) for name in SECTIONS}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base: Path | None = None) -> "RunConfig":
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ValueError(f"Unknown config sections: {', '.join(sorted(unknown))}")
        sections = {
            name: _build_section(SECTIONS[name], data[name], base) for name in SECTIONS if name in data
        }
        return cls(**sections)


def _section_to_dict(section: Any) -> dict[str, Any]:
    out = {}
    for f in fields(section):
        value = getattr(section, f.name)
        if isinstance(value, tuple):
            value = list(value)
        elif isinstance(value, Path):
            value = str(value)
        out[f.name] = value
    return out


def _build_section(cls: type, data: Mapping[str, Any], base: Path | None) -> Any:
    values: dict[str, Any] = {}
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    for key, value in data.items():
        if isinstance(value, list):
            value = tuple(value)
        elif isinstance(value, str) and "Path" in str(types.get(key, "")):
            path = Path(value)
            value = base / path if base is not None and not path.is_absolute() else path
        values[key] = value
    return cls(**values)


def load_run_config(path: Path) -> RunConfig:
    """Read a run configuration; relative paths resolve next to the file.

    Raises:
        FileNotFoundError: If the file does not exist
        ValueError: On a syntax error, an unknown key or an invalid value
    """
    data = load_toml_file(path)
    validate_known_fields(None, data, SECTIONS, path)
    for name, cls in SECTIONS.items():
        table = data.get(name, {})
        if not isinstance(table, dict):
            raise ValueError(f"{path}: [{name}] must be a table")
        validate_known_fields(f"[{name}]", table, [f.name for f in fields(cls)], path)
    try:
        config = RunConfig.from_dict(data, base=path.parent)
    except (TypeError, ValueError) as e:
        raise ValueError(f"Invalid configuration in {path}: {e}") from e
    return replace(config, source=path)
