# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: The morphkit contributors
"""Surface and phonological features of a token in context.

Every token maps to a vector over one fixed, named pool of slots:

- surface slots: ``LoT``, ``is_first``, ``is_last``, ``pref-1..3``,
  ``suff-1..4``, ``PW`` and ``NW``
- per-type character counts: ``#vowels``, ``#vowel-modifiers``,
  ``#consonants``, ``#punct``, ``#digits``, ``#halant``, ``#nuktas``
- per-attribute-value counts such as ``place:D`` or ``manner:SN``, and
  ``is_diphthong``

Character attributes come from a phonology table (see
:func:`load_phono_table`). Categorical slots (prefixes, suffixes and the
neighbouring words) are stable hashes: scaled into [0, 1] for the network and
left as raw integer codes for the random forest.
"""

import hashlib
import logging
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, fields
from functools import cache
from importlib import resources
from pathlib import Path
from typing import Literal

import numpy as np

from morphkit.output import load_yaml

logger = logging.getLogger(__name__)

Encoding = Literal["neural", "codes"]

SURFACE_SLOTS = (
    "LoT",
    "is_first",
    "is_last",
    "pref-1",
    "pref-2",
    "pref-3",
    "suff-1",
    "suff-2",
    "suff-3",
    "suff-4",
    "PW",
    "NW",
)

#: Character type -> count slot.
TYPE_SLOTS = {
    "vowel": "#vowels",
    "vowel-modifier": "#vowel-modifiers",
    "consonant": "#consonants",
    "punct": "#punct",
    "digit": "#digits",
    "halant": "#halant",
    "nukta": "#nuktas",
}

#: Attribute -> the values it takes, in slot order.
ATTRIBUTE_VALUES: dict[str, tuple[str, ...]] = {
    "aspiration": ("V", "VL"),
    "origin": ("B", "DV", "DN"),
    "poa": ("D", "LD", "G"),
    "modifier": ("AK", "AV", "VG"),
    "height": ("F", "M", "B"),
    "length": ("L", "S", "M"),
    "type1": ("L", "LM", "UM", "LH", "H"),
    "type2": ("S", "AS", "AV", "V", "SN"),
    "place": ("DV", "DN", "D", "V", "T", "M", "KT", "JM", "SY"),
    "manner": ("SP", "N", "PS", "PK", "SN", "AS", "PV", "PR"),
}


def _phonological_slots() -> tuple[str, ...]:
    slots: list[str] = list(TYPE_SLOTS.values())
    for attribute, values in ATTRIBUTE_VALUES.items():
        slots.extend(f"{attribute}:{value}" for value in values)
        if attribute == "origin":
            slots.append("is_diphthong")
    return tuple(slots)


PHONOLOGICAL_SLOTS = _phonological_slots()
FEATURE_POOL = (*SURFACE_SLOTS, *PHONOLOGICAL_SLOTS)
SLOT_INDEX = {name: i for i, name in enumerate(FEATURE_POOL)}
CATEGORICAL_SLOTS = frozenset(
    {"pref-1", "pref-2", "pref-3", "suff-1", "suff-2", "suff-3", "suff-4", "PW", "NW"}
)

#: Pool size quoted for the Hindi feature set; the named pool here is larger
#: because the reference optimized lists use codes the category table omits.
DOCUMENTED_POOL_SIZE = 54

SENTENCE_START = "<s>"
SENTENCE_END = "</s>"
_HASH_SCALE = float(2**32 - 1)


@dataclass(frozen=True)
class PhonoRecord:
    """Attributes of one character; ``None`` where an attribute does not apply."""

    type: str | None = None
    aspiration: str | None = None
    origin: str | None = None
    diphthong: bool = False
    poa: str | None = None
    modifier: str | None = None
    height: str | None = None
    length: str | None = None
    type1: str | None = None
    type2: str | None = None
    place: str | None = None
    manner: str | None = None

    @property
    def known(self) -> bool:
        return self.type is not None

    def slots(self) -> list[str]:
        """Pool slots this character adds one to."""
        out = []
        if self.type is not None:
            out.append(TYPE_SLOTS[self.type])
        for attribute in ATTRIBUTE_VALUES:
            value = getattr(self, attribute)
            if value is not None:
                out.append(f"{attribute}:{value}")
        if self.diphthong:
            out.append("is_diphthong")
        return out


NO_ATTRIBUTES = PhonoRecord()
_RECORD_KEYS = {f.name for f in fields(PhonoRecord)}


@dataclass(frozen=True)
class PhonoTable:
    records: dict[str, PhonoRecord]
    schema: str = "brahmi-phonology"
    pool_size: int = len(FEATURE_POOL)
    source_text: str = field(default="", repr=False)

    def lookup(self, char: str) -> PhonoRecord:
        return self.records.get(char, NO_ATTRIBUTES)


def _parse_char(spec: str) -> str:
    if spec.upper().startswith("U+"):
        return chr(int(spec[2:], 16))
    if len(spec) != 1:
        raise ValueError(f"expected one character or U+XXXX, got {spec!r}")
    return spec


def _parse_record(text: str) -> PhonoRecord:
    values: dict[str, object] = {}
    for item in text.split(";"):
        item = item.strip()
        if not item or item == "-":
            continue
        if "=" not in item:
            raise ValueError(f"expected key=value, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        if key not in _RECORD_KEYS:
            raise ValueError(f"unknown attribute {key!r}")
        if key == "type":
            if value not in TYPE_SLOTS:
                raise ValueError(f"unknown character type {value!r}")
        elif key == "diphthong":
            if value not in {"yes", "no"}:
                raise ValueError(f"diphthong must be yes or no, got {value!r}")
            values[key] = value == "yes"
            continue
        elif value not in ATTRIBUTE_VALUES[key]:
            raise ValueError(f"unknown {key} value {value!r}")
        values[key] = value
    return PhonoRecord(**values)  # type: ignore[arg-type]


def parse_phono_table(text: str, source: str = "<string>") -> PhonoTable:
    """Parse phonology table text.

    The first non-comment line is a header such as
    ``!schema=brahmi-phonology pool=64``; every other line is
    ``<char or U+XXXX><TAB>key=value;key=value``. Lines starting with ``#``
    are comments.

    Raises:
        ValueError: On a malformed line, naming ``source`` and the line
    """
    records: dict[str, PhonoRecord] = {}
    header: dict[str, str] | None = None
    for line_number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            if header is None:
                if not line.startswith("!"):
                    raise ValueError("expected a '!schema=... pool=N' header")
                header = dict(
                    part.split("=", 1) for part in line[1:].split() if "=" in part
                )
                continue
            char_spec, _, attributes = line.partition("\t")
            char = _parse_char(char_spec.strip())
            if char in records:
                raise ValueError(f"duplicate entry for {char!r}")
            records[char] = _parse_record(attributes)
        except ValueError as e:
            raise ValueError(f"{source}:{line_number}: {e}") from e
    if header is None:
        raise ValueError(f"{source}: missing phonology table header")
    pool_size = int(header.get("pool", len(FEATURE_POOL)))
    if pool_size != len(FEATURE_POOL):
        raise ValueError(
            f"{source}: table declares a pool of {pool_size} slots, "
            f"this release extracts {len(FEATURE_POOL)}"
        )
    return PhonoTable(
        records=records,
        schema=header.get("schema", "brahmi-phonology"),
        pool_size=pool_size,
        source_text=text,
    )


def load_phono_table(path: Path | None = None) -> PhonoTable:
    """Load a phonology table file, or the bundled Devanagari/Perso-Arabic one."""
    if path is None:
        text = resources.files("morphkit").joinpath("data/phonology.tsv").read_text(
            encoding="utf-8"
        )
        source = "morphkit/data/phonology.tsv"
    else:
        if not path.exists():
            raise FileNotFoundError(f"Phonology table not found: {path}")
        text = path.read_text(encoding="utf-8")
        source = str(path)
    table = parse_phono_table(text, source)
    if table.pool_size != DOCUMENTED_POOL_SIZE:
        logger.warning(
            f"Feature pool has {table.pool_size} slots, the documented Hindi pool "
            f"has {DOCUMENTED_POOL_SIZE}"
        )
    logger.debug(f"Loaded {len(table.records)} phonology entries from {source}")
    return table


@dataclass(frozen=True, eq=False)
class FeatureVector:
    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        if len(self.names) != len(self.values):
            raise ValueError(
                f"{len(self.names)} slot names for {len(self.values)} values"
            )

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def __len__(self) -> int:
        return len(self.names)

    def as_dict(self) -> dict[str, float]:
        return {name: float(v) for name, v in zip(self.names, self.values, strict=True)}


@dataclass(frozen=True)
class FeatureMask:
    """Which pool slots a tag head consumes."""

    pool: tuple[str, ...]
    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.pool) != len(self.bits):
            raise ValueError(
                f"Mask has {len(self.bits)} bits for a pool of {len(self.pool)}"
            )
        if any(bit not in (0, 1) for bit in self.bits):
            raise ValueError("Mask bits must be 0 or 1")

    @classmethod
    def all(cls, pool: Sequence[str] = FEATURE_POOL) -> "FeatureMask":
        return cls(tuple(pool), (1,) * len(pool))

    @classmethod
    def none(cls, pool: Sequence[str] = FEATURE_POOL) -> "FeatureMask":
        return cls(tuple(pool), (0,) * len(pool))

    @classmethod
    def from_names(
        cls, names: Iterable[str], pool: Sequence[str] = FEATURE_POOL
    ) -> "FeatureMask":
        chosen = set(names)
        unknown = chosen - set(pool)
        if unknown:
            raise ValueError(f"Unknown feature names: {', '.join(sorted(unknown))}")
        return cls(tuple(pool), tuple(int(name in chosen) for name in pool))

    @classmethod
    def from_bitstring(
        cls, bits: str, pool: Sequence[str] = FEATURE_POOL
    ) -> "FeatureMask":
        if set(bits) - {"0", "1"}:
            raise ValueError(f"Invalid mask bitstring {bits!r}")
        return cls(tuple(pool), tuple(int(b) for b in bits))

    @property
    def bitstring(self) -> str:
        return "".join(str(bit) for bit in self.bits)

    @property
    def count(self) -> int:
        return sum(self.bits)

    @property
    def selected(self) -> tuple[str, ...]:
        return tuple(name for name, bit in zip(self.pool, self.bits, strict=True) if bit)

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(np.array(self.bits, dtype=bool))


def apply_mask(vector: FeatureVector, mask: FeatureMask) -> FeatureVector:
    """Keep the slots whose mask bit is set, in pool order."""
    if len(vector) != len(mask.bits):
        raise ValueError(
            f"Feature vector has {len(vector)} slots, mask has {len(mask.bits)}"
        )
    keep = mask.indices
    return FeatureVector(
        tuple(vector.names[i] for i in keep), vector.values[keep].copy()
    )


def category_code(text: str) -> int:
    """Stable 32-bit code of a categorical value."""
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=4).digest(), "big")


def _categorical(text: str, encoding: Encoding) -> float:
    code = category_code(text)
    return code / _HASH_SCALE if encoding == "neural" else float(code)


def extract_surface(
    token: str,
    position: int,
    prev_token: str | None,
    next_token: str | None,
    encoding: Encoding = "neural",
) -> FeatureVector:
    """Length, position flags, affixes and neighbours of a token.

    An affix longer than the token falls back to the whole token; a missing
    neighbour encodes as a sentence-boundary sentinel.
    """
    if not token:
        raise ValueError("Cannot extract features from an empty token")
    values = [
        float(len(token)),
        float(position == 0),
        float(next_token is None),
        *(_categorical(token[:k], encoding) for k in (1, 2, 3)),
        *(_categorical(token[-k:], encoding) for k in (1, 2, 3, 4)),
        _categorical(prev_token if prev_token is not None else SENTENCE_START, encoding),
        _categorical(next_token if next_token is not None else SENTENCE_END, encoding),
    ]
    return FeatureVector(SURFACE_SLOTS, np.array(values, dtype=np.float64))


def extract_phonological(token: str, table: PhonoTable) -> FeatureVector:
    """Per-type and per-attribute-value character counts of a token.

    Characters without a table entry add to no slot.
    """
    index = {name: i for i, name in enumerate(PHONOLOGICAL_SLOTS)}
    counts = np.zeros(len(PHONOLOGICAL_SLOTS), dtype=np.float64)
    for char in token:
        for slot in table.lookup(char).slots():
            counts[index[slot]] += 1
    return FeatureVector(PHONOLOGICAL_SLOTS, counts)


def extract_features(
    surfaces: Sequence[str],
    index: int,
    table: PhonoTable,
    encoding: Encoding = "neural",
) -> FeatureVector:
    """The full pool vector of the token at ``index`` in a sentence."""
    prev_token = surfaces[index - 1] if index > 0 else None
    next_token = surfaces[index + 1] if index + 1 < len(surfaces) else None
    surface = extract_surface(surfaces[index], index, prev_token, next_token, encoding)
    phonological = extract_phonological(surfaces[index], table)
    return FeatureVector(
        FEATURE_POOL, np.concatenate([surface.values, phonological.values])
    )


def sentence_features(
    surfaces: Sequence[str], table: PhonoTable, encoding: Encoding = "neural"
) -> np.ndarray:
    """Pool vectors for every token of a sentence, one row per token."""
    return np.stack(
        [extract_features(surfaces, i, table, encoding).values for i in range(len(surfaces))]
    )


_CATEGORY_PATTERN = re.compile(
    r"(Surface|Type-1|Type-2|Type|Aspirated|Origin|Is_diphthong|PoA|Modifier|"
    r"Height|Length|Place|Manner)\s*:*"
)

_CATEGORY_ATTRIBUTE = {
    "Aspirated": "aspiration",
    "Origin": "origin",
    "PoA": "poa",
    "Modifier": "modifier",
    "Height": "height",
    "Length": "length",
    "Type-1": "type1",
    "Type-2": "type2",
    "Place": "place",
    "Manner": "manner",
}

_TYPE_ALIASES = {
    "#vowels": "#vowels",
    "#vowel-modifiers": "#vowel-modifiers",
    "#cons": "#consonants",
    "#consonants": "#consonants",
    "#punct": "#punct",
    "#punctuation": "#punct",
    "#punctuations": "#punct",
    "#digits": "#digits",
    "#halant": "#halant",
    "#nukta": "#nuktas",
    "#nuktas": "#nuktas",
}

#: Value codes the optimized lists spell differently from the pool.
_VALUE_ALIASES = {"manner:S": "manner:SN"}


def _expand_alternatives(item: str) -> list[str]:
    """``pref-1/3`` -> ``pref-1``, ``pref-3``; ``PW/NW`` -> ``PW``, ``NW``."""
    pieces = [p for p in item.split("/") if p]
    if not pieces:
        return []
    first = pieces[0]
    stem = first.rsplit("-", 1)[0] + "-" if "-" in first else ""
    out = [first]
    for piece in pieces[1:]:
        out.append(stem + piece if stem and piece.isdigit() else piece)
    return out


def parse_feature_list(text: str) -> list[str]:
    """Resolve an optimized-feature description to pool slot names.

    The description is a run of categories, each followed by its values,
    such as ``Surface: LoT, pref-1/3; Type: #punct; PoA: G; Manner: SP/PK``.

    Raises:
        ValueError: If a name does not resolve to a pool slot
    """
    matches = list(_CATEGORY_PATTERN.finditer(text))
    names: list[str] = []
    for i, match in enumerate(matches):
        category = match.group(1)
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        raw_values = [v for v in re.split(r"[,;\s]+", text[match.end() : end]) if v]
        if category == "Is_diphthong":
            resolved = ["is_diphthong"]
        elif category == "Surface":
            resolved = [n for v in raw_values for n in _expand_alternatives(v)]
        elif category == "Type":
            resolved = []
            for v in raw_values:
                if v not in _TYPE_ALIASES:
                    raise ValueError(f"Unknown type count {v!r}")
                resolved.append(_TYPE_ALIASES[v])
        else:
            attribute = _CATEGORY_ATTRIBUTE[category]
            resolved = []
            for v in raw_values:
                for code in v.split("/"):
                    if code:
                        name = f"{attribute}:{code}"
                        resolved.append(_VALUE_ALIASES.get(name, name))
        for name in resolved:
            if name not in SLOT_INDEX:
                raise ValueError(f"Feature {name!r} is not in the pool")
            if name not in names:
                names.append(name)
    return names


@cache
def _reference_lists() -> dict[str, dict[str, str]]:
    text = resources.files("morphkit").joinpath("data/reference_features.yaml").read_text(
        encoding="utf-8"
    )
    return load_yaml(text)


def reference_languages() -> tuple[str, ...]:
    return tuple(_reference_lists())


def reference_mask(language: str, tag: str) -> FeatureMask:
    """The bundled optimized feature set for a language and tag."""
    lists = _reference_lists()
    if language not in lists:
        raise ValueError(
            f"No reference features for language {language!r}; "
            f"known: {', '.join(lists)}"
        )
    if tag not in lists[language]:
        raise ValueError(f"No reference features for tag {tag!r} in {language}")
    return FeatureMask.from_names(parse_feature_list(lists[language][tag]))
