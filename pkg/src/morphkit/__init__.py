# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: The morphkit contributors
"""morphkit - Context-aware joint morphological analysis for Hindi and Urdu."""

from importlib import import_module
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = str(import_module("morphkit._version").__version__)
except ModuleNotFoundError:
    try:
        __version__ = version("morphkit")
    except PackageNotFoundError:
        __version__ = "0.0.0"


def get_version() -> str:
    """Return the version of the running morphkit."""
    return __version__


__all__ = [
    "__version__",
    "get_version",
]
