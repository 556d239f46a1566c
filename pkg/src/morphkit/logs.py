# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: The morphkit contributors
"""Console logging setup and log message helpers."""

import logging

_HANDLER_NAME = "morphkit-console"


def plural(num: int, plural_form: str = "s") -> str:
    return plural_form if num != 1 else ""


def setup_logging(verbose: bool = False) -> None:
    """Install the console handler on the root logger.

    Calling this again (several CLI invocations in one process, as in tests)
    replaces the handler instead of stacking a second one.

    Args:
        verbose: If True, set log level to DEBUG; otherwise INFO
    """
    formatter = logging.Formatter(
        "[%(asctime)s] [%(levelname)s] %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S %z",
    )

    handler = logging.StreamHandler()
    handler.set_name(_HANDLER_NAME)
    handler.setFormatter(formatter)

    root_logger = logging.getLogger()
    for existing in list(root_logger.handlers):
        if existing.get_name() == _HANDLER_NAME:
            root_logger.removeHandler(existing)
    root_logger.addHandler(handler)
    root_logger.setLevel(logging.DEBUG if verbose else logging.INFO)
