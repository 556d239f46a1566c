# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: The morphkit contributors
"""Exception types shared across the pipeline."""

from pathlib import Path


class CorpusError(ValueError):
    """Raised for malformed treebank, manifest or corpus cache input.

    ``path`` and ``line`` locate the offending record when known, and are
    folded into the message so callers can print it as is.
    """

    def __init__(
        self, message: str, path: Path | None = None, line: int | None = None
    ) -> None:
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")


class IngestionError(CorpusError):
    """Raised when a token cannot be encoded, such as a word over len_max."""

    def __init__(
        self,
        token: str,
        message: str,
        path: Path | None = None,
        line: int | None = None,
    ) -> None:
        self.token = token
        super().__init__(f"token {token!r}: {message}", path, line)


class TrainingError(RuntimeError):
    """Raised when a training step produces a non-finite loss."""

    def __init__(self, task: str, epoch: int, step: int, value: float) -> None:
        self.task = task
        self.epoch = epoch
        self.step = step
        super().__init__(
            f"Non-finite {task} loss ({value}) at epoch {epoch}, step {step}"
        )


class StageError(Exception):
    """Raised when a pipeline stage fails, wrapping the underlying error."""

    def __init__(self, stage: str, cause: Exception) -> None:
        self.stage = stage
        self.cause = cause
        super().__init__(f"{type(cause).__name__}: {cause}")
