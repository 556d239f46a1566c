# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: The morphkit contributors
"""Dense tensors with tape-based reverse-mode differentiation.

A :class:`Tensor` wraps a read-only numpy array. Operations on tensors record
themselves on the active :class:`Tape` (entered with ``with Tape() as tape``)
when at least one input requires a gradient; outside a tape they only compute
values, which is how inference runs.

The primitive set is closed: matmul, add, mul, sigmoid, tanh, relu, exp, log,
concat, slicing, sum, mean, max and softmax, plus the shape plumbing the
network needs (reshape, swapaxes, stack and row gathering with :func:`take`).
Broadcasting is limited to one operand whose shape is a suffix of the other's,
which covers bias vectors and scalars.
"""

import io
import logging
from collections.abc import Callable, Iterator, Mapping, MutableMapping, Sequence
from contextvars import ContextVar
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from morphkit.output import write_atomic

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1

_PARAM_PREFIX = "param/"
_FORMAT_KEY = "__format_version__"
_MANIFEST_KEY = "__manifest__"

ArrayLike = Any
BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_active_tape: ContextVar["Tape | None"] = ContextVar("morphkit_tape", default=None)


class Tensor:
    """An immutable n-dimensional array of reals, optionally a gradient leaf."""

    __slots__ = ("data", "name", "requires_grad")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: str | None = None,
        dtype: Any = None,
    ) -> None:
        array = np.array(data, dtype=dtype)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)
        array.setflags(write=False)
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.name = name

    @classmethod
    def _wrap(cls, array: np.ndarray, requires_grad: bool) -> "Tensor":
        # Takes ownership of a freshly computed array without copying it.
        out = cls.__new__(cls)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)
        array.setflags(write=False)
        out.data = array
        out.requires_grad = requires_grad
        out.name = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other: "Tensor | float") -> "Tensor":
        return add(self, other)

    def __radd__(self, other: float) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: "Tensor | float") -> "Tensor":
        return add(self, neg(_lift(other, self)))

    def __rsub__(self, other: float) -> "Tensor":
        return add(other, neg(self))

    def __mul__(self, other: "Tensor | float") -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: float) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: float) -> "Tensor":
        return mul(self, 1.0 / other)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        return getitem(self, index)


@dataclass(frozen=True)
class _Record:
    output: Tensor
    inputs: tuple[Tensor, ...]
    backward: BackwardFn


class Tape:
    """Ordered record of the operations of one forward pass.

    Records are appended as operations execute, so every input is recorded
    before its consumers. A tape belongs to the thread and context that
    entered it.
    """

    def __init__(self) -> None:
        self.records: list[_Record] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc_info: object) -> None:
        if self._token is not None:
            _active_tape.reset(self._token)
            self._token = None

    def __len__(self) -> int:
        return len(self.records)


def _lift(value: "Tensor | ArrayLike", like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype))


def _result(data: np.ndarray, inputs: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    requires_grad = any(t.requires_grad for t in inputs)
    out = Tensor._wrap(np.asarray(data), requires_grad)
    tape = _active_tape.get()
    if tape is not None and requires_grad:
        tape.records.append(_Record(out, tuple(inputs), backward))
    return out


def _suffix_broadcast(a: Tensor, b: Tensor, op: str) -> tuple[Tensor, Tensor, bool]:
    """Order operands so the second one's shape is a suffix of the first's.

    Returns the ordered pair and whether they were swapped.
    """
    if a.shape == b.shape:
        return a, b, False
    if b.ndim <= a.ndim and a.shape[a.ndim - b.ndim :] == b.shape:
        return a, b, False
    if a.ndim <= b.ndim and b.shape[b.ndim - a.ndim :] == a.shape:
        return b, a, True
    raise ValueError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}")


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    lead = grad.ndim - len(shape)
    if lead > 0:
        grad = grad.sum(axis=tuple(range(lead)))
    return grad


def add(a: "Tensor | float", b: "Tensor | float") -> Tensor:
    if not isinstance(a, Tensor):
        a = _lift(a, _lift(b, Tensor(0.0)))
    b = _lift(b, a)
    big, small, _ = _suffix_broadcast(a, b, "add")

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return g, _reduce_to(g, small.shape)

    return _result(big.data + small.data, (big, small), backward)


def mul(a: "Tensor | float", b: "Tensor | float") -> Tensor:
    if not isinstance(a, Tensor):
        a = _lift(a, _lift(b, Tensor(0.0)))
    b = _lift(b, a)
    big, small, _ = _suffix_broadcast(a, b, "mul")

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return g * small.data, _reduce_to(g * big.data, small.shape)

    return _result(big.data * small.data, (big, small), backward)


def neg(a: Tensor) -> Tensor:
    return _result(-a.data, (a,), lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes.

    ``b`` is either a matrix shared across the leading axes of ``a`` or a
    batch of matrices with the same leading shape.
    """
    if a.ndim < 1 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: shape mismatch {a.shape} @ {b.shape}")
    if b.ndim > 2 and (a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2]):
        raise ValueError(f"matmul: batch shape mismatch {a.shape} @ {b.shape}")

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grad_a = g @ np.swapaxes(b.data, -1, -2)
        if b.ndim == 2:
            grad_b = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, b.shape[-1])
        else:
            grad_b = np.swapaxes(a.data, -1, -2) @ g
        return grad_a, grad_b

    return _result(a.data @ b.data, (a, b), backward)


def sigmoid(a: Tensor) -> Tensor:
    y = 0.5 * (np.tanh(0.5 * a.data) + 1.0)
    return _result(y, (a,), lambda g: (g * y * (1.0 - y),))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _result(y, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a: Tensor) -> Tensor:
    positive = a.data > 0
    return _result(np.where(positive, a.data, 0.0), (a,), lambda g: (g * positive,))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _result(y, (a,), lambda g: (g * y,))


def log(a: Tensor, floor: float | None = None) -> Tensor:
    """Natural logarithm; inputs below ``floor`` are clamped to it.

    Clamped positions receive zero gradient.
    """
    x = a.data
    if floor is not None:
        clamped = x < floor
        safe = np.where(clamped, floor, x)
    else:
        clamped = np.zeros(x.shape, dtype=bool)
        safe = x

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (np.where(clamped, 0.0, g / safe),)

    return _result(np.log(safe), (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ValueError("concat: no tensors given")
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(
            t.shape[i] != tensors[0].shape[i] for i in range(ndim) if i != axis
        ):
            raise ValueError(
                f"concat: shape mismatch {tensors[0].shape} and {t.shape} on axis {axis}"
            )
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g: np.ndarray) -> list[np.ndarray]:
        return np.split(g, splits, axis=axis)

    return _result(
        np.concatenate([t.data for t in tensors], axis=axis), tensors, backward
    )


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ValueError("stack: no tensors given")
    for t in tensors[1:]:
        if t.shape != tensors[0].shape:
            raise ValueError(f"stack: shape mismatch {tensors[0].shape} and {t.shape}")
    out = np.stack([t.data for t in tensors], axis=axis)
    axis = axis % out.ndim

    def backward(g: np.ndarray) -> list[np.ndarray]:
        return [np.take(g, i, axis=axis) for i in range(len(tensors))]

    return _result(out, tensors, backward)


def _is_basic_index(index: Any) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(
        item is None or item is Ellipsis or isinstance(item, (slice, int, np.integer))
        for item in items
    )


def getitem(a: Tensor, index: Any) -> Tensor:
    basic = _is_basic_index(index)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros(a.shape, dtype=g.dtype)
        if basic:
            # Basic indexing addresses each element at most once.
            grad[index] = g
        else:
            np.add.at(grad, index, g)
        return (grad,)

    return _result(a.data[index], (a,), backward)


def take(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of ``table``; the output shape is ``ids.shape + row shape``."""
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ValueError(f"take: ids must be integers, got {ids.dtype}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ValueError(
            f"take: id out of range [0, {table.shape[0]}): "
            f"min {ids.min()}, max {ids.max()}"
        )

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros(table.shape, dtype=g.dtype)
        np.add.at(grad, ids, g)
        return (grad,)

    return _result(table.data[ids], (table,), backward)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    out = a.data.reshape(tuple(shape))
    return _result(out, (a,), lambda g: (g.reshape(a.shape),))


def swapaxes(a: Tensor, axis1: int, axis2: int) -> Tensor:
    out = np.swapaxes(a.data, axis1, axis2)
    return _result(out, (a,), lambda g: (np.swapaxes(g, axis1, axis2),))


def _expand(g: np.ndarray, shape: tuple[int, ...], axis: int | None, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def sum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.sum(a.data, axis=axis, keepdims=keepdims)
    return _result(out, (a,), lambda g: (_expand(g, a.shape, axis, keepdims),))


def mean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else a.shape[axis]
    out = np.mean(a.data, axis=axis, keepdims=keepdims)
    return _result(
        out, (a,), lambda g: (_expand(g, a.shape, axis, keepdims) / count,)
    )


def max(a: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:  # noqa: A001
    """Maximum along ``axis``; ties route the gradient to the first maximum."""
    axis = axis % a.ndim
    first = np.expand_dims(np.argmax(a.data, axis=axis), axis)
    out = np.take_along_axis(a.data, first, axis=axis)
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros(a.shape, dtype=g.dtype)
        g_kept = g if keepdims else np.expand_dims(g, axis)
        np.put_along_axis(grad, first, g_kept, axis=axis)
        return (grad,)

    return _result(out, (a,), backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return _result(y, (a,), backward)


class Gradients(Mapping[str, np.ndarray]):
    """Gradients of a loss, looked up by leaf tensor or by parameter name.

    A leaf the loss does not depend on has a zero gradient.
    """

    def __init__(self, leaves: dict[int, tuple[Tensor, np.ndarray]]) -> None:
        self._leaves = leaves
        self._named: dict[str, np.ndarray] = {}

    def of(self, tensor: Tensor) -> np.ndarray:
        entry = self._leaves.get(id(tensor))
        if entry is None or entry[0] is not tensor:
            return np.zeros(tensor.shape, dtype=tensor.dtype)
        return entry[1]

    def bind(self, params: "Parameters") -> "Gradients":
        """Index the gradients of ``params`` by parameter name."""
        self._named = {name: self.of(tensor) for name, tensor in params.items()}
        return self

    def __getitem__(self, key: str) -> np.ndarray:
        return self._named[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._named)

    def __len__(self) -> int:
        return len(self._named)

    def global_norm(self, names: Sequence[str] | None = None) -> float:
        selected = self._named if names is None else {n: self._named[n] for n in names}
        return float(np.sqrt(np.sum([np.sum(g * g) for g in selected.values()])))


def backward(tape: Tape, loss: Tensor) -> Gradients:
    """Differentiate ``loss`` with respect to every leaf that requires a gradient.

    Contributions through fan-out are summed. Traversal is the reverse of the
    tape, so repeated calls give bit-identical results.

    Raises:
        ValueError: If ``loss`` is not a scalar
    """
    if loss.ndim != 0:
        raise ValueError(f"backward: loss must be a scalar, got shape {loss.shape}")

    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.dtype)}
    produced: set[int] = set()
    leaves: dict[int, Tensor] = {}
    for record in reversed(tape.records):
        produced.add(id(record.output))
        g = grads.pop(id(record.output), None)
        if g is None:
            continue
        for tensor, grad in zip(record.inputs, record.backward(g), strict=True):
            if grad is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            grads[key] = grads[key] + grad if key in grads else np.array(grad)
            leaves.setdefault(key, tensor)

    result = {
        key: (tensor, grads[key])
        for key, tensor in leaves.items()
        if key not in produced and key in grads
    }
    return Gradients(result)


def grad_check(
    f: Callable[[Sequence[Tensor]], Tensor],
    params: Sequence[ArrayLike],
    eps: float = 1e-6,
) -> float:
    """Compare analytic gradients of ``f`` with central differences.

    ``f`` builds a scalar loss from tensors wrapping ``params``. Returns the
    largest ``|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`` over
    every coordinate.

    Raises:
        ValueError: If ``eps`` is not positive or ``f`` is not finite
    """
    if eps <= 0:
        raise ValueError(f"grad_check: eps must be positive, got {eps}")
    arrays = [np.array(p, dtype=np.float64) for p in params]
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    with Tape() as tape:
        loss = f(leaves)
    _check_finite(loss)
    grads = backward(tape, loss)
    analytic = [grads.of(leaf) for leaf in leaves]

    def evaluate(values: list[np.ndarray]) -> float:
        out = f([Tensor(v) for v in values])
        _check_finite(out)
        return out.item()

    worst = 0.0
    for index, array in enumerate(arrays):
        for coord in np.ndindex(array.shape):
            plus = [a.copy() for a in arrays]
            minus = [a.copy() for a in arrays]
            plus[index][coord] += eps
            minus[index][coord] -= eps
            numeric = (evaluate(plus) - evaluate(minus)) / (2 * eps)
            exact = float(analytic[index][coord])
            scale = np.max([abs(exact), abs(numeric), 1e-8])
            worst = np.max([worst, abs(exact - numeric) / scale])
    return float(worst)


def _check_finite(value: Tensor) -> None:
    if not np.all(np.isfinite(value.data)):
        raise ValueError(f"grad_check: function value is not finite: {value.data}")


class Parameters(MutableMapping[str, Tensor]):
    """Named trainable tensors.

    Names use ``/`` separated prefixes; the first component is the parameter
    group (``embedding``, ``tag``, ``lemma``) that freezing operates on.
    Updating a parameter rebinds its name to a new tensor, so a reference held
    from an earlier step keeps its values.
    """

    def __init__(self, tensors: Mapping[str, Tensor] | None = None) -> None:
        self._tensors: dict[str, Tensor] = {}
        for name, tensor in (tensors or {}).items():
            self[name] = tensor

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._tensors[name]
        except KeyError:
            raise KeyError(f"Unknown parameter {name!r}") from None

    def __setitem__(self, name: str, value: Tensor | np.ndarray) -> None:
        if not isinstance(value, Tensor) or not value.requires_grad:
            data = value.data if isinstance(value, Tensor) else value
            value = Tensor(data, requires_grad=True, name=name)
        elif value.name != name:
            value = Tensor(value.data, requires_grad=True, name=name)
        if name in self._tensors and self._tensors[name].shape != value.shape:
            raise ValueError(
                f"Parameter {name!r} has shape {self._tensors[name].shape}, "
                f"got {value.shape}"
            )
        self._tensors[name] = value

    def __delitem__(self, name: str) -> None:
        del self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def group_of(self, name: str) -> str:
        return name.split("/", 1)[0]

    def in_groups(self, groups: Sequence[str]) -> list[str]:
        return [name for name in self._tensors if self.group_of(name) in groups]

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: tensor.data for name, tensor in self._tensors.items()}

    def count(self) -> int:
        return int(np.sum([t.data.size for t in self._tensors.values()]))


def save_parameters(
    path: Path, params: Mapping[str, Tensor | np.ndarray], manifest: str = ""
) -> Path:
    """Write a parameter checkpoint.

    The container is an ``.npz`` archive holding one array per parameter under
    ``param/<name>``, the checkpoint format version and a free-form manifest
    string.
    """
    arrays: dict[str, np.ndarray] = {
        _FORMAT_KEY: np.array(CHECKPOINT_FORMAT_VERSION),
        _MANIFEST_KEY: np.array(manifest),
    }
    for name, value in params.items():
        arrays[_PARAM_PREFIX + name] = (
            value.data if isinstance(value, Tensor) else np.asarray(value)
        )

    def write(f: Any) -> None:
        buffer = io.BytesIO()
        np.savez(buffer, **arrays)
        f.write(buffer.getvalue())

    return write_atomic(path, write, binary=True)


def load_parameters(path: Path) -> tuple[dict[str, np.ndarray], str]:
    """Read a checkpoint written by :func:`save_parameters`.

    Returns:
        Mapping of parameter names to arrays, and the embedded manifest

    Raises:
        FileNotFoundError: If the checkpoint does not exist
        ValueError: If the file is not a checkpoint of a supported version
    """
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as archive:
            if _FORMAT_KEY not in archive.files:
                raise ValueError(f"{path} is not a morphkit checkpoint")
            version = int(archive[_FORMAT_KEY])
            if version != CHECKPOINT_FORMAT_VERSION:
                raise ValueError(
                    f"Unsupported checkpoint format version {version} in {path}: "
                    f"expected {CHECKPOINT_FORMAT_VERSION}"
                )
            manifest = str(archive[_MANIFEST_KEY])
            params = {
                key[len(_PARAM_PREFIX) :]: np.array(archive[key])
                for key in archive.files
                if key.startswith(_PARAM_PREFIX)
            }
    except (OSError, EOFError) as e:
        raise ValueError(f"Failed to read checkpoint {path}: {e}") from e
    logger.debug(f"Loaded {len(params)} parameters from {path}")
    return params, manifest
