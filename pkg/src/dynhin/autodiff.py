"""Minimal reverse-mode automatic differentiation over rank<=2 float64 arrays.

A Tape records primitive ops in execution order while active; ``backward``
replays the records strictly in reverse, accumulating gradients additively
at every fan-out. A Tape is single-threaded by design, but independent tapes
may run concurrently (the active tape is thread-local) and their parameter
gradients merge additively, which is exactly what sharded mini-batches need.

Debug mode adds a finiteness check after every primitive; creation of leaf
tensors always rejects NaN/Inf.
"""

from __future__ import annotations

import threading
from typing import Callable, Optional, Sequence

import numpy as np

_tls = threading.local()

# When true, every op output is checked for NaN/Inf. Tests flip this on.
debug_checks = False


def _active_tape() -> Optional["Tape"]:
    return getattr(_tls, "tape", None)


def _check_finite(data: np.ndarray, context: str) -> None:
    if not np.all(np.isfinite(data)):
        raise ValueError(f"non-finite value in {context}")


class Tensor:
    """A rank<=2 float64 array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: str = "",
        _trusted: bool = False,
    ):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 2:
            raise ValueError(f"tensor rank {arr.ndim} exceeds 2")
        if not _trusted:
            _check_finite(arr, f"tensor {name or 'creation'}")
        elif debug_checks:
            _check_finite(arr, f"op output {name or ''}")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.data.shape}, grad={self.grad is not None})"


def parameter(data, name: str = "") -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def constant(data, name: str = "") -> Tensor:
    return Tensor(data, requires_grad=False, name=name)


class Tape:
    """Execution-order record of primitive ops for one backward pass."""

    def __init__(self):
        self._records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        if _active_tape() is not None:
            raise RuntimeError("a tape is already active on this thread")
        _tls.tape = self
        return self

    def __exit__(self, *exc) -> None:
        _tls.tape = None

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward_fn: Callable) -> None:
        self._records.append((out, inputs, backward_fn))

    def backward(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        """Propagate d(loss)/d(x) back to the tape's tracked leaves.

        ``loss`` must be a scalar recorded on this tape. Leaf gradients
        (parameters: tracked tensors not produced by any record) are added
        into their ``.grad`` slots and returned; intermediate gradients are
        freed as soon as their record has been replayed.
        """
        if loss.data.shape != ():
            raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
        produced = {id(out) for out, _, _ in self._records}
        if id(loss) not in produced:
            raise ValueError("loss is not on this tape (detached graph)")
        grads: dict[int, np.ndarray] = {id(loss): np.ones(())}
        leaves: dict[int, Tensor] = {}
        for out, inputs, backward_fn in reversed(self._records):
            g_out = grads.pop(id(out), None)
            if g_out is None:
                continue
            for inp, g in zip(inputs, backward_fn(g_out)):
                if g is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] += g
                else:
                    grads[key] = np.array(g, dtype=np.float64, copy=True)
                if key not in produced:
                    leaves[key] = inp
        result: dict[Tensor, np.ndarray] = {}
        for key, tensor in leaves.items():
            g = grads.pop(key)
            tensor.accumulate_grad(g)
            result[tensor] = g
        self._records.clear()
        return result


def _track(
    data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn: Callable, name: str
) -> Tensor:
    tape = _active_tape()
    tracked = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=tracked, name=name, _trusted=True)
    if tracked:
        tape.record(out, inputs, backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data
    return _track(
        data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
        "add",
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data
    return _track(
        data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)),
        "sub",
    )


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data
    return _track(
        data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
        "hadamard",
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects rank-2 operands")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data
    return _track(
        data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
        "matmul",
    )


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _track(a.data * c, (a,), lambda g: (g * c,), "scale")


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def sigmoid(a: Tensor) -> Tensor:
    # Branch on sign so exp never overflows.
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _track(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _track(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise ValueError("log of non-positive value")
    return _track(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def log_sigmoid(a: Tensor) -> Tensor:
    """Numerically stable log(sigmoid(x)) = -log(1 + exp(-x))."""
    x = a.data
    out = -np.logaddexp(0.0, -x)
    return _track(out, (a,), lambda g: (g * _sigmoid_np(-x),), "log_sigmoid")


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tensor_sum(a: Tensor, axis: Optional[int] = None) -> Tensor:
    """Sum over all entries (axis=None -> scalar) or along one axis (keepdims)."""
    if axis is None:
        data = a.data.sum()
        return _track(
            np.asarray(data), (a,), lambda g: (np.broadcast_to(g, a.data.shape).copy(),), "sum"
        )
    if a.data.ndim != 2 or axis not in (0, 1):
        raise ValueError("axis sum expects a rank-2 tensor and axis in {0, 1}")
    data = a.data.sum(axis=axis, keepdims=True)
    return _track(
        data, (a,), lambda g: (np.broadcast_to(g, a.data.shape).copy(),), "sum_axis"
    )


def mean(a: Tensor) -> Tensor:
    return scale(tensor_sum(a), 1.0 / a.data.size)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    if not tensors:
        raise ValueError("concat of empty sequence")
    if any(t.data.ndim != 2 for t in tensors):
        raise ValueError("concat expects rank-2 tensors")
    if axis not in (0, 1):
        raise ValueError("concat axis must be 0 or 1")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    widths = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + widths)

    def backward(g: np.ndarray):
        if axis == 1:
            return tuple(g[:, offsets[i] : offsets[i + 1]] for i in range(len(tensors)))
        return tuple(g[offsets[i] : offsets[i + 1], :] for i in range(len(tensors)))

    return _track(data, tuple(tensors), backward, "concat")


def gather_rows(a: Tensor, indices) -> Tensor:
    """Row gather (generalized slice); backward scatter-adds into the source."""
    if a.data.ndim != 2:
        raise ValueError("gather_rows expects a rank-2 tensor")
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[0]):
        raise ValueError("gather index out of range")
    data = a.data[idx]

    def backward(g: np.ndarray):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _track(data, (a,), backward, "gather_rows")


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 2:
        raise ValueError("slice_cols expects a rank-2 tensor")
    data = a.data[:, start:stop]

    def backward(g: np.ndarray):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        return (full,)

    return _track(data.copy(), (a,), backward, "slice")


def softmax_row(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ValueError("softmax_row expects a rank-2 tensor")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def backward(g: np.ndarray):
        dot = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - dot),)

    return _track(out, (a,), backward, "softmax_row")


def log_softmax_row(a: Tensor) -> Tensor:
    """Fused log(softmax(x)) per row; avoids log(0) on confident rows."""
    if a.data.ndim != 2:
        raise ValueError("log_softmax_row expects a rank-2 tensor")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def backward(g: np.ndarray):
        return (g - soft * g.sum(axis=1, keepdims=True),)

    return _track(out, (a,), backward, "log_softmax_row")
