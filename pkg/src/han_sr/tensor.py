"""Dense tensors and the reverse-mode autodiff tape.

A Tensor wraps a contiguous float32/float64 numpy array of rank 1-5. Ops (see
``han_sr.ops``) record onto the innermost active Tape; ``Tape.backward`` walks
the records in reverse execution order, summing gradients from all consumers,
and leaves ``.grad`` populated on every reachable tensor that requires it.

Tapes are single-owner: one thread builds and consumes a tape. Running batches
in parallel means one tape per worker.
"""

from __future__ import annotations

import itertools
import os
import threading

import numpy as np


class DimensionError(ValueError):
    """Operand shapes violate an operation's contract."""


class NonFiniteError(FloatingPointError):
    """A forward op produced NaN or Inf from finite inputs."""


_check_finite = os.environ.get("HAN_CHECK_FINITE", "1") != "0"


def set_finite_checks(enabled: bool) -> bool:
    """Toggle post-op NaN/Inf assertions; returns the previous setting."""
    global _check_finite
    previous = _check_finite
    _check_finite = bool(enabled)
    return previous


def finite_checks_enabled() -> bool:
    return _check_finite


_node_ids = itertools.count()

_FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    """Rank 1-5 dense array with optional gradient buffer and tape identity."""

    __slots__ = ("data", "requires_grad", "grad", "node_id")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if not 1 <= arr.ndim <= 5:
            raise DimensionError(f"tensor rank must be 1-5, got {arr.ndim}")
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.node_id = next(_node_ids)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of size {self.data.size}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return (f"Tensor(shape={self.shape}, dtype={self.dtype.name}, "
                f"requires_grad={self.requires_grad})")


_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of ops; a context manager that enables recording.

    Records are appended in execution order, which is already a topological
    order of the graph, so the backward pass is a single reverse sweep.
    """

    def __init__(self):
        self._records = []  # (output, inputs, backward_rule)

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        assert popped is self, "tapes must nest"
        return False

    def __len__(self) -> int:
        return len(self._records)

    def record(self, output: Tensor, inputs: tuple, backward_rule) -> None:
        self._records.append((output, inputs, backward_rule))

    def backward(self, loss: Tensor) -> None:
        """Populate .grad on every requires_grad tensor reachable from loss."""
        if loss.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        acc = {loss.node_id: np.ones_like(loss.data)}
        holders = {loss.node_id: loss}
        for output, inputs, rule in reversed(self._records):
            grad_out = acc.pop(output.node_id, None)
            if grad_out is None:
                continue
            if output.requires_grad:
                output.grad = grad_out if output.grad is None else output.grad + grad_out
            for tensor, grad_in in zip(inputs, rule(grad_out)):
                if grad_in is None or not tensor.requires_grad:
                    continue
                seen = acc.get(tensor.node_id)
                acc[tensor.node_id] = grad_in if seen is None else seen + grad_in
                holders[tensor.node_id] = tensor
        # whatever is left was never produced by a record: leaves
        for node_id, grad in acc.items():
            leaf = holders[node_id]
            leaf.grad = grad if leaf.grad is None else leaf.grad + grad


def emit(out_data: np.ndarray, inputs: tuple, backward_rule) -> Tensor:
    """Wrap an op result, checking finiteness and recording on the live tape."""
    if _check_finite and not np.all(np.isfinite(out_data)):
        raise NonFiniteError("op produced non-finite values")
    requires = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=requires)
    if requires:
        tape = active_tape()
        if tape is not None:
            tape.record(out, inputs, backward_rule)
    return out
