"""Dense tensors with reverse-mode automatic differentiation on a dynamic tape.

A ``Tensor`` wraps a contiguous row-major numpy array (float32 by default,
float64 for gradient-check suites).  Operations executed inside a ``with
Tape() as tape:`` block record themselves on the tape; ``backward(loss,
tape)`` replays the records in reverse and accumulates gradients into every
``requires_grad`` tensor that participated.  Outside a tape context the same
operations run as plain numpy code, which is the inference fast path.

Gradients from multiple consumers of a tensor are summed, so value reuse
(e.g. a skip connection feeding two paths) is handled correctly.
"""
from __future__ import annotations

import threading
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionError, NumericError, OracleError, TapeStateError

DEFAULT_DTYPE = np.float32

_state = threading.local()

_finite_checks = True


def set_check_finite(enabled: bool) -> bool:
    """Toggle NaN/Inf checking on op outputs. Returns the previous setting."""
    global _finite_checks
    previous = _finite_checks
    _finite_checks = bool(enabled)
    return previous


def _check_finite(op_name: str, data: np.ndarray) -> None:
    if _finite_checks and not np.all(np.isfinite(data)):
        raise NumericError(f"{op_name} produced non-finite values")


class Tensor:
    """N-dimensional real array, optionally tracked for gradients.

    ``data`` is always a C-contiguous float32 or float64 numpy array, so the
    flat buffer length equals the product of the shape extents. ``grad``
    (same shape as ``data``) is populated by ``backward``. ``node_id`` holds
    the id most recently assigned by a tape; tapes keep their own identity
    maps, so a tensor can safely appear on many tapes over its lifetime.
    """

    __slots__ = ("data", "requires_grad", "grad", "node_id", "is_parameter")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is None:
            # ndarrays keep their float width; python lists/scalars get f32
            if isinstance(data, np.ndarray) and arr.dtype in (np.float32, np.float64):
                dtype = arr.dtype
            else:
                dtype = DEFAULT_DTYPE
        self.data = np.ascontiguousarray(arr, dtype=dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.node_id: Optional[int] = None
        self.is_parameter = False

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.data.dtype.name}{flag})"


def parameter(data, dtype=None) -> Tensor:
    """A trainable tensor; excluded from activation-memory accounting."""
    t = Tensor(data, requires_grad=True, dtype=dtype)
    t.is_parameter = True
    return t


class Node:
    """One recorded operation: input/output ids, backward rule, retained buffers."""

    __slots__ = ("name", "input_ids", "output_id", "backward_fn", "saved")

    def __init__(self, name, input_ids, output_id, backward_fn, saved):
        self.name = name
        self.input_ids = input_ids
        self.output_id = output_id
        self.backward_fn = backward_fn
        self.saved = saved


class Tape:
    """Ordered record of operations; every op's inputs precede it.

    A tape (and the tensors recorded on it) must stay on one thread between
    construction and ``backward``; independent tapes may run on independent
    threads with no shared state.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self.consumed = False
        self._ids: dict[int, int] = {}
        self._keepalive: list[Tensor] = []
        self._watched: list[tuple[Tensor, int]] = []

    def __enter__(self) -> "Tape":
        if getattr(_state, "tape", None) is not None:
            raise TapeStateError("tapes do not nest; close the active tape first")
        _state.tape = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _state.tape = None

    def id_of(self, t: Tensor) -> Optional[int]:
        return self._ids.get(id(t))

    def assign_id(self, t: Tensor) -> int:
        nid = self._ids.get(id(t))
        if nid is None:
            nid = len(self._keepalive)
            self._ids[id(t)] = nid
            self._keepalive.append(t)  # pins object identity for the dict key
            t.node_id = nid
            if t.requires_grad:
                self._watched.append((t, nid))
        return nid

    def record(self, name: str, inputs: Sequence[Tensor], out: Tensor,
               backward_fn: Callable, saved: Sequence[np.ndarray] = ()) -> None:
        input_ids = tuple(self.assign_id(t) for t in inputs)
        output_id = self.assign_id(out)
        self.nodes.append(Node(name, input_ids, output_id, backward_fn, tuple(saved)))

    def retained_activation_bytes(self) -> int:
        """Total bytes of non-parameter buffers held for the backward pass."""
        return sum(a.nbytes for node in self.nodes for a in node.saved)


def active_tape() -> Optional[Tape]:
    return getattr(_state, "tape", None)


def record_op(name: str, inputs: Sequence[Tensor], out_data: np.ndarray,
              backward_fn: Callable, saved: Sequence[np.ndarray] = ()) -> Tensor:
    """Wrap an op result, recording it when a tape is active.

    ``backward_fn(g_out) -> tuple[np.ndarray | None, ...]`` returns one
    gradient per input (None for non-differentiable inputs). ``saved`` lists
    the activation buffers the closure retains, for memory accounting.
    """
    _check_finite(name, out_data)
    out = Tensor(out_data)
    tape = active_tape()
    if tape is not None:
        tracked = any(t.requires_grad or tape.id_of(t) is not None for t in inputs)
        if tracked:
            tape.record(name, inputs, out, backward_fn, saved)
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate ``grad`` on every requires_grad tensor recorded on the tape.

    Visits each recorded op exactly once, in reverse order; gradients from
    multiple consumers are summed. requires_grad tensors on the tape that do
    not reach the loss receive a zero gradient. A tape is consumed by one
    backward call; a second call raises.
    """
    if loss.data.size != 1:
        raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
    if tape.consumed:
        raise TapeStateError("backward was already called on this tape")
    loss_id = tape.id_of(loss)
    if loss_id is None:
        raise TapeStateError("loss was not recorded on this tape")
    tape.consumed = True

    grads: dict[int, np.ndarray] = {loss_id: np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g_out = grads.pop(node.output_id, None)
        if g_out is None:
            continue
        input_grads = node.backward_fn(g_out)
        for nid, g in zip(node.input_ids, input_grads):
            if g is None:
                continue
            if nid in grads:
                grads[nid] = grads[nid] + g
            else:
                grads[nid] = g

    for t, nid in tape._watched:
        g = grads.get(nid)
        if g is None:
            g = np.zeros_like(t.data)
        else:
            g = np.ascontiguousarray(g, dtype=t.data.dtype)
        t.grad = g if t.grad is None else t.grad + g


# ---------------------------------------------------------------------------
# Core ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a [m,k] and b [k,n].

    Backward accumulates dL/da = g @ b.T and dL/db = a.T @ g.
    """
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul dimension mismatch: {tuple(a.shape)} x {tuple(b.shape)}")
    out = a.data @ b.data
    a_data, b_data = a.data, b.data

    def backward_fn(g):
        return g @ b_data.T, a_data.T @ g

    saved = [x.data for x in (a, b) if not x.is_parameter]
    return record_op("matmul", (a, b), out, backward_fn, saved=saved)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Element-wise sum of two same-shape tensors (no broadcasting)."""
    if a.shape != b.shape:
        raise DimensionError(f"add shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    out = a.data + b.data

    def backward_fn(g):
        return g, g

    return record_op("add", (a, b), out, backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Element-wise product of two same-shape tensors."""
    if a.shape != b.shape:
        raise DimensionError(f"mul shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    out = a.data * b.data
    a_data, b_data = a.data, b.data

    def backward_fn(g):
        return g * b_data, g * a_data

    saved = [x.data for x in (a, b) if not x.is_parameter]
    return record_op("mul", (a, b), out, backward_fn, saved=saved)


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python scalar."""
    c = float(c)
    out = a.data * c

    def backward_fn(g):
        return (g * c,)

    return record_op("scale", (a,), out, backward_fn)


def tsum(a: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    out = np.asarray(a.data.sum(dtype=a.data.dtype)).reshape(())
    shape, dtype = a.data.shape, a.data.dtype

    def backward_fn(g):
        return (np.full(shape, g, dtype=dtype),)

    return record_op("sum", (a,), out, backward_fn)


def reshape(a: Tensor, new_shape) -> Tensor:
    new_shape = tuple(int(s) for s in new_shape)
    out = a.data.reshape(new_shape)
    old_shape = a.data.shape

    def backward_fn(g):
        return (g.reshape(old_shape),)

    return record_op("reshape", (a,), out, backward_fn)


def concat_channels(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate [n,c,h,w] tensors along the channel axis."""
    if len(parts) < 2:
        raise DimensionError("concat_channels needs >= 2 tensors")
    base = parts[0].shape
    for p in parts[1:]:
        if p.data.ndim != 4 or p.shape[0] != base[0] or p.shape[2:] != base[2:]:
            raise DimensionError(
                f"concat_channels shape mismatch: {tuple(base)} vs {tuple(p.shape)}")
    out = np.concatenate([p.data for p in parts], axis=1)
    widths = [p.shape[1] for p in parts]
    edges = np.cumsum([0] + widths)

    def backward_fn(g):
        return tuple(g[:, edges[i]:edges[i + 1]] for i in range(len(widths)))

    return record_op("concat_channels", tuple(parts), out, backward_fn)


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

def finite_difference_check(f: Callable[[Tensor], Tensor], x: Tensor,
                            eps: float = 1e-5) -> float:
    """Max relative error between central finite differences and autograd.

    ``f`` must be a deterministic scalar-valued function of one float64
    tensor. Per coordinate i the central difference
    (f(x+eps*e_i) - f(x-eps*e_i)) / (2*eps) is compared against the autograd
    gradient; the return value is max_i |fd - ad| / max(|fd|, |ad|, 1e-8).
    """
    if not (0.0 < eps <= 1e-2):
        raise ValueError(f"eps must be in (0, 1e-2], got {eps}")
    if x.data.dtype != np.float64:
        raise ValueError("finite_difference_check requires a float64 tensor")

    def evaluate(values: np.ndarray) -> float:
        out = f(Tensor(values, dtype=np.float64))
        if out.data.size != 1:
            raise DimensionError("finite_difference_check needs a scalar-valued f")
        return float(out.data.reshape(()))

    y0 = evaluate(x.data)
    if evaluate(x.data) != y0:
        raise OracleError("function under check is not deterministic")

    with Tape() as tape:
        xt = Tensor(x.data.copy(), requires_grad=True, dtype=np.float64)
        loss = f(xt)
    backward(loss, tape)
    ad = xt.grad.ravel()

    fd = np.empty(x.data.size, dtype=np.float64)
    flat = x.data.ravel()
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] += eps
        y_plus = evaluate(bumped.reshape(x.data.shape))
        bumped[i] -= 2 * eps
        y_minus = evaluate(bumped.reshape(x.data.shape))
        fd[i] = (y_plus - y_minus) / (2.0 * eps)

    denom = np.maximum(np.maximum(np.abs(fd), np.abs(ad)), 1e-8)
    return float(np.max(np.abs(fd - ad) / denom))
