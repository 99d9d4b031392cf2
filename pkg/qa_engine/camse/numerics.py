"""
Dense tensor arithmetic with reverse-mode automatic differentiation.

Tensors wrap numpy arrays. Every differentiable operation executed while a
Tape is active is recorded on that tape together with a closure that maps
the output adjoint to the adjoints of its inputs; Tape.backward() replays
the closures in exact reverse execution order.

Outside of a tape, operations are plain forward computations, which makes
evaluation on a frozen parameter set safe from concurrent callers.
"""

import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .config import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPS,
    COMPUTE_DTYPE,
    LEARNING_RATE,
    LR_DECAY,
)
from .exceptions import (
    ConfigError,
    DimensionError,
    GradCheckError,
    OptimizerStateError,
    SequenceTooShortError,
    TapeError,
)

logger = logging.getLogger(__name__)


# ============================================================================
# Precision
# ============================================================================

DTYPES = {'f32': np.float32, 'f64': np.float64}

# Extra full evaluations grad_check compares against the first one
GRAD_CHECK_REPLAYS = 2

_compute_dtype = DTYPES.get(COMPUTE_DTYPE, np.float32)


def get_dtype():
    """Return the numpy dtype new tensors are created with."""
    return _compute_dtype


def set_precision(name: str) -> None:
    """
    Switch the process-wide compute precision.

    Args:
        name: 'f32' (default) or 'f64' (required for gradient checks)
    """
    global _compute_dtype
    if name not in DTYPES:
        raise ConfigError(f"Unknown precision '{name}'. Must be one of: {', '.join(DTYPES)}.")
    _compute_dtype = DTYPES[name]
    logger.debug(f"Compute precision set to {name}")


@contextmanager
def precision(name: str):
    """Temporarily switch the compute precision."""
    previous = _compute_dtype
    set_precision(name)
    try:
        yield
    finally:
        _set_dtype(previous)


def _set_dtype(dtype) -> None:
    global _compute_dtype
    _compute_dtype = dtype


# ============================================================================
# Tensor, Parameter, Tape
# ============================================================================

class Tensor:
    """A dense array that may take part in reverse-mode differentiation."""

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=get_dtype(), order='C')
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._parents: Tuple['Tensor', ...] = ()
        self._backward: Optional[Callable] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype).reshape(self.data.shape)
        else:
            self.grad += grad.reshape(self.data.shape)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self):
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """A trainable tensor with a persistent gradient buffer."""

    def __init__(self, value, name: str):
        super().__init__(value, requires_grad=True, name=name)
        self.grad = np.zeros_like(self.data)

    @property
    def value(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.shape})"


_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, 'tapes', None)
    if stack is None:
        stack = []
        _local.tapes = stack
    return stack


def current_tape() -> Optional['Tape']:
    stack = _tape_stack()
    return stack[-1] if stack else None


@contextmanager
def no_tape():
    """Evaluate without recording, even inside an active tape."""
    stack = _tape_stack()
    stack.append(None)
    try:
        yield
    finally:
        stack.pop()


class Tape:
    """
    Ordered record of executed operations.

    Used as a context manager; operations run inside the block are recorded
    on this tape for the current thread.
    """

    def __init__(self):
        self._nodes: List[Tensor] = []
        self._ids = set()
        self._consumed = False

    def __enter__(self) -> 'Tape':
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _tape_stack().pop()

    def __len__(self) -> int:
        return len(self._nodes)

    def record(self, node: Tensor) -> None:
        if self._consumed:
            raise TapeError("Cannot record on a tape that was already replayed; call reset() first")
        self._nodes.append(node)
        self._ids.add(id(node))

    def reset(self) -> None:
        self._nodes = []
        self._ids = set()
        self._consumed = False

    def backward(self, loss: Tensor) -> None:
        """
        Populate gradients of every tensor the loss depends on.

        Raises:
            TapeError: If the loss is not a scalar produced on this tape,
                       or the tape was already replayed
        """
        if loss.size != 1:
            raise TapeError(f"Loss must be a scalar, got shape {loss.shape}")
        if self._consumed:
            raise TapeError("backward() called twice without reset()")
        if id(loss) not in self._ids:
            raise TapeError("Loss was not produced on this tape")

        loss.grad = np.ones_like(loss.data)
        for node in reversed(self._nodes):
            if node.grad is None:
                continue
            parent_grads = node._backward(node.grad)
            for parent, grad in zip(node._parents, parent_grads):
                if grad is None or not parent.requires_grad:
                    continue
                parent._accumulate(grad)
        self._consumed = True
        logger.debug(f"Backward pass replayed {len(self._nodes)} operations")


def backward(tape: Tape, loss: Tensor) -> None:
    """Functional alias for Tape.backward."""
    tape.backward(loss)


def _result(data: np.ndarray, parents: Tuple[Tensor, ...], backward_fn: Callable) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        tape = current_tape()
        if tape is not None:
            out.requires_grad = True
            out._parents = parents
            out._backward = backward_fn
            tape.record(out)
    return out


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> Tuple[int, ...]:
    try:
        shape = np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}")
    if shape != a.shape and shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} need two-way broadcasting")
    return shape


# ============================================================================
# Elementwise and Structural Operations
# ============================================================================

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def backward_fn(g):
        return (_unbroadcast(g, a.shape) if a.requires_grad else None,
                _unbroadcast(g, b.shape) if b.requires_grad else None)

    return _result(a.data + b.data, (a, b), backward_fn)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def backward_fn(g):
        return (_unbroadcast(g, a.shape) if a.requires_grad else None,
                _unbroadcast(-g, b.shape) if b.requires_grad else None)

    return _result(a.data - b.data, (a, b), backward_fn)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def backward_fn(g):
        return (_unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
                _unbroadcast(g * a.data, b.shape) if b.requires_grad else None)

    return _result(a.data * b.data, (a, b), backward_fn)


def scale(a: Tensor, factor: float) -> Tensor:
    def backward_fn(g):
        return (g * factor,)

    return _result(a.data * factor, (a,), backward_fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product of an n×m and an m×p tensor.

    Raises:
        DimensionError: If either operand is not 2-D or inner sizes differ
    """
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward_fn(g):
        return (g @ b.data.T if a.requires_grad else None,
                a.data.T @ g if b.requires_grad else None)

    return _result(a.data @ b.data, (a, b), backward_fn)


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise DimensionError(f"transpose expects a 2-D tensor, got shape {a.shape}")

    def backward_fn(g):
        return (g.T,)

    return _result(a.data.T, (a,), backward_fn)


def reshape(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"Cannot reshape {a.shape} to {shape}")

    def backward_fn(g):
        return (g.reshape(a.shape),)

    return _result(data, (a,), backward_fn)


def reduce_sum(a: Tensor, axis: Optional[int] = None) -> Tensor:
    data = a.data.sum() if axis is None else a.data.sum(axis=axis)

    def backward_fn(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape),)

    return _result(np.asarray(data), (a,), backward_fn)


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two vectors of equal length."""
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"dot expects equal-length vectors, got {a.shape} and {b.shape}")
    return reduce_sum(mul(a, b))


def mean(tensors: Sequence[Tensor]) -> Tensor:
    if not tensors:
        raise DimensionError("mean of an empty list")
    return scale(reduce_sum(stack(tensors)), 1.0 / len(tensors))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise DimensionError("concat of an empty list")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise DimensionError(f"concat shape mismatch: {[t.shape for t in tensors]} on axis {axis}")
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward_fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(data, tuple(tensors), backward_fn)


def stack(tensors: Sequence[Tensor]) -> Tensor:
    """Stack equally shaped tensors along a new leading axis."""
    if not tensors:
        raise DimensionError("stack of an empty list")
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise DimensionError(f"stack shape mismatch: {sorted(shapes)}")

    def backward_fn(g):
        return tuple(g[i] for i in range(len(tensors)))

    return _result(np.stack([t.data for t in tensors]), tuple(tensors), backward_fn)


def take_rows(a: Tensor, indices: Sequence[int]) -> Tensor:
    idx = np.asarray(indices, dtype=np.int64)

    def backward_fn(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)

    return _result(a.data[idx], (a,), backward_fn)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if a.ndim != 2 or not 0 <= start < stop <= a.shape[1]:
        raise DimensionError(f"Invalid column slice [{start}:{stop}] of shape {a.shape}")

    def backward_fn(g):
        out = np.zeros_like(a.data)
        out[:, start:stop] = g
        return (out,)

    return _result(a.data[:, start:stop], (a,), backward_fn)


def diag_matrix(v: Tensor) -> Tensor:
    """Square matrix with v on the diagonal."""
    if v.ndim != 1:
        raise DimensionError(f"diag_matrix expects a vector, got shape {v.shape}")

    def backward_fn(g):
        return (np.diag(g).copy(),)

    return _result(np.diag(v.data), (v,), backward_fn)


def offdiagonal_pairs(r: int) -> Tuple[np.ndarray, np.ndarray]:
    """Row and column indices of all (u, v), u != v, in row-major order."""
    rows, cols = np.nonzero(~np.eye(r, dtype=bool))
    return rows, cols


def embed_offdiagonal(v: Tensor, r: int) -> Tensor:
    """Place r(r-1) values on the off-diagonal of an r×r matrix, row-major."""
    rows, cols = offdiagonal_pairs(r)
    if v.shape != (len(rows),):
        raise DimensionError(f"Expected {len(rows)} off-diagonal values, got shape {v.shape}")
    out = np.zeros((r, r), dtype=v.data.dtype)
    out[rows, cols] = v.data

    def backward_fn(g):
        return (g[rows, cols],)

    return _result(out, (v,), backward_fn)


# ============================================================================
# Nonlinearities
# ============================================================================

def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def pointwise(x: Tensor, fn: str) -> Tensor:
    """
    Apply tanh or sigmoid elementwise.

    Args:
        x: Input tensor
        fn: 'tanh' or 'sigmoid'
    """
    if fn == 'tanh':
        y = np.tanh(x.data)

        def backward_fn(g):
            return (g * (1.0 - y * y),)
    elif fn == 'sigmoid':
        y = _sigmoid(x.data)

        def backward_fn(g):
            return (g * y * (1.0 - y),)
    else:
        raise ConfigError(f"Unknown pointwise function '{fn}'")

    return _result(y, (x,), backward_fn)


def tanh(x: Tensor) -> Tensor:
    return pointwise(x, 'tanh')


def sigmoid(x: Tensor) -> Tensor:
    return pointwise(x, 'sigmoid')


def softmax_axis(m: Tensor, axis: str = 'columns') -> Tensor:
    """
    Numerically stable softmax over one axis of a matrix.

    Args:
        m: n×r tensor
        axis: 'columns' normalizes each column over the n rows;
              'rows' normalizes each row over the r columns
    """
    if axis not in ('columns', 'rows'):
        raise ConfigError(f"Unknown softmax axis '{axis}'")
    if m.ndim != 2:
        raise DimensionError(f"softmax_axis expects a matrix, got shape {m.shape}")
    ax = 0 if axis == 'columns' else 1
    shifted = m.data - m.data.max(axis=ax, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=ax, keepdims=True)

    def backward_fn(g):
        return (s * (g - (g * s).sum(axis=ax, keepdims=True)),)

    return _result(s, (m,), backward_fn)


def cross_entropy(scores: Tensor, gold: int) -> Tensor:
    """Negative log-softmax probability of the gold index of a score vector."""
    if scores.ndim != 1 or not 0 <= gold < scores.shape[0]:
        raise DimensionError(f"Invalid gold index {gold} for scores of shape {scores.shape}")
    top = scores.data.max()
    e = np.exp(scores.data - top)
    total = e.sum()
    loss = np.log(total) + top - scores.data[gold]
    probs = e / total

    def backward_fn(g):
        grad = probs.copy()
        grad[gold] -= 1.0
        return (g * grad,)

    return _result(np.asarray(loss), (scores,), backward_fn)


def cosine_rows(a: Tensor, b: Tensor, eps: float = 1e-12) -> Tuple[Tensor, np.ndarray]:
    """
    Cosine similarity of aligned rows.

    Rows whose norm product is at most eps get cosine 0 and no gradient.

    Returns:
        (vector of cosines, boolean mask of degenerate rows)
    """
    if a.shape != b.shape or a.ndim != 2:
        raise DimensionError(f"cosine_rows expects equal matrices, got {a.shape} and {b.shape}")
    dots = (a.data * b.data).sum(axis=1)
    na = np.sqrt((a.data * a.data).sum(axis=1))
    nb = np.sqrt((b.data * b.data).sum(axis=1))
    denom = na * nb
    valid = denom > eps
    safe_denom = np.where(valid, denom, 1.0)
    cos = np.where(valid, dots / safe_denom, 0.0)
    safe_na2 = np.where(valid, na * na, 1.0)
    safe_nb2 = np.where(valid, nb * nb, 1.0)

    def backward_fn(g):
        gv = np.where(valid, g, 0.0)[:, None]
        grad_a = gv * (b.data / safe_denom[:, None] - cos[:, None] * a.data / safe_na2[:, None])
        grad_b = gv * (a.data / safe_denom[:, None] - cos[:, None] * b.data / safe_nb2[:, None])
        return (grad_a if a.requires_grad else None, grad_b if b.requires_grad else None)

    return _result(cos, (a, b), backward_fn), ~valid


def dropout(x: Tensor, rate: float, training: bool, rng: Optional[np.random.Generator]) -> Tensor:
    """
    Inverted dropout: survivors are scaled by 1/(1-rate) in training mode.

    Raises:
        ConfigError: If rate is outside [0, 1)
    """
    if not 0 <= rate < 1:
        raise ConfigError(f"Dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0:
        return x
    if rng is None:
        raise ConfigError("Training-mode dropout needs a random generator")
    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    return mul(x, Tensor(keep))


# ============================================================================
# Layers
# ============================================================================

def unfold(e: Tensor, window: int) -> Tensor:
    """Concatenate each run of `window` consecutive rows into one row."""
    n, d = e.shape
    m = n - window + 1
    data = np.concatenate([e.data[j:j + m] for j in range(window)], axis=1)

    def backward_fn(g):
        out = np.zeros_like(e.data)
        for j in range(window):
            out[j:j + m] += g[:, j * d:(j + 1) * d]
        return (out,)

    return _result(data, (e,), backward_fn)


def conv_window(e: Tensor, window: int, w: Tensor, b: Tensor) -> Tensor:
    """
    Valid convolution of window size i over word rows, followed by tanh.

    Args:
        e: n×d word matrix
        window: window size i
        w: (i·d)×d_c weights
        b: d_c bias

    Returns:
        (n-i+1)×d_c tensor

    Raises:
        SequenceTooShortError: If n < i
    """
    if e.ndim != 2:
        raise DimensionError(f"conv_window expects a matrix, got shape {e.shape}")
    n, d = e.shape
    if window < 1 or n < window:
        raise SequenceTooShortError(n, window)
    if w.shape[0] != window * d or b.shape != (w.shape[1],):
        raise DimensionError(
            f"conv_window weights {w.shape} / bias {b.shape} do not fit window {window} over width {d}"
        )
    return tanh(add(matmul(unfold(e, window), w), b))


@dataclass
class LstmWeights:
    """
    LSTM weights with gate blocks [input, forget, candidate, output]
    concatenated row-wise: w_x is 4u×input, w_h is 4u×u, b is 4u.
    """
    w_x: Parameter
    w_h: Parameter
    b: Parameter

    @property
    def hidden_size(self) -> int:
        return self.w_h.shape[1]

    @property
    def input_size(self) -> int:
        return self.w_x.shape[1]

    def parameters(self) -> List[Parameter]:
        return [self.w_x, self.w_h, self.b]


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor, weights: LstmWeights) -> Tuple[Tensor, Tensor]:
    """
    One LSTM step on row vectors (1×input, 1×u, 1×u).

    Returns:
        (h, c), each 1×u
    """
    u = weights.hidden_size
    if x.shape != (1, weights.input_size) or h_prev.shape != (1, u) or c_prev.shape != (1, u):
        raise DimensionError(
            f"lstm_cell shapes x={x.shape} h={h_prev.shape} c={c_prev.shape} "
            f"do not fit input {weights.input_size} / hidden {u}"
        )
    z = add(add(matmul(x, transpose(weights.w_x)), matmul(h_prev, transpose(weights.w_h))), weights.b)
    i = sigmoid(slice_cols(z, 0, u))
    f = sigmoid(slice_cols(z, u, 2 * u))
    g = tanh(slice_cols(z, 2 * u, 3 * u))
    o = sigmoid(slice_cols(z, 3 * u, 4 * u))
    c = add(mul(f, c_prev), mul(i, g))
    h = mul(o, tanh(c))
    return h, c


def lstm_sequence(x: Tensor, weights: LstmWeights, reverse: bool = False) -> Tensor:
    """
    Run an LSTM over the rows of x starting from h0 = c0 = 0.

    The whole recurrence is one tape node with a hand-written
    backpropagation-through-time adjoint; it is numerically the
    composition of lstm_cell steps.

    Args:
        x: n×input tensor
        weights: LSTM weights
        reverse: Process rows right to left (outputs stay aligned with x)

    Returns:
        n×u tensor of hidden states
    """
    if x.ndim != 2 or x.shape[0] < 1:
        raise SequenceTooShortError(x.shape[0] if x.ndim == 2 else 0, 1)
    if x.shape[1] != weights.input_size:
        raise DimensionError(
            f"LSTM input width {x.shape[1]} does not match weights {weights.w_x.shape}"
        )
    n = x.shape[0]
    u = weights.hidden_size
    w_x, w_h, b = weights.w_x.data, weights.w_h.data, weights.b.data
    xs = x.data[::-1] if reverse else x.data
    xz = xs @ w_x.T + b

    dtype = xz.dtype
    hs = np.zeros((n, u), dtype=dtype)
    cs = np.zeros((n, u), dtype=dtype)
    gates = np.zeros((n, 4 * u), dtype=dtype)
    tanh_cs = np.zeros((n, u), dtype=dtype)
    h = np.zeros(u, dtype=dtype)
    c = np.zeros(u, dtype=dtype)
    for t in range(n):
        z = xz[t] + h @ w_h.T
        gi = _sigmoid(z[:u])
        gf = _sigmoid(z[u:2 * u])
        gg = np.tanh(z[2 * u:3 * u])
        go = _sigmoid(z[3 * u:])
        c = gf * c + gi * gg
        tc = np.tanh(c)
        h = go * tc
        gates[t] = np.concatenate([gi, gf, gg, go])
        cs[t] = c
        tanh_cs[t] = tc
        hs[t] = h

    out = hs[::-1] if reverse else hs

    def backward_fn(grad):
        dh_seq = grad[::-1] if reverse else grad
        dz = np.zeros((n, 4 * u), dtype=dtype)
        dh_next = np.zeros(u, dtype=dtype)
        dc_next = np.zeros(u, dtype=dtype)
        for t in range(n - 1, -1, -1):
            gi = gates[t, :u]
            gf = gates[t, u:2 * u]
            gg = gates[t, 2 * u:3 * u]
            go = gates[t, 3 * u:]
            c_prev = cs[t - 1] if t > 0 else np.zeros(u, dtype=dtype)
            dh = dh_seq[t] + dh_next
            dc = dh * go * (1.0 - tanh_cs[t] ** 2) + dc_next
            dz[t, :u] = dc * gg * gi * (1.0 - gi)
            dz[t, u:2 * u] = dc * c_prev * gf * (1.0 - gf)
            dz[t, 2 * u:3 * u] = dc * gi * (1.0 - gg ** 2)
            dz[t, 3 * u:] = dh * tanh_cs[t] * go * (1.0 - go)
            dc_next = dc * gf
            dh_next = dz[t] @ w_h
        h_prev = np.vstack([np.zeros((1, u), dtype=dtype), hs[:-1]])
        dx = dz @ w_x
        if reverse:
            dx = dx[::-1]
        return (dx, dz.T @ xs, dz.T @ h_prev, dz.sum(axis=0))

    return _result(out, (x, weights.w_x, weights.w_h, weights.b), backward_fn)


def bilstm(x: Tensor, weights_fwd: LstmWeights, weights_bwd: LstmWeights) -> Tensor:
    """Bidirectional LSTM: n×(u_fwd + u_bwd), forward half first."""
    return concat([lstm_sequence(x, weights_fwd), lstm_sequence(x, weights_bwd, reverse=True)], axis=1)


# ============================================================================
# Parameter Containers and Initialization
# ============================================================================

def glorot_uniform(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    """Uniform in ±sqrt(6/(fan_in+fan_out)); vectors count as one column."""
    fans = shape[0] + (shape[1] if len(shape) > 1 else 1)
    limit = np.sqrt(6.0 / fans)
    return rng.uniform(-limit, limit, size=shape)


class ParameterSet:
    """Insertion-ordered registry of named parameters."""

    def __init__(self):
        self._params: Dict[str, Parameter] = {}

    def add(self, param: Parameter) -> Parameter:
        if param.name in self._params:
            raise ConfigError(f"Duplicate parameter name '{param.name}'")
        self._params[param.name] = param
        return param

    def create(self, name: str, shape: Tuple[int, ...], rng: np.random.Generator,
               init: str = 'glorot') -> Parameter:
        if init == 'glorot':
            value = glorot_uniform(rng, shape)
        elif init == 'zeros':
            value = np.zeros(shape)
        else:
            raise ConfigError(f"Unknown initializer '{init}'")
        return self.add(Parameter(value, name))

    def create_lstm(self, prefix: str, input_size: int, hidden_size: int,
                    rng: np.random.Generator) -> LstmWeights:
        """Glorot weights, zero biases except the forget block at +1."""
        w_x = self.create(f"{prefix}.w_x", (4 * hidden_size, input_size), rng)
        w_h = self.create(f"{prefix}.w_h", (4 * hidden_size, hidden_size), rng)
        b = self.create(f"{prefix}.b", (4 * hidden_size,), rng, init='zeros')
        b.data[hidden_size:2 * hidden_size] = 1.0
        return LstmWeights(w_x, w_h, b)

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> List[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self) -> None:
        for param in self._params.values():
            param.zero_grad()

    def count(self) -> int:
        return sum(p.size for p in self._params.values())

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self._params.items()}

    def restore(self, snapshot: Dict[str, np.ndarray]) -> None:
        for name, value in snapshot.items():
            self._params[name].data[...] = value


# ============================================================================
# Adam Optimizer
# ============================================================================

@dataclass
class AdamState:
    """Adam moments and hyperparameters with per-epoch exponential decay."""
    base_lr: float = LEARNING_RATE
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    decay: float = LR_DECAY
    step: int = 0
    epoch: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    signature: Tuple[Tuple[str, Tuple[int, ...]], ...] = ()

    @property
    def learning_rate(self) -> float:
        return self.base_lr * self.decay ** self.epoch


def _signature(params: Iterable[Parameter]) -> Tuple[Tuple[str, Tuple[int, ...]], ...]:
    return tuple((p.name, p.shape) for p in params)


def adam_step(params: ParameterSet, state: AdamState) -> None:
    """
    Apply one bias-corrected Adam update in place.

    Raises:
        OptimizerStateError: If the state was built for a different parameter set
    """
    signature = _signature(params)
    if not state.signature:
        state.signature = signature
        state.first_moment = {p.name: np.zeros_like(p.data) for p in params}
        state.second_moment = {p.name: np.zeros_like(p.data) for p in params}
    elif signature != state.signature:
        raise OptimizerStateError("Adam state belongs to a different parameter set")

    state.step += 1
    lr = state.learning_rate
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for param in params:
        m = state.first_moment[param.name]
        v = state.second_moment[param.name]
        g = param.grad
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        param.data -= (lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)).astype(param.data.dtype)


# ============================================================================
# Gradient Checking
# ============================================================================

def _evaluate(f: Callable[[], Tensor]) -> float:
    with no_tape():
        return float(f().data)


def _loss_and_grads(f: Callable[[], Tensor], params: Sequence[Tensor]) -> Tuple[float, List[np.ndarray]]:
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = f()
        tape.backward(loss)
    return float(loss.data), [p.grad.copy() for p in params]


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5,
               replays: int = GRAD_CHECK_REPLAYS, floor: float = 0.0) -> float:
    """
    Compare backward() gradients with central finite differences.

    Args:
        f: Zero-argument callable building a scalar loss from params
        params: Leaf tensors to check (modified in place and restored)
        eps: Finite-difference step
        replays: Extra evaluations whose loss and gradients must match the first
        floor: Coordinates whose analytic gradient magnitude is at most this are skipped

    Returns:
        Max over all coordinates of |a-n| / max(|a|, |n|, 1e-8)

    Raises:
        GradCheckError: If not in 64-bit mode or f is not deterministic
    """
    params = list(params)
    for p in params:
        if p.data.dtype != np.float64:
            raise GradCheckError(f"Gradient check needs 64-bit tensors; {p.name or p.shape} is {p.data.dtype}")
        p.requires_grad = True

    value, analytic = _loss_and_grads(f, params)
    for _ in range(replays):
        again, grads = _loss_and_grads(f, params)
        if again != value or not all(np.array_equal(a, b) for a, b in zip(analytic, grads)):
            raise GradCheckError("Loss function is not deterministic; use eval-mode dropout")

    worst = 0.0
    for p, grad in zip(params, analytic):
        flat = p.data.reshape(-1)
        flat_grad = grad.reshape(-1)
        for j in range(flat.size):
            if abs(flat_grad[j]) <= floor:
                continue
            original = flat[j]
            flat[j] = original + eps
            plus = _evaluate(f)
            flat[j] = original - eps
            minus = _evaluate(f)
            flat[j] = original
            numeric = (plus - minus) / (2.0 * eps)
            a = float(flat_grad[j])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    logger.debug(f"Gradient check over {sum(p.size for p in params)} coordinates: max error {worst:.3e}")
    return worst
