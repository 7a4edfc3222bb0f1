"""Dense float64 tensors with reverse-mode automatic differentiation.

Values are immutable numpy arrays; gradients live in a separate buffer that
is only populated for tensors attached to a :class:`Tape`.  Ops record a
backward closure on the tape of their inputs; ``Tape.backward`` replays the
recorded entries in reverse, summing gradients at fan-out points.
"""

import numpy as np
import scipy.sparse as sp

from .errors import ContractError, DimensionError, ValidationError

__all__ = [
    "Tensor",
    "Tape",
    "SparseMatrix",
    "tensor",
    "zeros",
    "concat_last",
    "spmm",
]


class Tensor:
    """A dense float64 array, optionally tracked by a tape.

    A tensor with ``tape is None`` is a constant: it can participate in any
    op but never receives gradient.
    """

    __slots__ = ("data", "grad", "tape")

    def __init__(self, data, tape=None):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        self.data = arr
        self.grad = None
        self.tape = tape

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        """Return a copy of the value, detached from any tape."""
        return self.data.copy()

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, tape={'yes' if self.tape else 'no'})"

    # arithmetic operators; floats lift to constant tensors
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __neg__(self):
        return mul(self, _lift(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data):
    """Build a constant tensor from array-like data."""
    return Tensor(data)


def zeros(*shape):
    return Tensor(np.zeros(shape))


def _lift(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


class _TapeEntry:
    __slots__ = ("inputs", "output", "backward")

    def __init__(self, inputs, output, backward):
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """Ordered record of operations for one forward pass.

    Entries are appended in execution order, which is topological by
    construction.  ``watch`` attaches leaf tensors (parameters) so they
    accumulate gradient and appear in the map returned by ``backward``.
    """

    def __init__(self):
        self._entries = []
        self._watched = []

    def watch(self, *tensors):
        for t in tensors:
            if t.tape is not None and t.tape is not self:
                raise ContractError("tensor is already attached to another tape")
            t.tape = self
            self._watched.append(t)

    def record(self, inputs, output, backward):
        output.tape = self
        self._entries.append(_TapeEntry(inputs, output, backward))

    def __len__(self):
        return len(self._entries)

    def backward(self, loss):
        """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor on the tape.

        Returns a dict mapping each watched tensor to its gradient array;
        watched tensors not reachable from ``loss`` get zeros.
        """
        if not isinstance(loss, Tensor) or loss.size != 1:
            raise ContractError("backward requires a scalar loss tensor")
        if loss.tape is not self:
            raise ContractError("loss tensor is not on this tape")

        for e in self._entries:
            e.output.grad = None
        for t in self._watched:
            t.grad = None

        loss.grad = np.ones_like(loss.data)
        for e in reversed(self._entries):
            g = e.output.grad
            if g is None:
                continue
            for t, gi in zip(e.inputs, e.backward(g)):
                if t.tape is None or gi is None:
                    continue
                # never mutated in place, so views of g are safe to keep
                t.grad = gi if t.grad is None else t.grad + gi

        out = {}
        for t in self._watched:
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
            out[t] = t.grad
        return out


def _tape_of(*tensors):
    tape = None
    for t in tensors:
        if t.tape is not None:
            if tape is not None and tape is not t.tape:
                raise ContractError("operands belong to different tapes")
            tape = t.tape
    return tape


def _make(data, inputs, backward):
    out = Tensor(data)
    tape = _tape_of(*inputs)
    if tape is not None:
        tape.record(inputs, out, backward)
    return out


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (inverse of numpy trailing broadcast)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_broadcast(a, b, op):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(
            f"{op}: shapes {a.shape} and {b.shape} are not broadcast-compatible"
        ) from None


def add(a, b):
    _check_broadcast(a, b, "add")
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b):
    _check_broadcast(a, b, "sub")
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b):
    _check_broadcast(a, b, "mul")
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.shape),
            _unbroadcast(g * a.data, b.shape),
        ),
    )


def sigmoid(x):
    # stable logistic: exp on the negative branch only
    s = np.where(x.data >= 0, 1.0 / (1.0 + np.exp(-x.data)),
                 np.exp(x.data) / (1.0 + np.exp(x.data)))
    return _make(s, (x,), lambda g: (g * s * (1.0 - s),))


def tanh(x):
    t = np.tanh(x.data)
    return _make(t, (x,), lambda g: (g * (1.0 - t * t),))


def relu(x):
    y = np.maximum(x.data, 0.0)
    return _make(y, (x,), lambda g: (g * (x.data > 0.0),))


def absolute(x):
    return _make(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def sum_all(x):
    """Reduce to a scalar (shape ()) tensor."""
    return _make(
        np.asarray(x.data.sum()),
        (x,),
        lambda g: (np.broadcast_to(g, x.shape).copy(),),
    )


def matmul(a, b):
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(
            f"matmul requires 2-D or batched operands, got {a.shape} and {b.shape}"
        )
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"matmul: inner dimensions disagree, {a.shape} vs {b.shape}"
        )

    def backward(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _make(np.matmul(a.data, b.data), (a, b), backward)


def concat_last(tensors):
    """Concatenate along the last axis; leading dimensions must agree."""
    tensors = [t for t in tensors if t.size > 0 or t.ndim > 1]
    if not tensors:
        raise DimensionError("concat_last needs at least one non-empty tensor")
    lead = tensors[0].shape[:-1]
    for t in tensors[1:]:
        if t.shape[:-1] != lead:
            raise DimensionError(
                f"concat_last: leading dimensions disagree, "
                f"{tensors[0].shape} vs {t.shape}"
            )
    widths = [t.shape[-1] for t in tensors]
    offsets = np.cumsum([0] + widths)

    def backward(g):
        return tuple(
            g[..., offsets[i]:offsets[i + 1]] for i in range(len(tensors))
        )

    return _make(np.concatenate([t.data for t in tensors], axis=-1), tuple(tensors), backward)


class SparseMatrix:
    """Square sparse matrix in CSR form, used for neighbor aggregation.

    Values are constants with respect to differentiation: gradient flows
    through the dense operand of ``spmm`` only.
    """

    __slots__ = ("csr", "_csr_t")

    def __init__(self, matrix):
        csr = sp.csr_matrix(matrix, dtype=np.float64)
        if csr.shape[0] != csr.shape[1]:
            raise DimensionError(f"sparse matrix must be square, got {csr.shape}")
        if csr.nnz and not np.all(np.isfinite(csr.data)):
            raise ValidationError("sparse matrix contains non-finite weights")
        self.csr = csr
        self._csr_t = None

    @property
    def csr_t(self):
        if self._csr_t is None:
            self._csr_t = self.csr.T.tocsr()
        return self._csr_t

    @classmethod
    def from_coo(cls, n, rows, cols, vals):
        return cls(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))

    @property
    def n(self):
        return self.csr.shape[0]

    def dense(self):
        return self.csr.toarray()

    def transpose(self):
        return SparseMatrix(self.csr.T)

    def row_sums(self):
        return np.asarray(self.csr.sum(axis=1)).ravel()


def _sp_apply(csr, x):
    # apply N x N csr to (..., N, c) along the node axis
    if x.ndim == 2:
        return csr @ x
    lead = x.shape[:-2]
    n, c = x.shape[-2], x.shape[-1]
    flat = np.moveaxis(x.reshape(-1, n, c), 0, 1).reshape(n, -1)
    out = csr @ flat
    out = np.moveaxis(out.reshape(n, -1, c), 1, 0).reshape(*lead, n, c)
    return np.ascontiguousarray(out)


def spmm(adj, x):
    """Neighbor aggregation ``y[..., i, :] = sum_j adj[i, j] * x[..., j, :]``."""
    if x.ndim < 2:
        raise DimensionError(f"spmm requires a (..., N, c) operand, got {x.shape}")
    if adj.n != x.shape[-2]:
        raise DimensionError(
            f"spmm: adjacency is {adj.n}x{adj.n} but x has {x.shape[-2]} rows"
        )
    return _make(
        _sp_apply(adj.csr, x.data),
        (x,),
        lambda g: (_sp_apply(adj.csr_t, g),),
    )
