# Copyright 2018 The amr-nmt Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


"""Dense float64 tensors with reverse-mode automatic differentiation.

Every model equation (LSTM cells, graph state transitions, attention and the
output softmax) is written with the primitives in this module. While a
:class:`ComputationRecord` is active (see :func:`recording`), each primitive
whose inputs depend on a trainable tensor is appended to it; walking the
record backwards yields gradients for every leaf. Outside a record the
primitives simply compute values, which is what decoding uses.
"""

import collections
import contextlib
import threading

import numpy as np

from amr_nmt.nmt.exceptions import NmtError

_SHAPE_MISMATCH_MSG = 'Cannot {} tensors of shapes {} and {}.'
_CONCAT_MSG = 'Cannot concatenate shapes {} along axis {}.'
_MASKED_ROW_MSG = 'softmax_rows: row(s) {} have no unmasked position.'
_MASK_SHAPE_MSG = 'softmax_rows: mask shape {} does not match input {}.'
_ID_RANGE_MSG = 'embedding_lookup: ids must lie in [0, {}), got min {} max {}.'
_NON_SCALAR_MSG = 'backward() needs a scalar loss, got shape {}.'
_FOREIGN_LOSS_MSG = 'The loss was not produced inside this record.'
_UNARY_KINDS = ('sigmoid', 'tanh')


class NumericsError(NmtError):
    """Raised for invalid numeric operations."""


class DimensionError(NumericsError):
    """Raised when operand shapes are incompatible."""


class Tensor(object):
    """A dense row-major array of 64-bit floats.

    Attributes:
        data (numpy.ndarray): The values.
        requires_grad (bool): Leaf tensors with this flag receive gradients.
        node_id (Optional[int]): Index of the producing operation inside the
            record that created this tensor; ``None`` for leaves and for
            values computed outside any record.
    """

    __slots__ = ('data', 'requires_grad', 'node_id', '_record')

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.node_id = None
        self._record = None

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return 'Tensor(shape={}, requires_grad={})'.format(
            self.shape, self.requires_grad)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    def __rmul__(self, other):
        return multiply(other, self)

    def __neg__(self):
        return multiply(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data):
    """Wraps ``data`` as a trainable leaf tensor."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def as_tensor(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


_Operation = collections.namedtuple(
    '_Operation', ['kind', 'inputs', 'output', 'backward'])


class ComputationRecord(object):
    """An ordered tape of primitive operations.

    A record is owned by exactly one execution context. Parameters may be
    shared read-only between records running in different threads, since a
    record never writes to the tensors it reads.
    """

    def __init__(self):
        self.operations = []

    def tracks(self, tensor):
        if tensor._record is self:
            return True
        return tensor.requires_grad and tensor.node_id is None

    def _key(self, tensor):
        if tensor._record is self:
            return tensor.node_id
        return ('leaf', id(tensor))

    def append(self, kind, inputs, data, backward):
        output = Tensor(data)
        output.node_id = len(self.operations)
        output._record = self
        self.operations.append(_Operation(kind, inputs, output, backward))
        return output

    def backward(self, loss, params=None):
        """Propagates gradients from a scalar loss.

        Args:
            loss (Tensor): A single-element tensor computed in this record,
                or a leaf.
            params (Mapping[str, Tensor]): Tensors whose gradients are
                returned. Parameters the loss does not reach get zeros.

        Returns:
            Dict[str, numpy.ndarray]: Gradients keyed like ``params``.

        Raises:
            NumericsError: If ``loss`` is not a scalar.
        """
        if loss.data.size != 1:
            raise NumericsError(_NON_SCALAR_MSG.format(loss.shape))
        if loss._record is not None and loss._record is not self:
            raise NumericsError(_FOREIGN_LOSS_MSG)

        grads = {self._key(loss): np.ones_like(loss.data)}
        last = loss.node_id if loss._record is self else -1
        for op in reversed(self.operations[:last + 1]):
            grad = grads.pop(op.output.node_id, None)
            if grad is None:
                continue
            for tensor, input_grad in zip(op.inputs, op.backward(grad)):
                if input_grad is None or not self.tracks(tensor):
                    continue
                key = self._key(tensor)
                if key in grads:
                    grads[key] = grads[key] + input_grad
                else:
                    grads[key] = input_grad

        if params is None:
            params = {}
        result = collections.OrderedDict()
        for name, tensor in params.items():
            grad = grads.get(('leaf', id(tensor)))
            if grad is None:
                grad = np.zeros_like(tensor.data)
            result[name] = grad
        return result


_state = threading.local()


def active_record():
    return getattr(_state, 'record', None)


@contextlib.contextmanager
def recording():
    """Activates a fresh :class:`ComputationRecord` for the current thread.

    Yields:
        ComputationRecord: The active record.
    """
    record = ComputationRecord()
    previous = active_record()
    _state.record = record
    try:
        yield record
    finally:
        _state.record = previous


def backward(loss, params):
    """Computes gradients of ``loss`` for every tensor in ``params``."""
    record = loss._record
    if record is None:
        record = active_record() or ComputationRecord()
    return record.backward(loss, params)


def _apply(kind, inputs, data, backward_fn):
    record = active_record()
    if record is None or not any(record.tracks(t) for t in inputs):
        return Tensor(data)
    return record.append(kind, inputs, data, backward_fn)


def _unbroadcast(grad, shape):
    """Sums ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(verb, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(
            _SHAPE_MISMATCH_MSG.format(verb, a.shape, b.shape))


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast('add', a, b)

    def backward_fn(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)

    return _apply('add', (a, b), a.data + b.data, backward_fn)


def subtract(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast('subtract', a, b)

    def backward_fn(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)

    return _apply('subtract', (a, b), a.data - b.data, backward_fn)


def multiply(a, b):
    """Elementwise product with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast('multiply', a, b)

    def backward_fn(grad):
        return (_unbroadcast(grad * b.data, a.shape),
                _unbroadcast(grad * a.data, b.shape))

    return _apply('multiply', (a, b), a.data * b.data, backward_fn)


def matmul(a, b):
    """Matrix product of ``a`` (..., m, k) and ``b`` (..., k, n).

    Leading batch dimensions broadcast as in :func:`numpy.matmul`.

    Raises:
        DimensionError: If the inner dimensions disagree.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            _SHAPE_MISMATCH_MSG.format('multiply', a.shape, b.shape))

    def backward_fn(grad):
        grad_a = np.matmul(grad, np.swapaxes(b.data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.data, -1, -2), grad)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return _apply('matmul', (a, b), np.matmul(a.data, b.data), backward_fn)


def _sigmoid(values):
    # Exact 0.5 at zero and no overflow for large magnitudes.
    return 0.5 * (1.0 + np.tanh(0.5 * values))


def unary(kind, x):
    """Applies ``sigmoid`` or ``tanh`` elementwise."""
    x = as_tensor(x)
    if kind == 'sigmoid':
        out = _sigmoid(x.data)
        derivative = out * (1.0 - out)
    elif kind == 'tanh':
        out = np.tanh(x.data)
        derivative = 1.0 - out * out
    else:
        raise NumericsError('Unknown unary kind {!r}; expected one of {}.'
                            .format(kind, ', '.join(_UNARY_KINDS)))

    def backward_fn(grad):
        return (grad * derivative,)

    return _apply(kind, (x,), out, backward_fn)


def sigmoid(x):
    return unary('sigmoid', x)


def tanh(x):
    return unary('tanh', x)


def log(x, floor=1e-12):
    """Natural logarithm of ``max(x, floor)``."""
    x = as_tensor(x)
    live = x.data > floor
    out = np.log(np.maximum(x.data, floor))

    def backward_fn(grad):
        return (np.where(live, grad / np.where(live, x.data, 1.0), 0.0),)

    return _apply('log', (x,), out, backward_fn)


def softmax_rows(x, mask=None):
    """Softmax over the last axis, restricted to unmasked positions.

    Args:
        x (Tensor): Scores of shape (..., n).
        mask (Optional[numpy.ndarray]): Boolean array shaped like ``x``;
            ``False`` positions receive probability exactly 0.

    Returns:
        Tensor: Rows summing to 1 over their unmasked positions.

    Raises:
        NumericsError: If some row has no unmasked position.
    """
    x = as_tensor(x)
    logits = x.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != logits.shape:
            raise DimensionError(_MASK_SHAPE_MSG.format(mask.shape, x.shape))
        dead = ~mask.any(axis=-1)
        if dead.any():
            raise NumericsError(
                _MASKED_ROW_MSG.format(np.argwhere(dead).tolist()))
        logits = np.where(mask, logits, -np.inf)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exps = np.exp(shifted)
    out = exps / exps.sum(axis=-1, keepdims=True)

    def backward_fn(grad):
        dot = (grad * out).sum(axis=-1, keepdims=True)
        return (out * (grad - dot),)

    return _apply('softmax_rows', (x,), out, backward_fn)


def concat(parts, axis=0):
    """Joins tensors end to end along ``axis``.

    Raises:
        DimensionError: If the shapes differ on any other axis.
    """
    parts = [as_tensor(p) for p in parts]
    shapes = [p.shape for p in parts]
    ndim = len(shapes[0])
    axis = axis % ndim if ndim else 0
    for shape in shapes:
        if len(shape) != ndim or any(
                shape[d] != shapes[0][d] for d in range(ndim) if d != axis):
            raise DimensionError(_CONCAT_MSG.format(shapes, axis))
    sizes = [shape[axis] for shape in shapes]
    out = np.concatenate([p.data for p in parts], axis=axis)

    def backward_fn(grad):
        return tuple(np.split(grad, np.cumsum(sizes)[:-1], axis=axis))

    return _apply('concat', tuple(parts), out, backward_fn)


def stack(parts, axis=0):
    """Stacks equally shaped tensors along a new ``axis``."""
    expanded = []
    for part in parts:
        shape = list(part.shape)
        shape.insert(axis, 1)
        expanded.append(reshape(part, shape))
    return concat(expanded, axis=axis)


def slice_last(x, start, stop):
    """Returns ``x[..., start:stop]``."""
    x = as_tensor(x)

    def backward_fn(grad):
        full = np.zeros_like(x.data)
        full[..., start:stop] = grad
        return (full,)

    return _apply('slice', (x,), x.data[..., start:stop], backward_fn)


def reshape(x, shape):
    x = as_tensor(x)

    def backward_fn(grad):
        return (grad.reshape(x.shape),)

    return _apply('reshape', (x,), x.data.reshape(shape), backward_fn)


def reduce_sum(x):
    """Sums every entry into a scalar of shape ()."""
    x = as_tensor(x)

    def backward_fn(grad):
        return (np.broadcast_to(grad, x.shape).copy(),)

    return _apply('sum', (x,), np.array(x.data.sum()), backward_fn)


def embedding_lookup(table, ids):
    """Selects rows of ``table``.

    Args:
        table (Tensor): Embedding table of shape (V, d).
        ids (Sequence[int]): Row ids of any shape; ``[]`` yields (0, d).

    Returns:
        Tensor: Shape ``ids.shape + (d,)``. Gradients scatter back into
        the looked-up rows only.
    """
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    vocab = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        raise NumericsError(
            _ID_RANGE_MSG.format(vocab, ids.min(), ids.max()))

    def backward_fn(grad):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, grad)
        return (full,)

    return _apply('embedding_lookup', (table,), table.data[ids], backward_fn)


def dropout(x, rate, rng, training=True):
    """Inverted dropout: kept activations are scaled by 1 / (1 - rate).

    Nothing happens when ``training`` is false or ``rate`` is 0, so
    inference needs no rescaling.
    """
    if not training or rate <= 0.0:
        return x
    keep = rng.random(x.shape) >= rate
    return multiply(x, Tensor(keep / (1.0 - rate)))


def zeros(shape):
    return Tensor(np.zeros(shape))


def segment_sum(x, segment_ids, num_segments):
    """Sums rows of ``x`` that share a segment id.

    Args:
        x (Tensor): Shape (m, d).
        segment_ids (Sequence[int]): One id in ``[0, num_segments)`` per row.
        num_segments (int): Number of output rows; segments without any
            row come out as zeros.

    Returns:
        Tensor: Shape (num_segments, d).
    """
    x = as_tensor(x)
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    if segment_ids.shape != x.shape[:1]:
        raise DimensionError(
            _SHAPE_MISMATCH_MSG.format('segment', x.shape, segment_ids.shape))
    out = np.zeros((num_segments,) + x.shape[1:])
    np.add.at(out, segment_ids, x.data)

    def backward_fn(grad):
        return (grad[segment_ids],)

    return _apply('segment_sum', (x,), out, backward_fn)
