import numpy as np
from scipy import special

from .SparseMatrix import SparseMatrix


SCALE_FLOOR = 1e-8


class ShapeError(ValueError):
    """
    Raised when an op receives operands whose shapes it cannot combine.

    :param op: Name of the op that rejected its inputs.
    :param shapes: The offending operand shapes, in argument order.
    """

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = tuple(tuple(int(extent) for extent in shape) for shape in shapes)
        joined = " vs ".join(str(shape) for shape in self.shapes)
        super().__init__(f"{op}: incompatible shapes {joined}")


class NonFiniteError(FloatingPointError):
    """Raised when an op produces NaN or Inf from its inputs."""

    def __init__(self, op: str):
        self.op = op
        super().__init__(f"{op}: produced non-finite values")


class GradientError(RuntimeError):
    """Misuse of backward() or a loss function that is not deterministic."""


class Tensor:
    """
    Dense float64 array that records the op that produced it so gradients can be
    propagated back to leaf tensors with requires_grad set.

    Scalars are 0-d tensors. Graphs are rebuilt by every forward pass.

    :param values: Array-like content, copied and cast to float64.
    :param requires_grad: If True, backward() fills ``grad`` for this tensor.
    :param name: Optional label, used in parameter listings.
    """

    def __init__(self, values, requires_grad: bool = False, name: str | None = None):
        self.values = np.array(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple = ()
        self._backward_fn = None
        self._op = "leaf"
        self._consumed = False

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        if self.values.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.values.copy()

    def backward(self) -> None:
        backward(self)

    def __repr__(self):
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self._op}{label})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _result(op: str, values, parents: tuple, backward_fn) -> Tensor:
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(op)
    out = Tensor.__new__(Tensor)
    out.values = values
    out.grad = None
    out.name = None
    out._op = op
    out._consumed = False
    out.requires_grad = any(parent.requires_grad for parent in parents)
    if out.requires_grad:
        out._parents = parents
        out._backward_fn = backward_fn
    else:
        out._parents = ()
        out._backward_fn = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_check(op: str, a: Tensor, b: Tensor):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# ---------------------------------------------------------------------------
# Elementwise binary ops (numpy broadcasting)
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("add", a, b)

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result("add", a.values + b.values, (a, b), _backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("sub", a, b)

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result("sub", a.values - b.values, (a, b), _backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("mul", a, b)

    def _backward(g):
        return _unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)

    return _result("mul", a.values * b.values, (a, b), _backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("div", a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.values / b.values

    def _backward(g):
        return (
            _unbroadcast(g / b.values, a.shape),
            _unbroadcast(-g * a.values / (b.values * b.values), b.shape),
        )

    return _result("div", out, (a, b), _backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _result("neg", -a.values, (a,), lambda g: (-g,))


# ---------------------------------------------------------------------------
# Elementwise unary ops
# ---------------------------------------------------------------------------

def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.values)
    return _result("exp", out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.values)
    return _result("log", out, (a,), lambda g: (g / a.values,))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _result("square", a.values * a.values, (a,), lambda g: (2.0 * a.values * g,))


def leaky_relu(a, negative_slope: float = 0.01) -> Tensor:
    a = as_tensor(a)
    positive = a.values > 0
    out = np.where(positive, a.values, negative_slope * a.values)
    slope = np.where(positive, 1.0, negative_slope)
    return _result("leaky_relu", out, (a,), lambda g: (g * slope,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    positive = a.values > 0
    return _result("relu", np.where(positive, a.values, 0.0), (a,), lambda g: (g * positive,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = special.expit(a.values)
    return _result("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a) -> Tensor:
    """ln(1 + e^x), computed without overflow."""
    a = as_tensor(a)
    out = np.logaddexp(0.0, a.values)
    return _result("softplus", out, (a,), lambda g: (g * special.expit(a.values),))


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    out = special.softmax(a.values, axis=axis)

    def _backward(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return _result("softmax", out, (a,), _backward)


def clamp_min(a, floor: float) -> Tensor:
    a = as_tensor(a)
    passing = a.values >= floor
    return _result("clamp_min", np.maximum(a.values, floor), (a,), lambda g: (g * passing,))


def dropout(a, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """
    Inverted dropout: entries are zeroed with probability ``rate`` and survivors are
    scaled by 1 / (1 - rate), so the expected output equals the input. Identity in eval mode.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    a = as_tensor(a)
    if not training or rate == 0.0:
        return a
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return _result("dropout", a.values * mask, (a,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# Shape and linear algebra ops
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)

    def _backward(g):
        return g @ b.values.T, a.values.T @ g

    return _result("matmul", a.values @ b.values, (a, b), _backward)


def spmm(matrix: SparseMatrix, x) -> Tensor:
    """Sparse (constant) times dense; only the dense operand receives a gradient."""
    x = as_tensor(x)
    if x.ndim != 2 or matrix.cols != x.shape[0]:
        raise ShapeError("spmm", matrix.shape, x.shape)
    csr = matrix.csr
    out = np.asarray(csr @ x.values)
    return _result("spmm", out, (x,), lambda g: (np.asarray(csr.T @ g),))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("transpose", a.shape)
    return _result("transpose", a.values.T, (a,), lambda g: (g.T,))


def reshape(a, shape: tuple) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.values.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", a.shape, shape) from None
    return _result("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    reference = tensors[0]
    for t in tensors[1:]:
        other_axes_match = t.ndim == reference.ndim and all(
            t.shape[i] == reference.shape[i] for i in range(t.ndim) if i != axis
        )
        if not other_axes_match:
            raise ShapeError("concat", reference.shape, t.shape)
    out = np.concatenate([t.values for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result("concat", out, tuple(tensors), _backward)


def take_rows(a, indices) -> Tensor:
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= a.shape[0]):
        raise ShapeError("take_rows", a.shape, (int(indices.max()) + 1,))

    def _backward(g):
        grad = np.zeros_like(a.values)
        np.add.at(grad, indices, g)
        return (grad,)

    return _result("take_rows", a.values[indices], (a,), _backward)


def slice_cols(a, start: int, stop: int) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2 or not 0 <= start < stop <= a.shape[1]:
        raise ShapeError("slice_cols", a.shape, (start, stop))

    def _backward(g):
        grad = np.zeros_like(a.values)
        grad[:, start:stop] = g
        return (grad,)

    return _result("slice_cols", a.values[:, start:stop], (a,), _backward)


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------

def sum(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)

    def _backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _result("sum", np.sum(a.values, axis=axis), (a,), _backward)


def mean(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    count = a.values.size if axis is None else a.shape[axis]
    if count == 0:
        raise ShapeError("mean", a.shape)

    def _backward(g):
        if axis is None:
            return (np.full(a.shape, g / count),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape) / count,)

    return _result("mean", np.mean(a.values, axis=axis), (a,), _backward)


# ---------------------------------------------------------------------------
# Composite helpers
# ---------------------------------------------------------------------------

def linear(x, weight, bias=None) -> Tensor:
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


def row_dot(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError("row_dot", a.shape, b.shape)
    return sum(mul(a, b), axis=1)


def bce_with_logits(logits, labels) -> Tensor:
    """Mean binary cross-entropy of sigmoid(logits) against 0/1 labels."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape != logits.shape:
        raise ShapeError("bce_with_logits", logits.shape, labels.shape)
    if logits.values.size == 0:
        raise ValueError("bce_with_logits needs at least one pair")
    return mean(sub(softplus(logits), mul(logits, labels)))


def scaled_dot_product_attention(query, key, value, dropout_rate: float = 0.0,
                                 rng: np.random.Generator | None = None,
                                 training: bool = False) -> tuple[Tensor, Tensor]:
    """
    softmax(Q K^T / sqrt(d_h)) V over the rows of a single set; returns (output, weights).
    Dropout, when active, is applied to the attention weights.
    """
    query, key, value = as_tensor(query), as_tensor(key), as_tensor(value)
    if query.shape[1] != key.shape[1] or key.shape[0] != value.shape[0]:
        raise ShapeError("attention", query.shape, key.shape, value.shape)
    scores = mul(matmul(query, transpose(key)), 1.0 / np.sqrt(query.shape[1]))
    weights = softmax(scores, axis=1)
    weights = dropout(weights, dropout_rate, rng, training)
    return matmul(weights, value), weights


# ---------------------------------------------------------------------------
# Reverse pass and gradient checking
# ---------------------------------------------------------------------------

def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, params: list[Tensor] | None = None) -> list[np.ndarray] | None:
    """
    Propagate d(loss)/d(leaf) through the recorded graph and store it in ``grad`` of every
    reachable leaf with requires_grad. Tensors in ``params`` that the loss does not reach
    get a zero gradient. The graph is released afterwards, so a second call on the same
    loss raises GradientError.

    :param loss: Single-element tensor produced by a forward pass.
    :param params: Optional tensors whose gradients are returned in order.
    """
    if loss.values.size != 1:
        raise GradientError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise GradientError("backward already ran on this loss; run a new forward pass first")

    order = _topological_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node._backward_fn is None:
            continue
        for parent, parent_grad in zip(node._parents, node._backward_fn(g)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + parent_grad if key in grads else parent_grad

    for node in order:
        if node._backward_fn is None and node.requires_grad:
            node.grad = np.array(grads.get(id(node), np.zeros_like(node.values)))
        else:
            node._parents = ()
            node._backward_fn = None
    loss._consumed = True

    if params is None:
        return None
    reached = {id(node) for node in order}
    for p in params:
        if id(p) not in reached:
            p.grad = np.zeros_like(p.values)
    return [p.grad for p in params]


def grad_check(loss_fn, params: list[Tensor], step: float = 1e-5) -> float:
    """
    Compare backward() against central finite differences over every entry of ``params``.

    Returns max |analytic - numeric| / max(1, |numeric|). ``loss_fn`` must rebuild the loss
    from the current parameter values with dropout off and noise fixed.
    """
    if not 1e-7 < step < 1e-3:
        raise ValueError(f"step must be in (1e-7, 1e-3), got {step}")

    first = loss_fn()
    second = loss_fn()
    if not np.array_equal(first.values, second.values):
        raise GradientError("loss_fn is not deterministic: two identical passes disagree")
    analytic = backward(first, params)

    worst = 0.0
    for param, grad in zip(params, analytic):
        flat = param.values.reshape(-1)
        flat_grad = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            upper = loss_fn().item()
            flat[i] = original - step
            lower = loss_fn().item()
            flat[i] = original
            numeric = (upper - lower) / (2.0 * step)
            worst = max(worst, abs(flat_grad[i] - numeric) / max(1.0, abs(numeric)))
    return worst
