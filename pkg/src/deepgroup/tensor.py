"""Minimal dense-tensor reverse-mode differentiation, double precision.

Only what the model needs: affine maps, relu/sigmoid, binary cross-entropy,
inverted dropout, row gather/scatter, ragged segment reductions, column
concatenation, and a bias-corrected Adam optimizer. No broadcasting beyond
the documented bias add in linear(); every other shape mismatch raises.
"""

import numpy as np

from . import kernels

BCE_EPS = 1e-7

REDUCE_OPS = {
    "mean": kernels.OP_MEAN,
    "max": kernels.OP_MAX,
    "min": kernels.OP_MIN,
    "median": kernels.OP_MEDIAN,
}


class Tensor:
    """A dense float64 array plus an optional gradient of the same shape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def accumulate_grad(self, g, owned=False):
        """Add g to the gradient; owned=True hands over a fresh array."""
        if self.grad is None:
            self.grad = g if owned else np.array(g)
        else:
            self.grad += g

    def item(self):
        return float(self.data)

    def backward(self):
        """Reverse-accumulate gradients from this scalar through the graph."""
        if self.data.size != 1:
            raise ValueError("backward() starts from a scalar tensor")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _result(data, parents, backward):
    if any(p.requires_grad for p in parents):
        return Tensor(data, parents=parents, backward=backward)
    return Tensor(data)


def linear(x, weight, bias):
    """Rows through an affine map: x @ weight.T + bias."""
    if x.data.ndim != 2 or weight.data.ndim != 2 or bias.data.ndim != 1:
        raise ValueError("linear expects x (b,p), weight (q,p), bias (q,)")
    if x.shape[1] != weight.shape[1] or bias.shape[0] != weight.shape[0]:
        raise ValueError(
            f"linear shape mismatch: x {x.shape}, weight {weight.shape}, bias {bias.shape}"
        )
    out = x.data @ weight.data.T + bias.data

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g @ weight.data, owned=True)
        if weight.requires_grad:
            weight.accumulate_grad(g.T @ x.data, owned=True)
        if bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=0), owned=True)

    return _result(out, (x, weight, bias), backward)


def relu(x):
    out = np.maximum(x.data, 0.0)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * (x.data > 0.0), owned=True)

    return _result(out, (x,), backward)


def _sigmoid_stable(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid(x):
    s = _sigmoid_stable(x.data)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * s * (1.0 - s), owned=True)

    return _result(s, (x,), backward)


def bce_loss(predictions, targets):
    """Mean binary cross-entropy; predictions clamped to [eps, 1-eps]."""
    if predictions.shape != targets.shape:
        raise ValueError(f"shape mismatch: predictions {predictions.shape}, targets {targets.shape}")
    t = targets.data
    if not np.all((t == 0.0) | (t == 1.0)):
        raise ValueError("targets must be 0 or 1")
    p = np.clip(predictions.data, BCE_EPS, 1.0 - BCE_EPS)
    loss = -np.mean(t * np.log(p) + (1.0 - t) * np.log1p(-p))

    def backward(g):
        if predictions.requires_grad:
            inside = (predictions.data > BCE_EPS) & (predictions.data < 1.0 - BCE_EPS)
            grad = np.where(inside, (p - t) / (p * (1.0 - p)), 0.0) / t.size
            predictions.accumulate_grad(g * grad, owned=True)

    return _result(loss, (predictions,), backward)


def dropout(x, keep_prob, training, rng):
    """Inverted dropout: scale kept units by 1/keep_prob; identity in eval."""
    if not 0.0 < keep_prob <= 1.0:
        raise ValueError(f"keep_prob must be in (0, 1], got {keep_prob}")
    if not training or keep_prob == 1.0:
        return x
    mask = (rng.random(x.shape) < keep_prob) / keep_prob

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * mask, owned=True)

    return _result(x.data * mask, (x,), backward)


def segment_reduce(x, offsets, op):
    """Columnwise reduction of ragged row segments of x, one output row each.

    Gradient routing: mean spreads 1/k over the segment; max/min go to the
    first attaining row; median to the (lower, for even sizes) median row.
    """
    if op not in REDUCE_OPS:
        raise ValueError(f"unknown reduction {op!r}, expected one of {tuple(REDUCE_OPS)}")
    offsets = np.asarray(offsets, dtype=np.int64)
    if offsets.ndim != 1 or offsets.shape[0] < 2 or offsets[0] != 0 or offsets[-1] != x.shape[0]:
        raise ValueError("offsets must run from 0 to the number of rows")
    if np.any(np.diff(offsets) < 1):
        raise ValueError("empty segment in reduction")
    code = REDUCE_OPS[op]
    out, route = kernels.segment_reduce(np.ascontiguousarray(x.data), offsets, code)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(
                kernels.segment_reduce_backward(
                    np.ascontiguousarray(g), offsets, code, route, x.shape[0]
                ),
                owned=True,
            )

    return _result(out, (x,), backward)


def elementwise_reduce(x, op):
    """Reduce a (k, d) tensor to its columnwise mean/max/min/median (d,)."""
    if x.data.ndim != 2:
        raise ValueError("elementwise_reduce expects a (k, d) tensor")
    if x.shape[0] < 1:
        raise ValueError("cannot reduce an empty set of rows")
    reduced = segment_reduce(x, np.array([0, x.shape[0]], dtype=np.int64), op)
    return reshape(reduced, (x.shape[1],))


def reshape(x, shape):
    out = x.data.reshape(shape)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g.reshape(x.shape))

    return _result(out, (x,), backward)


def gather_rows(param, idx):
    """Select rows of a (n, d) tensor; backward scatter-adds into param."""
    idx = np.asarray(idx, dtype=np.int64)
    if param.data.ndim != 2:
        raise ValueError("gather_rows expects a 2-d tensor")
    if idx.size and (idx.min() < 0 or idx.max() >= param.shape[0]):
        raise IndexError("row index out of range")
    out = param.data[idx]

    def backward(g):
        if param.requires_grad:
            if param.grad is None:
                param.grad = np.zeros_like(param.data)
            kernels.scatter_add_rows(param.grad, idx, np.ascontiguousarray(g))

    return _result(out, (param,), backward)


def gather_segment_reduce(param, idx, offsets, op):
    """Fused gather_rows + segment_reduce over a (n, d) parameter tensor.

    Numerically identical to segment_reduce(gather_rows(param, idx), ...) but
    never materializes the gathered rows, forward or backward.
    """
    if op not in REDUCE_OPS:
        raise ValueError(f"unknown reduction {op!r}, expected one of {tuple(REDUCE_OPS)}")
    idx = np.asarray(idx, dtype=np.int64)
    if param.data.ndim != 2:
        raise ValueError("gather_segment_reduce expects a 2-d parameter tensor")
    if idx.size and (idx.min() < 0 or idx.max() >= param.shape[0]):
        raise IndexError("row index out of range")
    offsets = np.asarray(offsets, dtype=np.int64)
    if offsets.ndim != 1 or offsets.shape[0] < 2 or offsets[0] != 0 or offsets[-1] != idx.shape[0]:
        raise ValueError("offsets must run from 0 to the number of gathered rows")
    if np.any(np.diff(offsets) < 1):
        raise ValueError("empty segment in reduction")
    code = REDUCE_OPS[op]
    out, route_user = kernels.gather_reduce(param.data, idx, offsets, code)

    def backward(g):
        if param.requires_grad:
            if param.grad is None:
                param.grad = np.zeros_like(param.data)
            kernels.gather_reduce_backward(
                np.ascontiguousarray(g), idx, offsets, code, route_user, param.grad
            )

    return _result(out, (param,), backward)


def concat_cols(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ValueError(f"cannot concat {a.shape} with {b.shape}")
    out = np.concatenate([a.data, b.data], axis=1)
    split = a.shape[1]

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g[:, :split])
        if b.requires_grad:
            b.accumulate_grad(g[:, split:])

    return _result(out, (a, b), backward)


def tensor_sum(x):
    out = np.asarray(x.data.sum())

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(np.full_like(x.data, float(g)), owned=True)

    return _result(out, (x,), backward)


class Adam:
    """Bias-corrected Adam over a fixed list of parameter tensors.

    step() requires every parameter to carry a gradient and clears gradients
    afterwards; zero gradients leave parameters bit-identical while the step
    counter still advances.
    """

    def __init__(self, params, learning_rate=0.001, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.params = list(params)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise ValueError(f"parameter {i} has no gradient; run backward() first")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for i, p in enumerate(self.params):
            g = p.grad
            m = self.m[i]
            v = self.v[i]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            denom = np.sqrt(v / bc2)
            denom += self.epsilon
            p.data -= (self.learning_rate / bc1) * m / denom
            p.grad = None


# ---------------------------------------------------------------------------
# parameter container (text checkpoint format)
# ---------------------------------------------------------------------------

def save_tensors(path, tensors, meta=None):
    """Write named arrays (and string metadata) to a bit-exact text file.

    Values are stored as C float hex, so load_tensors() reproduces every bit.
    """
    lines = ["tensorstore 1"]
    for key, value in (meta or {}).items():
        if any(c in key for c in " \n"):
            raise ValueError(f"meta key {key!r} must not contain spaces")
        if "\n" in str(value):
            raise ValueError(f"meta value for {key!r} must be a single line")
        lines.append(f"meta {key} {value}")
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype=np.float64)
        dims = " ".join(str(d) for d in arr.shape)
        lines.append(f"tensor {name} {arr.ndim}{' ' + dims if dims else ''}")
        rows = arr.reshape(arr.shape[0], -1) if arr.ndim >= 2 else arr.reshape(1, -1)
        for row in rows:
            lines.append(" ".join(float(v).hex() for v in row))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_tensors(path):
    """Read back a save_tensors() file; returns (tensors, meta)."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "tensorstore 1":
        raise ValueError(f"{path}: not a tensorstore file")
    tensors = {}
    meta = {}
    i = 1
    while i < len(lines):
        line = lines[i]
        if line.startswith("meta "):
            parts = line.split(" ", 2)
            meta[parts[1]] = parts[2] if len(parts) > 2 else ""
            i += 1
            continue
        if not line.startswith("tensor "):
            raise ValueError(f"{path}: unexpected line {line!r}")
        parts = line.split()
        name = parts[1]
        ndim = int(parts[2])
        shape = tuple(int(d) for d in parts[3:3 + ndim])
        if len(shape) != ndim:
            raise ValueError(f"{path}: truncated shape for tensor {name!r}")
        count = int(np.prod(shape)) if shape else 1
        values = []
        i += 1
        while len(values) < count:
            if i >= len(lines):
                raise ValueError(f"{path}: truncated values for tensor {name!r}")
            values.extend(float.fromhex(tok) for tok in lines[i].split())
            i += 1
        if len(values) != count:
            raise ValueError(f"{path}: value count mismatch for tensor {name!r}")
        tensors[name] = np.array(values, dtype=np.float64).reshape(shape)
    return tensors, meta
