"""Minimal reverse-mode automatic differentiation over dense numpy arrays.

Define-by-run: every op builds the tape as it executes; ``backward`` walks it
once in reverse topological order and then releases it, so a second backward
call without a fresh forward raises ``GraphConsumed``.

Storage is float32 by default with float64 accumulation inside reductions
(sums, means, softmax denominators, layer-norm statistics). Ops are limited to
what the encoder and denoiser need; there is no general broadcasting beyond
bias-over-last-axis and python scalars.
"""

from __future__ import annotations

import numpy as np

from .errors import GraphConsumed, ShapeMismatch


def _require_same_shape(a, b, op):
    if a.shape != b.shape:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} differ")


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype if dtype is not None else None)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float32)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g.astype(self.data.dtype, copy=False)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # operator sugar; python numbers go through the scalar ops
    def __add__(self, other):
        return add_scalar(self, other) if isinstance(other, (int, float)) else add(self, other)

    def __radd__(self, other):
        return add_scalar(self, other)

    def __sub__(self, other):
        return add_scalar(self, -other) if isinstance(other, (int, float)) else sub(self, other)

    def __rsub__(self, other):
        return add_scalar(scale(self, -1.0), other)

    def __mul__(self, other):
        return scale(self, other) if isinstance(other, (int, float)) else mul(self, other)

    def __rmul__(self, other):
        return scale(self, other)

    def __truediv__(self, other):
        return scale(self, 1.0 / other) if isinstance(other, (int, float)) else div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _make(data, parents, backward_fn):
    """Create an op output; the tape entry is skipped when no parent needs grad."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def backward(loss: Tensor) -> None:
    """Reverse pass from a scalar loss; populates ``grad`` on every tensor that
    requires grad, then frees the graph."""
    if loss.data.size != 1:
        raise ShapeMismatch(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GraphConsumed("backward: loss does not require grad (graph absent or already consumed)")
    if loss._backward is None and not loss._parents:
        raise GraphConsumed("backward: graph already consumed; rebuild the forward pass")

    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)
        node._parents = ()
        node._backward = None


# -- elementwise --------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a.data, b.data, "add")

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    return _make(a.data + b.data, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a.data, b.data, "sub")

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(-g)

    return _make(a.data - b.data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a.data, b.data, "mul")

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            b._accumulate(g * a.data)

    return _make(a.data * b.data, (a, b), bwd)


def div(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a.data, b.data, "div")

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g / b.data)
        if b.requires_grad:
            b._accumulate(-g * a.data / (b.data * b.data))

    return _make(a.data / b.data, (a, b), bwd)


def scale(a: Tensor, c) -> Tensor:
    c = float(c)

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g * c)

    return _make(a.data * c, (a,), bwd)


def add_scalar(a: Tensor, c) -> Tensor:
    c = float(c)

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g)

    return _make(a.data + c, (a,), bwd)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """x[..., D] + b[D]; the one broadcast the networks need."""
    if x.data.shape[-1] != b.data.shape[-1] or b.data.ndim != 1:
        raise ShapeMismatch(f"add_bias: shapes {x.data.shape} and {b.data.shape} incompatible")

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g)
        if b.requires_grad:
            b._accumulate(g.reshape(-1, g.shape[-1]).astype(np.float64).sum(axis=0))

    return _make(x.data + b.data, (x, b), bwd)


def gelu(x: Tensor) -> Tensor:
    # tanh approximation; smooth, so finite differences agree tightly
    c = np.sqrt(2.0 / np.pi)
    u = c * (x.data + 0.044715 * x.data**3)
    t = np.tanh(u)
    out = 0.5 * x.data * (1.0 + t)

    def bwd(g):
        if x.requires_grad:
            du = c * (1.0 + 3 * 0.044715 * x.data**2)
            x._accumulate(g * (0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t * t) * du))

    return _make(out, (x,), bwd)


def sigmoid(x: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-x.data))

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g * s * (1.0 - s))

    return _make(s, (x,), bwd)


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g * (1.0 - t * t))

    return _make(t, (x,), bwd)


# -- shape juggling -----------------------------------------------------------


def reshape(x: Tensor, shape) -> Tensor:
    old = x.data.shape

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g.reshape(old))

    return _make(x.data.reshape(shape), (x,), bwd)


def transpose(x: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g.transpose(inv))

    return _make(x.data.transpose(axes), (x,), bwd)


def concat(tensors, axis=-1) -> Tensor:
    tensors = list(tensors)
    datas = [t.data for t in tensors]
    splits = np.cumsum([d.shape[axis] for d in datas])[:-1]

    def bwd(g):
        parts = np.split(g, splits, axis=axis)
        for t, p in zip(tensors, parts):
            if t.requires_grad:
                t._accumulate(p)

    return _make(np.concatenate(datas, axis=axis), tensors, bwd)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis."""
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def bwd(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[idx] = g
            x._accumulate(gx)

    return _make(x.data[idx], (x,), bwd)


def gather(x: Tensor, index: np.ndarray) -> Tensor:
    """Index rows of x (axis 0) with an integer array; output shape index.shape + x.shape[1:]."""
    index = np.asarray(index)

    def bwd(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            np.add.at(gx, index, g)
            x._accumulate(gx)

    return _make(x.data[index], (x,), bwd)


def max_along(x: Tensor, axis: int) -> Tensor:
    arg = np.argmax(x.data, axis=axis)
    out = np.take_along_axis(x.data, np.expand_dims(arg, axis), axis=axis).squeeze(axis)

    def bwd(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            np.put_along_axis(
                gx, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis
            )
            x._accumulate(gx)

    return _make(out, (x,), bwd)


# -- linear algebra -----------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D (n,k)@(k,m) or batched 3-D (B,n,k)@(B,k,m)."""
    if a.data.ndim != b.data.ndim or a.data.ndim not in (2, 3):
        raise ShapeMismatch(f"matmul: unsupported ranks {a.data.shape} @ {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2] or (
        a.data.ndim == 3 and a.data.shape[0] != b.data.shape[0]
    ):
        raise ShapeMismatch(f"matmul: shapes {a.data.shape} and {b.data.shape} incompatible")

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.swapaxes(-1, -2))
        if b.requires_grad:
            b._accumulate(a.data.swapaxes(-1, -2) @ g)

    return _make(a.data @ b.data, (a, b), bwd)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x[N, in] @ w[in, out] (+ b[out])."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeMismatch(f"linear: shapes {x.data.shape} and {w.data.shape} incompatible")
    out = x.data @ w.data
    if b is not None:
        if b.data.shape != (w.data.shape[1],):
            raise ShapeMismatch(f"linear: bias {b.data.shape} vs out dim {w.data.shape[1]}")
        out = out + b.data

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g @ w.data.T)
        if w.requires_grad:
            w._accumulate(x.data.T @ g)
        if b is not None and b.requires_grad:
            b._accumulate(g.astype(np.float64).sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return _make(out, parents, bwd)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis; statistics accumulated in float64."""
    d = x.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeMismatch(f"layer_norm: params {gain.data.shape}/{bias.data.shape} vs width {d}")
    x64 = x.data.astype(np.float64)
    mu = x64.mean(axis=-1, keepdims=True)
    xc = x64 - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = (gain.data * xhat + bias.data).astype(x.data.dtype)

    def bwd(g):
        g64 = g.astype(np.float64)
        if gain.requires_grad:
            gain._accumulate((g64 * xhat).reshape(-1, d).sum(axis=0))
        if bias.requires_grad:
            bias._accumulate(g64.reshape(-1, d).sum(axis=0))
        if x.requires_grad:
            gh = g64 * gain.data.astype(np.float64)
            t1 = gh * inv
            t2 = inv / d * gh.sum(axis=-1, keepdims=True)
            t3 = xhat * inv / d * (gh * xhat).sum(axis=-1, keepdims=True)
            x._accumulate(t1 - t2 - t3)

    return _make(out, (x, gain, bias), bwd)


def standardize(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize over ALL elements to zero mean / unit variance, then apply a
    scalar affine: gain * xhat + bias (gain, bias shaped (1,))."""
    if gain.data.shape != (1,) or bias.data.shape != (1,):
        raise ShapeMismatch(f"standardize: affine params must be (1,), got {gain.data.shape}/{bias.data.shape}")
    x64 = x.data.astype(np.float64)
    n = x64.size
    mu = x64.mean()
    xc = x64 - mu
    var = (xc * xc).mean()
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = (gain.data[0] * xhat + bias.data[0]).astype(x.data.dtype)

    def bwd(g):
        g64 = g.astype(np.float64)
        if gain.requires_grad:
            gain._accumulate(np.array([(g64 * xhat).sum()]))
        if bias.requires_grad:
            bias._accumulate(np.array([g64.sum()]))
        if x.requires_grad:
            gh = g64 * float(gain.data[0])
            x._accumulate(inv * (gh - gh.mean() - xhat * (gh * xhat).mean()))

    return _make(out, (x, gain, bias), bwd)


def softmax(x: Tensor, additive_mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis; optional additive mask (e.g. -1e9 at banned slots)."""
    z = x.data if additive_mask is None else x.data + additive_mask.astype(x.data.dtype)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = (e / e.astype(np.float64).sum(axis=-1, keepdims=True)).astype(x.data.dtype)

    def bwd(g):
        if x.requires_grad:
            gs = (g * s).astype(np.float64)
            x._accumulate(gs - s * gs.sum(axis=-1, keepdims=True))

    return _make(s, (x,), bwd)


# -- reductions / losses -------------------------------------------------------


def reduce_sum(x: Tensor) -> Tensor:
    out = np.asarray(x.data.astype(np.float64).sum(), dtype=x.data.dtype)

    def bwd(g):
        if x.requires_grad:
            x._accumulate(np.full_like(x.data, float(g)))

    return _make(out, (x,), bwd)


def reduce_mean(x: Tensor) -> Tensor:
    n = x.data.size
    out = np.asarray(x.data.astype(np.float64).sum() / n, dtype=x.data.dtype)

    def bwd(g):
        if x.requires_grad:
            x._accumulate(np.full_like(x.data, float(g) / n))

    return _make(out, (x,), bwd)


def mse(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a.data, b.data, "mse")
    diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    n = diff.size
    out = np.asarray((diff * diff).sum() / n, dtype=a.data.dtype)

    def bwd(g):
        gg = 2.0 * float(g) / n * diff
        if a.requires_grad:
            a._accumulate(gg)
        if b.requires_grad:
            b._accumulate(-gg)

    return _make(out, (a, b), bwd)


def sinusoidal_encode(x: Tensor, n_bands: int = 8) -> Tensor:
    """Per scalar channel: [sin(pi 2^j x), cos(pi 2^j x)] for j < n_bands,
    flattened into the last axis (width grows by 2*n_bands)."""
    freq = np.pi * (2.0 ** np.arange(n_bands))
    ang = x.data[..., None] * freq.astype(x.data.dtype)  # (..., C, B)
    sin, cos = np.sin(ang), np.cos(ang)
    out = np.concatenate([sin, cos], axis=-1).reshape(*x.data.shape[:-1], -1)

    def bwd(g):
        if x.requires_grad:
            gb = g.reshape(*x.data.shape, 2 * n_bands)
            gsin, gcos = gb[..., :n_bands], gb[..., n_bands:]
            x._accumulate(((gsin * cos - gcos * sin) * freq).sum(axis=-1))

    return _make(out, (x,), bwd)


# -- parameters / optimizer ----------------------------------------------------


def parameter(data, name=None) -> Tensor:
    t = Tensor(np.asarray(data, dtype=np.float32), requires_grad=True)
    return t


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out)).astype(np.float32)


def zero_grads(params: dict) -> None:
    for p in params.values():
        p.grad = None


def assert_finite(x, what="tensor"):
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    if not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite values in {what}")


class OptimState:
    """Adam state with bias correction; learning rate mutable for schedules."""

    def __init__(self, lr=2e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {}
        self.v = {}


def adam_step(params: dict, state: OptimState) -> None:
    """Standard bias-corrected Adam update, in place; tensors without grads stay put."""
    state.step_count += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step_count
    c2 = 1.0 - b2**state.step_count
    for name, p in params.items():
        if not p.requires_grad or p.grad is None:
            continue
        g = p.grad
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def multistep_lr(base_lr: float, epoch: int, milestones, gamma: float = 0.5) -> float:
    lr = base_lr
    for m in milestones:
        if epoch >= m:
            lr *= gamma
    return lr


# -- finite-difference harness ---------------------------------------------------


def finite_difference_check(build, inputs, h=1e-3):
    """Compare analytic grads against central finite differences in float64.

    build: callable(list[Tensor]) -> scalar Tensor, rebuilt per evaluation.
    inputs: list of float64 numpy arrays treated as differentiable leaves.
    Returns the worst relative error over all inputs.
    """
    leaves = [Tensor(np.asarray(x, dtype=np.float64), requires_grad=True) for x in inputs]
    loss = build(leaves)
    backward(loss)
    analytic = [np.zeros_like(l.data) if l.grad is None else l.grad.copy() for l in leaves]

    worst = 0.0
    for i, x in enumerate(inputs):
        x = np.asarray(x, dtype=np.float64)
        num = np.zeros_like(x)
        flat = x.reshape(-1)
        nflat = num.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            fp = float(build([Tensor(v, dtype=np.float64) for v in inputs]).data)
            flat[j] = orig - h
            fm = float(build([Tensor(v, dtype=np.float64) for v in inputs]).data)
            flat[j] = orig
            nflat[j] = (fp - fm) / (2 * h)
        denom = np.linalg.norm(analytic[i]) + np.linalg.norm(num)
        if denom < 1e-12:
            continue
        worst = max(worst, float(np.linalg.norm(analytic[i] - num) / denom))
    return worst
