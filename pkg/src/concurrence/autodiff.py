"""Dense float64 tensors with reverse-mode differentiation, plus Adam.

This is not a general autodiff framework. It covers exactly the operation
set the concurrence network needs: valid 1D convolution, batch
normalization, inverted dropout, ReLU, (batched) matmul, elementwise
arithmetic with limited broadcasting, axis reductions, and a numerically
stable binary cross entropy on logits.

All arithmetic is 64-bit. Reductions use numpy's fixed sequential
accumulation order, so forward and backward passes are reproducible for a
given seed. A computation graph belongs to a single thread; independent
graphs may run concurrently.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "conv1d",
    "batchnorm1d",
    "BatchNormState",
    "dropout",
    "relu",
    "bce_with_logits",
    "AdamState",
    "adam_step",
    "zero_grad",
]


def _as_array(value) -> np.ndarray:
    # note: order="C" (not ascontiguousarray) so 0-d scalars stay 0-d
    return np.asarray(value, dtype=np.float64, order="C")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A dense float64 array plus an optional gradient buffer.

    Gradients accumulate into ``.grad`` when ``backward`` is called on a
    scalar result; call :func:`zero_grad` between optimizer steps.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph construction helpers ------------------------------------

    @staticmethod
    def _lift(value) -> "Tensor":
        return value if isinstance(value, Tensor) else Tensor(value)

    def _make_child(self, data: np.ndarray, parents: tuple["Tensor", ...], backward) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.requires_grad = any(p.requires_grad for p in parents)
        out.grad = None
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad += grad

    # -- arithmetic -----------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = Tensor._lift(other)
        out_data = self.data + other.data

        def backward(g: np.ndarray) -> None:
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))

        return self._make_child(out_data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        out_data = -self.data

        def backward(g: np.ndarray) -> None:
            if self.requires_grad:
                self._accumulate(-g)

        return self._make_child(out_data, (self,), backward)

    def __sub__(self, other) -> "Tensor":
        return self + (-Tensor._lift(other))

    def __rsub__(self, other) -> "Tensor":
        return Tensor._lift(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = Tensor._lift(other)
        out_data = self.data * other.data

        def backward(g: np.ndarray) -> None:
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        return self._make_child(out_data, (self, other), backward)

    __rmul__ = __mul__

    def __matmul__(self, other) -> "Tensor":
        other = Tensor._lift(other)
        out_data = np.matmul(self.data, other.data)

        def backward(g: np.ndarray) -> None:
            if self.requires_grad:
                ga = np.matmul(g, np.swapaxes(other.data, -1, -2))
                self._accumulate(_unbroadcast(ga, self.data.shape))
            if other.requires_grad:
                gb = np.matmul(np.swapaxes(self.data, -1, -2), g)
                other._accumulate(_unbroadcast(gb, other.data.shape))

        return self._make_child(out_data, (self, other), backward)

    def swap_last_axes(self) -> "Tensor":
        out_data = np.ascontiguousarray(np.swapaxes(self.data, -1, -2))

        def backward(g: np.ndarray) -> None:
            if self.requires_grad:
                self._accumulate(np.swapaxes(g, -1, -2))

        return self._make_child(out_data, (self,), backward)

    # -- reductions -----------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g: np.ndarray) -> None:
            if not self.requires_grad:
                return
            if axis is None:
                self._accumulate(np.broadcast_to(g, self.data.shape).copy())
                return
            gg = g if keepdims else np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(gg, self.data.shape).copy())

        return self._make_child(np.asarray(out_data), (self,), backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in np.atleast_1d(axis)]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(count))

    # -- backward entry point --------------------------------------------

    def backward(self) -> None:
        """Populate ``.grad`` on every reachable tensor with requires_grad."""
        if self.data.size != 1:
            raise ValueError("backward requires a scalar loss")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen and parent.requires_grad:
                    stack.append((parent, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)
                # interior gradients are fully consumed here; free them so
                # peak memory stays near one layer's activations
                node.grad = None


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0.0
    out_data = np.where(mask, x.data, 0.0)

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(g * mask)

    return x._make_child(out_data, (x,), backward)


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor, stride: int = 1) -> Tensor:
    """Valid (unpadded) 1D convolution.

    ``x`` is (Cin, L) or batched (N, Cin, L); ``kernels`` is (Cout, Cin, k);
    ``bias`` is (Cout,). Output length is floor((L - k) / stride) + 1.
    Entry [o, j] is bias[o] + sum over c, i of x[c, j*stride + i] *
    kernels[o, c, i] (cross-correlation indexing, as usual for conv layers).
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    batched = x.data.ndim == 3
    if not batched and x.data.ndim != 2:
        raise ValueError("conv1d input must be (Cin, L) or (N, Cin, L)")
    cout, cin, k = kernels.data.shape
    xdata = x.data if batched else x.data[None]
    n, cin_x, length = xdata.shape
    if cin_x != cin:
        raise ValueError(f"input has {cin_x} channels, kernels expect {cin}")
    if length < k:
        raise ValueError(f"segment too short for kernel: L={length} < k={k}")
    lout = (length - k) // stride + 1

    windows = np.lib.stride_tricks.sliding_window_view(xdata, k, axis=2)
    windows = windows[:, :, :: stride, :]  # (N, Cin, Lout, k)
    cols = np.ascontiguousarray(windows.transpose(0, 2, 1, 3)).reshape(n * lout, cin * k)
    wmat = kernels.data.reshape(cout, cin * k)
    out = cols @ wmat.T + bias.data
    out_data = np.ascontiguousarray(out.reshape(n, lout, cout).transpose(0, 2, 1))
    if not batched:
        out_data = out_data[0]

    def backward(g: np.ndarray) -> None:
        gb = g if batched else g[None]
        gmat = np.ascontiguousarray(gb.transpose(0, 2, 1)).reshape(n * lout, cout)
        if kernels.requires_grad:
            kernels._accumulate((gmat.T @ cols).reshape(cout, cin, k))
        if bias.requires_grad:
            bias._accumulate(gmat.sum(axis=0))
        if x.requires_grad:
            dcols = (gmat @ wmat).reshape(n, lout, cin, k).transpose(0, 2, 1, 3)
            dx = np.zeros_like(xdata)
            for i in range(k):
                dx[:, :, i : i + stride * (lout - 1) + 1 : stride] += dcols[:, :, :, i]
            x._accumulate(dx if batched else dx[0])

    return x._make_child(out_data, (x, kernels, bias), backward)


class BatchNormState:
    """Running mean/variance buffers for one batch normalization layer."""

    __slots__ = ("mean", "var")

    def __init__(self, channels: int):
        self.mean = np.zeros(channels, dtype=np.float64)
        self.var = np.ones(channels, dtype=np.float64)

    def copy(self) -> "BatchNormState":
        out = BatchNormState(self.mean.shape[0])
        out.mean = self.mean.copy()
        out.var = self.var.copy()
        return out


def batchnorm1d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    state: BatchNormState,
    mode: str,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalization over (batch, time).

    ``x`` is (N, C, L). Train mode normalizes by the batch's biased
    mean/variance and updates the running buffers (running variance gets the
    unbiased estimate, the usual convention). Eval mode normalizes by the
    running buffers. Scale/shift are the learnable gamma and beta.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    if x.data.ndim != 3:
        raise ValueError("batchnorm1d input must be (N, C, L)")
    n, c, length = x.data.shape
    if n == 0:
        raise ValueError("batchnorm1d requires a nonempty batch")
    count = n * length
    gshape = (1, c, 1)

    if mode == "train":
        if count < 2:
            raise ValueError("train-mode batchnorm needs at least 2 values per channel")
        mean = x.data.mean(axis=(0, 2))
        var = x.data.var(axis=(0, 2))
        state.mean = (1.0 - momentum) * state.mean + momentum * mean
        state.var = (1.0 - momentum) * state.var + momentum * var * count / (count - 1)
    else:
        mean = state.mean
        var = state.var

    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(gshape)) * rstd.reshape(gshape)
    out_data = gamma.data.reshape(gshape) * xhat + beta.data.reshape(gshape)

    def backward(g: np.ndarray) -> None:
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=(0, 2)))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=(0, 2)))
        if not x.requires_grad:
            return
        gx = g * gamma.data.reshape(gshape)
        if mode == "eval":
            x._accumulate(gx * rstd.reshape(gshape))
            return
        sum_gx = gx.sum(axis=(0, 2), keepdims=True)
        sum_gx_xhat = (gx * xhat).sum(axis=(0, 2), keepdims=True)
        dx = (rstd.reshape(gshape) / count) * (count * gx - sum_gx - xhat * sum_gx_xhat)
        x._accumulate(dx)

    return x._make_child(out_data, (x, gamma, beta), backward)


def dropout(x: Tensor, rate: float, mode: str, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero with probability ``rate``, scale survivors."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "eval" or rate == 0.0:
        return x
    keep = rng.random(x.data.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    factor = keep * scale
    out_data = x.data * factor

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(g * factor)

    return x._make_child(out_data, (x,), backward)


def bce_with_logits(logits: Tensor, labels) -> Tensor:
    """Elementwise binary cross entropy on raw scores.

    ``labels`` holds 0/1 constants. Uses the softplus form
    max(z, 0) - z*y + log1p(exp(-|z|)), which never overflows.
    """
    y = np.asarray(labels, dtype=np.float64)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be 0 or 1")
    z = logits.data
    out_data = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))

    def backward(g: np.ndarray) -> None:
        if logits.requires_grad:
            sig = 1.0 / (1.0 + np.exp(-z))
            logits._accumulate(g * (sig - y))

    return logits._make_child(out_data, (logits,), backward)


class AdamState:
    """First/second moment buffers and step counter for a parameter list."""

    def __init__(self, params: list[Tensor], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]


def adam_step(params: list[Tensor], state: AdamState) -> None:
    """One bias-corrected Adam update, reading each parameter's ``.grad``."""
    if len(params) != len(state.m):
        raise ValueError("parameter count does not match optimizer state")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for i, p in enumerate(params):
        g = p.grad
        if g is None:
            continue
        if g.shape != state.m[i].shape:
            raise ValueError(f"gradient shape {g.shape} does not match state {state.m[i].shape}")
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        mhat = state.m[i] / (1.0 - b1 ** t)
        vhat = state.v[i] / (1.0 - b2 ** t)
        p.data -= state.lr * mhat / (np.sqrt(vhat) + state.eps)


def zero_grad(params: list[Tensor]) -> None:
    for p in params:
        p.grad = None
