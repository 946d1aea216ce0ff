"""Minimal reverse-mode autodiff over dense float64 numpy arrays.

Just enough machinery for the policy network: affine maps, batched matmul,
masked row softmax, ReLU, reductions, and elementwise arithmetic, recorded
on an explicit Tape. Parameters live in a ParamStore with parallel gradient
accumulators; Adam performs the updates.
"""
from __future__ import annotations

import numpy as np


class Tape:
    """Ordered record of taped tensors; backward walks it in reverse."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def record(self, t: "Tensor") -> None:
        self.nodes.append(t)

    def clear(self) -> None:
        self.nodes.clear()


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcasted gradient back to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A float64 array, optionally recorded on a tape for differentiation."""

    __slots__ = ("data", "grad", "parents", "_backward", "tape", "requires_grad")

    def __init__(self, data, tape: Tape | None = None, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.parents: tuple[Tensor, ...] = ()
        self._backward = None
        self.tape = tape
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def zero_grad(self) -> None:
        self.grad = None


def _result(data, parents, backward_fn) -> Tensor:
    tape = next((p.tape for p in parents if p.tape is not None), None)
    out = Tensor(data, tape=tape)
    out.parents = parents
    out._backward = backward_fn
    if tape is not None:
        tape.record(out)
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def add(a: Tensor, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data + b.data

    def backward(out):
        a._accumulate(_unbroadcast(out.grad, a.shape))
        b._accumulate(_unbroadcast(out.grad, b.shape))

    return _result(out_data, (a, b), backward)


def sub(a: Tensor, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data - b.data

    def backward(out):
        a._accumulate(_unbroadcast(out.grad, a.shape))
        b._accumulate(_unbroadcast(-out.grad, b.shape))

    return _result(out_data, (a, b), backward)


def mul(a: Tensor, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data * b.data

    def backward(out):
        a._accumulate(_unbroadcast(out.grad * b.data, a.shape))
        b._accumulate(_unbroadcast(out.grad * a.data, b.shape))

    return _result(out_data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data @ b.data

    def backward(out):
        ga = out.grad @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ out.grad
        a._accumulate(_unbroadcast(ga, a.shape))
        b._accumulate(_unbroadcast(gb, b.shape))

    return _result(out_data, (a, b), backward)


def transpose_last(a: Tensor) -> Tensor:
    out_data = np.swapaxes(a.data, -1, -2)

    def backward(out):
        a._accumulate(np.swapaxes(out.grad, -1, -2))

    return _result(out_data, (a,), backward)


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0.0)

    def backward(out):
        a._accumulate(out.grad * (a.data > 0.0))

    return _result(out_data, (a,), backward)


def affine(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """x @ W + b with a broadcast bias row."""
    if x.data.shape[-1] != W.data.shape[0]:
        raise ValueError(f"affine: inner dims disagree ({x.shape} @ {W.shape})")
    return add(matmul(x, W), b)


def softmax_rows(x: Tensor, mask: np.ndarray) -> Tensor:
    """Masked softmax along the last axis, stabilized by the row max.

    Masked entries get weight 0; fully masked rows come out all-zero.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.data.shape:
        raise ValueError("mask shape must match input shape")
    neg = np.where(mask, x.data, -np.inf)
    row_max = np.max(neg, axis=-1, keepdims=True)
    row_max = np.where(np.isfinite(row_max), row_max, 0.0)
    ex = np.where(mask, np.exp(neg - row_max), 0.0)
    denom = ex.sum(axis=-1, keepdims=True)
    safe = np.where(denom > 0.0, denom, 1.0)
    out_data = ex / safe

    def backward(out):
        s = out_data
        dot = (out.grad * s).sum(axis=-1, keepdims=True)
        x._accumulate(s * (out.grad - dot))

    return _result(out_data, (x,), backward)


def take_index(a: Tensor, index: int, axis: int) -> Tensor:
    """Select one slice along an axis (keeps remaining axes)."""
    out_data = np.take(a.data, index, axis=axis)

    def backward(out):
        g = np.zeros_like(a.data)
        idx = [slice(None)] * a.data.ndim
        idx[axis] = index
        g[tuple(idx)] = out.grad
        a._accumulate(g)

    return _result(out_data, (a,), backward)


def concat_last(parts: list[Tensor]) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    out_data = np.concatenate([p.data for p in parts], axis=-1)
    widths = [p.data.shape[-1] for p in parts]

    def backward(out):
        offset = 0
        for p, w in zip(parts, widths):
            p._accumulate(out.grad[..., offset:offset + w])
            offset += w

    return _result(out_data, tuple(parts), backward)


def sum_all(a: Tensor) -> Tensor:
    out_data = a.data.sum()

    def backward(out):
        a._accumulate(np.full_like(a.data, out.grad))

    return _result(out_data, (a,), backward)


def sum_last(a: Tensor) -> Tensor:
    out_data = a.data.sum(axis=-1)

    def backward(out):
        a._accumulate(np.repeat(out.grad[..., None], a.data.shape[-1], axis=-1))

    return _result(out_data, (a,), backward)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    out_data = a.data.mean()

    def backward(out):
        a._accumulate(np.full_like(a.data, out.grad / n))

    return _result(out_data, (a,), backward)


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d loss / d leaf for every tensor on the tape; clears the tape."""
    if loss.data.shape != ():
        raise ValueError("loss must be scalar")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        if node._backward is not None and node.grad is not None:
            node._backward(node)
    tape.clear()


class ParamStore:
    """Named trainable parameters with gradient accumulators."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}

    def create(self, name: str, data: np.ndarray) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)
        self.params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return list(self.params)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def copy(self) -> "ParamStore":
        other = ParamStore()
        for name, p in self.params.items():
            other.create(name, p.data.copy())
        return other

    def soft_update_from(self, online: "ParamStore", tau: float) -> None:
        """theta' <- tau * theta + (1 - tau) * theta', elementwise."""
        for name, p in self.params.items():
            p.data = tau * online.params[name].data + (1.0 - tau) * p.data

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write("gridswarm-params v1\n")
            for name, p in self.params.items():
                arr = np.atleast_2d(p.data)
                fh.write(f"param {name} {arr.shape[0]} {arr.shape[1]} ndim={p.data.ndim}\n")
                for row in arr:
                    fh.write(" ".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def load(cls, path: str) -> "ParamStore":
        store = cls()
        with open(path) as fh:
            header = fh.readline().strip()
            if header != "gridswarm-params v1":
                raise ValueError(f"unrecognized checkpoint header: {header!r}")
            for line in fh:
                tag, name, rows, cols, ndim = line.split()
                if tag != "param":
                    raise ValueError(f"malformed record: {line!r}")
                rows, cols = int(rows), int(cols)
                ndim = int(ndim.split("=")[1])
                data = np.array(
                    [[float(v) for v in fh.readline().split()] for _ in range(rows)]
                )
                if ndim == 0:
                    data = data.reshape(())
                elif ndim == 1:
                    data = data.reshape(-1)
                store.create(name, data)
        return store


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape: tuple[int, ...]) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class AdamState:
    """Per-parameter Adam moments and hyperparameters."""

    def __init__(self, lr: float = 0.0005, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def adam_step(params: ParamStore, opt: AdamState) -> None:
    """One Adam update from accumulated gradients; gradients are zeroed after."""
    opt.step_count += 1
    t = opt.step_count
    bc1 = 1.0 - opt.beta1 ** t
    bc2 = 1.0 - opt.beta2 ** t
    for name, p in params.params.items():
        if p.grad is None:
            raise ValueError(f"parameter {name!r} has no gradient")
        if name not in opt.m:
            opt.m[name] = np.zeros_like(p.data)
            opt.v[name] = np.zeros_like(p.data)
        g = p.grad
        opt.m[name] = opt.beta1 * opt.m[name] + (1.0 - opt.beta1) * g
        opt.v[name] = opt.beta2 * opt.v[name] + (1.0 - opt.beta2) * g * g
        m_hat = opt.m[name] / bc1
        v_hat = opt.v[name] / bc2
        p.data = p.data - opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps)
    params.zero_grad()
