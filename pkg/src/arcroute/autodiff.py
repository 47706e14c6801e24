"""Reverse-mode automatic differentiation on dense numpy arrays, plus Adam.

A tape of operation records is built during the forward pass and replayed
in reverse topological order by ``backward``. The op set is exactly what
the attention policy needs; there is no broadcasting beyond what its
blocks use and no compilation. Tapes are single-threaded; parameter
tensors may be read-shared across rollout workers and are only written by
the optimizer between batches.
"""

from __future__ import annotations

import io
import struct
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

MASK_FILL = -1e9  # finite surrogate for -inf so arithmetic stays total

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape recording (rollouts, evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "name", "_done")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None, name=""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad and _grad_enabled
        self._parents = parents if self.requires_grad else ()
        self._backward_fn = backward_fn if self.requires_grad else None
        self.name = name
        self._done = False

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(name={self.name!r}, shape={self.data.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __truediv__(self, scalar):
        return mul(self, 1.0 / float(scalar))


def tensor(data, requires_grad=False, name="") -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=requires_grad, name=name)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _make(data, parents, backward_fn) -> Tensor:
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data)
    return Tensor(data, requires_grad=True, parents=parents, backward_fn=backward_fn)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a gradient back to the shape of a broadcast operand."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# forward ops
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = a.data + b.data

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _make(out, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = a.data * b.data

    def bw(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(out, (a, b), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul wants 2-D operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    out = a.data @ b.data

    def bw(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _make(out, (a, b), bw)


def transpose(a: Tensor) -> Tensor:
    def bw(g):
        _accumulate(a, g.T)

    return _make(a.data.T, (a,), bw)


def concat(parts: list[Tensor], axis: int) -> Tensor:
    parts = [_lift(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]

    def bw(g):
        offset = 0
        for p, size in zip(parts, sizes):
            index = [slice(None)] * g.ndim
            index[axis] = slice(offset, offset + size)
            _accumulate(p, g[tuple(index)])
            offset += size

    return _make(out, tuple(parts), bw)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    def bw(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        _accumulate(a, full)

    return _make(a.data[start:stop], (a,), bw)


def gather_rows(a: Tensor, indices) -> Tensor:
    idx = np.asarray(indices, dtype=np.int64)

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        _accumulate(a, full)

    return _make(a.data[idx], (a,), bw)


def softmax_rows(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        _accumulate(a, out * (g - dot))

    return _make(out, (a,), bw)


def masked_fill(a: Tensor, mask, value: float = MASK_FILL) -> Tensor:
    keep = ~np.asarray(mask, dtype=bool)
    out = np.where(keep, a.data, value)

    def bw(g):
        _accumulate(a, np.where(keep, g, 0.0))

    return _make(out, (a,), bw)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def bw(g):
        _accumulate(a, g * (1.0 - out * out))

    return _make(out, (a,), bw)


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)

    def bw(g):
        _accumulate(a, g * (a.data > 0.0))

    return _make(out, (a,), bw)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    out = np.where(a.data > 0.0, a.data, slope * a.data)

    def bw(g):
        _accumulate(a, g * np.where(a.data > 0.0, 1.0, slope))

    return _make(out, (a,), bw)


def elu(a: Tensor) -> Tensor:
    out = np.where(a.data > 0.0, a.data, np.exp(np.minimum(a.data, 0.0)) - 1.0)

    def bw(g):
        _accumulate(a, g * np.where(a.data > 0.0, 1.0, out + 1.0))

    return _make(out, (a,), bw)


def mean_rows(a: Tensor) -> Tensor:
    """Column means over the row axis, kept as a (1, n) row."""
    out = a.data.mean(axis=0, keepdims=True)
    m = a.data.shape[0]

    def bw(g):
        _accumulate(a, np.broadcast_to(g / m, a.data.shape).copy())

    return _make(out, (a,), bw)


def normalize(a: Tensor, scale: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each column over the row (arc) axis, then scale and shift.

    Statistics are per feature within the single input, so inference does
    not depend on any batch composition. Zero-variance columns come out
    as zeros thanks to eps.
    """
    scale, shift = _lift(scale), _lift(shift)
    m = a.data.shape[0]
    mean = a.data.mean(axis=0, keepdims=True)
    var = ((a.data - mean) ** 2).mean(axis=0, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (a.data - mean) * inv
    out = xhat * scale.data + shift.data

    def bw(g):
        _accumulate(shift, _unbroadcast(g, shift.data.shape))
        _accumulate(scale, _unbroadcast(g * xhat, scale.data.shape))
        gx = g * scale.data
        _accumulate(
            a,
            inv
            * (
                gx
                - gx.mean(axis=0, keepdims=True)
                - xhat * (gx * xhat).mean(axis=0, keepdims=True)
            ),
        )

    return _make(out, (a, scale, shift), bw)


def sum_all(a: Tensor) -> Tensor:
    def bw(g):
        _accumulate(a, np.broadcast_to(g, a.data.shape).copy())

    return _make(a.data.sum(), (a,), bw)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size

    def bw(g):
        _accumulate(a, np.broadcast_to(g / n, a.data.shape).copy())

    return _make(a.data.mean(), (a,), bw)


def log(a: Tensor) -> Tensor:
    out = np.log(a.data)

    def bw(g):
        _accumulate(a, g / a.data)

    return _make(out, (a,), bw)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def bw(g):
        _accumulate(a, g * out)

    return _make(out, (a,), bw)


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    out = np.clip(a.data, lo, hi)

    def bw(g):
        _accumulate(a, g * ((a.data >= lo) & (a.data <= hi)))

    return _make(out, (a,), bw)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    pick_a = a.data <= b.data
    out = np.where(pick_a, a.data, b.data)

    def bw(g):
        _accumulate(a, _unbroadcast(g * pick_a, a.data.shape))
        _accumulate(b, _unbroadcast(g * ~pick_a, b.data.shape))

    return _make(out, (a, b), bw)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Populate .grad of every reachable requires_grad tensor.

    The loss must be scalar. Calling backward twice on the same tape
    without an optimizer step (which zeroes gradients) is rejected.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not require grad (built under no_grad or constant)")
    if loss._done:
        raise RuntimeError("backward called twice on the same tape without reset")
    loss._done = True
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward_fn is not None and node.grad is not None:
            node._backward_fn(node.grad)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_stability: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def adam_step(named_params, state: AdamState) -> None:
    """Bias-corrected Adam update in place; gradients are zeroed afterward."""
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, p in named_params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = state.first_moment.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.first_moment[name] = m
            state.second_moment[name] = np.zeros_like(p.data)
        v = state.second_moment[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon_stability)
        p.grad = None


# ---------------------------------------------------------------------------
# Checkpoints: versioned header, manifest, 32-bit little-endian payload
# ---------------------------------------------------------------------------

_MAGIC = b"ARCROUTE"
_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, named_tensors, manifest: dict) -> None:
    items = list(named_tensors)
    manifest_bytes = "".join(f"{k} = {v}\n" for k, v in manifest.items()).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(items)))
        fh.write(struct.pack("<I", len(manifest_bytes)))
        fh.write(manifest_bytes)
        for name, t in items:
            data = np.ascontiguousarray(t.data, dtype="<f4")
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<B", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    with open(path, "rb") as fh:
        raw = fh.read()
    buf = io.BytesIO(raw)
    if buf.read(8) != _MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version, count = struct.unpack("<II", buf.read(8))
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (manifest_len,) = struct.unpack("<I", buf.read(4))
    manifest: dict[str, str] = {}
    for line in buf.read(manifest_len).decode("utf-8").splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition(" = ")
        manifest[key.strip()] = value.strip()
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", buf.read(2))
        name = buf.read(name_len).decode("utf-8")
        (rank,) = struct.unpack("<B", buf.read(1))
        dims = struct.unpack(f"<{rank}I", buf.read(4 * rank))
        size = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(buf.read(4 * size), dtype="<f4").reshape(dims)
        tensors[name] = data.astype(np.float64)
    return tensors, manifest
