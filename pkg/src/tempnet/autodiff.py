"""Dense rank-N tensors with reverse-mode automatic differentiation.

Every operation here is a plain function that computes its result eagerly
with numpy and, when a `Tape` is active and any input requires gradients,
records a node holding the backward closure.  `Tape.backward` then walks
the node list once in reverse execution order, which is already a valid
topological order because nodes are appended as they execute.

Conventions shared by all ops:

  * video tensors are laid out [T, H, W, C] (frames, rows, cols, channels)
  * float32 is the working precision; float64 is used for gradient checks
  * shape violations raise `ShapeError` naming the offending axis
  * overflow to inf/NaN in an op that can overflow raises `NonFiniteError`
    instead of silently propagating non-finite values
"""

from __future__ import annotations

import contextlib

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "NonFiniteError",
    "backward",
    "add",
    "mul",
    "broadcast_mul",
    "relu",
    "sigmoid",
    "conv3d",
    "maxpool",
    "dense",
    "reduce_mean",
    "reduce_max",
    "reshape",
    "bce_loss",
]

FLOAT_DTYPES = (np.dtype("float32"), np.dtype("float64"))


class ShapeError(ValueError):
    """An operand shape violates the operation's contract."""


class NonFiniteError(ArithmeticError):
    """A forward op overflowed to inf/NaN despite finite inputs."""


class Tensor:
    """Dense float array plus a trainable flag.

    `data` may be mutated in place only by an optimizer between graph
    executions; ops treat it as read-only.  Tensors hash by identity, so
    they can key gradient maps directly.
    """

    __slots__ = ("data", "trainable", "name", "_tracked")

    def __init__(self, data, trainable: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if arr.dtype not in FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        if arr.size == 0:
            raise ShapeError(f"tensor {name or ''} has a zero extent: shape {arr.shape}")
        self.data = arr
        self.trainable = bool(trainable)
        self.name = name
        self._tracked = self.trainable

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar, got shape {self.data.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        flag = ", trainable" if self.trainable else ""
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.data.shape}, dtype={self.data.dtype}{flag})"


class Node:
    """One executed op: inputs, output, and the gradient closure.

    `backward(grad, needs)` returns one gradient array per input, with
    None in slots where `needs` is False.
    """

    __slots__ = ("op", "inputs", "output", "backward")

    def __init__(self, op, inputs, output, backward):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward = backward


_TAPE_STACK: list["Tape"] = []

# Deliberately wrong conv3d kernel gradients, used to prove the gradient
# checker can catch a broken backward pass.
_CORRUPT_CONV_GRAD = False


@contextlib.contextmanager
def corrupted_conv_gradients():
    global _CORRUPT_CONV_GRAD
    _CORRUPT_CONV_GRAD = True
    try:
        yield
    finally:
        _CORRUPT_CONV_GRAD = False


class Tape:
    """Execution-order record of ops, used as a context manager.

    Nodes are appended in the order ops execute; reverse iteration is
    therefore a topological order and `backward` visits each node exactly
    once.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self, "tapes must unwind in LIFO order"
        return False

    @property
    def parameters(self) -> set[Tensor]:
        """Trainable tensors referenced anywhere on the tape."""
        params = set()
        for node in self.nodes:
            for t in node.inputs:
                if t.trainable:
                    params.add(t)
        return params

    def backward(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        """Accumulate d(loss)/d(param) for every trainable tensor on the tape.

        `loss` must be a scalar (size 1).  Returns a map keyed by the
        parameter tensors themselves; each gradient has exactly the
        parameter's shape and dtype.
        """
        if loss.data.size != 1:
            raise ShapeError(
                f"loss must be scalar, got shape {loss.data.shape} (size {loss.data.size})"
            )
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        holders: dict[int, Tensor] = {}
        result: dict[Tensor, np.ndarray] = {}
        for node in reversed(self.nodes):
            out_grad = grads.pop(id(node.output), None)
            if out_grad is None:
                continue  # this output never influenced the loss
            needs = tuple(t._tracked for t in node.inputs)
            in_grads = node.backward(out_grad, needs)
            for tensor, grad in zip(node.inputs, in_grads):
                if grad is None or not tensor._tracked:
                    continue
                if grad.shape != tensor.data.shape:
                    raise ShapeError(
                        f"{node.op}: gradient shape {grad.shape} does not match "
                        f"input shape {tensor.data.shape}"
                    )
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + grad
                else:
                    grads[key] = grad
                    holders[key] = tensor
        for key, grad in grads.items():
            tensor = holders.get(key)
            if tensor is not None and tensor.trainable:
                result[tensor] = grad
        return result


def backward(tape: Tape, loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Functional alias for `Tape.backward`."""
    return tape.backward(loss)


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _record(op: str, inputs: tuple[Tensor, ...], out_data: np.ndarray, backward_fn) -> Tensor:
    out = Tensor(out_data)
    tape = _active_tape()
    if tape is not None and any(t._tracked for t in inputs):
        out._tracked = True
        tape.nodes.append(Node(op, inputs, out, backward_fn))
    return out


def _ensure_finite(op: str, arr: np.ndarray) -> None:
    # One reduction over the array; isfinite(sum) is false iff any inf/NaN.
    if not np.isfinite(np.sum(arr, dtype=np.float64)):
        raise NonFiniteError(f"{op}: output overflowed to a non-finite value")


def _quiet_overflow():
    # Overflow is caught by _ensure_finite and raised as NonFiniteError,
    # so the interim numpy warning is redundant noise.
    return np.errstate(over="ignore")


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        for axis, (ea, eb) in enumerate(zip(a.shape, b.shape)):
            if ea != eb:
                raise ShapeError(f"{op}: axis {axis} differs ({ea} vs {eb})")
        raise ShapeError(f"{op}: ranks differ ({a.shape} vs {b.shape})")


# ---------------------------------------------------------------------------
# elementwise ops


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two equal-shape tensors."""
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape("add", a, b)
    with _quiet_overflow():
        out = a.data + b.data
    _ensure_finite("add", out)

    def bwd(g, needs):
        return (g if needs[0] else None, g if needs[1] else None)

    return _record("add", (a, b), out, bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two equal-shape tensors."""
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape("mul", a, b)
    with _quiet_overflow():
        out = a.data * b.data
    _ensure_finite("mul", out)

    def bwd(g, needs):
        ga = g * b.data if needs[0] else None
        gb = g * a.data if needs[1] else None
        return ga, gb

    return _record("mul", (a, b), out, bwd)


def broadcast_mul(gate: Tensor, x: Tensor) -> Tensor:
    """Scale each frame of x [T,H,W,C] by the per-frame gate [T,1,1,1]."""
    gate, x = _as_tensor(gate), _as_tensor(x)
    if x.data.ndim != 4:
        raise ShapeError(f"broadcast_mul: x must be rank 4 [T,H,W,C], got {x.shape}")
    if gate.shape != (x.shape[0], 1, 1, 1):
        raise ShapeError(
            f"broadcast_mul: gate must have shape ({x.shape[0]}, 1, 1, 1), got {gate.shape}"
        )
    with _quiet_overflow():
        out = gate.data * x.data
    _ensure_finite("broadcast_mul", out)

    def bwd(g, needs):
        gg = (g * x.data).sum(axis=(1, 2, 3), keepdims=True) if needs[0] else None
        gx = g * gate.data if needs[1] else None
        return gg, gx

    return _record("broadcast_mul", (gate, x), out, bwd)


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out = np.maximum(x.data, 0)

    def bwd(g, needs):
        if not needs[0]:
            return (None,)
        return (g * (x.data > 0),)

    return _record("relu", (x,), out, bwd)


def sigmoid(x: Tensor) -> Tensor:
    """Numerically stable logistic; finite for any finite input."""
    x = _as_tensor(x)
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bwd(g, needs):
        if not needs[0]:
            return (None,)
        return (g * out * (1.0 - out),)

    return _record("sigmoid", (x,), out, bwd)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    x = _as_tensor(x)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != x.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape} (size mismatch)")
    out = x.data.reshape(shape)

    def bwd(g, needs):
        if not needs[0]:
            return (None,)
        return (g.reshape(x.data.shape),)

    return _record("reshape", (x,), out, bwd)


# ---------------------------------------------------------------------------
# reductions


def _normalize_axes(op: str, axes, rank: int) -> tuple[int, ...]:
    axes = tuple(int(a) for a in axes)
    norm = []
    for a in axes:
        if not -rank <= a < rank:
            raise ShapeError(f"{op}: axis {a} out of range for rank {rank}")
        norm.append(a % rank)
    if len(set(norm)) != len(norm):
        raise ShapeError(f"{op}: duplicate axis in {axes}")
    return tuple(sorted(norm))


def reduce_mean(x: Tensor, axes, keepdims: bool = False) -> Tensor:
    """Mean over the given axes; empty axes is the identity."""
    x = _as_tensor(x)
    axes = _normalize_axes("reduce_mean", axes, x.data.ndim)
    if not axes:
        return x
    out = x.data.mean(axis=axes, keepdims=keepdims)
    _ensure_finite("reduce_mean", out)
    count = 1
    for a in axes:
        count *= x.shape[a]

    def bwd(g, needs):
        if not needs[0]:
            return (None,)
        gexp = g if keepdims else np.expand_dims(g, axes)
        return (np.broadcast_to(gexp / count, x.data.shape).copy(),)

    return _record("reduce_mean", (x,), out, bwd)


def reduce_max(x: Tensor, axes, keepdims: bool = False) -> Tensor:
    """Max over the given axes; gradient routes to the first argmax.

    Ties break to the lowest linear index of the reduced positions in the
    original C-order layout.  Empty axes is the identity.
    """
    x = _as_tensor(x)
    axes = _normalize_axes("reduce_max", axes, x.data.ndim)
    if not axes:
        return x
    rank = x.data.ndim
    kept = tuple(a for a in range(rank) if a not in axes)
    perm = kept + axes
    moved = x.data.transpose(perm)
    kept_shape = moved.shape[: len(kept)]
    flat = moved.reshape(int(np.prod(kept_shape, dtype=np.int64) or 1), -1)
    idx = flat.argmax(axis=1)
    out_flat = flat[np.arange(flat.shape[0]), idx]
    out = out_flat.reshape(kept_shape)
    if keepdims:
        out = np.expand_dims(out, axes)

    def bwd(g, needs):
        if not needs[0]:
            return (None,)
        gflat = (g if not keepdims else g.reshape(kept_shape)).reshape(-1)
        buf = np.zeros_like(flat)
        buf[np.arange(flat.shape[0]), idx] = gflat
        inv = np.argsort(perm)
        return (buf.reshape(moved.shape).transpose(inv).copy(),)

    return _record("reduce_max", (x,), out, bwd)


# ---------------------------------------------------------------------------
# conv / pool / dense


def _im2col3d(padded: np.ndarray, kshape: tuple[int, int, int], out_tHW) -> np.ndarray:
    """Unfold padded [Tp,Hp,Wp,Ci] into rows of (kT*kH*kW*Ci) patch values.

    Row index runs over output positions in C-order; column index runs
    (kt, kh, kw, ci), matching kernel.reshape(-1, Co).
    """
    kT, kH, kW = kshape
    view = sliding_window_view(padded, (kT, kH, kW), axis=(0, 1, 2))
    # view: (T, H, W, Ci, kT, kH, kW) -> (T, H, W, kT, kH, kW, Ci)
    view = view.transpose(0, 1, 2, 4, 5, 6, 3)
    t, h, w = out_tHW
    return np.ascontiguousarray(view).reshape(t * h * w, -1)


def conv3d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """3D convolution with same-size zero padding.

    x: [T,H,W,Cin], kernel: [kT,kH,kW,Cin,Cout] with odd kT/kH/kW,
    bias: [Cout].  Output: [T,H,W,Cout].  No stride, no dilation.
    """
    x, kernel, bias = _as_tensor(x), _as_tensor(kernel), _as_tensor(bias)
    if x.data.ndim != 4:
        raise ShapeError(f"conv3d: input must be rank 4 [T,H,W,C], got {x.shape}")
    if kernel.data.ndim != 5:
        raise ShapeError(f"conv3d: kernel must be rank 5 [kT,kH,kW,Cin,Cout], got {kernel.shape}")
    kT, kH, kW, cin, cout = kernel.shape
    for axis_name, extent in (("kT", kT), ("kH", kH), ("kW", kW)):
        if extent % 2 != 1:
            raise ShapeError(f"conv3d: kernel axis {axis_name} must be odd, got {extent}")
    if x.shape[3] != cin:
        raise ShapeError(f"conv3d: input channels {x.shape[3]} != kernel Cin {cin}")
    if bias.shape != (cout,):
        raise ShapeError(f"conv3d: bias must have shape ({cout},), got {bias.shape}")
    if x.dtype != kernel.dtype:
        raise ShapeError(f"conv3d: dtype mismatch ({x.dtype} vs {kernel.dtype})")

    t, h, w, _ = x.shape
    pads = ((kT // 2,) * 2, (kH // 2,) * 2, (kW // 2,) * 2, (0, 0))
    padded = np.pad(x.data, pads)
    cols = _im2col3d(padded, (kT, kH, kW), (t, h, w))
    with _quiet_overflow():
        out = cols @ kernel.data.reshape(-1, cout)
        out += bias.data
    _ensure_finite("conv3d", out)
    out = out.reshape(t, h, w, cout)

    def bwd(g, needs):
        g2d = g.reshape(-1, cout)
        gx = gk = gb = None
        if needs[0]:
            # adjoint of a same-padded correlation: correlate the upstream
            # grad with the spatially flipped, channel-transposed kernel
            kflip = kernel.data[::-1, ::-1, ::-1].transpose(0, 1, 2, 4, 3)
            gpad = np.pad(g, pads)
            gcols = _im2col3d(gpad, (kT, kH, kW), (t, h, w))
            gx = (gcols @ np.ascontiguousarray(kflip).reshape(-1, cin)).reshape(t, h, w, cin)
        if needs[1]:
            gk = (cols.T @ g2d).reshape(kernel.data.shape)
            if _CORRUPT_CONV_GRAD:
                gk = gk * 1.5
        if needs[2]:
            gb = g2d.sum(axis=0)
        return gx, gk, gb

    return _record("conv3d", (x, kernel, bias), out, bwd)


def maxpool(x: Tensor, window: tuple[int, int, int]) -> Tensor:
    """Max pooling over [T,H,W] with ceil-mode output extents.

    Each output extent is ceil(in/window); a partial trailing window pools
    only the valid elements.  The gradient routes the upstream value to the
    first argmax of each window (lowest linear index in (wT,wH,wW) order).
    """
    x = _as_tensor(x)
    if x.data.ndim != 4:
        raise ShapeError(f"maxpool: input must be rank 4 [T,H,W,C], got {x.shape}")
    window = tuple(int(v) for v in window)
    if len(window) != 3 or any(v < 1 for v in window):
        raise ShapeError(f"maxpool: window must be three extents >= 1, got {window}")
    wT, wH, wW = window
    t, h, w, c = x.shape
    to, ho, wo = -(-t // wT), -(-h // wH), -(-w // wW)
    pads = ((0, to * wT - t), (0, ho * wH - h), (0, wo * wW - w), (0, 0))
    padded = x.data
    if any(p[1] for p in pads):
        padded = np.pad(x.data, pads, constant_values=-np.inf)
    windows = (
        padded.reshape(to, wT, ho, wH, wo, wW, c)
        .transpose(0, 2, 4, 6, 1, 3, 5)
        .reshape(to, ho, wo, c, wT * wH * wW)
    )
    idx = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]

    def bwd(g, needs):
        if not needs[0]:
            return (None,)
        buf = np.zeros((to, ho, wo, c, wT * wH * wW), dtype=g.dtype)
        np.put_along_axis(buf, idx[..., None], g[..., None], axis=-1)
        gx = (
            buf.reshape(to, ho, wo, c, wT, wH, wW)
            .transpose(0, 4, 1, 5, 2, 6, 3)
            .reshape(to * wT, ho * wH, wo * wW, c)
        )
        return (np.ascontiguousarray(gx[:t, :h, :w, :]),)

    return _record("maxpool", (x,), out, bwd)


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map over the trailing axis: [..., K] @ [K, M] + [M]."""
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    if weight.data.ndim != 2:
        raise ShapeError(f"dense: weight must be rank 2 [K,M], got {weight.shape}")
    k, m = weight.shape
    if x.data.ndim < 1 or x.shape[-1] != k:
        raise ShapeError(f"dense: trailing axis of x is {x.shape[-1:]}, weight expects K={k}")
    if bias.shape != (m,):
        raise ShapeError(f"dense: bias must have shape ({m},), got {bias.shape}")
    lead = x.shape[:-1]
    x2d = x.data.reshape(-1, k)
    with _quiet_overflow():
        out = x2d @ weight.data + bias.data
    _ensure_finite("dense", out)
    out = out.reshape(lead + (m,))

    def bwd(g, needs):
        g2d = g.reshape(-1, m)
        gx = (g2d @ weight.data.T).reshape(x.data.shape) if needs[0] else None
        gw = x2d.T @ g2d if needs[1] else None
        gb = g2d.sum(axis=0) if needs[2] else None
        return gx, gw, gb

    return _record("dense", (x, weight, bias), out, bwd)


# ---------------------------------------------------------------------------
# loss

BCE_EPS = 1e-7


def bce_loss(predictions: Tensor, labels) -> Tensor:
    """Mean binary cross-entropy over a vector of probabilities.

    Predictions are clamped to [1e-7, 1 - 1e-7] before the logs; the
    gradient is zero where the clamp was active.  Labels must be exactly
    0 or 1.
    """
    predictions = _as_tensor(predictions)
    if predictions.data.ndim != 1:
        raise ShapeError(f"bce_loss: predictions must be rank 1, got {predictions.shape}")
    y = labels.data if isinstance(labels, Tensor) else np.asarray(labels, dtype=np.float64)
    y = y.astype(predictions.dtype, copy=False)
    if y.shape != predictions.shape:
        raise ShapeError(f"bce_loss: labels shape {y.shape} != predictions shape {predictions.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("bce_loss: labels must be exactly 0 or 1")
    p = predictions.data
    lo, hi = BCE_EPS, 1.0 - BCE_EPS
    pc = np.clip(p, lo, hi)
    n = p.shape[0]
    out = -(y * np.log(pc) + (1.0 - y) * np.log1p(-pc)).mean(dtype=p.dtype)
    _ensure_finite("bce_loss", out)

    def bwd(g, needs):
        if not needs[0]:
            return (None,)
        inside = (p >= lo) & (p <= hi)
        grad = np.zeros_like(p)
        grad[inside] = (pc[inside] - y[inside]) / (pc[inside] * (1.0 - pc[inside]) * n)
        return (grad * g,)

    return _record("bce_loss", (predictions,), np.asarray(out), bwd)
