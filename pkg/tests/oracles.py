"""Independent brute-force references for the tensor ops.

Everything here is written as plain loops over indices, deliberately
avoiding the vectorized formulations used by the package, so agreement
between the two is meaningful.  The `Counter` variants additionally count
every multiply and every max-comparison they perform, which pins down the
FLOP accounting convention (2 * multiplies for conv/dense, one comparison
per element dropped by a max).
"""

from __future__ import annotations

import math

import numpy as np


def conv3d_reference(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-size zero-padded 3D correlation, looped."""
    t, h, w, cin = x.shape
    kt, kh, kw, _, cout = kernel.shape
    pt, ph, pw = kt // 2, kh // 2, kw // 2
    out = np.zeros((t, h, w, cout), dtype=np.float64)
    for ti in range(t):
        for hi in range(h):
            for wi in range(w):
                for co in range(cout):
                    acc = float(bias[co])
                    for dt in range(kt):
                        for dh in range(kh):
                            for dw in range(kw):
                                si, sj, sk = ti + dt - pt, hi + dh - ph, wi + dw - pw
                                if 0 <= si < t and 0 <= sj < h and 0 <= sk < w:
                                    for ci in range(cin):
                                        acc += float(x[si, sj, sk, ci]) * float(
                                            kernel[dt, dh, dw, ci, co]
                                        )
                    out[ti, hi, wi, co] = acc
    return out.astype(x.dtype)


def maxpool_reference(x: np.ndarray, window) -> tuple[np.ndarray, np.ndarray]:
    """Ceil-mode max pool; also returns the flat argmax chosen per window.

    The argmax array holds, per output cell, the linear index of the
    winning element within the (wT, wH, wW) window in C-order, counting
    padded (missing) slots too, with ties going to the lowest index.
    """
    wt, wh, ww = window
    t, h, w, c = x.shape
    to, ho, wo = math.ceil(t / wt), math.ceil(h / wh), math.ceil(w / ww)
    out = np.empty((to, ho, wo, c), dtype=x.dtype)
    arg = np.empty((to, ho, wo, c), dtype=np.int64)
    for ti in range(to):
        for hi in range(ho):
            for wi in range(wo):
                for ci in range(c):
                    best = None
                    best_idx = -1
                    for dt in range(wt):
                        for dh in range(wh):
                            for dw in range(ww):
                                si, sj, sk = ti * wt + dt, hi * wh + dh, wi * ww + dw
                                if si < t and sj < h and sk < w:
                                    v = x[si, sj, sk, ci]
                                    if best is None or v > best:
                                        best = v
                                        best_idx = (dt * wh + dh) * ww + dw
                    out[ti, hi, wi, ci] = best
                    arg[ti, hi, wi, ci] = best_idx
    return out, arg


def dense_reference(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    k, m = weight.shape
    lead = x.shape[:-1]
    x2d = x.reshape(-1, k)
    out = np.zeros((x2d.shape[0], m), dtype=np.float64)
    for r in range(x2d.shape[0]):
        for j in range(m):
            acc = float(bias[j])
            for i in range(k):
                acc += float(x2d[r, i]) * float(weight[i, j])
            out[r, j] = acc
    return out.astype(x.dtype).reshape(lead + (m,))


def reduce_reference(x: np.ndarray, axes, mode: str, keepdims: bool) -> np.ndarray:
    """Mean or max over axes via per-output python loops."""
    axes = tuple(sorted(a % x.ndim for a in axes))
    kept = tuple(a for a in range(x.ndim) if a not in axes)
    out_shape = tuple(x.shape[a] for a in kept)
    out = np.empty(out_shape if out_shape else (), dtype=x.dtype)
    for kept_idx in np.ndindex(out_shape if out_shape else ()):
        vals = []
        for red_idx in np.ndindex(tuple(x.shape[a] for a in axes)):
            full = [0] * x.ndim
            for a, v in zip(kept, kept_idx):
                full[a] = v
            for a, v in zip(axes, red_idx):
                full[a] = v
            vals.append(float(x[tuple(full)]))
        out[kept_idx] = (sum(vals) / len(vals)) if mode == "mean" else max(vals)
    if keepdims:
        shape = list(x.shape)
        for a in axes:
            shape[a] = 1
        out = out.reshape(shape)
    return out


def bilinear_reference(x: np.ndarray, hw) -> np.ndarray:
    """Per-pixel bilinear resize with half-pixel centers, looped."""
    t, h, w, c = x.shape
    ho, wo = hw
    out = np.zeros((t, ho, wo, c), dtype=np.float64)
    for ti in range(t):
        for i in range(ho):
            cy = min(max((i + 0.5) * h / ho - 0.5, 0.0), h - 1.0)
            y0 = int(math.floor(cy))
            y1 = min(y0 + 1, h - 1)
            fy = cy - y0
            for j in range(wo):
                cx = min(max((j + 0.5) * w / wo - 0.5, 0.0), w - 1.0)
                x0 = int(math.floor(cx))
                x1 = min(x0 + 1, w - 1)
                fx = cx - x0
                for ci in range(c):
                    top = (1 - fx) * x[ti, y0, x0, ci] + fx * x[ti, y0, x1, ci]
                    bot = (1 - fx) * x[ti, y1, x0, ci] + fx * x[ti, y1, x1, ci]
                    out[ti, i, j, ci] = (1 - fy) * top + fy * bot
    return out.astype(x.dtype)


def haar_reference(x: np.ndarray) -> np.ndarray:
    """Looped orthonormal Haar step over every 2x2 block."""
    t, h, w, c = x.shape
    out = np.zeros((t, h // 2, w // 2, 4 * c), dtype=np.float64)
    for ti in range(t):
        for i in range(h // 2):
            for j in range(w // 2):
                for ci in range(c):
                    a = float(x[ti, 2 * i, 2 * j, ci])
                    b = float(x[ti, 2 * i, 2 * j + 1, ci])
                    cv = float(x[ti, 2 * i + 1, 2 * j, ci])
                    d = float(x[ti, 2 * i + 1, 2 * j + 1, ci])
                    out[ti, i, j, 4 * ci + 0] = (a + b + cv + d) / 2
                    out[ti, i, j, 4 * ci + 1] = (a - b + cv - d) / 2
                    out[ti, i, j, 4 * ci + 2] = (a + b - cv - d) / 2
                    out[ti, i, j, 4 * ci + 3] = (a - b - cv + d) / 2
    return out.astype(x.dtype)


def bce_reference(p: np.ndarray, y: np.ndarray, eps: float = 1e-7) -> float:
    total = 0.0
    for pi, yi in zip(p.reshape(-1), y.reshape(-1)):
        pc = min(max(float(pi), eps), 1.0 - eps)
        total += -(float(yi) * math.log(pc) + (1.0 - float(yi)) * math.log(1.0 - pc))
    return total / p.size


def finite_difference(loss_fn, arr: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar loss wrt arr, in place."""
    grad = np.zeros_like(arr, dtype=np.float64)
    flat = arr.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        hi = loss_fn()
        flat[i] = keep - eps
        lo = loss_fn()
        flat[i] = keep
        grad.reshape(-1)[i] = (hi - lo) / (2.0 * eps)
    return grad


class Counter:
    """Tallies multiplies and max-comparisons during a looped forward."""

    def __init__(self):
        self.multiplies = 0
        self.comparisons = 0

    @property
    def flops(self) -> int:
        return 2 * self.multiplies + self.comparisons

    def conv3d(self, x, kernel, bias):
        t, h, w, cin = x.shape
        kt, kh, kw, _, cout = kernel.shape
        # zero padding means every output element still consumes the full
        # kT*kH*kW*Cin patch; padded positions multiply against zeros
        self.multiplies += t * h * w * cout * (kt * kh * kw * cin)
        return conv3d_reference(x, kernel, bias)

    def dense(self, x, weight, bias):
        k, m = weight.shape
        rows = int(np.prod(x.shape[:-1], dtype=np.int64)) if x.ndim > 1 else 1
        self.multiplies += rows * k * m
        return dense_reference(x, weight, bias)

    def maxpool(self, x, window):
        out, _ = maxpool_reference(x, window)
        self.comparisons += x.size - out.size
        return out

    def reduce_max(self, x, axes):
        out = reduce_reference(x, axes, "max", keepdims=False)
        self.comparisons += x.size - out.size
        return out

    def reduce_mean(self, x, axes):
        return reduce_reference(x, axes, "mean", keepdims=False)
