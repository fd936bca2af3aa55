"""The detection network: a spatial stage stack with per-stage temporal
attention, a bridge pool, a temporal stage stack, and a sigmoid head.

Layout per clip is [T, H, W, C].  Spatial stages shrink H and W while
attention re-weights frames; the bridge pool is the first cut to the
temporal extent, after which temporal stages reduce T to 1.  A single
analytic walker (`stage_table`) is the source of truth for stage shapes,
parameter counts, and FLOP counts; `build` sizes every layer from it, so
the executable network and the reported tables cannot drift apart.

FLOP convention: 2 * multiply-accumulates for conv/dense outputs (bias
add excluded), one comparison per element eliminated by a max (pooling
and max-reduction), zero for means, ReLU, sigmoid, and elementwise ops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    ShapeError,
    Tensor,
    add,
    broadcast_mul,
    conv3d,
    dense,
    maxpool,
    reduce_max,
    reduce_mean,
    relu,
    reshape,
    sigmoid,
)
from .store import ParamStore

__all__ = [
    "TempNetConfig",
    "StageRow",
    "AttentionTrace",
    "Network",
    "stage_table",
    "count_params",
    "count_flops",
    "describe",
    "build",
    "temporal_attention",
]

KERNEL = 3  # every conv is 3x3x3


@dataclass
class TempNetConfig:
    """Architecture hyperparameters; every field has the stock default."""

    input_shape: tuple[int, int, int, int] = (20, 150, 200, 1)
    channels: int = 16
    spatial_blocks: int = 4
    temporal_blocks: int = 4
    attention: bool = True
    attention_reduction: int = 4
    spatial_pool: tuple[int, int, int] = (1, 2, 2)
    temporal_pool: tuple[int, int, int] = (2, 1, 1)
    bridge_pool: tuple[int, int, int] = (2, 2, 2)

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)
        if len(self.input_shape) != 4 or any(v < 1 for v in self.input_shape):
            raise ValueError(f"input_shape must be four positive extents, got {self.input_shape}")
        for name in ("channels", "spatial_blocks", "temporal_blocks", "attention_reduction"):
            v = int(getattr(self, name))
            if v < 1:
                raise ValueError(f"{name} must be >= 1, got {v}")
            setattr(self, name, v)
        self.attention = bool(self.attention)
        for name in ("spatial_pool", "temporal_pool", "bridge_pool"):
            win = tuple(int(v) for v in getattr(self, name))
            if len(win) != 3 or any(v < 1 for v in win):
                raise ValueError(f"{name} must be three extents >= 1, got {win}")
            setattr(self, name, win)


@dataclass(frozen=True)
class StageRow:
    """One line of the architecture table."""

    name: str
    output_shape: tuple[int, ...]
    params: int
    flops: int


def _pool_shape(name: str, shape, window) -> tuple[int, int, int, int]:
    t, h, w, c = shape
    for axis_label, extent, win in (("T", t, window[0]), ("H", h, window[1]), ("W", w, window[2])):
        if win > 1 and extent == 1:
            raise ShapeError(
                f"{name}: axis {axis_label} already has extent 1, cannot pool by {win}; "
                f"the pooling schedule over-reduces this axis"
            )
    return (math.ceil(t / window[0]), math.ceil(h / window[1]), math.ceil(w / window[2]), c)


def _conv_row(name: str, shape, cin: int, cout: int) -> StageRow:
    t, h, w = shape[:3]
    voxels = t * h * w
    k3 = KERNEL**3
    return StageRow(name, (t, h, w, cout), k3 * cin * cout + cout, 2 * k3 * cin * voxels * cout)


def _block_rows(name: str, shape, ch: int) -> StageRow:
    c1 = _conv_row(f"{name}.conv1", shape, ch, ch)
    c2 = _conv_row(f"{name}.conv2", shape, ch, ch)
    return StageRow(name, shape, c1.params + c2.params, c1.flops + c2.flops)


def _attention_row(name: str, shape, reduction: int) -> StageRow:
    t, h, w, c = shape
    bottleneck = max(1, t // reduction)
    params = (t * bottleneck + bottleneck) + (bottleneck * t + t)
    # two pooled paths through the shared MLP; the max path also costs one
    # comparison per element it eliminates
    mlp_flops = 2 * (2 * t * bottleneck + 2 * bottleneck * t)
    max_flops = t * h * w * c - t
    return StageRow(name, shape, params, mlp_flops + max_flops)


def stage_table(cfg: TempNetConfig) -> list[StageRow]:
    """Walk the architecture, yielding shape/param/FLOP rows per stage.

    Raises ShapeError naming the offending stage if the pooling schedule
    exhausts an axis.
    """
    t, h, w, c = cfg.input_shape
    ch = cfg.channels
    rows = [StageRow("input", (t, h, w, c), 0, 0)]
    rows.append(_conv_row("stem", (t, h, w, c), c, ch))
    shape = rows[-1].output_shape
    for i in range(1, cfg.spatial_blocks + 1):
        rows.append(_block_rows(f"spatial{i}.block", shape, ch))
        if cfg.attention:
            rows.append(_attention_row(f"spatial{i}.attention", shape, cfg.attention_reduction))
        out = _pool_shape(f"spatial{i}.pool", shape, cfg.spatial_pool)
        in_elems = int(np.prod(shape, dtype=np.int64))
        out_elems = int(np.prod(out, dtype=np.int64))
        rows.append(StageRow(f"spatial{i}.pool", out, 0, in_elems - out_elems))
        shape = out
    out = _pool_shape("bridge.pool", shape, cfg.bridge_pool)
    rows.append(
        StageRow(
            "bridge.pool",
            out,
            0,
            int(np.prod(shape, dtype=np.int64)) - int(np.prod(out, dtype=np.int64)),
        )
    )
    shape = out
    for j in range(1, cfg.temporal_blocks + 1):
        rows.append(_block_rows(f"temporal{j}.block", shape, ch))
        out = _pool_shape(f"temporal{j}.pool", shape, cfg.temporal_pool)
        in_elems = int(np.prod(shape, dtype=np.int64))
        out_elems = int(np.prod(out, dtype=np.int64))
        rows.append(StageRow(f"temporal{j}.pool", out, 0, in_elems - out_elems))
        shape = out
    # global mean over T,H,W costs no counted FLOPs; the dense head does
    rows.append(StageRow("head", (1,), ch * 1 + 1, 2 * ch * 1))
    return rows


def count_params(cfg: TempNetConfig) -> int:
    return sum(r.params for r in stage_table(cfg))


def count_flops(cfg: TempNetConfig) -> int:
    """Counted FLOPs of one forward pass under the module convention."""
    return sum(r.flops for r in stage_table(cfg))


@dataclass
class Description:
    rows: list[StageRow]

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.rows)

    @property
    def total_flops(self) -> int:
        return sum(r.flops for r in self.rows)

    def __str__(self) -> str:
        name_w = max(len(r.name) for r in self.rows + [StageRow("total", (), 0, 0)])
        shape_w = max(len(str(r.output_shape)) for r in self.rows)
        lines = [f"{'stage':<{name_w}}  {'output shape':<{shape_w}}  {'params':>10}  {'flops':>14}"]
        for r in self.rows:
            lines.append(
                f"{r.name:<{name_w}}  {str(r.output_shape):<{shape_w}}  {r.params:>10}  {r.flops:>14}"
            )
        lines.append(
            f"{'total':<{name_w}}  {'':<{shape_w}}  {self.total_params:>10}  {self.total_flops:>14}"
        )
        return "\n".join(lines)


def describe(cfg: TempNetConfig) -> Description:
    return Description(stage_table(cfg))


# ---------------------------------------------------------------------------
# executable layers


class _Conv:
    def __init__(self, store: ParamStore, name: str, cin: int, cout: int, rng, dtype):
        std = math.sqrt(2.0 / (KERNEL**3 * cin))
        k = rng.normal(0.0, std, size=(KERNEL, KERNEL, KERNEL, cin, cout)).astype(dtype)
        self.kernel = store.add(f"{name}.kernel", Tensor(k, trainable=True))
        self.bias = store.add(f"{name}.bias", Tensor(np.zeros(cout, dtype=dtype), trainable=True))

    def __call__(self, x: Tensor) -> Tensor:
        return conv3d(x, self.kernel, self.bias)


class _ResidualBlock:
    """relu(x + conv2(relu(conv1(x)))); zero-init nets pass x through."""

    def __init__(self, store: ParamStore, name: str, ch: int, rng, dtype):
        self.conv1 = _Conv(store, f"{name}.conv1", ch, ch, rng, dtype)
        self.conv2 = _Conv(store, f"{name}.conv2", ch, ch, rng, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return relu(add(x, self.conv2(relu(self.conv1(x)))))


class _TemporalAttention:
    """Per-frame sigmoid gate from mean- and max-pooled frame summaries.

    Both summaries pass through one shared bottleneck MLP; the two outputs
    are summed before the sigmoid, and the [T] gate rescales every frame.
    """

    def __init__(self, store: ParamStore, name: str, t: int, reduction: int, rng, dtype):
        bottleneck = max(1, t // reduction)
        self.t = t
        w1 = rng.normal(0.0, math.sqrt(2.0 / t), size=(t, bottleneck)).astype(dtype)
        w2 = rng.normal(0.0, math.sqrt(2.0 / bottleneck), size=(bottleneck, t)).astype(dtype)
        self.w1 = store.add(f"{name}.fc1.weight", Tensor(w1, trainable=True))
        self.b1 = store.add(
            f"{name}.fc1.bias", Tensor(np.zeros(bottleneck, dtype=dtype), trainable=True)
        )
        self.w2 = store.add(f"{name}.fc2.weight", Tensor(w2, trainable=True))
        self.b2 = store.add(f"{name}.fc2.bias", Tensor(np.zeros(t, dtype=dtype), trainable=True))

    def __call__(self, x: Tensor) -> tuple[Tensor, Tensor]:
        return temporal_attention(x, self.w1, self.b1, self.w2, self.b2)


def temporal_attention(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor):
    """Gate [T,H,W,C] frames; returns (gated tensor, [T] coefficients)."""

    def mlp(s: Tensor) -> Tensor:
        return dense(relu(dense(s, w1, b1)), w2, b2)

    s_avg = reduce_mean(x, (1, 2, 3))
    s_max = reduce_max(x, (1, 2, 3))
    coeff = sigmoid(add(mlp(s_avg), mlp(s_max)))
    gate = reshape(coeff, (x.shape[0], 1, 1, 1))
    return broadcast_mul(gate, x), coeff


@dataclass
class AttentionTrace:
    """Per-module [T] gate vectors captured during one forward pass."""

    coefficients: list[np.ndarray] = field(default_factory=list)


class Network:
    """Executable network; `build` is the only constructor entry point."""

    def __init__(self, cfg: TempNetConfig, store: ParamStore, dtype):
        self.cfg = cfg
        self.store = store
        self.dtype = np.dtype(dtype)
        self._stem: _Conv | None = None
        self._spatial: list[tuple[_ResidualBlock, _TemporalAttention | None]] = []
        self._temporal: list[_ResidualBlock] = []
        self._head_w: Tensor | None = None
        self._head_b: Tensor | None = None

    def forward(self, x) -> tuple[Tensor, AttentionTrace]:
        """Probability of an event in one clip, plus the attention trace."""
        if isinstance(x, Tensor):
            data = x.data
        else:
            data = np.asarray(x)
        if data.shape != self.cfg.input_shape:
            raise ShapeError(
                f"input shape {data.shape} does not match configured {self.cfg.input_shape}"
            )
        if data.dtype != self.dtype:
            data = data.astype(self.dtype)
        h = Tensor(data) if not (isinstance(x, Tensor) and x.data is data) else x
        trace = AttentionTrace()
        h = self._stem(h)
        for block, attn in self._spatial:
            h = block(h)
            if attn is not None:
                h, coeff = attn(h)
                trace.coefficients.append(np.array(coeff.data, copy=True))
            h = maxpool(h, self.cfg.spatial_pool)
        h = maxpool(h, self.cfg.bridge_pool)
        for block in self._temporal:
            h = block(h)
            h = maxpool(h, self.cfg.temporal_pool)
        pooled = reduce_mean(h, (0, 1, 2))
        prob = sigmoid(dense(pooled, self._head_w, self._head_b))
        return prob, trace

    def predict(self, x) -> float:
        """Forward pass outside any tape, returning the scalar probability."""
        prob, _ = self.forward(x)
        return prob.item()


def build(cfg: TempNetConfig, seed: int = 0, dtype=np.float32) -> Network:
    """Construct a network with He-initialized kernels and zero biases.

    Parameter creation order matches `stage_table` row order, so a fixed
    seed yields a bit-reproducible ParamStore.
    """
    stage_table(cfg)  # validates the pooling schedule before any allocation
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"dtype must be float32 or float64, got {dtype}")
    rng = np.random.default_rng(seed)
    store = ParamStore()
    net = Network(cfg, store, dtype)
    cin = cfg.input_shape[3]
    ch = cfg.channels
    net._stem = _Conv(store, "stem", cin, ch, rng, dtype)
    shape = cfg.input_shape[:3] + (ch,)
    for i in range(1, cfg.spatial_blocks + 1):
        block = _ResidualBlock(store, f"spatial{i}", ch, rng, dtype)
        attn = None
        if cfg.attention:
            # gate length is the temporal extent at this stage
            attn = _TemporalAttention(
                store, f"spatial{i}.attention", shape[0], cfg.attention_reduction, rng, dtype
            )
        net._spatial.append((block, attn))
        shape = _pool_shape(f"spatial{i}.pool", shape, cfg.spatial_pool)
    for j in range(1, cfg.temporal_blocks + 1):
        net._temporal.append(_ResidualBlock(store, f"temporal{j}", ch, rng, dtype))
    hw = rng.normal(0.0, math.sqrt(2.0 / ch), size=(ch, 1)).astype(dtype)
    net._head_w = store.add("head.weight", Tensor(hw, trainable=True))
    net._head_b = store.add("head.bias", Tensor(np.zeros(1, dtype=dtype), trainable=True))
    return net


def rebuild_like(cfg: TempNetConfig, snapshot: dict[str, np.ndarray], dtype=np.float32) -> Network:
    """Build with seed 0 and overwrite every parameter from a snapshot."""
    net = build(cfg, seed=0, dtype=dtype)
    net.store.restore({k: v.astype(dtype, copy=False) for k, v in snapshot.items()})
    return net
