"""End-to-end gradient verification against central finite differences.

Runs in float64 on a reduced architecture with frozen seeds, because the
comparison is only meaningful away from ReLU kinks and pooling argmax
switches; tiny random configs keep the 2-evaluations-per-parameter cost
of finite differences in seconds.
"""

from __future__ import annotations

import contextlib
import time
from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, bce_loss, corrupted_conv_gradients
from .network import Network, TempNetConfig, build

__all__ = ["GradcheckResult", "REDUCED_CONFIG", "run_gradcheck"]

FD_EPS = 1e-5

# Small enough for finite differences, deep enough to cross every op:
# conv stem, residual blocks, attention, all three pool roles, the head.
REDUCED_CONFIG = TempNetConfig(
    input_shape=(8, 8, 8, 1),
    channels=2,
    spatial_blocks=2,
    temporal_blocks=2,
    attention=True,
    attention_reduction=4,
)


@dataclass
class GradcheckResult:
    tolerance: float
    per_param: dict[str, float]
    max_rel_error: float
    worst_param: str
    passed: bool
    seconds: float

    def summary(self) -> str:
        state = "PASS" if self.passed else "FAIL"
        return (
            f"{state}: max relative error {self.max_rel_error:.3e} "
            f"(worst: {self.worst_param}, tolerance {self.tolerance:g}, "
            f"{len(self.per_param)} parameter tensors, {self.seconds:.1f}s)"
        )


def _loss_value(net: Network, x: np.ndarray, y: np.ndarray) -> float:
    prob, _ = net.forward(x)
    return bce_loss(prob, y).item()


def run_gradcheck(
    cfg: TempNetConfig | None = None,
    tolerance: float = 1e-4,
    seed: int = 0,
    corrupt: bool = False,
) -> GradcheckResult:
    """Compare tape gradients to finite differences for every parameter.

    The relative error per parameter tensor is the inf-norm of the
    difference over the larger of the two gradients' inf-norms.  With
    `corrupt` set, conv kernel gradients are deliberately scaled wrong so
    callers can confirm the check actually detects broken backward code.
    """
    cfg = cfg or REDUCED_CONFIG
    start = time.perf_counter()
    net = build(cfg, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 1)
    x = (rng.standard_normal(cfg.input_shape) * 0.5).astype(np.float64)
    y = np.ones(1, dtype=np.float64)

    ctx = corrupted_conv_gradients() if corrupt else contextlib.nullcontext()
    with ctx:
        with Tape() as tape:
            prob, _ = net.forward(x)
            loss = bce_loss(prob, y)
        analytic = tape.backward(loss)

    per_param: dict[str, float] = {}
    for name, p in net.store.items():
        a = analytic[p]
        fd = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        fd_flat = fd.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + FD_EPS
            hi = _loss_value(net, x, y)
            flat[i] = keep - FD_EPS
            lo = _loss_value(net, x, y)
            flat[i] = keep
            fd_flat[i] = (hi - lo) / (2.0 * FD_EPS)
        denom = max(np.abs(a).max(), np.abs(fd).max(), 1e-12)
        per_param[name] = float(np.abs(a - fd).max() / denom)

    worst = max(per_param, key=per_param.get)
    max_err = per_param[worst]
    return GradcheckResult(
        tolerance=tolerance,
        per_param=per_param,
        max_rel_error=max_err,
        worst_param=worst,
        passed=max_err <= tolerance,
        seconds=time.perf_counter() - start,
    )
