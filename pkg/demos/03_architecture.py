#!/usr/bin/env python3
"""A tour of the detector network.

Builds the default two-stage 3D CNN, prints its layer table, and pokes at
the pieces: where parameters live, what the attention gates cost, and how
the FLOP count moves with input size.
"""

import numpy as np

from tempnet.network import TempNetConfig, build, count_flops, count_params, describe

# --- 1. the default configuration -------------------------------------------

cfg = TempNetConfig()
print("input shape [T,H,W,C]:", cfg.input_shape)
print("base channels:", cfg.channels)
print("spatial blocks:", cfg.spatial_blocks, " temporal blocks:", cfg.temporal_blocks)
print()
print(describe(cfg))

# --- 2. parameter budget -----------------------------------------------------
# Two residual stages: the spatial stage pools H and W only, then a bridge
# pool hands over to the temporal stage, which pools T. Attention gates sit
# on the spatial blocks and reweight timesteps before the handover.

with_att = count_params(cfg)
without = count_params(TempNetConfig(attention=False))
print(f"parameters with attention:    {with_att:,}")
print(f"parameters without attention: {without:,}")
print(f"attention gates cost:         {with_att - without:,}")

# --- 3. where the parameters sit ----------------------------------------------

net = build(cfg, seed=0)
by_stage: dict[str, int] = {}
for name, tensor in net.store.items():
    stage = name.split(".")[0]
    by_stage[stage] = by_stage.get(stage, 0) + tensor.size
for stage, n in by_stage.items():
    print(f"  {stage:12s} {n:8,}")

# --- 4. compute cost vs input size --------------------------------------------

for shape in [(20, 75, 100, 1), (20, 150, 200, 1), (20, 150, 200, 4)]:
    flops = count_flops(TempNetConfig(input_shape=shape))
    print(f"  input {str(shape):18s} ~{flops/1e9:7.2f} GFLOP per forward")

# --- 5. one forward pass --------------------------------------------------------
# The network takes a single clip [T,H,W,C] and returns an event
# probability plus the per-block attention coefficients actually applied.

small = TempNetConfig(input_shape=(8, 12, 16, 1), channels=4, spatial_blocks=2, temporal_blocks=2)
tiny = build(small, seed=1)
rng = np.random.default_rng(0)
prob, trace = tiny.forward(rng.random((8, 12, 16, 1), dtype=np.float32))
print("event probability:", round(float(prob.data), 4))
for i, coeff in enumerate(trace.coefficients, start=1):
    print(f"  block {i} attention: shape {coeff.shape}, "
          f"range [{coeff.min():.3f}, {coeff.max():.3f}]")
