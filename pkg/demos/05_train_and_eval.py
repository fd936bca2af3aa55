#!/usr/bin/env python3
"""Train a small detector end to end and read the numbers.

Builds an in-memory dataset of low-resolution clips, trains a reduced
network for a few epochs, evaluates on the held-out test split, and shows
the run-comparison table. Takes a couple of minutes on one core.
"""

import time

from tempnet.network import TempNetConfig, build
from tempnet.preproc import PreprocConfig
from tempnet.synth import SceneConfig
from tempnet.training import (
    TrainConfig,
    compare_runs,
    evaluate,
    synthesize_dataset,
    train,
)

# --- 1. data -----------------------------------------------------------------
# 64x80 scenes resized to 32x40 keep every stage cheap. synthesize_dataset
# renders and preprocesses in memory; the on-disk path (CLI `gen` +
# `preprocess`) produces the same arrays clip for clip.

scene = SceneConfig(hw=(64, 80))
pre = PreprocConfig(target_fps=scene.fps, size_plain=(32, 40))
t0 = time.monotonic()
dataset = synthesize_dataset(n=120, positive_ratio=0.5, seed=11, scene=scene, pre_cfg=pre)
sizes = {k: len(v) for k, v in sorted(dataset.items())}
print(f"dataset: {sizes} ({time.monotonic() - t0:.1f}s)")

# --- 2. train ------------------------------------------------------------------

cfg = TrainConfig(epochs=6, patience=6, learning_rate=1e-3, batch_size=8, seed=0)
net = build(TempNetConfig(input_shape=(20, 32, 40, 1), channels=8,
                          spatial_blocks=3, temporal_blocks=2), seed=cfg.seed)
result = train(net, dataset, cfg, log=print)
print(f"best epoch {result.best_epoch} (val bce {result.best_val_bce:.4f}), "
      f"stopped early: {result.stopped_early}")

# --- 3. evaluate on the test split ------------------------------------------------

report = evaluate(net, dataset["test"])
print(f"test: accuracy {report.metrics.accuracy:.3f}  "
      f"precision {report.metrics.precision:.3f}  recall {report.metrics.recall:.3f}  "
      f"f1 {report.metrics.f1:.3f}  bce {report.bce:.4f}")
print(f"      false positives {report.fp}  false negatives {report.fn}")

# --- 4. compare against a no-attention twin -----------------------------------------

plain = build(TempNetConfig(input_shape=(20, 32, 40, 1), channels=8,
                            spatial_blocks=3, temporal_blocks=2, attention=False),
              seed=cfg.seed)
train(plain, dataset, cfg)
twin = evaluate(plain, dataset["test"])
print()
print(compare_runs([("attention", report), ("no-attention", twin)]))
