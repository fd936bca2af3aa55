#!/usr/bin/env python3
"""The preprocessing pipeline, stage by stage.

Takes one synthetic clip from raw frames to network input and shows what
each stage does to shapes and values: framerate reduction, grayscale
resize, frame differencing, and the optional one-level wavelet step that
trades resolution for four subband channels.
"""

import numpy as np

from tempnet.preproc import (
    PreprocConfig,
    RawClip,
    bilinear_resize,
    frame_difference,
    haar_dwt_downsample,
    haar_inverse,
    preprocess,
    reduce_framerate,
)
from tempnet.synth import SceneConfig, generate

# --- 1. start from a raw clip ----------------------------------------------

scene = SceneConfig(hw=(160, 208), fps=5.0, duration=4.0, seed=0)
clip = generate(scene, positive=True, rng=0)
frames = clip.frames.astype(np.float64)
print("raw frames:", frames.shape, "range", float(frames.min()), "to", float(frames.max()))

# --- 2. framerate reduction -------------------------------------------------
# Decimation by integer stride. A 25 fps source at stride 5 keeps every
# fifth frame; here source and target already match, so it is a no-op.

reduced = reduce_framerate(RawClip(frames, fps=scene.fps), target_fps=5.0)
stack = np.stack(reduced.frames)
print("after framerate reduction:", stack.shape, "at", reduced.fps, "fps")

thirty = reduce_framerate(RawClip(np.zeros((30, 8, 8, 1)), fps=30.0), target_fps=5.0)
print("30 fps, 30 frames ->", len(thirty.frames), "frames at 5 fps")

# --- 3. resize --------------------------------------------------------------

small = bilinear_resize(stack, (75, 100))
print("after resize:", small.shape)

# --- 4. frame differencing --------------------------------------------------
# Consecutive differences throw away the static background. The first
# frame has no predecessor and is zeroed, so T is preserved. Motion shows
# up as paired positive/negative lobes.

diffs = frame_difference(small)
print("after differencing:", diffs.shape)
print("difference energy per frame (first 6):",
      np.round(np.abs(diffs).sum(axis=(1, 2, 3))[:6], 2))

# --- 5. the wavelet variant ---------------------------------------------------
# One orthonormal Haar level halves H and W and produces 4 channels:
# LL (local average), LH/HL (horizontal/vertical detail), HH (diagonal).
# Because the transform is orthonormal the energy is preserved exactly,
# and it inverts to the input.

# The wavelet path resizes to double the target (150x200 -> one DWT level
# lands on 75x100). H and W must be even.
frame = bilinear_resize(reduced.frames[0][None], (150, 200))
sub = haar_dwt_downsample(frame)
print("wavelet in:", frame.shape, "-> out:", sub.shape)
e_in = float(np.sum(frame**2))
e_out = float(np.sum(sub**2))
print(f"energy in {e_in:.6f}  out {e_out:.6f}  (relative gap {abs(e_in-e_out)/e_in:.2e})")
back = haar_inverse(sub)
print("inverse max abs error:", float(np.max(np.abs(back - frame))))

names = ("LL", "LH", "HL", "HH")
for c, label in enumerate(names):
    print(f"  subband {label}: energy {float(np.sum(sub[0, :, :, c]**2)):10.4f}")

# --- 6. the whole pipeline in one call ---------------------------------------

plain = preprocess(RawClip(clip.frames, fps=scene.fps),
                   PreprocConfig(target_fps=5.0, size_plain=(75, 100)))
wave = preprocess(RawClip(clip.frames, fps=scene.fps),
                  PreprocConfig(target_fps=5.0, size_plain=(75, 100),
                                size_wavelet=(150, 200), use_wavelet=True))
print("plain network input:  ", plain.shape, plain.dtype)
print("wavelet network input:", wave.shape, wave.dtype)
