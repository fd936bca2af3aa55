"""Clip preprocessing: frame-rate reduction, grayscale + bilinear resize,
frame differencing, and an orthonormal 2D Haar transform that trades
spatial extent for channels.

All stages operate on float32 video tensors laid out [T, H, W, C] with
intensities nominally in [0, 1], and all are deterministic pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import ShapeError

__all__ = [
    "RawClip",
    "PreprocConfig",
    "SubbandStack",
    "reduce_framerate",
    "to_grayscale_resize",
    "bilinear_resize",
    "frame_difference",
    "haar_dwt_downsample",
    "haar_inverse",
    "preprocess",
]

GRAY_WEIGHTS = (0.299, 0.587, 0.114)  # ITU-R BT.601 luma


class RawClip:
    """A decoded clip: per-frame images plus the source frame rate.

    `frames` may be given as a sequence of [H,W,C] arrays or one stacked
    [T,H,W,C] array; it is held as a list of per-frame arrays so that
    frame selection never copies pixel data.
    """

    __slots__ = ("frames", "fps", "source")

    def __init__(self, frames, fps: float, source: str = ""):
        if isinstance(frames, np.ndarray):
            if frames.ndim != 4:
                raise ShapeError(f"stacked frames must be rank 4 [T,H,W,C], got {frames.shape}")
            frames = list(frames)
        else:
            frames = list(frames)
        if len(frames) < 2:
            raise ShapeError(f"a clip needs at least 2 frames, got {len(frames)}")
        first = frames[0].shape
        for i, f in enumerate(frames):
            if f.ndim != 3:
                raise ShapeError(f"frame {i} must be rank 3 [H,W,C], got shape {f.shape}")
            if f.shape != first:
                raise ShapeError(f"frame {i} shape {f.shape} != frame 0 shape {first}")
        if not fps > 0:
            raise ValueError(f"fps must be positive, got {fps}")
        self.frames = frames
        self.fps = float(fps)
        self.source = source

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return self.frames[0].shape

    @property
    def duration(self) -> float:
        return len(self.frames) / self.fps


@dataclass
class PreprocConfig:
    """Pipeline switches; output shape is a pure function of these fields.

    The wavelet path resizes to double extents so the Haar step lands on
    the same spatial size as the plain path, with 4x the channels.
    """

    target_fps: float = 5.0
    size_wavelet: tuple[int, int] = (300, 400)
    size_plain: tuple[int, int] = (150, 200)
    use_wavelet: bool = False
    difference_frames: bool = True

    def __post_init__(self):
        if not self.target_fps > 0:
            raise ValueError(f"target_fps must be positive, got {self.target_fps}")
        for name in ("size_wavelet", "size_plain"):
            hw = tuple(int(v) for v in getattr(self, name))
            if len(hw) != 2 or any(v < 1 for v in hw):
                raise ValueError(f"{name} must be two positive extents, got {hw}")
            setattr(self, name, hw)
        if self.use_wavelet and any(v % 2 for v in self.size_wavelet):
            raise ValueError(
                f"size_wavelet extents must be even for the 2x2 Haar step, got {self.size_wavelet}"
            )

    @property
    def target_size(self) -> tuple[int, int]:
        return self.size_wavelet if self.use_wavelet else self.size_plain

    def output_frame_shape(self) -> tuple[int, int, int]:
        """[H, W, C] of a preprocessed frame."""
        h, w = self.target_size
        if self.use_wavelet:
            return (h // 2, w // 2, 4)
        return (h, w, 1)


def reduce_framerate(clip: RawClip, target_fps: float) -> RawClip:
    """Select frames to approximate `target_fps` from a faster source.

    Keeps floor(duration * target_fps) frames at source indices
    floor(k * src_fps / target_fps + 0.5), so the selection is uniform in
    time and deterministic.  Raising the rate is not supported.
    """
    if not target_fps > 0:
        raise ValueError(f"target_fps must be positive, got {target_fps}")
    if target_fps > clip.fps:
        raise ValueError(f"cannot raise frame rate from {clip.fps} to {target_fps}")
    if target_fps == clip.fps:
        return clip
    n_src = len(clip.frames)
    # tiny epsilon guards exact ratios against float dust before the floor
    n_out = int(math.floor(n_src * target_fps / clip.fps + 1e-9))
    if n_out < 2:
        raise ValueError(
            f"target_fps {target_fps} would keep {n_out} of {n_src} frames; a clip needs at least 2"
        )
    step = clip.fps / target_fps
    picked = []
    for k in range(n_out):
        idx = min(int(math.floor(k * step + 0.5)), n_src - 1)
        picked.append(clip.frames[idx])
    return RawClip(picked, fps=target_fps, source=clip.source)


def _axis_coords(n_out: int, n_in: int):
    # half-pixel centers: output pixel i samples input coordinate
    # (i + 0.5) * n_in/n_out - 0.5, clamped to the valid range
    c = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    c = np.clip(c, 0.0, n_in - 1.0)
    i0 = np.floor(c).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = (c - i0).astype(np.float32)
    return i0, i1, frac


def bilinear_resize(x: np.ndarray, hw: tuple[int, int]) -> np.ndarray:
    """Resize [T,H,W,C] frames to (hw[0], hw[1]) with bilinear sampling.

    Exact 2x downsampling reduces to plain 2x2 block averaging, which the
    wavelet path relies on when comparing against its LL subband.
    """
    if x.ndim != 4:
        raise ShapeError(f"bilinear_resize: input must be rank 4 [T,H,W,C], got {x.shape}")
    ho, wo = int(hw[0]), int(hw[1])
    if ho < 1 or wo < 1:
        raise ValueError(f"target size must be positive, got {hw}")
    t, h, w, c = x.shape
    if (ho, wo) == (h, w):
        return np.asarray(x, dtype=np.float32)
    y0, y1, fy = _axis_coords(ho, h)
    x0, x1, fx = _axis_coords(wo, w)
    x = np.asarray(x, dtype=np.float32)
    r0, r1 = y0[:, None], y1[:, None]
    c0, c1 = x0[None, :], x1[None, :]
    fx = fx[None, :, None]
    fy = fy[:, None, None]
    top = x[:, r0, c0, :] * (1 - fx) + x[:, r0, c1, :] * fx
    bot = x[:, r1, c0, :] * (1 - fx) + x[:, r1, c1, :] * fx
    return top * (1 - fy) + bot * fy


def to_grayscale_resize(clip, hw: tuple[int, int]) -> np.ndarray:
    """Collapse RGB to luma and resize each frame to hw.

    Accepts a RawClip, a frame list, or a stacked [T,H,W,C] array with
    C of 1 or 3; returns float32 [T, hw[0], hw[1], 1].  Frames are
    processed one at a time so full-resolution clips never materialize as
    a single RGB stack.
    """
    if isinstance(clip, RawClip):
        frames = clip.frames
    elif isinstance(clip, np.ndarray):
        if clip.ndim != 4:
            raise ShapeError(f"expected rank 4 [T,H,W,C] frames, got {clip.shape}")
        frames = list(clip)
    else:
        frames = list(clip)
    if not frames:
        raise ShapeError("no frames to preprocess")
    ho, wo = int(hw[0]), int(hw[1])
    out = np.empty((len(frames), ho, wo, 1), dtype=np.float32)
    wr, wg, wb = GRAY_WEIGHTS
    for i, frame in enumerate(frames):
        if frame.ndim != 3:
            raise ShapeError(f"frame {i} must be rank 3 [H,W,C], got shape {frame.shape}")
        c = frame.shape[2]
        if c == 3:
            gray = (wr * frame[..., 0] + wg * frame[..., 1] + wb * frame[..., 2]).astype(
                np.float32
            )[..., None]
        elif c == 1:
            gray = np.asarray(frame, dtype=np.float32)
        else:
            raise ShapeError(f"frame {i}: expected 1 or 3 channels, got {c}")
        out[i] = bilinear_resize(gray[None], (ho, wo))[0]
    return out


def frame_difference(x: np.ndarray) -> np.ndarray:
    """Temporal first difference; frame 0 becomes all zeros.

    Output has the same shape as the input, so static content cancels
    while motion survives.
    """
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 4:
        raise ShapeError(f"frame_difference: input must be rank 4 [T,H,W,C], got {x.shape}")
    if x.shape[0] < 2:
        raise ShapeError(f"frame_difference needs at least 2 frames, got {x.shape[0]}")
    out = np.empty_like(x)
    out[0] = 0.0
    np.subtract(x[1:], x[:-1], out=out[1:])
    return out


def haar_dwt_downsample(x: np.ndarray) -> np.ndarray:
    """One orthonormal 2D Haar level: halve H and W, quadruple channels.

    Each 2x2 block [[a,b],[c,d]] maps to
        LL=(a+b+c+d)/2, LH=(a-b+c-d)/2, HL=(a+b-c-d)/2, HH=(a-b-c+d)/2,
    preserving total energy exactly.  Source channel i lands in output
    channels 4i..4i+3 in [LL, LH, HL, HH] order.
    """
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 4:
        raise ShapeError(f"haar_dwt_downsample: input must be rank 4 [T,H,W,C], got {x.shape}")
    t, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ShapeError(
            f"haar_dwt_downsample needs even H and W, got ({h}, {w}); resize to even extents first"
        )
    a = x[:, 0::2, 0::2, :]
    b = x[:, 0::2, 1::2, :]
    cc = x[:, 1::2, 0::2, :]
    d = x[:, 1::2, 1::2, :]
    out = np.empty((t, h // 2, w // 2, 4 * c), dtype=np.float32)
    out[..., 0::4] = (a + b + cc + d) * 0.5
    out[..., 1::4] = (a - b + cc - d) * 0.5
    out[..., 2::4] = (a + b - cc - d) * 0.5
    out[..., 3::4] = (a - b - cc + d) * 0.5
    return out


def haar_inverse(sub: np.ndarray) -> np.ndarray:
    """Exact inverse of `haar_dwt_downsample`."""
    sub = np.asarray(sub, dtype=np.float32)
    if sub.ndim != 4 or sub.shape[3] % 4:
        raise ShapeError(f"expected rank 4 with channels divisible by 4, got {sub.shape}")
    t, h2, w2, c4 = sub.shape
    ll, lh, hl, hh = (sub[..., i::4] for i in range(4))
    out = np.empty((t, h2 * 2, w2 * 2, c4 // 4), dtype=np.float32)
    out[:, 0::2, 0::2, :] = (ll + lh + hl + hh) * 0.5
    out[:, 0::2, 1::2, :] = (ll - lh + hl - hh) * 0.5
    out[:, 1::2, 0::2, :] = (ll + lh - hl - hh) * 0.5
    out[:, 1::2, 1::2, :] = (ll - lh - hl + hh) * 0.5
    return out


@dataclass
class SubbandStack:
    """The four Haar subbands of a clip, unpacked for inspection."""

    ll: np.ndarray
    lh: np.ndarray
    hl: np.ndarray
    hh: np.ndarray

    @classmethod
    def from_packed(cls, packed: np.ndarray) -> "SubbandStack":
        if packed.ndim != 4 or packed.shape[3] % 4:
            raise ShapeError(f"expected packed subbands with channels divisible by 4, got {packed.shape}")
        return cls(*(packed[..., i::4] for i in range(4)))

    def pack(self) -> np.ndarray:
        t, h, w, c = self.ll.shape
        out = np.empty((t, h, w, 4 * c), dtype=np.float32)
        for i, band in enumerate((self.ll, self.lh, self.hl, self.hh)):
            out[..., i::4] = band
        return out

    def energies(self) -> dict[str, float]:
        return {
            name: float(np.sum(np.square(band, dtype=np.float64)))
            for name, band in (("ll", self.ll), ("lh", self.lh), ("hl", self.hl), ("hh", self.hh))
        }


def preprocess(clip: RawClip, cfg: PreprocConfig) -> np.ndarray:
    """Run the full pipeline; output shape is determined by cfg alone.

    Returns float32 [T', H', W', C'] where T' = floor(duration*target_fps)
    (or the clip length if it is already at the target rate) and
    (H', W', C') = cfg.output_frame_shape().
    """
    reduced = reduce_framerate(clip, cfg.target_fps) if cfg.target_fps != clip.fps else clip
    x = to_grayscale_resize(reduced, cfg.target_size)
    if cfg.difference_frames:
        x = frame_difference(x)
    if cfg.use_wavelet:
        x = haar_dwt_downsample(x)
    return x
