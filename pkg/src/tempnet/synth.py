"""Synthetic labeled clip generator.

Renders short grayscale clips of soft-edged ellipse agents drifting over a
static background.  A positive clip contains exactly one burst event: the
affected agent abruptly turns by at least 60 degrees and moves at 3x to 5x
its cruise speed for one to three frames.  Negatives drift smoothly with
per-frame heading changes of at most 10 degrees, so the classes are
separable by temporal energy but not by appearance.

Every clip derives its own RNG stream from (seed, clip index), which makes
datasets reproducible file-for-file and clips independent of generation
order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clipio import ManifestEntry, save_tclp, write_manifest
from .preproc import bilinear_resize

__all__ = [
    "SceneConfig",
    "EventSpec",
    "LabeledClip",
    "generate",
    "generate_dataset",
    "plan_split",
    "split_counts",
    "frame_energy_rule",
    "fit_energy_threshold",
]

# soft ellipse edge: fully opaque inside 0.85, transparent beyond 1.15
# (in units of the ellipse axes); agents keep 1.2 * major axis off the walls
EDGE_IN = 0.85
EDGE_OUT = 1.15
WALL_MARGIN = 1.2

EVENT_SPEED_RANGE = (3.5, 5.0)
EVENT_TURN_RANGE_DEG = (60.0, 120.0)
EVENT_DURATION_RANGE = (1, 3)
EVENT_EARLIEST_ONSET = 3

# train/val/test proportions for generated datasets
SPLIT_WEIGHTS = {"train": 642, "val": 150, "test": 100}


@dataclass
class SceneConfig:
    """Geometry, population, and appearance of one rendered scene."""

    hw: tuple[int, int] = (160, 208)
    fps: float = 5.0
    duration: float = 4.0  # seconds; frame count is round(fps * duration)
    n_agents: tuple[int, int] = (1, 6)  # inclusive range sampled per clip
    axes_range: tuple[float, float] = (9.0, 11.0)  # major semi-axis, px
    aspect_range: tuple[float, float] = (0.35, 0.5)  # minor/major ratio
    speed_range: tuple[float, float] = (0.4, 0.8)  # cruise speed, px/frame
    contrast_range: tuple[float, float] = (0.25, 0.32)
    drift_max_deg: float = 4.0
    texture: str = "smooth"  # "smooth" | "solid" | "checker"
    checker_amp: float = 0.2
    noise_sigma: float = 0.02
    seed: int = 0

    def __post_init__(self):
        h, w = self.hw
        if h < 16 or w < 16:
            raise ValueError(f"frame must be at least 16x16, got {h}x{w}")
        if isinstance(self.n_agents, int):
            self.n_agents = (self.n_agents, self.n_agents)
        lo, hi = self.n_agents
        if not 0 <= lo <= hi:
            raise ValueError(f"n_agents range must satisfy 0 <= lo <= hi, got {self.n_agents}")
        if self.texture not in ("smooth", "solid", "checker"):
            raise ValueError(f"texture must be smooth, solid, or checker, got {self.texture!r}")
        if self.fps <= 0 or self.duration <= 0:
            raise ValueError("fps and duration must be positive")
        if self.n_frames < EVENT_EARLIEST_ONSET + 4:
            raise ValueError(
                f"clip too short for an event: {self.n_frames} frames at "
                f"{self.fps} fps x {self.duration}s"
            )
        margin = WALL_MARGIN * self.axes_range[1]
        if 2 * margin >= min(h, w) - 1:
            raise ValueError(
                f"agents too large for frame: margin {margin:.1f}px each side "
                f"does not fit in {h}x{w}"
            )

    @property
    def n_frames(self) -> int:
        return int(round(self.fps * self.duration))


@dataclass(frozen=True)
class EventSpec:
    """One burst: the agent turns hard and sprints for a few frames."""

    onset: int  # first fast frame; displacement into it is already fast
    duration: int  # frames of elevated speed, 1..3
    speed_multiplier: float
    heading_change_deg: float  # signed, applied once at onset
    agent_index: int


@dataclass
class LabeledClip:
    frames: np.ndarray  # (T, H, W, 1) float32 in [0, 1]
    label: int
    event: EventSpec | None
    positions: np.ndarray  # (n_agents, T, 2) float64 agent centers as (y, x)
    scene: SceneConfig


# ---------------------------------------------------------------------------
# rendering


def _background(scene: SceneConfig, rng: np.random.Generator) -> np.ndarray:
    h, w = scene.hw
    if scene.texture == "smooth":
        coarse = rng.uniform(0.35, 0.65, size=(1, 5, 6, 1)).astype(np.float32)
        return bilinear_resize(coarse, (h, w))[0, :, :, 0]
    # solid and checker scenes sit on a flat mid-gray field
    return np.full((h, w), 0.5, dtype=np.float32)


def _checker(h: int, w: int) -> np.ndarray:
    ys = np.arange(h)[:, None]
    xs = np.arange(w)[None, :]
    return np.where((ys + xs) % 2 == 0, 1.0, -1.0).astype(np.float32)


def _paint_agent(frame, cy, cx, heading, axes, shade, checker):
    """Add one soft-edged rotated ellipse to `frame` in place.

    `shade` is the additive contrast for plain scenes; when `checker` is
    given the body instead carries a mean-matched screen-aligned pattern.
    """
    h, w = frame.shape
    a, b = axes
    reach = EDGE_OUT * a
    y0 = max(0, int(math.floor(cy - reach)))
    y1 = min(h, int(math.ceil(cy + reach)) + 1)
    x0 = max(0, int(math.floor(cx - reach)))
    x1 = min(w, int(math.ceil(cx + reach)) + 1)
    if y0 >= y1 or x0 >= x1:
        return
    dy = np.arange(y0, y1, dtype=np.float32)[:, None] - np.float32(cy)
    dx = np.arange(x0, x1, dtype=np.float32)[None, :] - np.float32(cx)
    cos_t = math.cos(heading)
    sin_t = math.sin(heading)
    u = (cos_t * dx + sin_t * dy) / a
    v = (-sin_t * dx + cos_t * dy) / b
    d = np.sqrt(u * u + v * v)
    soft = np.clip((EDGE_OUT - d) / (EDGE_OUT - EDGE_IN), 0.0, 1.0)
    if checker is None:
        frame[y0:y1, x0:x1] += soft * np.float32(shade)
    else:
        frame[y0:y1, x0:x1] += soft * checker[y0:y1, x0:x1] * np.float32(shade)


def _rotate(vy: float, vx: float, angle_rad: float) -> tuple[float, float]:
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    return c * vy + s * vx, -s * vy + c * vx


def _reflect(p: float, lo: float, hi: float, v: float) -> tuple[float, float]:
    # fold the coordinate back into [lo, hi], flipping velocity each bounce
    while p < lo or p > hi:
        if p < lo:
            p = 2 * lo - p
        else:
            p = 2 * hi - p
        v = -v
    return p, v


def generate(scene: SceneConfig, positive: bool, rng: np.random.Generator | int) -> LabeledClip:
    """Render one labeled clip; pass a Generator (or an int seed)."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(np.random.SeedSequence((int(rng), 0)))
    h, w = scene.hw
    t_total = scene.n_frames
    n_agents = int(rng.integers(scene.n_agents[0], scene.n_agents[1] + 1))
    if positive and n_agents == 0:
        raise ValueError("a positive clip needs at least one agent")

    background = _background(scene, rng)
    checker = _checker(h, w) if scene.texture == "checker" else None

    # agent state: position, velocity, axes, shading
    margin = WALL_MARGIN * scene.axes_range[1]
    pos = np.empty((n_agents, 2), dtype=np.float64)
    vel = np.empty((n_agents, 2), dtype=np.float64)
    axes = np.empty((n_agents, 2), dtype=np.float64)
    shades = np.empty(n_agents, dtype=np.float64)
    for i in range(n_agents):
        pos[i, 0] = rng.uniform(margin, h - 1 - margin)
        pos[i, 1] = rng.uniform(margin, w - 1 - margin)
        theta = rng.uniform(0.0, 2.0 * math.pi)
        speed = rng.uniform(*scene.speed_range)
        vel[i] = (speed * math.sin(theta), speed * math.cos(theta))
        major = rng.uniform(*scene.axes_range)
        axes[i] = (major, major * rng.uniform(*scene.aspect_range))
        contrast = rng.uniform(*scene.contrast_range)
        sign = 1.0 if rng.random() < 0.5 else -1.0
        shades[i] = scene.checker_amp if checker is not None else sign * contrast

    event = None
    if positive:
        latest_onset = t_total - 4
        event = EventSpec(
            onset=int(rng.integers(EVENT_EARLIEST_ONSET, latest_onset + 1)),
            duration=int(rng.integers(EVENT_DURATION_RANGE[0], EVENT_DURATION_RANGE[1] + 1)),
            speed_multiplier=float(rng.uniform(*EVENT_SPEED_RANGE)),
            heading_change_deg=float(
                (1.0 if rng.random() < 0.5 else -1.0) * rng.uniform(*EVENT_TURN_RANGE_DEG)
            ),
            agent_index=int(rng.integers(n_agents)),
        )

    frames = np.empty((t_total, h, w, 1), dtype=np.float32)
    positions = np.empty((n_agents, t_total, 2), dtype=np.float64)
    drift_max = math.radians(scene.drift_max_deg)
    for t in range(t_total):
        frame = background.copy()
        for i in range(n_agents):
            positions[i, t] = pos[i]
            heading = math.atan2(vel[i, 0], vel[i, 1])
            _paint_agent(frame, pos[i, 0], pos[i, 1], heading, axes[i], shades[i], checker)
        if scene.noise_sigma > 0:
            frame += rng.standard_normal((h, w)).astype(np.float32) * np.float32(
                scene.noise_sigma
            )
        frames[t, :, :, 0] = np.clip(frame, 0.0, 1.0)
        if t == t_total - 1:
            break
        # advance every agent into frame t+1
        for i in range(n_agents):
            vy, vx = vel[i]
            drift = rng.uniform(-drift_max, drift_max)
            vy, vx = _rotate(vy, vx, drift)
            step_scale = 1.0
            if event is not None and i == event.agent_index:
                if t + 1 == event.onset:
                    vy, vx = _rotate(vy, vx, math.radians(event.heading_change_deg))
                if event.onset <= t + 1 <= event.onset + event.duration - 1:
                    step_scale = event.speed_multiplier
            ny = pos[i, 0] + vy * step_scale
            nx = pos[i, 1] + vx * step_scale
            ny, vy2 = _reflect(ny, margin, h - 1 - margin, vy)
            nx, vx2 = _reflect(nx, margin, w - 1 - margin, vx)
            pos[i] = (ny, nx)
            vel[i] = (vy2, vx2)
    return LabeledClip(frames, int(positive), event, positions, scene)


# ---------------------------------------------------------------------------
# dataset planning and writing


def split_counts(m: int) -> dict[str, int]:
    """Partition m clips of one class across splits by largest remainder,
    then guarantee every split at least one clip."""
    if m < len(SPLIT_WEIGHTS):
        raise ValueError(f"need at least {len(SPLIT_WEIGHTS)} clips per class, got {m}")
    total_weight = sum(SPLIT_WEIGHTS.values())
    counts = {}
    remainders = []
    for name, weight in SPLIT_WEIGHTS.items():
        exact = m * weight / total_weight
        counts[name] = int(math.floor(exact))
        remainders.append((exact - counts[name], name))
    short = m - sum(counts.values())
    for _, name in sorted(remainders, key=lambda r: (-r[0], r[1]))[:short]:
        counts[name] += 1
    for name in counts:
        while counts[name] == 0:
            donor = max(counts, key=counts.get)
            counts[donor] -= 1
            counts[name] += 1
    return counts


def plan_split(n: int, positive_ratio: float, rng: np.random.Generator) -> list[tuple[int, str]]:
    """Assign a (label, split) pair to each clip index, stratified so every
    split keeps the requested class ratio within one clip."""
    if n < 10:
        raise ValueError(f"need at least 10 clips, got {n}")
    if not 0.0 < positive_ratio < 1.0:
        raise ValueError(f"positive_ratio must be inside (0, 1), got {positive_ratio}")
    n_pos = int(round(n * positive_ratio))
    n_pos = min(max(n_pos, 3), n - 3)
    queues = {}
    for label, m in ((1, n_pos), (0, n - n_pos)):
        seq = []
        for split, count in split_counts(m).items():
            seq.extend([split] * count)
        rng.shuffle(seq)
        queues[label] = seq
    labels = np.array([1] * n_pos + [0] * (n - n_pos))
    rng.shuffle(labels)
    return [(int(label), queues[int(label)].pop()) for label in labels]


def generate_dataset(
    out_dir,
    n: int = 892,
    positive_ratio: float = 0.5,
    seed: int = 0,
    scene: SceneConfig | None = None,
) -> list[ManifestEntry]:
    """Render n clips into out_dir as TCLP files plus a manifest."""
    scene = scene if scene is not None else SceneConfig(seed=seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    plan = plan_split(n, positive_ratio, np.random.default_rng(np.random.SeedSequence((seed, 1))))
    entries = []
    for idx, (label, split) in enumerate(plan):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0, idx)))
        clip = generate(scene, bool(label), rng)
        name = f"clip{idx:05d}.tclp"
        save_tclp(out_dir / name, clip.frames, label)
        entries.append(ManifestEntry(name, label, split))
    write_manifest(out_dir / "manifest.tsv", entries)
    return entries


# ---------------------------------------------------------------------------
# hand rule: peak frame-difference energy


def frame_energy_rule(frames: np.ndarray) -> float:
    """Peak over time of total absolute change between consecutive frames."""
    if frames.shape[0] < 2:
        raise ValueError("need at least 2 frames")
    steps = np.abs(np.diff(frames.astype(np.float64), axis=0))
    return float(steps.sum(axis=(1, 2, 3)).max())


def fit_energy_threshold(scores, labels) -> tuple[float, float]:
    """Best single threshold (score >= t means positive) and its accuracy."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.size == 0:
        raise ValueError("scores and labels must be equal-length and non-empty")
    order = np.argsort(scores)
    sorted_scores = scores[order]
    candidates = [sorted_scores[0] - 1.0]
    candidates.extend((sorted_scores[1:] + sorted_scores[:-1]) / 2.0)
    candidates.append(sorted_scores[-1] + 1.0)
    best_t, best_acc = candidates[0], -1.0
    for t in candidates:
        acc = float(np.mean((scores >= t) == (labels == 1)))
        if acc > best_acc:
            best_t, best_acc = float(t), acc
    return best_t, best_acc
