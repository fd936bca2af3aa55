"""On-disk clip storage (TCLP) and dataset manifests.

TCLP layout (integers little-endian):

    magic   4 bytes  b"TCLP"
    version u16      currently 1
    label   u8       0 negative, 1 positive, 255 unlabeled
    T,H,W,C u32 each
    dtype   u8       0 = float32
    payload T*H*W*C float32 values, C-order

A manifest is a tab-separated text file, one clip per line:

    relative/path.tclp<TAB>label<TAB>split

with label 0 or 1 and split one of train/val/test.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"TCLP"
VERSION = 1
UNLABELED = 255
SPLITS = ("train", "val", "test")
MANIFEST_NAME = "manifest.tsv"


class ClipFormatError(ValueError):
    """The bytes being read are not a valid clip file."""


def save_tclp(path, frames: np.ndarray, label: int | None) -> None:
    """Write one float32 [T,H,W,C] clip with its label (None = unlabeled)."""
    frames = np.ascontiguousarray(frames, dtype="<f4")
    if frames.ndim != 4:
        raise ClipFormatError(f"frames must be rank 4 [T,H,W,C], got {frames.shape}")
    code = UNLABELED if label is None else int(label)
    if code not in (0, 1, UNLABELED):
        raise ClipFormatError(f"label must be 0, 1, or None, got {label}")
    head = MAGIC + struct.pack("<HB4IB", VERSION, code, *frames.shape, 0)
    Path(path).write_bytes(head + frames.tobytes())


def load_tclp(path) -> tuple[np.ndarray, int | None]:
    """Read a clip back; returns (float32 [T,H,W,C], label or None)."""
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise ClipFormatError(f"{path}: bad magic, not a TCLP clip")
    if len(blob) < 4 + struct.calcsize("<HB4IB"):
        raise ClipFormatError(f"{path}: truncated header")
    version, code, t, h, w, c, dtype_code = struct.unpack_from("<HB4IB", blob, 4)
    if version != VERSION:
        raise ClipFormatError(f"{path}: unsupported version {version}")
    if dtype_code != 0:
        raise ClipFormatError(f"{path}: unknown dtype code {dtype_code}")
    offset = 4 + struct.calcsize("<HB4IB")
    n = t * h * w * c
    expected = offset + 4 * n
    if len(blob) != expected:
        raise ClipFormatError(f"{path}: payload is {len(blob) - offset} bytes, expected {4 * n}")
    frames = np.frombuffer(blob, dtype="<f4", count=n, offset=offset).reshape(t, h, w, c).copy()
    label = None if code == UNLABELED else int(code)
    return frames, label


@dataclass(frozen=True)
class ManifestEntry:
    path: str  # relative to the manifest's directory
    label: int
    split: str


def write_manifest(path, entries: list[ManifestEntry]) -> None:
    lines = []
    for e in entries:
        _validate_entry(e)
        lines.append(f"{e.path}\t{e.label}\t{e.split}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    entries = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ClipFormatError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
        rel, label_s, split = parts
        try:
            label = int(label_s)
        except ValueError:
            raise ClipFormatError(f"{path}:{lineno}: label must be an integer, got {label_s!r}") from None
        entry = ManifestEntry(rel, label, split)
        try:
            _validate_entry(entry)
        except ClipFormatError as err:
            raise ClipFormatError(f"{path}:{lineno}: {err}") from None
        entries.append(entry)
    if not entries:
        raise ClipFormatError(f"{path}: manifest is empty")
    return entries


def _validate_entry(e: ManifestEntry) -> None:
    if e.label not in (0, 1):
        raise ClipFormatError(f"label must be 0 or 1, got {e.label}")
    if e.split not in SPLITS:
        raise ClipFormatError(f"split must be one of {SPLITS}, got {e.split!r}")
    if Path(e.path).is_absolute():
        raise ClipFormatError(f"manifest paths must be relative, got {e.path!r}")


def load_split(data_dir, split: str) -> list[tuple[str, np.ndarray, int]]:
    """Load all (clip_id, frames, label) of one split under data_dir."""
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
    data_dir = Path(data_dir)
    entries = read_manifest(data_dir / MANIFEST_NAME)
    out = []
    for e in entries:
        if e.split != split:
            continue
        frames, label = load_tclp(data_dir / e.path)
        out.append((e.path, frames, e.label if label is None else label))
    return out
