"""Clip file and manifest round-trips plus their failure modes."""

from __future__ import annotations

import numpy as np
import pytest

from tempnet.clipio import (
    MANIFEST_NAME,
    ClipFormatError,
    ManifestEntry,
    load_split,
    load_tclp,
    read_manifest,
    save_tclp,
    write_manifest,
)


def test_tclp_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    frames = rng.standard_normal((4, 5, 6, 2)).astype(np.float32)
    path = tmp_path / "c.tclp"
    for label in (0, 1, None):
        save_tclp(path, frames, label)
        got, got_label = load_tclp(path)
        assert got_label == label
        assert got.shape == frames.shape
        assert got.tobytes() == frames.tobytes()


def test_tclp_write_is_deterministic(tmp_path):
    frames = np.random.default_rng(1).random((2, 3, 3, 1)).astype(np.float32)
    p1, p2 = tmp_path / "a.tclp", tmp_path / "b.tclp"
    save_tclp(p1, frames, 1)
    save_tclp(p2, frames, 1)
    assert p1.read_bytes() == p2.read_bytes()


def test_tclp_bad_magic(tmp_path):
    p = tmp_path / "x.tclp"
    p.write_bytes(b"JUNKJUNKJUNKJUNKJUNKJUNK")
    with pytest.raises(ClipFormatError, match="magic"):
        load_tclp(p)


def test_tclp_payload_size_mismatch(tmp_path):
    p = tmp_path / "x.tclp"
    save_tclp(p, np.zeros((2, 2, 2, 1), dtype=np.float32), 0)
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(ClipFormatError, match="payload"):
        load_tclp(p)


def test_tclp_rejects_bad_label(tmp_path):
    with pytest.raises(ClipFormatError, match="label"):
        save_tclp(tmp_path / "x.tclp", np.zeros((2, 2, 2, 1), dtype=np.float32), 7)


def test_manifest_roundtrip(tmp_path):
    entries = [
        ManifestEntry("clips/a.tclp", 1, "train"),
        ManifestEntry("clips/b.tclp", 0, "val"),
        ManifestEntry("clips/c.tclp", 1, "test"),
    ]
    path = tmp_path / MANIFEST_NAME
    write_manifest(path, entries)
    assert read_manifest(path) == entries


def test_manifest_rejects_bad_rows(tmp_path):
    path = tmp_path / MANIFEST_NAME
    path.write_text("a.tclp\t2\ttrain\n")
    with pytest.raises(ClipFormatError, match="label"):
        read_manifest(path)
    path.write_text("a.tclp\t1\tholdout\n")
    with pytest.raises(ClipFormatError, match="split"):
        read_manifest(path)
    path.write_text("a.tclp\t1\n")
    with pytest.raises(ClipFormatError, match="fields"):
        read_manifest(path)
    with pytest.raises(ClipFormatError, match="relative"):
        write_manifest(path, [ManifestEntry("/abs/a.tclp", 1, "train")])


def test_manifest_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="manifest"):
        read_manifest(tmp_path / "nope.tsv")


def test_load_split_filters_and_loads(tmp_path):
    rng = np.random.default_rng(2)
    entries = []
    for i, split in enumerate(["train", "train", "val", "test"]):
        frames = rng.random((2, 3, 3, 1)).astype(np.float32)
        name = f"clip{i}.tclp"
        save_tclp(tmp_path / name, frames, i % 2)
        entries.append(ManifestEntry(name, i % 2, split))
    write_manifest(tmp_path / MANIFEST_NAME, entries)
    train = load_split(tmp_path, "train")
    assert [cid for cid, _, _ in train] == ["clip0.tclp", "clip1.tclp"]
    assert [label for _, _, label in train] == [0, 1]
    assert all(frames.shape == (2, 3, 3, 1) for _, frames, _ in train)
    assert len(load_split(tmp_path, "val")) == 1
    with pytest.raises(ValueError, match="split"):
        load_split(tmp_path, "validation")
