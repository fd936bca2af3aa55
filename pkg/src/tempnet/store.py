"""Named parameter collections and their binary checkpoint format.

Checkpoint layout (all integers little-endian):

    magic   4 bytes  b"TNWT"
    version u16      currently 1
    count   u32      number of entries
    entry:  name_len u16, name utf-8 bytes,
            dtype    u8  (0 = float32, 1 = float64),
            rank     u8,
            extents  rank * u32,
            payload  raw element bytes, C-order

Metadata strings ride along as entries named "__meta__:<key>" whose
payload is the utf-8 text re-encoded as float32 code points; they are
split back out on load.  Round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor

MAGIC = b"TNWT"
VERSION = 1
_META_PREFIX = "__meta__:"
_DTYPE_CODE = {np.dtype("float32"): 0, np.dtype("float64"): 1}
_CODE_DTYPE = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


class StoreFormatError(ValueError):
    """The bytes being read are not a valid checkpoint."""


class ParamStore:
    """Ordered name -> trainable Tensor mapping for one network.

    Insertion order is build order and is preserved by save/load, so two
    stores built from the same config align entry by entry.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        if name.startswith(_META_PREFIX):
            raise ValueError(f"parameter name {name!r} collides with metadata prefix")
        if not tensor.trainable:
            raise ValueError(f"parameter {name!r} must be a trainable tensor")
        tensor.name = name
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def total_params(self) -> int:
        return sum(t.size for t in self._params.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        """Copy of every parameter's values, for checkpoint-in-memory."""
        return {name: t.data.copy() for name, t in self._params.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        if set(snap) != set(self._params):
            raise ValueError("snapshot names do not match store names")
        for name, arr in snap.items():
            t = self._params[name]
            if arr.shape != t.data.shape:
                raise ValueError(f"snapshot {name!r} shape {arr.shape} != {t.data.shape}")
            t.data[...] = arr


def _pack_entry(name: str, arr: np.ndarray) -> bytes:
    code = _DTYPE_CODE[arr.dtype]
    nb = name.encode("utf-8")
    head = struct.pack("<H", len(nb)) + nb + struct.pack("<BB", code, arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b""
    payload = np.ascontiguousarray(arr, dtype=_CODE_DTYPE[code]).tobytes()
    return head + payload


def save_store(store: ParamStore, path, metadata: dict[str, str] | None = None) -> None:
    """Write every parameter (and metadata strings) to `path`."""
    entries = []
    for name, tensor in store.items():
        entries.append(_pack_entry(name, tensor.data))
    for key, text in (metadata or {}).items():
        codes = np.array([float(b) for b in text.encode("utf-8")], dtype=np.float32)
        if codes.size == 0:
            codes = np.zeros(1, dtype=np.float32)
        entries.append(_pack_entry(_META_PREFIX + key, codes))
    blob = MAGIC + struct.pack("<HI", VERSION, len(entries)) + b"".join(entries)
    Path(path).write_bytes(blob)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise StoreFormatError("checkpoint truncated")
        chunk = self.blob[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_store(path) -> tuple[ParamStore, dict[str, str]]:
    """Read a checkpoint back into a ParamStore plus its metadata."""
    blob = Path(path).read_bytes()
    r = _Reader(blob)
    if r.take(4) != MAGIC:
        raise StoreFormatError(f"{path}: bad magic, not a TNWT checkpoint")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise StoreFormatError(f"{path}: unsupported version {version}")
    (count,) = r.unpack("<I")
    store = ParamStore()
    metadata: dict[str, str] = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        code, rank = r.unpack("<BB")
        if code not in _CODE_DTYPE:
            raise StoreFormatError(f"{path}: unknown dtype code {code}")
        shape = r.unpack(f"<{rank}I") if rank else ()
        n = int(np.prod(shape, dtype=np.int64)) if rank else 1
        dt = _CODE_DTYPE[code]
        arr = np.frombuffer(r.take(n * dt.itemsize), dtype=dt).reshape(shape)
        if name.startswith(_META_PREFIX):
            text = bytes(int(v) for v in arr.reshape(-1)).decode("utf-8").rstrip("\x00")
            metadata[name[len(_META_PREFIX) :]] = text
        else:
            store._params[name] = Tensor(arr.copy(), trainable=True, name=name)
    if r.pos != len(blob):
        raise StoreFormatError(f"{path}: {len(blob) - r.pos} trailing bytes")
    return store, metadata
