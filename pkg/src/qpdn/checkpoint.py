"""Versioned binary checkpoint container.

Layout (all integers little-endian)::

    b"QPDNCKPT"                magic, 8 bytes
    u32                        format version
    u64 + bytes                metadata length, then UTF-8 JSON
    u32                        number of arrays
    per array:
        u16 + bytes            name length, then UTF-8 name
        u8                     ndim
        u64 * ndim             shape
        f64 * prod(shape)      data, C order, little-endian

Metadata carries ``n``, ``k``, ``vocab_size``, ``n_labels``, ``variant``,
``seed``, the vocabulary (tokens and document frequencies), label names and
the training config.
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Vocabulary
from .model import PARAM_NAMES, ParamSet, Variant

MAGIC = b"QPDNCKPT"
FORMAT_VERSION = 1
# on-disk names of the parameter blocks
DISK_NAMES = {"R": "R", "Phi": "Phi", "Pi": "Pi", "V_amp": "V_amplitudes", "V_phase": "V_phases", "W": "W", "b": "b"}


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    params: ParamSet
    variant: Variant
    vocab: Vocabulary
    label_names: list[str]
    seed: int = 0
    config: dict = field(default_factory=dict)

    def metadata(self) -> dict:
        p = self.params
        return {
            "format_version": FORMAT_VERSION,
            "n": p.n,
            "k": p.k,
            "vocab_size": p.vocab_size,
            "n_labels": p.n_labels,
            "variant": Variant(self.variant).value,
            "seed": self.seed,
            "vocabulary": list(self.vocab.itos),
            "doc_freq": [int(x) for x in self.vocab.doc_freq],
            "n_docs": int(self.vocab.n_docs),
            "label_names": list(self.label_names),
            "config": self.config,
        }


def dumps(ckpt: Checkpoint) -> bytes:
    buf = io.BytesIO()
    meta = json.dumps(ckpt.metadata(), sort_keys=True).encode("utf-8")
    buf.write(MAGIC)
    buf.write(struct.pack("<IQ", FORMAT_VERSION, len(meta)))
    buf.write(meta)
    arrays = ckpt.params.arrays()
    buf.write(struct.pack("<I", len(arrays)))
    for name in PARAM_NAMES:
        a = np.ascontiguousarray(arrays[name], dtype="<f8")
        key = DISK_NAMES[name].encode("utf-8")
        buf.write(struct.pack("<H", len(key)) + key)
        buf.write(struct.pack("<B", a.ndim))
        buf.write(struct.pack(f"<{a.ndim}Q", *a.shape))
        buf.write(a.tobytes())
    return buf.getvalue()


def save(ckpt: Checkpoint, path: str | Path) -> None:
    Path(path).write_bytes(dumps(ckpt))


def _take(buf: memoryview, pos: int, size: int) -> tuple[memoryview, int]:
    if pos + size > len(buf):
        raise CheckpointError("version/shape mismatch: checkpoint is truncated")
    return buf[pos : pos + size], pos + size


def loads(raw: bytes) -> Checkpoint:
    buf = memoryview(raw)
    head, pos = _take(buf, 0, len(MAGIC))
    if bytes(head) != MAGIC:
        raise CheckpointError("version/shape mismatch: not a checkpoint file")
    chunk, pos = _take(buf, pos, 12)
    version, meta_len = struct.unpack("<IQ", chunk)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"version/shape mismatch: format version {version}, expected {FORMAT_VERSION}")
    chunk, pos = _take(buf, pos, meta_len)
    try:
        meta = json.loads(bytes(chunk).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"version/shape mismatch: unreadable metadata ({exc})") from None
    chunk, pos = _take(buf, pos, 4)
    (count,) = struct.unpack("<I", chunk)
    arrays = {}
    for _ in range(count):
        chunk, pos = _take(buf, pos, 2)
        (nlen,) = struct.unpack("<H", chunk)
        chunk, pos = _take(buf, pos, nlen)
        name = bytes(chunk).decode("utf-8")
        chunk, pos = _take(buf, pos, 1)
        (ndim,) = struct.unpack("<B", chunk)
        chunk, pos = _take(buf, pos, 8 * ndim)
        shape = struct.unpack(f"<{ndim}Q", chunk)
        chunk, pos = _take(buf, pos, 8 * int(np.prod(shape, dtype=np.int64)))
        arrays[name] = np.frombuffer(chunk, dtype="<f8").reshape(shape).astype(np.float64)
    if pos != len(buf):
        raise CheckpointError("version/shape mismatch: trailing bytes after last array")
    missing = set(DISK_NAMES.values()) - set(arrays)
    if missing:
        raise CheckpointError(f"version/shape mismatch: missing arrays {sorted(missing)}")
    params = ParamSet(**{name: arrays[DISK_NAMES[name]] for name in PARAM_NAMES})
    _check_shapes(params, meta)
    vocab = Vocabulary(list(meta["vocabulary"]), np.array(meta["doc_freq"], dtype=np.int64), int(meta["n_docs"]))
    return Checkpoint(params, Variant(meta["variant"]), vocab, list(meta["label_names"]), int(meta["seed"]), meta.get("config", {}))


def _check_shapes(p: ParamSet, meta: dict) -> None:
    n, k, V, L = meta["n"], meta["k"], meta["vocab_size"], meta["n_labels"]
    expected = {
        "Phi": (n, V),
        "Pi": (V,),
        "V_amp": (k, n),
        "V_phase": (k, n),
        "b": (L,),
    }
    for name, shape in expected.items():
        if getattr(p, name).shape != shape:
            raise CheckpointError(f"version/shape mismatch: {name} has shape {getattr(p, name).shape}, expected {shape}")
    if p.R.ndim != 2 or p.R.shape[1] != V or p.W.ndim != 2 or p.W.shape[1] != L:
        raise CheckpointError("version/shape mismatch: R or W inconsistent with metadata")
    if len(meta["vocabulary"]) != V or len(meta["label_names"]) != L:
        raise CheckpointError("version/shape mismatch: vocabulary or label list length")


def load(path: str | Path) -> Checkpoint:
    return loads(Path(path).read_bytes())
