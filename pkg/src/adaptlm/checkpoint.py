"""Bit-exact binary checkpoint format for WeightStore.

Layout: magic "MBRT", format version u32 LE, length-prefixed UTF-8 config
text (key=value lines, metadata keys prefixed "meta."), tensor count u32 LE,
then per tensor: length-prefixed name, rank u32 LE, dims u64 LE, raw
row-major little-endian IEEE-754 float32 payload. Tensors are written in
sorted name order so identical stores serialize identically.
"""

from __future__ import annotations

import io
import struct
from typing import IO

import numpy as np

from .encoder import EncoderConfig, HEAD_PREFIX, WeightStore, expected_shapes
from .errors import CorruptionError, FormatError

MAGIC = b"MBRT"
FORMAT_VERSION = 1

_INT_FIELDS = ("vocab_size", "hidden", "layers", "heads", "ff_dim", "max_positions", "seed")
_FLOAT_FIELDS = ("layernorm_epsilon", "init_std", "dropout")


def _config_text(store: WeightStore) -> str:
    cfg = store.config
    lines = [f"{k}={getattr(cfg, k)!r}" if k in _FLOAT_FIELDS else f"{k}={getattr(cfg, k)}"
             for k in _INT_FIELDS + _FLOAT_FIELDS]
    for key in sorted(store.metadata):
        value = store.metadata[key]
        if "\n" in key or "\n" in value or "=" in key:
            raise FormatError(f"metadata entry {key!r} contains a newline or '='")
        lines.append(f"meta.{key}={value}")
    return "\n".join(lines) + "\n"


def _parse_config_text(text: str) -> tuple[EncoderConfig, dict[str, str]]:
    fields: dict[str, str] = {}
    metadata: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if "=" not in line:
            raise FormatError(f"config line {lineno} is not key=value: {line!r}")
        key, value = line.split("=", 1)
        if key.startswith("meta."):
            metadata[key[len("meta."):]] = value
        else:
            fields[key] = value
    try:
        kwargs = {k: int(fields[k]) for k in _INT_FIELDS}
        kwargs.update({k: float(fields[k]) for k in _FLOAT_FIELDS})
    except KeyError as e:
        raise FormatError(f"config text missing field {e.args[0]}") from None
    except ValueError as e:
        raise FormatError(f"malformed config value: {e}") from None
    unknown = set(fields) - set(_INT_FIELDS) - set(_FLOAT_FIELDS)
    if unknown:
        raise FormatError(f"unknown config fields: {sorted(unknown)}")
    return EncoderConfig(**kwargs), metadata


def save_checkpoint(store: WeightStore, sink: IO[bytes]) -> int:
    """Serialize a validated store; returns the number of bytes written."""
    store.validate()
    written = 0

    def put(data: bytes):
        nonlocal written
        sink.write(data)
        written += len(data)

    put(MAGIC)
    put(struct.pack("<I", FORMAT_VERSION))
    cfg_bytes = _config_text(store).encode("utf-8")
    put(struct.pack("<I", len(cfg_bytes)))
    put(cfg_bytes)
    names = sorted(store.tensors)
    put(struct.pack("<I", len(names)))
    for name in names:
        arr = store.tensors[name]
        name_bytes = name.encode("utf-8")
        put(struct.pack("<I", len(name_bytes)))
        put(name_bytes)
        put(struct.pack("<I", arr.ndim))
        for dim in arr.shape:
            put(struct.pack("<Q", dim))
        payload = np.ascontiguousarray(arr, dtype="<f4")
        put(payload.tobytes())
    return written


def save_checkpoint_file(store: WeightStore, path) -> int:
    with open(path, "wb") as f:
        return save_checkpoint(store, f)


def _read_exact(source: IO[bytes], n: int, what: str) -> bytes:
    data = source.read(n)
    if len(data) != n:
        raise CorruptionError(f"truncated stream while reading {what}")
    return data


def load_checkpoint(source: IO[bytes]) -> WeightStore:
    """Inverse of save_checkpoint; load(save(w)) is bit-identical to w."""
    magic = source.read(len(MAGIC))
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    (version,) = struct.unpack("<I", _read_exact(source, 4, "format version"))
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    (cfg_len,) = struct.unpack("<I", _read_exact(source, 4, "config length"))
    try:
        cfg_text = _read_exact(source, cfg_len, "config text").decode("utf-8")
    except UnicodeDecodeError as e:
        raise FormatError(f"config text is not UTF-8: {e}") from None
    config, metadata = _parse_config_text(cfg_text)
    want = expected_shapes(config)

    (count,) = struct.unpack("<I", _read_exact(source, 4, "tensor count"))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", _read_exact(source, 4, "tensor name length"))
        name = _read_exact(source, name_len, "tensor name").decode("utf-8")
        if name in tensors:
            raise CorruptionError(f"duplicate tensor {name}")
        (rank,) = struct.unpack("<I", _read_exact(source, 4, f"rank of {name}"))
        shape = tuple(struct.unpack("<Q", _read_exact(source, 8, f"dims of {name}"))[0]
                      for _ in range(rank))
        if name in want:
            if shape != want[name]:
                raise CorruptionError(f"tensor {name} has shape {shape}, config dictates {want[name]}")
        elif not name.startswith(HEAD_PREFIX):
            raise CorruptionError(f"tensor {name} is not dictated by the embedded config")
        n_items = 1
        for dim in shape:
            n_items *= dim
        payload = _read_exact(source, 4 * n_items, f"payload of tensor {name}")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    missing = sorted(set(want) - set(tensors))
    if missing:
        raise CorruptionError(f"missing tensors: {missing}")
    return WeightStore(config, tensors, metadata)


def load_checkpoint_file(path) -> WeightStore:
    with open(path, "rb") as f:
        return load_checkpoint(f)


def roundtrip_bytes(store: WeightStore) -> bytes:
    buf = io.BytesIO()
    save_checkpoint(store, buf)
    return buf.getvalue()
