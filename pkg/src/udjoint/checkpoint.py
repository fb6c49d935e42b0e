"""Versioned binary checkpoints.

Layout: magic ``UDJM``, version (u32), canonical JSON of the model
config (u64 length prefix), then each parameter array sorted by name
with name, dtype code, shape, and raw little-endian payload.  Saving
the same model twice produces identical bytes, and a load followed by a
save round-trips exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, fields

import numpy as np

from .model import JointModel, ModelConfig

__all__ = ["CheckpointError", "save_model", "load_model", "save_checkpoint", "load_checkpoint"]

MAGIC = b"UDJM"
VERSION = 1

_DTYPE_CODES = {"float32": 0, "float64": 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


class CheckpointError(ValueError):
    """The file is not a checkpoint this version can read."""


def _config_bytes(config: ModelConfig) -> bytes:
    data = asdict(config)
    data["ctx_sources"] = [[name, dim] for name, dim in config.ctx_sources]
    return json.dumps(data, sort_keys=True, ensure_ascii=False,
                      separators=(",", ":")).encode("utf-8")


_TUPLE_FIELDS = ("word_vocab", "char_vocab", "upos_labels", "xpos_labels",
                 "feats_labels", "deprel_labels", "lemma_scripts")


def _config_from_dict(data: dict) -> ModelConfig:
    known = {f.name for f in fields(ModelConfig)}
    unknown = set(data) - known
    if unknown:
        raise CheckpointError(f"config has unknown fields: {sorted(unknown)}")
    missing = known - set(data)
    if missing:
        raise CheckpointError(f"config is missing fields: {sorted(missing)}")
    kwargs = dict(data)
    kwargs["ctx_sources"] = tuple((str(name), int(dim)) for name, dim in data["ctx_sources"])
    for name in _TUPLE_FIELDS:
        kwargs[name] = tuple(data[name])
    return ModelConfig(**kwargs)


def save_checkpoint(path: str, config: ModelConfig, params: dict) -> None:
    blob = _config_bytes(config)
    with open(path, "wb") as out:
        out.write(MAGIC)
        out.write(struct.pack("<I", VERSION))
        out.write(struct.pack("<Q", len(blob)))
        out.write(blob)
        out.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            arr = params[name].data
            encoded = name.encode("utf-8")
            out.write(struct.pack("<H", len(encoded)))
            out.write(encoded)
            out.write(struct.pack("<B", _DTYPE_CODES[arr.dtype.name]))
            out.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                out.write(struct.pack("<Q", dim))
            code = "<f4" if arr.dtype.name == "float32" else "<f8"
            out.write(np.ascontiguousarray(arr, dtype=code).tobytes())


class _Reader:
    def __init__(self, path: str):
        with open(path, "rb") as handle:
            self.data = handle.read()
        self.path = path
        self.offset = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            raise CheckpointError(f"{self.path}: truncated at byte {self.offset}")
        values = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return values if len(values) > 1 else values[0]

    def take_bytes(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise CheckpointError(f"{self.path}: truncated at byte {self.offset}")
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk


def load_checkpoint(path: str) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    reader = _Reader(path)
    if reader.take_bytes(4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version = reader.take("<I")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    blob = reader.take_bytes(reader.take("<Q"))
    try:
        config = _config_from_dict(json.loads(blob.decode("utf-8")))
    except (ValueError, TypeError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"{path}: bad config block: {exc}") from None

    arrays: dict[str, np.ndarray] = {}
    count = reader.take("<I")
    for _ in range(count):
        name = reader.take_bytes(reader.take("<H")).decode("utf-8")
        if name in arrays:
            raise CheckpointError(f"{path}: duplicate array {name!r}")
        code = reader.take("<B")
        if code not in _CODE_DTYPES:
            raise CheckpointError(f"{path}: unknown dtype code {code} for {name!r}")
        dtype = _CODE_DTYPES[code]
        ndim = reader.take("<B")
        shape = tuple(reader.take("<Q") for _ in range(ndim))
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        payload = reader.take_bytes(size * dtype.itemsize)
        arrays[name] = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
    if reader.offset != len(reader.data):
        raise CheckpointError(f"{path}: {len(reader.data) - reader.offset} trailing bytes")
    return config, arrays


def save_model(path: str, model: JointModel) -> None:
    save_checkpoint(path, model.config, model.params)


def load_model(path: str) -> JointModel:
    """Rebuild the network and overwrite its arrays with the stored ones.

    The fresh skeleton derives every shape from the config, so any
    disagreement with the stored arrays is a corruption, not a silent
    reinterpretation.
    """
    config, arrays = load_checkpoint(path)
    model = JointModel(config)
    expected = set(model.params)
    got = set(arrays)
    if expected != got:
        missing = sorted(expected - got)
        extra = sorted(got - expected)
        raise CheckpointError(
            f"{path}: arrays do not match the config (missing {missing}, extra {extra})")
    for name, value in model.params.items():
        arr = arrays[name]
        if arr.shape != value.data.shape:
            raise CheckpointError(
                f"{path}: {name} has shape {arr.shape}, config implies {value.data.shape}")
        value.data[...] = arr.astype(value.data.dtype)
    return model
