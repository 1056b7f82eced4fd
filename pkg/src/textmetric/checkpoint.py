"""Self-describing binary checkpoint container.

Layout: a magic line, an 8-byte little-endian header length, a JSON header
(encoder config, training seed, tokenizer word list, and per-array name/dtype/
shape), then the raw C-order little-endian bytes of each array in header
order. No timestamps or other ambient state are stored, so identical models
serialize to identical bytes, and a load/save round trip is bit-exact.
"""

from __future__ import annotations

import dataclasses
import json
import os
import struct
import tempfile
from typing import IO

import numpy as np

from .data import Tokenizer
from .encoder import Encoder, EncoderConfig
from .errors import IngestionError

MAGIC = b"textmetric-checkpoint-1\n"


def atomic_write_bytes(path: str | os.PathLike, payload: bytes) -> None:
    """Write a file atomically: temp file in the same directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def checkpoint_bytes(encoder: Encoder, tokenizer: Tokenizer, seed: int) -> bytes:
    names = list(encoder.params)
    header = {
        "encoder_config": dataclasses.asdict(encoder.config),
        "seed": int(seed),
        "vocab": list(tokenizer.words),
        "arrays": [
            {"name": n, "dtype": str(encoder.params[n].dtype), "shape": list(encoder.params[n].shape)}
            for n in names
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    parts = [MAGIC, struct.pack("<Q", len(header_bytes)), header_bytes]
    for n in names:
        arr = np.ascontiguousarray(encoder.params[n])
        parts.append(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())
    return b"".join(parts)


def save_checkpoint(path: str | os.PathLike, encoder: Encoder, tokenizer: Tokenizer, seed: int) -> None:
    atomic_write_bytes(path, checkpoint_bytes(encoder, tokenizer, seed))


def load_checkpoint(path: str | os.PathLike) -> tuple[Encoder, Tokenizer, int]:
    """Rebuild (encoder, tokenizer, seed) from a checkpoint file, bit-exactly."""
    path = os.fspath(path)
    with open(path, "rb") as f:
        return _read_checkpoint(f, path)


def _read_checkpoint(f: IO[bytes], path: str) -> tuple[Encoder, Tokenizer, int]:
    magic = f.read(len(MAGIC))
    if magic != MAGIC:
        raise IngestionError(f"{path}: not a textmetric checkpoint (bad magic)")
    (header_len,) = struct.unpack("<Q", f.read(8))
    try:
        header = json.loads(f.read(header_len).decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise IngestionError(f"{path}: corrupt checkpoint header: {exc}") from exc
    try:
        cfg_dict = dict(header["encoder_config"])
        if "init_output_bias" in cfg_dict:
            cfg_dict["init_output_bias"] = float(cfg_dict["init_output_bias"])
        config = EncoderConfig(**cfg_dict)
        seed = int(header["seed"])
        tokenizer = Tokenizer(header["vocab"])
        params: dict[str, np.ndarray] = {}
        for entry in header["arrays"]:
            dtype = np.dtype(entry["dtype"]).newbyteorder("<")
            shape = tuple(entry["shape"])
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            raw = f.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise IngestionError(f"{path}: truncated checkpoint array {entry['name']!r}")
            params[entry["name"]] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    except (KeyError, TypeError, ValueError) as exc:
        raise IngestionError(f"{path}: invalid checkpoint header: {exc}") from exc
    return Encoder(config, params), tokenizer, seed
