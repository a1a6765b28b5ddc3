"""Model checkpoints: JSON manifest header followed by little-endian float64 blobs.

Layout::

    b"GRAPHITE"  8-byte magic
    uint32 LE    format version (1)
    uint64 LE    header length in bytes
    header       UTF-8 JSON: {"manifest": {...}, "tensors": [{"name", "shape", "offset"}]}
    payload      concatenated '<f8' arrays, offsets relative to payload start
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import GraphiteModel, ModelConfig
from .tensor import Tensor

MAGIC = b"GRAPHITE"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: GraphiteModel, path, seed=None, extra: dict | None = None) -> None:
    entries, blobs, offset = [], [], 0
    for name, t in model.params.items():
        blob = np.ascontiguousarray(t.data, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(t.data.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    manifest = {"config": model.config.to_dict(), "seed": seed}
    if extra:
        manifest.update(extra)
    header = json.dumps({"manifest": manifest, "tensors": entries}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> tuple[GraphiteModel, dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a graphite checkpoint")
    version, hlen = struct.unpack_from("<IQ", raw, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    start = 8 + struct.calcsize("<IQ")
    header = json.loads(raw[start:start + hlen].decode())
    payload = memoryview(raw)[start + hlen:]
    manifest = header["manifest"]
    cfg = manifest["config"]
    for key in ("encoder_hidden", "decoder_hidden", "pre_decoder"):
        cfg[key] = tuple(cfg[key])
    params = {}
    for e in header["tensors"]:
        count = int(np.prod(e["shape"]))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=e["offset"]).astype(np.float64)
        params[e["name"]] = Tensor(arr.reshape(e["shape"]), requires_grad=True, name=e["name"])
    return GraphiteModel(ModelConfig.from_dict(cfg), params), manifest
