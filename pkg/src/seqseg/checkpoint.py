"""Self-describing checkpoint container.

Layout: 8-byte magic, little-endian uint64 header length, a UTF-8 JSON
header (configuration, metadata, and for every array its name, shape and
byte offset), then the arrays as raw little-endian float32.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .errors import FormatError
from .model import ModelConfig, SeqSegModel

MAGIC = b"SQSGCKPT"


def save_checkpoint(path, model: SeqSegModel, meta: dict | None = None) -> None:
    arrays = []
    blobs = []
    offset = 0
    for name, tensor in model.state_dict().items():
        data = tensor.detach().cpu().numpy().astype("<f4")
        arrays.append({"name": name, "shape": list(data.shape), "offset": offset, "nbytes": data.nbytes})
        blobs.append(data.tobytes())
        offset += data.nbytes
    header = json.dumps({
        "format_version": 1,
        "dtype": "float32-le",
        "model_config": model.config.to_dict(),
        "meta": meta or {},
        "arrays": arrays,
    }, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def read_checkpoint(path):
    """Return (header dict, {name: float32 ndarray})."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read checkpoint: {exc.strerror}", path) from exc
    if raw[:8] != MAGIC or len(raw) < 16:
        raise FormatError("not a checkpoint file", path)
    (hlen,) = struct.unpack("<Q", raw[8:16])
    try:
        header = json.loads(raw[16:16 + hlen])
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError("corrupt checkpoint header", path) from exc
    body = raw[16 + hlen:]
    arrays = {}
    for entry in header["arrays"]:
        start, n = entry["offset"], entry["nbytes"]
        if start + n > len(body):
            raise FormatError(f"array {entry['name']} truncated", path)
        arrays[entry["name"]] = np.frombuffer(body[start:start + n], dtype="<f4").reshape(entry["shape"])
    return header, arrays


def load_checkpoint(path):
    """Rebuild the model stored at ``path``; returns (model, header)."""
    header, arrays = read_checkpoint(path)
    try:
        model = SeqSegModel(ModelConfig.from_dict(header["model_config"]))
        state = {k: torch.from_numpy(v.copy()) for k, v in arrays.items()}
        model.load_state_dict(state)
    except (KeyError, TypeError, RuntimeError) as exc:
        raise FormatError(f"checkpoint does not match model configuration: {exc}", path) from exc
    model.eval()
    return model, header
