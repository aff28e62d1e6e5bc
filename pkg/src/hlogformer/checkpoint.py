"""Checkpoint container.

Layout (all integers little-endian)::

    line 1   b"HLOGCKPT 1\\n"                 magic and format version
    line 2   one JSON object + b"\\n"         header
    rest     raw tensor payload

The header holds ``encoder_config``, ``tensors`` (a list of
``{name, shape, dtype, offset, nbytes}`` in parameter declaration order, with
offsets relative to the payload start), ``payload_sha256`` and ``extras``
(vocabulary, training-set center, mode, training config). Tensors are stored
C-contiguous as little-endian float32 or float64.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .model_core import EncoderConfig, EncoderStack
from .tokenizer import Vocab

MAGIC = b"HLOGCKPT 1\n"
_DTYPES = {torch.float32: "<f4", torch.float64: "<f8"}
_TORCH = {v: k for k, v in _DTYPES.items()}


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    stack: EncoderStack
    vocab: Vocab | None = None
    center: torch.Tensor | None = None
    mode: str = "bidirectional"
    extras: dict = field(default_factory=dict)


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    stack = ckpt.stack
    manifest, chunks, offset = [], [], 0
    for name, p in stack.named_parameters():
        buf = np.ascontiguousarray(p.detach().cpu().numpy().astype(_DTYPES[p.dtype])).tobytes()
        manifest.append({"name": name, "shape": list(p.shape), "dtype": _DTYPES[p.dtype],
                         "offset": offset, "nbytes": len(buf)})
        chunks.append(buf)
        offset += len(buf)
    payload = b"".join(chunks)
    extras = dict(ckpt.extras)
    extras["mode"] = ckpt.mode
    extras["vocab"] = list(ckpt.vocab.id_to_token) if ckpt.vocab is not None else None
    extras["center"] = [float(x) for x in ckpt.center.double()] if ckpt.center is not None else None
    header = {"encoder_config": stack.config.to_dict(), "tensors": manifest,
              "payload_sha256": hashlib.sha256(payload).hexdigest(), "extras": extras}
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(payload)


def load_checkpoint(path: str | Path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    end = raw.find(b"\n", len(MAGIC))
    try:
        if end < 0:
            raise ValueError("truncated")
        header = json.loads(raw[len(MAGIC):end])
    except ValueError as e:
        raise CheckpointError(f"{path}: corrupt header") from e
    payload = raw[end + 1:]
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise CheckpointError(f"{path}: payload checksum mismatch")

    config = EncoderConfig(**header["encoder_config"])
    dtypes = {t["dtype"] for t in header["tensors"]}
    stack = EncoderStack(config, _TORCH[dtypes.pop()] if len(dtypes) == 1 else torch.float32)
    params = dict(stack.named_parameters())
    if [t["name"] for t in header["tensors"]] != list(params):
        raise CheckpointError(f"{path}: tensor manifest does not match the encoder layout")
    with torch.no_grad():
        for t in header["tensors"]:
            arr = np.frombuffer(payload, dtype=t["dtype"], count=int(np.prod(t["shape"])), offset=t["offset"])
            params[t["name"]].copy_(torch.from_numpy(arr.reshape(t["shape"]).copy()))

    extras = dict(header["extras"])
    vocab = extras.pop("vocab", None)
    center = extras.pop("center", None)
    mode = extras.pop("mode", "bidirectional")
    return Checkpoint(stack, Vocab(tuple(vocab)) if vocab is not None else None,
                      torch.tensor(center, dtype=stack.dtype) if center is not None else None, mode, extras)
