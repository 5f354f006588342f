"""Versioned binary checkpoints: named float64 tensors + optimizer state.

Layout (all integers little-endian):

    bytes 0..7    magic ``GNAVCKPT``
    bytes 8..11   format version (uint32, currently 1)
    bytes 12..19  header length H (uint64)
    bytes 20..    header: UTF-8 JSON (see below), H bytes
    rest          payload: concatenated raw little-endian float64 buffers

Header JSON: ``{"tensors": [{"name", "shape", "offset", "count"}...],
"adam": {...scalars, "m": {name: payload-slot}, "v": {...}} | null,
"extra": {...}}``. Offsets are element offsets into the payload. ``extra``
is an arbitrary JSON-serializable dict (rng state, epoch counters, config
snapshot).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .optim import Adam
from .tensor import Tensor

MAGIC = b"GNAVCKPT"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, params: dict[str, Tensor], adam: Adam | None = None,
                    extra: dict | None = None) -> None:
    payload: list[np.ndarray] = []
    offset = 0

    def put(arr: np.ndarray) -> tuple[int, int]:
        nonlocal offset
        flat = np.ascontiguousarray(arr, dtype="<f8").reshape(-1)
        payload.append(flat)
        slot = (offset, flat.size)
        offset += flat.size
        return slot

    tensors = []
    for name in sorted(params):
        off, count = put(params[name].data)
        tensors.append({"name": name, "shape": list(params[name].shape),
                        "offset": off, "count": count})
    adam_hdr = None
    if adam is not None:
        adam_hdr = {"t": adam.t, "lr": adam.lr, "beta1": adam.beta1,
                    "beta2": adam.beta2, "eps": adam.eps,
                    "m": {}, "v": {}}
        for name in sorted(adam.params):
            adam_hdr["m"][name] = put(adam.m[name])
            adam_hdr["v"][name] = put(adam.v[name])
    header = json.dumps({"tensors": tensors, "adam": adam_hdr,
                         "extra": extra or {}}).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.uint32(VERSION).tobytes())
        f.write(np.uint64(len(header)).tobytes())
        f.write(header)
        for flat in payload:
            f.write(flat.tobytes())


def load_checkpoint(path) -> tuple[dict[str, Tensor], dict | None, dict]:
    """Returns (params, adam_state, extra); params require grad."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version = int(np.frombuffer(raw[8:12], dtype="<u4")[0])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    hlen = int(np.frombuffer(raw[12:20], dtype="<u8")[0])
    header = json.loads(raw[20:20 + hlen].decode("utf-8"))
    body = np.frombuffer(raw[20 + hlen:], dtype="<f8")

    def grab(slot, shape=None):
        off, count = slot
        arr = np.array(body[off:off + count], dtype=np.float64)
        return arr.reshape(shape) if shape is not None else arr

    params: dict[str, Tensor] = {}
    for rec in header["tensors"]:
        params[rec["name"]] = Tensor(grab((rec["offset"], rec["count"]), rec["shape"]),
                                     requires_grad=True)
    adam_state = None
    if header["adam"] is not None:
        ah = header["adam"]
        adam_state = {"t": ah["t"], "lr": ah["lr"], "beta1": ah["beta1"],
                      "beta2": ah["beta2"], "eps": ah["eps"],
                      "m": {}, "v": {}}
        for name, slot in ah["m"].items():
            adam_state["m"][name] = grab(slot, params[name].shape)
        for name, slot in ah["v"].items():
            adam_state["v"][name] = grab(slot, params[name].shape)
    return params, adam_state, header["extra"]
