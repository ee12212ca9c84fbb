"""Versioned binary container for checkpoints and cached features.

Layout (all integers little-endian)::

    magic    8 bytes   b"MPCCKPT\\0"
    version  uint32
    hlen     uint64    length of the JSON header
    header   hlen bytes UTF-8 JSON (sorted keys)
    arrays   raw little-endian buffers, each starting on a 64-byte boundary

The header holds the index table (name, dtype, shape, offset, nbytes) plus
the run/model configuration, step counter, validation score, optimizer
scalars and free-form metadata.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from ..numerics import AdamState

MAGIC = b"MPCCKPT\x00"
VERSION = 1
ALIGN = 64
_PREFIX = struct.Struct("<8sIQ")


class CheckpointError(ValueError):
    """Unreadable, incompatible or mismatched checkpoint file."""


def _align(n: int) -> int:
    return -(-n // ALIGN) * ALIGN


def write_container(path: str | Path, arrays: Mapping[str, np.ndarray], header: dict) -> None:
    index = []
    offset = 0
    blobs = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = arr.tobytes()
        index.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape),
                      "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset = _align(offset + len(raw))
    head = dict(header)
    head["arrays"] = index
    head_bytes = json.dumps(head, sort_keys=True).encode("utf-8")
    data_start = _align(_PREFIX.size + len(head_bytes))
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(head_bytes)))
        fh.write(head_bytes)
        fh.write(b"\0" * (data_start - _PREFIX.size - len(head_bytes)))
        pos = 0
        for entry, raw in zip(index, blobs):
            fh.write(b"\0" * (entry["offset"] - pos))
            fh.write(raw)
            pos = entry["offset"] + len(raw)


def read_container(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as err:
        raise CheckpointError(f"{path}: cannot read ({err.strerror})") from None
    if len(blob) < _PREFIX.size:
        raise CheckpointError(f"{path}: file too short to be a checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}, not a checkpoint container")
    if version != VERSION:
        raise CheckpointError(f"{path}: format version {version}, this build reads version {VERSION}")
    try:
        header = json.loads(blob[_PREFIX.size:_PREFIX.size + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointError(f"{path}: corrupt header ({err})") from None
    data_start = _align(_PREFIX.size + hlen)
    arrays = {}
    for entry in header.pop("arrays", []):
        start = data_start + entry["offset"]
        end = start + entry["nbytes"]
        if end > len(blob):
            raise CheckpointError(f"{path}: array {entry['name']} is truncated")
        arr = np.frombuffer(blob, dtype=np.dtype(entry["dtype"]), count=int(np.prod(entry["shape"], dtype=np.int64)),
                            offset=start)
        arrays[entry["name"]] = arr.reshape(entry["shape"]).astype(arr.dtype.newbyteorder("="))
    return arrays, header


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    model_config: dict
    run_config: dict = field(default_factory=dict)
    step: int = 0
    score: float | None = None
    optimizer: AdamState | None = None
    meta: dict = field(default_factory=dict)


def save_checkpoint(path: str | Path, ck: Checkpoint) -> None:
    arrays = {f"param/{n}": a for n, a in ck.params.items()}
    opt = None
    if ck.optimizer is not None:
        o = ck.optimizer
        opt = {"t": o.t, "beta1": o.beta1, "beta2": o.beta2, "epsilon": o.epsilon}
        for n in o.m:
            arrays[f"adam.m/{n}"] = o.m[n]
            arrays[f"adam.v/{n}"] = o.v[n]
    header = {"kind": "checkpoint", "model_config": ck.model_config, "run_config": ck.run_config,
              "step": ck.step, "score": ck.score, "optimizer": opt, "meta": ck.meta}
    write_container(path, arrays, header)


def config_diff(expected: dict, found: dict) -> list[str]:
    keys = sorted(set(expected) | set(found))
    return [f"{k}: expected {expected.get(k)!r}, found {found.get(k)!r}"
            for k in keys if expected.get(k) != found.get(k)]


def load_checkpoint(path: str | Path, expect_model_config: dict | None = None) -> Checkpoint:
    arrays, header = read_container(path)
    if header.get("kind") != "checkpoint":
        raise CheckpointError(f"{path}: container holds {header.get('kind')!r}, not a checkpoint")
    model_config = header.get("model_config", {})
    if expect_model_config is not None:
        diff = config_diff(expect_model_config, model_config)
        if diff:
            raise CheckpointError(f"{path}: model configuration mismatch:\n  " + "\n  ".join(diff))
    params = {n[len("param/"):]: a for n, a in arrays.items() if n.startswith("param/")}
    opt = None
    if header.get("optimizer"):
        o = header["optimizer"]
        opt = AdamState(beta1=o["beta1"], beta2=o["beta2"], epsilon=o["epsilon"], t=o["t"])
        for n, a in arrays.items():
            if n.startswith("adam.m/"):
                opt.m[n[len("adam.m/"):]] = a.copy()
            elif n.startswith("adam.v/"):
                opt.v[n[len("adam.v/"):]] = a.copy()
    return Checkpoint(params, model_config, header.get("run_config", {}), header.get("step", 0),
                      header.get("score"), opt, header.get("meta", {}))


def save_features(path: str | Path, features: Mapping[str, np.ndarray], meta: dict) -> None:
    write_container(path, dict(features), {"kind": "features", "meta": meta})


def load_features(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    arrays, header = read_container(path)
    if header.get("kind") != "features":
        raise CheckpointError(f"{path}: container holds {header.get('kind')!r}, not features")
    return arrays, header.get("meta", {})
