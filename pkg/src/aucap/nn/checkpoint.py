"""Named-tensor checkpoint container.

Layout:
    AUCAP-CKPT v1 tensors=<N> meta=<M>\\n
    <M bytes of JSON metadata>\\n
    <name> <d0>x<d1>...\\n          (one manifest line per tensor)
    <N payloads, concatenated in manifest order>

Payloads reuse the AUCAP-EMB container with the ``dtype=f8`` extension so a
save/load cycle reproduces float64 values bit for bit.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .. import embfile
from ..errors import CheckpointError, EmbeddingFormatError

_MAGIC = "AUCAP-CKPT v1"


def _shape_text(shape: tuple) -> str:
    return "x".join(str(d) for d in shape) if shape else "scalar"


def _parse_shape(text: str) -> tuple:
    if text == "scalar":
        return ()
    try:
        return tuple(int(d) for d in text.split("x"))
    except ValueError as exc:
        raise CheckpointError(f"bad shape field {text!r}") from exc


def save_tensors(path: str | os.PathLike, tensors: dict[str, np.ndarray], meta: dict) -> None:
    for name in tensors:
        if not name or any(ch.isspace() for ch in name):
            raise CheckpointError(f"tensor name {name!r} must be non-empty without whitespace")
    meta_blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    chunks = [f"{_MAGIC} tensors={len(tensors)} meta={len(meta_blob)}\n".encode("ascii")]
    chunks.append(meta_blob + b"\n")
    payloads = []
    for name, values in tensors.items():
        arr = np.asarray(values, dtype=np.float64)
        chunks.append(f"{name} {_shape_text(arr.shape)}\n".encode("ascii"))
        rows = arr.shape[0] if arr.ndim >= 1 and arr.size else 1
        payloads.append(embfile.pack_matrix(arr.reshape(rows, -1) if arr.size else
                                            np.zeros((1, 1)), dtype="f8"))
    with open(path, "wb") as fh:
        fh.writelines(chunks)
        fh.writelines(payloads)


def load_tensors(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict]:
    try:
        blob = open(path, "rb").read()
    except FileNotFoundError as exc:
        raise CheckpointError(f"checkpoint not found: {path}") from exc

    newline = blob.find(b"\n")
    if newline < 0:
        raise CheckpointError(f"{path}: missing header line")
    header = blob[:newline].decode("ascii", errors="replace")
    parts = header.split(" ")
    if len(parts) != 4 or " ".join(parts[:2]) != _MAGIC:
        raise CheckpointError(f"{path}: bad magic {header!r}")
    try:
        count = int(parts[2].removeprefix("tensors="))
        meta_len = int(parts[3].removeprefix("meta="))
    except ValueError as exc:
        raise CheckpointError(f"{path}: bad header counts") from exc

    pos = newline + 1
    meta_blob = blob[pos : pos + meta_len]
    if len(meta_blob) < meta_len or blob[pos + meta_len : pos + meta_len + 1] != b"\n":
        raise CheckpointError(f"{path}: truncated metadata block")
    try:
        meta = json.loads(meta_blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: metadata is not valid JSON") from exc
    pos += meta_len + 1

    manifest = []
    for _ in range(count):
        end = blob.find(b"\n", pos)
        if end < 0:
            raise CheckpointError(f"{path}: truncated manifest")
        line = blob[pos:end].decode("ascii", errors="replace")
        name, sep, shape_text = line.partition(" ")
        if not sep or not name:
            raise CheckpointError(f"{path}: bad manifest line {line!r}")
        manifest.append((name, _parse_shape(shape_text)))
        pos = end + 1

    tensors: dict[str, np.ndarray] = {}
    for name, shape in manifest:
        if name in tensors:
            raise CheckpointError(f"{path}: duplicate tensor {name!r}")
        try:
            arr, consumed = embfile.unpack_matrix(blob[pos:], allow_f8=True)
        except EmbeddingFormatError as exc:
            raise CheckpointError(f"{path}: payload for {name!r}: {exc}") from exc
        pos += consumed
        expected = int(np.prod(shape)) if shape else 1
        if arr.size != expected:
            raise CheckpointError(
                f"{path}: tensor {name!r} holds {arr.size} values for shape {shape}"
            )
        tensors[name] = arr.reshape(shape)
    if pos != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - pos} trailing bytes")
    return tensors, meta
