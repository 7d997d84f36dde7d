"""Bit-exact binary model checkpoints.

Layout (all integers little-endian u32, all reals little-endian float64):

    magic "BULN" | version=1 | layer count | per-layer (in, out) |
    per-layer weights row-major then bias | provenance length | provenance

The provenance blob is UTF-8 JSON with sorted keys, so identical content
always produces identical bytes and save -> load -> save round-trips
byte-for-byte. Files are written to a temp path and renamed into place.
"""

import json
import os
import struct

import numpy as np

from .network import DenseClassifier

__all__ = ["CheckpointFormatError", "save_checkpoint", "load_checkpoint"]

MAGIC = b"BULN"
VERSION = 1


class CheckpointFormatError(ValueError):
    """Malformed checkpoint file; the message names the failing offset."""


def save_checkpoint(model, provenance, path):
    """Serialize a fitted model and its provenance dict to ``path``."""
    model._check_fitted()
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", VERSION)
    dims = model.layer_dims()
    blob += struct.pack("<I", len(dims))
    for fan_in, fan_out in dims:
        blob += struct.pack("<II", fan_in, fan_out)
    for w, b in zip(model.weights_, model.biases_):
        blob += np.ascontiguousarray(w, dtype="<f8").tobytes()
        blob += np.ascontiguousarray(b, dtype="<f8").tobytes()
    prov = dict(provenance)
    prov["expanded"] = bool(model.expanded_)
    prov_bytes = json.dumps(prov, sort_keys=True, separators=(",", ":")).encode()
    blob += struct.pack("<I", len(prov_bytes))
    blob += prov_bytes
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path):
    """Read a checkpoint back into (model, provenance).

    The returned model's parameters are bit-identical to the saved ones.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    reader = _Reader(data, path)
    magic = reader.take(4, "magic bytes")
    if magic != MAGIC:
        raise CheckpointFormatError(
            f"{path}: bad magic {magic!r} at offset 0, expected {MAGIC!r}"
        )
    version = reader.u32("format version")
    if version != VERSION:
        raise CheckpointFormatError(
            f"{path}: unsupported version {version} at offset 4"
        )
    n_layers = reader.u32("layer count")
    if n_layers == 0:
        raise CheckpointFormatError(f"{path}: zero layers at offset 8")
    dims = [(reader.u32("layer input width"), reader.u32("layer output width"))
            for _ in range(n_layers)]
    for fan_in, fan_out in dims:
        if fan_in == 0 or fan_out == 0:
            raise CheckpointFormatError(f"{path}: zero-width layer in header")
    for (_, prev_out), (next_in, _) in zip(dims[:-1], dims[1:]):
        if prev_out != next_in:
            raise CheckpointFormatError(
                f"{path}: layer widths do not chain ({prev_out} -> {next_in})"
            )

    weights, biases = [], []
    for fan_in, fan_out in dims:
        w_bytes = reader.take(8 * fan_in * fan_out, "weight payload")
        b_bytes = reader.take(8 * fan_out, "bias payload")
        weights.append(np.frombuffer(w_bytes, dtype="<f8").reshape(fan_out, fan_in).copy())
        biases.append(np.frombuffer(b_bytes, dtype="<f8").copy())

    prov_len = reader.u32("provenance length")
    prov_bytes = reader.take(prov_len, "provenance blob")
    if reader.remaining():
        raise CheckpointFormatError(
            f"{path}: {reader.remaining()} trailing bytes at offset {reader.offset}"
        )
    try:
        provenance = json.loads(prov_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(
            f"{path}: invalid provenance JSON at offset {reader.offset - prov_len}: {exc}"
        ) from None

    expanded = bool(provenance.get("expanded", False))
    out_width = dims[-1][1]
    n_classes = out_width - 1 if expanded else out_width
    if n_classes < 1:
        raise CheckpointFormatError(f"{path}: expanded model with output width 1")

    model = DenseClassifier(
        hidden_layers=tuple(fan_out for _, fan_out in dims[:-1]),
        n_classes=n_classes,
    )
    model.weights_ = weights
    model.biases_ = biases
    model.classes_ = np.arange(n_classes)
    model.n_features_in_ = dims[0][0]
    model.expanded_ = expanded
    model.loss_curve_ = []
    return model, provenance


class _Reader:
    """Byte cursor that reports the failing offset on truncation."""

    def __init__(self, data, path):
        self.data = data
        self.path = path
        self.offset = 0

    def take(self, n, what):
        if self.offset + n > len(self.data):
            raise CheckpointFormatError(
                f"{self.path}: truncated while reading {what} at offset "
                f"{self.offset} (need {n} bytes, have {len(self.data) - self.offset})"
            )
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]

    def remaining(self):
        return len(self.data) - self.offset
