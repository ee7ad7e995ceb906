"""Versioned binary checkpoint container for every model kind.

Layout (all integers little-endian, all floats IEEE-754 binary64 LE);
see docs/checkpoint_format.md for the byte-level description:

    magic           5 bytes  b"NNMF\\x01"
    version         u16      container version, currently 1
    kind tag        u8       1=nnmf 2=pmf 3=biasedmf 4=ntn
    reserved        u8       zero
    meta length     u32      followed by that many bytes of UTF-8 JSON
    config length   u32      followed by the run-config snapshot text
    array count     u32
    per array:
        name length u16      followed by the UTF-8 name
        ndim        u8
        dims        ndim x u64
        data        prod(dims) x f64, C order

Round trips are bit-exact: data is written as raw '<f8' bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .baselines import BiasedMfState, NtnModel, PmfState
from .errors import (
    CheckpointFormatError,
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)
from .model import NnmfModel

MAGIC = b"NNMF\x01"
VERSION = 1

_KIND_TAGS = {"nnmf": 1, "pmf": 2, "biasedmf": 3, "ntn": 4}
_KIND_CLASSES = {"nnmf": NnmfModel, "pmf": PmfState, "biasedmf": BiasedMfState,
                 "ntn": NtnModel}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}


def save_model(model, path, config_text=""):
    """Write any trainable model (nnmf / pmf / biasedmf / ntn) to ``path``."""
    kind = model.kind
    if kind not in _KIND_TAGS:
        raise ValueError(f"unknown model kind {kind!r}")
    meta_blob = json.dumps(model.meta(), sort_keys=True).encode("utf-8")
    config_blob = config_text.encode("utf-8")
    arrays = model.to_arrays()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HBB", VERSION, _KIND_TAGS[kind], 0))
        fh.write(struct.pack("<I", len(meta_blob)))
        fh.write(meta_blob)
        fh.write(struct.pack("<I", len(config_blob)))
        fh.write(config_blob)
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype=np.float64)
            name_blob = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_blob)))
            fh.write(name_blob)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


class _Reader:
    def __init__(self, blob, path):
        self.blob = blob
        self.path = path
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.blob):
            raise CheckpointTruncatedError(
                f"{self.path}: file ends {self.pos + n - len(self.blob)} bytes early"
            )
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_model(path, expect_meta=None):
    """Read a checkpoint; returns (model, config_text).

    ``expect_meta`` may carry dimension keys (N, M, D, ...) to enforce;
    any disagreement raises CheckpointShapeError.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    rd = _Reader(blob, path)
    if rd.take(len(MAGIC)) != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic, not a checkpoint file")
    version, tag, _reserved = rd.unpack("<HBB")
    if version != VERSION:
        raise CheckpointVersionError(
            f"{path}: container version {version}, expected {VERSION}"
        )
    if tag not in _TAG_KINDS:
        raise CheckpointFormatError(f"{path}: unknown model kind tag {tag}")
    kind = _TAG_KINDS[tag]
    (meta_len,) = rd.unpack("<I")
    try:
        meta = json.loads(rd.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: corrupt metadata block: {exc}") from None
    (config_len,) = rd.unpack("<I")
    config_text = rd.take(config_len).decode("utf-8")
    (n_arrays,) = rd.unpack("<I")
    arrays = {}
    for _ in range(n_arrays):
        (name_len,) = rd.unpack("<H")
        name = rd.take(name_len).decode("utf-8")
        (ndim,) = rd.unpack("<B")
        shape = rd.unpack(f"<{ndim}Q")
        count = int(np.prod(shape)) if ndim else 1
        data = rd.take(8 * count)
        arrays[name] = np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(shape)
    if rd.pos != len(blob):
        raise CheckpointFormatError(f"{path}: {len(blob) - rd.pos} trailing bytes")
    if expect_meta is not None:
        for key, want in expect_meta.items():
            have = meta.get(key)
            if have != want:
                raise CheckpointShapeError(
                    f"{path}: checkpoint has {key}={have}, run expects {key}={want}"
                )
    model = _KIND_CLASSES[kind].from_arrays(arrays, meta)
    return model, config_text


def checkpoint_save(net, state, path, config_text=""):
    """Save an NNMF (network, latent state) pair."""
    save_model(NnmfModel(net, state), path, config_text)


def checkpoint_load(path, expect_meta=None):
    """Load an NNMF checkpoint back into a (network, latent state) pair."""
    model, config_text = load_model(path, expect_meta)
    if model.kind != "nnmf":
        raise CheckpointShapeError(
            f"{path}: expected an nnmf checkpoint, found {model.kind}"
        )
    return model.net, model.state
