"""Self-describing binary checkpoints.

Layout: magic bytes, an 8-byte little-endian length, a canonical JSON
metadata block (configs, vocabulary, descriptor set, tensor index), then
the raw tensor bytes back to back. Model parameters are stored as
little-endian float32; normalizer CDF samples as float64 so descriptor
normalization survives a round trip bit for bit. Saving a freshly
loaded checkpoint reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .descriptors import DescriptorSet, Normalizer
from .model import ModelConfig, ModelState, _param_shapes
from .nn import Tensor
from .tokenizer import Vocabulary
from .training import PretrainConfig

MAGIC = b"CHEMLM\x00"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable, corrupt, or incompatible checkpoint file."""


@dataclass
class CheckpointBundle:
    state: ModelState
    vocab: Vocabulary
    pretrain_config: PretrainConfig | None = None
    descriptor_set: DescriptorSet | None = None
    normalizer: Normalizer | None = None
    format_version: int = FORMAT_VERSION


def save_checkpoint(
    path,
    state: ModelState,
    pretrain_config: PretrainConfig | None = None,
    vocab: Vocabulary | None = None,
    descriptor_set: DescriptorSet | None = None,
    normalizer: Normalizer | None = None,
) -> None:
    vocab = vocab or Vocabulary()
    index = []
    blocks = []
    offset = 0

    def push(name: str, array: np.ndarray, dtype: str):
        nonlocal offset
        raw = np.ascontiguousarray(array, dtype=dtype).tobytes()
        index.append(
            {
                "name": name,
                "shape": list(array.shape),
                "dtype": dtype,
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        blocks.append(raw)
        offset += len(raw)

    for name, tensor in state.params.items():
        push(name, tensor.data, "<f4")
    if normalizer is not None:
        for member, sample in zip(normalizer.members, normalizer.samples):
            push(f"normalizer/{member}", sample, "<f8")

    meta = {
        "format_version": FORMAT_VERSION,
        "model_config": asdict(state.config),
        "pretrain_config": (
            asdict(pretrain_config) if pretrain_config is not None else None
        ),
        "vocabulary": list(vocab.tokens),
        "descriptor_set": (
            {"name": descriptor_set.name, "members": list(descriptor_set.members)}
            if descriptor_set is not None
            else None
        ),
        "tensors": index,
    }
    payload = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        for raw in blocks:
            fh.write(raw)


def load_checkpoint(path) -> CheckpointBundle:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
        (length,) = struct.unpack("<Q", fh.read(8))
        try:
            meta = json.loads(fh.read(length).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt metadata block: {exc}") from None
        data = fh.read()

    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {version!r} is not supported "
            f"(expected {FORMAT_VERSION})"
        )
    config = ModelConfig(**meta["model_config"])
    expected = _param_shapes(config)

    def read_block(entry) -> np.ndarray:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(data):
            raise CheckpointError(f"{path}: tensor {entry['name']!r} is truncated")
        arr = np.frombuffer(data[start : start + nbytes], dtype=entry["dtype"])
        return arr.reshape(entry["shape"]).copy()

    params = {}
    norm_samples: dict[str, np.ndarray] = {}
    for entry in meta["tensors"]:
        name = entry["name"]
        if name.startswith("normalizer/"):
            norm_samples[name.split("/", 1)[1]] = read_block(entry)
            continue
        if name not in expected:
            raise CheckpointError(f"{path}: unexpected tensor {name!r}")
        if tuple(entry["shape"]) != expected[name]:
            raise CheckpointError(
                f"{path}: tensor {name!r} has shape {entry['shape']}, "
                f"expected {list(expected[name])}"
            )
        params[name] = Tensor(read_block(entry), requires_grad=True)
    missing = sorted(set(expected) - set(params))
    if missing:
        raise CheckpointError(f"{path}: missing tensors {missing}")
    state = ModelState(config, params, np.dtype(np.float32))

    vocab = Vocabulary(tuple(meta["vocabulary"]))
    pcfg = (
        PretrainConfig(**meta["pretrain_config"])
        if meta.get("pretrain_config") is not None
        else None
    )
    dset = None
    normalizer = None
    if meta.get("descriptor_set") is not None:
        dset = DescriptorSet(
            meta["descriptor_set"]["name"],
            tuple(meta["descriptor_set"]["members"]),
        )
        if norm_samples:
            normalizer = Normalizer(
                dset.members,
                tuple(norm_samples[m] for m in dset.members),
            )
    return CheckpointBundle(state, vocab, pcfg, dset, normalizer, version)
