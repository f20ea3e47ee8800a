"""Design <-> tensor codecs and the JSON interchange format.

Designs are encoded as real tensors with entries in {-1.0, +1.0}: prefix
bitmaps map each cell to one channel value; compressor-tree counts are split
into per-bit binary channels (most significant first) before the same +/-1
mapping. Decoding quantizes by sign (>= 0 reads as bit 1) and recombines.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ct import COMPRESSOR_KINDS, CompressorTree
from .prefix import PrefixBitmap

KIND_CT = "ct"
KIND_PREFIX = "prefix"

FORMAT_VERSION = 1


class EncodingOverflowError(ValueError):
    """A compressor count does not fit into the per-cell bit budget."""


def bits_per_count(n: int) -> int:
    """Binary digits reserved per compressor-count cell.

    A column holds at most n bits, so at most floor(n/2) compressors of one
    kind; one guard bit keeps noisy decodings representable.
    """
    return int(math.ceil(math.log2(n))) + 1


@dataclass(frozen=True)
class DesignTensor:
    """Real-valued encoded design as consumed/produced by the diffusion model."""

    kind: str
    data: np.ndarray
    bit_width: int

    def __post_init__(self):
        if self.kind not in (KIND_CT, KIND_PREFIX):
            raise ValueError(f"unknown design kind {self.kind!r}")
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError("design tensors are [channels, height, width]")
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def n(self) -> int:
        if self.kind == KIND_CT:
            return self.data.shape[1] // 2
        return self.data.shape[1]

    @property
    def stages(self) -> int:
        if self.kind != KIND_CT:
            raise ValueError("stages only defined for compressor-tree tensors")
        return self.data.shape[2]


def tensor_shape(kind: str, n: int, stages: int | None = None) -> tuple[int, int, int]:
    """Encoded tensor shape for a design family."""
    if kind == KIND_PREFIX:
        return (1, n, n)
    if stages is None:
        raise ValueError("compressor-tree shape needs the stage count")
    return (2 * bits_per_count(n), 2 * n, stages)


def to_tensor(design: CompressorTree | PrefixBitmap) -> DesignTensor:
    """Encode a design into a {-1, +1} tensor (bit 1 -> +1.0, bit 0 -> -1.0)."""
    if isinstance(design, PrefixBitmap):
        data = np.where(design.bits > 0, 1.0, -1.0)[None, :, :]
        return DesignTensor(KIND_PREFIX, data, 1)
    if isinstance(design, CompressorTree):
        width = bits_per_count(design.n)
        if (design.counts >= (1 << width)).any():
            raise EncodingOverflowError(
                f"count >= 2^{width} cannot be encoded for n={design.n}"
            )
        channels = []
        for k in range(COMPRESSOR_KINDS):
            for b in range(width):  # most significant digit first
                digit = (design.counts[k] >> (width - 1 - b)) & 1
                channels.append(np.where(digit > 0, 1.0, -1.0))
        return DesignTensor(KIND_CT, np.stack(channels, axis=0), width)
    raise TypeError(f"cannot encode {type(design).__name__}")


def from_tensor(x: DesignTensor) -> CompressorTree | PrefixBitmap:
    """Decode by sign (>= 0 reads as bit 1); total on finite tensors.

    The decoded design may be illegal; validators and the legalizer deal with
    that downstream. Prefix decoding masks the upper-right padding triangle,
    which is not part of the representation.
    """
    if not np.isfinite(x.data).all():
        raise ValueError("cannot decode non-finite tensor")
    bits = (x.data >= 0).astype(np.int64)
    if x.kind == KIND_PREFIX:
        grid = np.tril(bits[0]).astype(np.uint8)
        return PrefixBitmap(x.n, grid)
    width = x.data.shape[0] // COMPRESSOR_KINDS
    counts = np.zeros((COMPRESSOR_KINDS, x.data.shape[1], x.data.shape[2]), dtype=np.int64)
    for k in range(COMPRESSOR_KINDS):
        for b in range(width):
            counts[k] = (counts[k] << 1) | bits[k * width + b]
    return CompressorTree(x.n, counts)


def design_kind(design: CompressorTree | PrefixBitmap) -> str:
    return KIND_CT if isinstance(design, CompressorTree) else KIND_PREFIX


def design_key(design: CompressorTree | PrefixBitmap) -> bytes:
    """Exact-content hash key used for dataset deduplication."""
    return design_kind(design).encode() + design.key()


def design_to_json(design: CompressorTree | PrefixBitmap) -> dict:
    """Interchange document: {kind, n, shape, counts|bits (row-major), format_version}."""
    if isinstance(design, CompressorTree):
        return {
            "format_version": FORMAT_VERSION,
            "kind": KIND_CT,
            "n": design.n,
            "shape": list(design.counts.shape),
            "counts": [int(v) for v in design.counts.reshape(-1)],
        }
    if isinstance(design, PrefixBitmap):
        return {
            "format_version": FORMAT_VERSION,
            "kind": KIND_PREFIX,
            "n": design.n,
            "shape": list(design.bits.shape),
            "bits": [int(v) for v in design.bits.reshape(-1)],
        }
    raise TypeError(f"cannot serialize {type(design).__name__}")


def design_from_json(doc: dict) -> CompressorTree | PrefixBitmap:
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported format_version {doc.get('format_version')!r}")
    kind = doc["kind"]
    shape = tuple(doc["shape"])
    if kind == KIND_CT:
        counts = np.asarray(doc["counts"], dtype=np.int64).reshape(shape)
        return CompressorTree(int(doc["n"]), counts)
    if kind == KIND_PREFIX:
        bits = np.asarray(doc["bits"], dtype=np.uint8).reshape(shape)
        return PrefixBitmap(int(doc["n"]), bits)
    raise ValueError(f"unknown design kind {kind!r}")


def save_design(design: CompressorTree | PrefixBitmap, path: str | Path) -> None:
    Path(path).write_text(json.dumps(design_to_json(design)) + "\n")


def load_design(path: str | Path) -> CompressorTree | PrefixBitmap:
    return design_from_json(json.loads(Path(path).read_text()))
