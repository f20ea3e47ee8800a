"""Parallel-prefix adder bitmaps.

An n-bit prefix network is a binary matrix P where P[i, j] = 1 marks a node
computing the group generate/propagate pair over the bit span [j, i]. The
diagonal holds the per-bit inputs; the upper-right triangle is zero padding.
Every present node with i > j must split into an upper parent (i, k) and a
lower parent (k-1, j) for some k in [j+1, i].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .drv import MISSING_LOWER_PARENT, DesignRuleViolation


class MissingParentError(ValueError):
    """Raised when a node has no valid upper/lower parent split."""


@dataclass(frozen=True, eq=False)
class PrefixBitmap:
    """Node-presence bitmap of one n-bit parallel-prefix network."""

    n: int
    bits: np.ndarray

    def __post_init__(self):
        bits = np.ascontiguousarray(np.asarray(self.bits, dtype=np.uint8))
        if bits.shape != (self.n, self.n):
            raise ValueError(f"bits shape {bits.shape} inconsistent with n={self.n}")
        if not np.isin(bits, (0, 1)).all():
            raise ValueError("bitmap entries must be 0/1")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def inputs_only(cls, n: int) -> "PrefixBitmap":
        return cls(n, np.eye(n, dtype=np.uint8))

    def with_bit(self, i: int, j: int, value: int) -> "PrefixBitmap":
        bits = self.bits.copy()
        bits[i, j] = value
        return PrefixBitmap(self.n, bits)

    def node_count(self) -> int:
        """Number of combine nodes (present entries below the diagonal)."""
        return int(np.tril(self.bits, -1).sum())

    def has_all_outputs(self) -> bool:
        """True when every carry output [0, i] is computed (first column set)."""
        return bool(self.bits[:, 0].all())

    def key(self) -> bytes:
        return self.bits.tobytes()

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PrefixBitmap)
            and self.n == other.n
            and np.array_equal(self.bits, other.bits)
        )

    def __hash__(self) -> int:
        return hash((self.n, self.bits.tobytes()))


def _split_exists(bits: np.ndarray, i: int, j: int) -> bool:
    for k in range(j + 1, i + 1):
        if bits[i, k] and bits[k - 1, j]:
            return True
    return False


def validate_prefix(p: PrefixBitmap) -> list[DesignRuleViolation]:
    """Check that inputs are present and every node has a valid parent split.

    Returns missing_lower_parent at (i, i) for absent diagonal inputs and at
    (i, j) for present nodes without any k in [j+1, i] such that both (i, k)
    and (k-1, j) are present. Empty iff the bitmap is a valid prefix network.
    """
    out: list[DesignRuleViolation] = []
    bits = p.bits
    for i in range(p.n):
        if not bits[i, i]:
            out.append(DesignRuleViolation(MISSING_LOWER_PARENT, i, i))
    for i in range(p.n):
        for j in range(i - 1, -1, -1):
            if bits[i, j] and not _split_exists(bits, i, j):
                out.append(DesignRuleViolation(MISSING_LOWER_PARENT, i, j))
    return out


def serial_prefix(n: int) -> PrefixBitmap:
    """Ripple-equivalent chain: every carry output hangs off the previous one.

    Doubles as the built-in default carry-propagate adder.
    """
    bits = np.eye(n, dtype=np.uint8)
    bits[:, 0] = 1
    return PrefixBitmap(n, bits)


def sklansky_prefix(n: int) -> PrefixBitmap:
    """Divide-and-conquer network: minimal depth, n/2 * log2(n) combine nodes."""
    bits = np.eye(n, dtype=np.uint8)
    for i in range(n):
        span, j = 1, i
        rest = i
        while rest > 0:
            if rest & 1:
                j -= span
                bits[i, j] = 1
            rest >>= 1
            span <<= 1
    return PrefixBitmap(n, bits)


def kogge_stone_prefix(n: int) -> PrefixBitmap:
    """Recursive-doubling network: n*log2(n) - n + 1 combine nodes at n a power of two."""
    bits = np.eye(n, dtype=np.uint8)
    for i in range(n):
        j, span = i, 1
        while j > 0:
            bits[i, j] = 1
            j -= span
            span <<= 1
        bits[i, 0] = 1
    return PrefixBitmap(n, bits)


def brent_kung_prefix(n: int) -> PrefixBitmap:
    """Up-sweep/down-sweep tree: 2n - 2 - log2(n) combine nodes at n a power of two."""
    bits = np.eye(n, dtype=np.uint8)
    bits[:, 0] = 1
    span = 2
    while span < n:
        for i in range(span - 1, n, span):
            bits[i, i - span + 1] = 1
        span <<= 1
    return PrefixBitmap(n, bits)


def canonical_parents(
    p: PrefixBitmap, i: int, j: int
) -> tuple[tuple[int, int], tuple[int, int]]:
    """Canonical (upper, lower) parent pair of node (i, j): the minimal valid k.

    The upper parent is (i, k), the lower parent (k-1, j). Raises
    MissingParentError when no k in [j+1, i] has both parents present.
    """
    if not (0 <= j < i < p.n):
        raise ValueError(f"({i}, {j}) is not a combine-node coordinate")
    if not p.bits[i, j]:
        raise ValueError(f"node ({i}, {j}) is not present")
    for k in range(j + 1, i + 1):
        if p.bits[i, k] and p.bits[k - 1, j]:
            return (i, k), (k - 1, j)
    raise MissingParentError(f"node ({i}, {j}) has no valid parent pair")
