"""Shared test utilities: independent oracles and random design generators."""
from __future__ import annotations

import numpy as np

from arithopt.ct import FULL_ADDER, HALF_ADDER, CompressorTree, dadda_tree, wallace_tree


def simulate_bit_events(tree: CompressorTree):
    """Independent per-bit event simulation of a compressor tree.

    Individual bit tokens are placed per column and consumed stage by stage
    (3 per full adder, 2 per half adder); every compressor emits its sum and
    carry tokens even when starved, mirroring dangling hardware inputs.
    Returns (clean, counts) where ``clean`` is True iff no consumption ever
    missed a token and every column ends with at most two tokens; ``counts``
    is the token census per column per stage boundary.
    """
    from arithopt.ct import initial_pp_counts

    cols, stages = tree.columns, tree.stages
    token_id = 0
    columns: list[list[int]] = []
    for c, height in enumerate(initial_pp_counts(tree.n)):
        columns.append(list(range(token_id, token_id + int(height))))
        token_id += int(height)
    counts = np.zeros((cols, stages + 1), dtype=np.int64)
    counts[:, 0] = [len(col) for col in columns]
    clean = True
    for s in range(stages):
        sums: list[list[int]] = [[] for _ in range(cols)]
        carries: list[list[int]] = [[] for _ in range(cols)]
        for c in range(cols):
            fa = int(tree.counts[FULL_ADDER, c, s])
            ha = int(tree.counts[HALF_ADDER, c, s])
            need = 3 * fa + 2 * ha
            if len(columns[c]) < need:
                clean = False
            del columns[c][: min(need, len(columns[c]))]
            for _ in range(fa + ha):
                sums[c].append(token_id)
                token_id += 1
                if c + 1 < cols:
                    carries[c + 1].append(token_id)
                    token_id += 1
        columns = [carries[c] + sums[c] + columns[c] for c in range(cols)]
        counts[:, s + 1] = [len(col) for col in columns]
    if any(len(col) > 2 for col in columns):
        clean = False
    return clean, counts


def brute_prefix_violations(bits: np.ndarray) -> set[tuple[int, int]]:
    """Exhaustive parent-split check; independent of the library validator."""
    n = bits.shape[0]
    out: set[tuple[int, int]] = set()
    for i in range(n):
        if not bits[i, i]:
            out.add((i, i))
    for i in range(n):
        for j in range(i):
            if not bits[i, j]:
                continue
            if not any(
                bits[i, k] and bits[k - 1, j] for k in range(j + 1, i + 1)
            ):
                out.add((i, j))
    return out


def random_tree(rng: np.random.Generator, n: int | None = None) -> CompressorTree:
    """Random tree: a classic seed (or empty) plus a handful of cell edits.

    Produces a mix of legal and corrupted instances.
    """
    if n is None:
        n = int(rng.choice([2, 3, 4, 6, 8]))
    base = rng.integers(3)
    if base == 0:
        tree = wallace_tree(n)
    elif base == 1:
        tree = dadda_tree(n)
    else:
        tree = CompressorTree.empty(n)
    counts = tree.counts.copy()
    for _ in range(int(rng.integers(0, 7))):
        k = int(rng.integers(2))
        c = int(rng.integers(counts.shape[1]))
        s = int(rng.integers(counts.shape[2]))
        counts[k, c, s] = int(rng.integers(0, 4))
    return CompressorTree(n, counts)


def random_bitmap(rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Random lower-triangular 0/1 grid (diagonal included, so input checks fire)."""
    if n is None:
        n = int(rng.integers(2, 9))
    density = rng.uniform(0.1, 0.9)
    bits = (rng.random((n, n)) < density).astype(np.uint8)
    return np.tril(bits)


def unpack_words(words: np.ndarray, count: int) -> np.ndarray:
    """Inverse of pack_cases for one wire: uint64 words -> 0/1 vector."""
    lanes = np.arange(64, dtype=np.uint64)
    bits = (words[:, None] >> lanes[None, :]) & np.uint64(1)
    return bits.reshape(-1)[:count].astype(np.int64)
