"""Balanced (near-equal replication) randomised designs: counting, enumeration, sampling.

A group of ``k`` units with ``m`` treatments is balanced when replications
differ by at most one; with ``k = q m + r`` any ``r`` treatments may carry the
extra unit. CRDs are balanced over all units, RBDs within every block.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from netdex.models import BlockPartition

DEFAULT_ENUMERATION_LIMIT = 1_000_000


def count_group(k: int, m: int) -> int:
    q, r = divmod(k, m)
    return math.comb(m, r) * math.factorial(k) // (
        math.factorial(q + 1) ** r * math.factorial(q) ** (m - r)
    )


def count_balanced_designs(n: int, m: int, blocks: BlockPartition | None = None) -> int:
    """Exact number of balanced designs, unblocked or balanced within each block."""
    if blocks is None:
        return count_group(n, m)
    return math.prod(count_group(int(k), m) for k in blocks.sizes)


def _group_assignments(k: int, m: int) -> np.ndarray:
    """All balanced 0-based assignments of ``k`` units, shape ``(count, k)``."""
    q, r = divmod(k, m)
    rows = []

    def place(remaining: tuple[int, ...], counts: Sequence[int], t: int, current: np.ndarray):
        if t == m - 1:
            current = current.copy()
            current[list(remaining)] = t
            rows.append(current)
            return
        for chosen in itertools.combinations(remaining, counts[t]):
            nxt = current.copy()
            nxt[list(chosen)] = t
            rest = tuple(x for x in remaining if x not in chosen)
            place(rest, counts, t + 1, nxt)

    for extra in itertools.combinations(range(m), r):
        counts = [q + (t in extra) for t in range(m)]
        place(tuple(range(k)), counts, 0, np.zeros(k, dtype=np.int8))
    return np.array(rows, dtype=np.int8).reshape(-1, k)


def _fast_two_treatment(k: int) -> np.ndarray:
    """Balanced 0/1 assignments of ``k`` units (both near-splits when ``k`` is odd)."""
    out = []
    for ones in sorted({k // 2, k - k // 2}):
        idx = np.array(list(itertools.combinations(range(k), ones)), dtype=np.int64).reshape(-1, ones)
        block = np.zeros((idx.shape[0], k), dtype=np.int8)
        np.put_along_axis(block, idx, 1, axis=1)
        out.append(block)
    return np.concatenate(out)


def group_assignments(k: int, m: int) -> np.ndarray:
    return _fast_two_treatment(k) if m == 2 else _group_assignments(k, m)


def enumerate_balanced(
    n: int, m: int, blocks: BlockPartition | None = None, limit: int = DEFAULT_ENUMERATION_LIMIT
) -> np.ndarray:
    """Every balanced design as 0-based labels, shape ``(count, n)``."""
    total = count_balanced_designs(n, m, blocks)
    if total > limit:
        raise ValueError(f"{total} balanced designs exceed the enumeration limit {limit}; sample instead")
    if blocks is None:
        return group_assignments(n, m)
    out = np.zeros((total, n), dtype=np.int8)
    per_block = [group_assignments(int(k), m) for k in blocks.sizes]
    counts = [a.shape[0] for a in per_block]
    # mixed-radix expansion: block 0 varies slowest
    idx = np.arange(total)
    for g in reversed(range(blocks.kappa)):
        idx, local = np.divmod(idx, counts[g])
        out[:, blocks.members(g + 1)] = per_block[g][local]
    return out


def _sample_group(k: int, m: int, count: int, rng: np.random.Generator) -> np.ndarray:
    q, r = divmod(k, m)
    base = np.broadcast_to(np.repeat(np.arange(m), q), (count, q * m))
    if r:
        extra = np.argsort(rng.random((count, m)), axis=1)[:, :r]
        template = np.concatenate([base, extra], axis=1)
    else:
        template = np.array(base)
    perm = np.argsort(rng.random((count, k)), axis=1)
    return np.take_along_axis(template, perm, axis=1).astype(np.int8)


def sample_balanced(
    n: int, m: int, count: int, rng: np.random.Generator, blocks: BlockPartition | None = None
) -> np.ndarray:
    """``count`` uniform draws from the balanced designs, shape ``(count, n)``."""
    if blocks is None:
        return _sample_group(n, m, count, rng)
    out = np.zeros((count, n), dtype=np.int8)
    for g in range(1, blocks.kappa + 1):
        members = blocks.members(g)
        out[:, members] = _sample_group(members.size, m, count, rng)
    return out


def is_balanced(assign0: np.ndarray, m: int, blocks: BlockPartition | None = None) -> bool:
    groups = [np.arange(len(assign0))] if blocks is None else [blocks.members(g) for g in range(1, blocks.kappa + 1)]
    for members in groups:
        reps = np.bincount(np.asarray(assign0)[members], minlength=m)
        if reps.max() - reps.min() > 1:
            return False
    return True


DEFAULT_SAMPLES = 50_000


@dataclass(frozen=True)
class Sampler:
    """Where balanced designs come from: full enumeration or Monte Carlo.

    ``mode='auto'`` enumerates when the design count is at most
    ``enumeration_limit`` and samples ``count`` designs otherwise.
    """

    mode: str = "auto"
    count: int = DEFAULT_SAMPLES
    seed: int = 0
    enumeration_limit: int = DEFAULT_ENUMERATION_LIMIT

    def __post_init__(self):
        if self.mode not in ("auto", "enumerate", "mc"):
            raise ValueError(f"unknown sampler mode {self.mode!r}")

    def resolved_mode(self, n: int, m: int, blocks: BlockPartition | None) -> str:
        if self.mode != "auto":
            return self.mode
        return "enumerate" if count_balanced_designs(n, m, blocks) <= self.enumeration_limit else "mc"

    def designs(self, n: int, m: int, blocks: BlockPartition | None = None) -> tuple[np.ndarray, str]:
        mode = self.resolved_mode(n, m, blocks)
        if mode == "enumerate":
            return enumerate_balanced(n, m, blocks, self.enumeration_limit), mode
        rng = np.random.default_rng(self.seed)
        return sample_balanced(n, m, self.count, rng, blocks), mode
