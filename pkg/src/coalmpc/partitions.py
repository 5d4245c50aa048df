"""Set partitions of ``{0, ..., M-1}`` and the refinement order.

Subsystems are 0-based internally; the text form (``str``/``parse``) is
1-based, e.g. ``{1,2},{3,4}``.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from functools import lru_cache

MAX_SUBSYSTEMS = 12


@dataclass(frozen=True, order=False)
class Partition:
    blocks: tuple

    def __post_init__(self):
        blocks = tuple(sorted((tuple(sorted(set(b))) for b in self.blocks), key=lambda b: b[0] if b else -1))
        if any(len(b) == 0 for b in blocks):
            raise ValueError("empty block")
        flat = [i for b in blocks for i in b]
        if len(flat) != len(set(flat)):
            raise ValueError(f"blocks overlap: {blocks}")
        if sorted(flat) != list(range(len(flat))):
            raise ValueError(f"blocks must cover 0..M-1 exactly: {blocks}")
        object.__setattr__(self, "blocks", blocks)

    @property
    def M(self) -> int:
        return sum(len(b) for b in self.blocks)

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def block_of(self, i: int) -> tuple:
        for b in self.blocks:
            if i in b:
                return b
        raise IndexError(i)

    def rgs(self) -> tuple:
        """Restricted-growth string: entry i is the index of i's block."""
        out = [0] * self.M
        for k, b in enumerate(self.blocks):
            for i in b:
                out[i] = k
        return tuple(out)

    @property
    def key(self) -> str:
        return canonical_key(self)

    @classmethod
    def from_rgs(cls, rgs) -> "Partition":
        groups: dict = {}
        for i, k in enumerate(rgs):
            groups.setdefault(k, []).append(i)
        return cls(tuple(tuple(v) for v in groups.values()))

    @classmethod
    def centralized(cls, M: int) -> "Partition":
        return cls((tuple(range(M)),))

    @classmethod
    def decentralized(cls, M: int) -> "Partition":
        return cls(tuple((i,) for i in range(M)))

    @classmethod
    def parse(cls, text: str) -> "Partition":
        """Parse 1-based block notation such as ``{1,2},{3},{4}``."""
        groups = re.findall(r"\{([^{}]*)\}", text)
        if not groups:
            raise ValueError(f"cannot parse partition {text!r}")
        blocks = []
        for g in groups:
            items = [s for s in re.split(r"[,\s]+", g.strip()) if s]
            blocks.append(tuple(int(s) - 1 for s in items))
        return cls(tuple(blocks))

    def __str__(self):
        return ",".join("{" + ",".join(str(i + 1) for i in b) + "}" for b in self.blocks)

    def __repr__(self):
        return f"Partition({self})"


def canonical_key(C: Partition) -> str:
    """RGS as a string; lexicographic order on it is a strict total order."""
    if C.M > 36:
        raise ValueError("key encoding supports at most 36 subsystems")
    return "".join("0123456789abcdefghijklmnopqrstuvwxyz"[k] for k in C.rgs())


def _check_M(M: int):
    if not 1 <= M <= MAX_SUBSYSTEMS:
        raise ValueError(f"M must be in [1, {MAX_SUBSYSTEMS}], got {M}")


def _rgs_iter(M: int):
    # restricted-growth strings in lexicographic order
    a = [0] * M

    def rec(i, mx):
        if i == M:
            yield tuple(a)
            return
        for v in range(mx + 2):
            a[i] = v
            yield from rec(i + 1, max(mx, v))

    if M == 0:
        return
    a[0] = 0
    yield from rec(1, 0)


@lru_cache(maxsize=None)
def _enumerate(M: int) -> tuple:
    return tuple(Partition.from_rgs(r) for r in _rgs_iter(M))


def enumerate_partitions(M: int) -> list:
    """All partitions of ``M`` subsystems, ordered by canonical key."""
    _check_M(M)
    return list(_enumerate(M))


def bell(M: int) -> int:
    row = [1]
    for _ in range(M):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def refines(D: Partition, C: Partition) -> bool:
    """``D <= C``: every block of ``D`` lies inside some block of ``C``."""
    if D.M != C.M:
        raise ValueError(f"partitions of different sets: {D.M} vs {C.M}")
    owner = C.rgs()
    return all(len({owner[i] for i in b}) == 1 for b in D.blocks)


def comparable(C: Partition, D: Partition) -> bool:
    return refines(C, D) or refines(D, C)


def _set_partitions(items):
    items = list(items)
    if not items:
        yield []
        return
    for r in _rgs_iter(len(items)):
        groups: dict = {}
        for x, k in zip(items, r):
            groups.setdefault(k, []).append(x)
        yield list(groups.values())


def refinements(C: Partition, max_extra: int) -> set:
    """Refinements of ``C`` with at most ``max_extra`` additional blocks."""
    out = set()
    per_block = [list(_set_partitions(b)) for b in C.blocks]
    for choice in itertools.product(*per_block):
        blocks = [tuple(g) for split in choice for g in split]
        if len(blocks) - len(C) <= max_extra:
            out.add(Partition(tuple(blocks)))
    return out


def coarsenings(C: Partition, max_fewer: int) -> set:
    """Coarsenings of ``C`` with at most ``max_fewer`` fewer blocks."""
    out = set()
    for grouping in _set_partitions(range(len(C))):
        if len(C) - len(grouping) <= max_fewer:
            blocks = [tuple(i for k in g for i in C.blocks[k]) for g in grouping]
            out.add(Partition(tuple(blocks)))
    return out


@lru_cache(maxsize=4096)
def _neighborhood(C: Partition, delta: int) -> tuple:
    cand = refinements(C, delta) | coarsenings(C, delta)
    cand.add(C)
    return tuple(sorted(cand, key=canonical_key))


def delta_neighborhood(C: Partition, delta: int) -> list:
    """Partitions comparable to ``C`` whose block count differs by at most ``delta``.

    Refinements and coarsenings are both admitted, but never a composite of
    the two, so every member lies on a chain through ``C``. Sorted by key.
    """
    if delta < 1:
        raise ValueError(f"delta must be >= 1, got {delta}")
    return list(_neighborhood(C, delta))


def delta_indicator(C: Partition, i: int, j: int) -> int:
    """0 if ``i`` and ``j`` share a block of ``C``, else 1."""
    M = C.M
    if i == j:
        raise ValueError("indicator undefined for i == j")
    if not (0 <= i < M and 0 <= j < M):
        raise ValueError(f"indices out of range for M={M}: ({i}, {j})")
    r = C.rgs()
    return 0 if r[i] == r[j] else 1


def covers(M: int) -> list:
    """Hasse edges ``(fine, coarse)``: coarse merges exactly two blocks of fine."""
    edges = []
    for D in enumerate_partitions(M):
        for C in sorted(coarsenings(D, 1), key=canonical_key):
            if len(C) == len(D) - 1:
                edges.append((D, C))
    return edges
