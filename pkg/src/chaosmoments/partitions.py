"""Set partitions of the axis set ``{1, ..., d}``.

Partitions are enumerated through restricted-growth strings. Blocks are
stored 0-based; ``str(P)`` renders the 1-based ``"1|2,3"`` syntax.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

MAX_D = 8


class PartitionError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Partition:
    """Canonical set partition: sorted blocks ordered by smallest element."""

    blocks: tuple[tuple[int, ...], ...]
    d: int

    def __post_init__(self):
        blocks = self.blocks
        if any(len(b) == 0 for b in blocks):
            raise PartitionError("empty block")
        if any(list(b) != sorted(set(b)) for b in blocks):
            raise PartitionError(f"blocks must be strictly ascending: {blocks}")
        if [b[0] for b in blocks] != sorted(b[0] for b in blocks):
            raise PartitionError(f"blocks must be ordered by smallest element: {blocks}")
        if sorted(j for b in blocks for j in b) != list(range(self.d)):
            raise PartitionError(f"blocks do not partition {{1..{self.d}}}: {blocks}")

    @classmethod
    def from_blocks(cls, blocks, d: int | None = None) -> "Partition":
        """Build the canonical form of arbitrary 0-based blocks."""
        blocks = [tuple(sorted(int(j) for j in b)) for b in blocks]
        if any(len(b) == 0 for b in blocks):
            raise PartitionError("empty block")
        flat = [j for b in blocks for j in b]
        if d is None:
            d = len(flat)
        if sorted(flat) != list(range(d)):
            raise PartitionError(f"blocks do not partition {{1..{d}}}")
        return cls(tuple(sorted(blocks)), d)

    @classmethod
    def singletons(cls, d: int) -> "Partition":
        return cls(tuple((j,) for j in range(d)), d)

    @classmethod
    def whole(cls, d: int) -> "Partition":
        return cls((tuple(range(d)),), d)

    @property
    def k(self) -> int:
        return len(self.blocks)

    def __str__(self) -> str:
        return "|".join(",".join(str(j + 1) for j in b) for b in self.blocks)

    def __repr__(self) -> str:
        return f"Partition('{self}')"


def parse_partition(text: str, d: int | None = None) -> Partition:
    """Parse ``"1|2,3"`` (1-based) into a canonical :class:`Partition`."""
    text = text.replace("{", "").replace("}", "").replace(" ", "")
    if not text:
        raise PartitionError("empty partition string")
    try:
        blocks = [[int(x) - 1 for x in part.split(",")] for part in text.split("|")]
    except ValueError as exc:
        raise PartitionError(f"cannot parse partition {text!r}") from exc
    if any(j < 0 for b in blocks for j in b):
        raise PartitionError(f"indices are 1-based: {text!r}")
    return Partition.from_blocks(blocks, d)


def _restricted_growth_strings(d: int):
    a = [0] * d

    def rec(i, m):
        if i == d:
            yield tuple(a)
            return
        for v in range(m + 2):
            a[i] = v
            yield from rec(i + 1, max(m, v))

    if d == 0:
        return
    yield from rec(1, 0)


def _from_rgs(rgs) -> Partition:
    k = max(rgs) + 1
    blocks = [[] for _ in range(k)]
    for j, b in enumerate(rgs):
        blocks[b].append(j)
    return Partition(tuple(tuple(b) for b in blocks), len(rgs))


@lru_cache(maxsize=None)
def _all_by_k(d: int) -> dict[int, tuple[Partition, ...]]:
    out: dict[int, list[Partition]] = {k: [] for k in range(1, d + 1)}
    for rgs in _restricted_growth_strings(d):
        p = _from_rgs(rgs)
        out[p.k].append(p)
    return {k: tuple(sorted(v, key=lambda p: p.blocks)) for k, v in out.items()}


def enumerate_partitions(d: int, k: int) -> list[Partition]:
    """All partitions of ``{1..d}`` into ``k`` blocks, lexicographically ordered."""
    if not 1 <= d <= MAX_D:
        raise PartitionError(f"d must be in [1, {MAX_D}], got {d}")
    if not 1 <= k <= d:
        raise PartitionError(f"k must be in [1, {d}], got {k}")
    return list(_all_by_k(d)[k])


def all_partitions(d: int) -> list[Partition]:
    """Every partition of ``{1..d}`` in table order (k ascending)."""
    return [p for k in range(1, d + 1) for p in enumerate_partitions(d, k)]


def refines(P: Partition, Q: Partition) -> bool:
    """True iff every block of ``P`` lies inside a block of ``Q``."""
    if P.d != Q.d:
        raise PartitionError(f"ground sets differ: {P.d} vs {Q.d}")
    owner = {j: i for i, b in enumerate(Q.blocks) for j in b}
    return all(len({owner[j] for j in b}) == 1 for b in P.blocks)


@lru_cache(maxsize=None)
def stirling2(n: int, k: int) -> int:
    """Stirling numbers of the second kind by the standard recurrence."""
    if n == k:
        return 1
    if k == 0 or k > n:
        return 0
    return k * stirling2(n - 1, k) + stirling2(n - 1, k - 1)


def bell(n: int) -> int:
    return sum(stirling2(n, k) for k in range(n + 1))
