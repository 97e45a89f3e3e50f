"""Set partitions of {1..n}, admissibility filtering and block maps.

Partitions are enumerated through restricted-growth strings in lexicographic
order, which yields a canonical, reproducible listing: blocks are indexed by
first appearance, hence sorted by their minimum element.

Admissibility: given a 0/1 vector epsilon over the coordinates, a partition
is admissible when every block of size > 1 contains only coordinates with
epsilon 1 (blocks tied to an intensity coordinate cannot merge, because the
intensity is non-atomic).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .configuration import as_epsilon

__all__ = [
    "Partition",
    "LabeledIndex",
    "MAX_PARTITION_SIZE",
    "enumerate_partitions",
    "enumerate_epsilon_partitions",
    "block_maps",
    "enumerate_labeled_partitions",
    "partition_type",
]

# Bell(12) = 4,213,597 is the largest enumeration this module will attempt.
MAX_PARTITION_SIZE = 12


@dataclass(frozen=True)
class Partition:
    """Set partition of {1..n}; blocks sorted by minimum, elements ascending."""

    blocks: tuple[tuple[int, ...], ...]

    @property
    def n(self) -> int:
        return sum(len(b) for b in self.blocks)

    @property
    def k(self) -> int:
        return len(self.blocks)

    def block_of(self) -> dict[int, int]:
        """Map element -> 0-based block position."""
        out: dict[int, int] = {}
        for j, block in enumerate(self.blocks):
            for i in block:
                out[i] = j
        return out

    def __str__(self) -> str:
        return "".join("{" + ",".join(map(str, b)) + "}" for b in self.blocks)

    @staticmethod
    def from_blocks(blocks: Sequence[Sequence[int]]) -> "Partition":
        canon = tuple(
            tuple(sorted(int(i) for i in b))
            for b in sorted(blocks, key=lambda b: min(b))
        )
        n = sum(len(b) for b in canon)
        seen = sorted(i for b in canon for i in b)
        if seen != list(range(1, n + 1)):
            raise ValueError(f"blocks must partition 1..{n}, got {blocks}")
        return Partition(canon)


def partition_type(p: Partition) -> str:
    """Block-size signature such as '2+1+1' (sizes descending)."""
    return "+".join(str(s) for s in sorted((len(b) for b in p.blocks), reverse=True))


def _check_n(n: int) -> None:
    if not (1 <= n <= MAX_PARTITION_SIZE):
        raise ValueError(
            f"partition enumeration supports 1 <= n <= {MAX_PARTITION_SIZE}, got {n}"
        )


def _growth_strings(n: int, allow_join) -> Iterator[list[int]]:
    """DFS over restricted-growth strings; allow_join prunes merges."""
    labels = [0] * n
    def rec(pos: int, top: int) -> Iterator[list[int]]:
        if pos == n:
            yield labels
            return
        for lab in range(top + 1):
            if allow_join(pos, lab, labels):
                labels[pos] = lab
                yield from rec(pos + 1, top)
        labels[pos] = top + 1
        yield from rec(pos + 1, top + 1)
    if n == 0:
        return
    labels[0] = 0
    yield from rec(1, 0)


def _labels_to_partition(labels: Sequence[int]) -> Partition:
    k = max(labels) + 1
    blocks: list[list[int]] = [[] for _ in range(k)]
    for i, lab in enumerate(labels):
        blocks[lab].append(i + 1)
    return Partition(tuple(tuple(b) for b in blocks))


def enumerate_partitions(n: int) -> list[Partition]:
    """All set partitions of {1..n} in restricted-growth lexicographic order."""
    _check_n(n)
    return [
        _labels_to_partition(labels)
        for labels in _growth_strings(n, lambda pos, lab, labels: True)
    ]


def enumerate_epsilon_partitions(n: int, eps) -> list[Partition]:
    """Admissible partitions: non-singleton blocks only among epsilon-1 indices."""
    eps = as_epsilon(eps)
    if len(eps) != n:
        raise ValueError(f"epsilon length {len(eps)} does not match n={n}")
    _check_n(n)

    def allow_join(pos: int, lab: int, labels: list[int]) -> bool:
        # Joining index pos+1 into an existing block makes that block
        # non-singleton: everyone in it must carry epsilon 1.
        if eps[pos] != 1:
            return False
        return all(eps[i] == 1 for i in range(pos) if labels[i] == lab)

    return [_labels_to_partition(labels) for labels in _growth_strings(n, allow_join)]


def block_maps(p: Partition, y: np.ndarray, eps):
    """Expansion and restriction maps attached to a partition.

    Given block points y (one per block, shape (k, d)) and a coordinate
    epsilon vector, returns:
      expanded  -- (n, d) array: coordinate i takes the point of its block,
      block_eps -- per-block epsilon values (must be constant per block),
      augmentation -- (m, d) array of the block points whose epsilon is 1.
    """
    eps = as_epsilon(eps)
    if len(eps) != p.n:
        raise ValueError("epsilon length does not match partition size")
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if y.shape[0] != p.k:
        raise ValueError(f"need one point per block ({p.k}), got {y.shape[0]}")
    block_eps = []
    for block in p.blocks:
        vals = {eps[i - 1] for i in block}
        if len(vals) != 1:
            raise ValueError(
                f"epsilon is not constant on block {block}; partition inadmissible"
            )
        block_eps.append(vals.pop())
    expanded = np.empty((p.n, y.shape[1]))
    for j, block in enumerate(p.blocks):
        for i in block:
            expanded[i - 1] = y[j]
    aug = y[[j for j, e in enumerate(block_eps) if e == 1]]
    return expanded, tuple(block_eps), aug


@dataclass(frozen=True)
class LabeledIndex:
    """Flattened index set for products of powers of multiple integrals.

    One element per (factor alpha, copy gamma, slot beta), flattened in
    (alpha, gamma, beta)-lexicographic order so that each copy of a factor
    occupies a consecutive run of coordinates.  `groups` lists, for every
    (alpha, gamma), the 1-based flat coordinates of that copy's slots.
    """

    arities: tuple[int, ...]
    powers: tuple[int, ...]
    elements: tuple[tuple[int, int, int], ...]  # (alpha, beta, gamma), 1-based
    groups: tuple[tuple[int, int, tuple[int, ...]], ...]  # (alpha, gamma, flat ids)

    @staticmethod
    def build(arities: Sequence[int], powers: Sequence[int]) -> "LabeledIndex":
        arities = tuple(int(r) for r in arities)
        powers = tuple(int(m) for m in powers)
        if len(arities) != len(powers) or not arities:
            raise ValueError("need matching non-empty arities and powers")
        if any(r < 1 for r in arities) or any(m < 1 for m in powers):
            raise ValueError("arities and powers must be >= 1")
        elements: list[tuple[int, int, int]] = []
        groups: list[tuple[int, int, tuple[int, ...]]] = []
        for alpha, (r, m) in enumerate(zip(arities, powers), start=1):
            for gamma in range(1, m + 1):
                start = len(elements)
                for beta in range(1, r + 1):
                    elements.append((alpha, beta, gamma))
                groups.append(
                    (alpha, gamma, tuple(range(start + 1, start + r + 1)))
                )
        return LabeledIndex(arities, powers, tuple(elements), tuple(groups))

    @property
    def size(self) -> int:
        return len(self.elements)

    def flat_epsilon(self, eps_per_factor: Sequence) -> tuple[int, ...]:
        """Coordinate epsilon vector from per-factor slot epsilons."""
        per_factor = [as_epsilon(e) for e in eps_per_factor]
        if len(per_factor) != len(self.arities):
            raise ValueError("one epsilon vector per factor required")
        for r, e in zip(self.arities, per_factor):
            if len(e) != r:
                raise ValueError(f"epsilon length {len(e)} != factor arity {r}")
        return tuple(per_factor[a - 1][b - 1] for (a, b, g) in self.elements)


def enumerate_labeled_partitions(index: LabeledIndex, eps_per_factor) -> list[Partition]:
    """Admissible partitions of the flattened labeled index set."""
    flat_eps = index.flat_epsilon(eps_per_factor)
    return enumerate_epsilon_partitions(index.size, flat_eps)
