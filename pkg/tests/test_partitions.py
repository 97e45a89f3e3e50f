import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poissonpalm import (
    LabeledIndex,
    Partition,
    block_maps,
    enumerate_epsilon_partitions,
    enumerate_labeled_partitions,
    enumerate_partitions,
    partition_type,
)


def bell_numbers(n_max):
    """Independent oracle: Bell recurrence B_{n+1} = sum C(n,k) B_k."""
    bell = [1]
    for n in range(n_max):
        bell.append(sum(math.comb(n, k) * bell[k] for k in range(n + 1)))
    return bell[1:]


def test_counts_match_bell_recurrence():
    bell = bell_numbers(10)
    for n in range(1, 11):
        assert len(enumerate_partitions(n)) == bell[n - 1]


def test_singleton_case():
    assert [str(p) for p in enumerate_partitions(1)] == ["{1}"]


def test_n4_type_multiplicities():
    types = {}
    for p in enumerate_partitions(4):
        t = partition_type(p)
        types[t] = types.get(t, 0) + 1
    assert types == {"4": 1, "3+1": 4, "2+2": 3, "2+1+1": 6, "1+1+1+1": 1}


def test_out_of_range_rejected():
    with pytest.raises(ValueError):
        enumerate_partitions(0)
    with pytest.raises(ValueError):
        enumerate_partitions(13)


def test_canonical_block_order():
    for p in enumerate_partitions(5):
        mins = [b[0] for b in p.blocks]
        assert mins == sorted(mins)
        for b in p.blocks:
            assert list(b) == sorted(b)


def test_no_duplicates_and_coverage():
    parts = enumerate_partitions(6)
    assert len({str(p) for p in parts}) == 203
    for p in parts:
        assert sorted(i for b in p.blocks for i in b) == list(range(1, 7))


def test_epsilon_all_ones_is_unrestricted():
    assert enumerate_epsilon_partitions(4, "1111") == enumerate_partitions(4)


def test_epsilon_all_zeros_only_singletons():
    parts = enumerate_epsilon_partitions(5, "00000")
    assert len(parts) == 1
    assert parts[0].k == 5


def test_epsilon_110_example():
    parts = enumerate_epsilon_partitions(3, "110")
    assert [str(p) for p in parts] == ["{1,2}{3}", "{1}{2}{3}"]


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(min_value=1, max_value=6),
    bits=st.integers(min_value=0, max_value=63),
)
def test_epsilon_filter_is_exact_complement(n, bits):
    eps = tuple((bits >> i) & 1 for i in range(n))
    admitted = {str(p) for p in enumerate_epsilon_partitions(n, eps)}

    def admissible(p):
        return all(
            len(b) == 1 or all(eps[i - 1] == 1 for i in b) for b in p.blocks
        )

    for p in enumerate_partitions(n):
        assert (str(p) in admitted) == admissible(p)


def test_block_maps_examples():
    p = Partition.from_blocks([[1, 2], [3]])
    y = np.array([[0.2], [0.7]])
    expanded, beps, aug = block_maps(p, y, (1, 1, 1))
    assert np.allclose(expanded.ravel(), [0.2, 0.2, 0.7])
    assert beps == (1, 1)
    assert np.allclose(sorted(aug.ravel()), [0.2, 0.7])

    p = Partition.from_blocks([[1], [2], [3]])
    y = np.array([[0.1], [0.2], [0.3]])
    expanded, beps, aug = block_maps(p, y, (0, 0, 0))
    assert np.allclose(expanded.ravel(), [0.1, 0.2, 0.3])
    assert aug.shape[0] == 0

    p = Partition.from_blocks([[1, 3], [2]])
    y = np.array([[0.4], [0.9]])
    expanded, beps, aug = block_maps(p, y, (1, 0, 1))
    assert np.allclose(expanded.ravel(), [0.4, 0.9, 0.4])
    assert beps == (1, 0)
    assert np.allclose(aug.ravel(), [0.4])


def test_block_maps_rejects_nonconstant_epsilon():
    p = Partition.from_blocks([[1, 2]])
    with pytest.raises(ValueError, match="constant"):
        block_maps(p, np.array([[0.5]]), (1, 0))


@settings(max_examples=30, deadline=None)
@given(n=st.integers(min_value=1, max_value=6), seed=st.integers(0, 10**6))
def test_block_maps_roundtrip_recovers_partition(n, seed):
    rng = np.random.default_rng(seed)
    parts = enumerate_partitions(n)
    p = parts[rng.integers(len(parts))]
    y = rng.random((p.k, 1))
    while len(np.unique(y)) < p.k:
        y = rng.random((p.k, 1))
    expanded, _, _ = block_maps(p, y, (1,) * n)
    groups = {}
    for i in range(n):
        groups.setdefault(float(expanded[i, 0]), []).append(i + 1)
    rebuilt = Partition.from_blocks(list(groups.values()))
    assert rebuilt == p


def test_labeled_index_flattening_order():
    idx = LabeledIndex.build([2, 1], [2, 1])
    # (alpha, gamma, beta)-major: factor 1 copy 1 slots, copy 2 slots, factor 2
    assert idx.elements == (
        (1, 1, 1),
        (1, 2, 1),
        (1, 1, 2),
        (1, 2, 2),
        (2, 1, 1),
    )
    assert idx.groups == (
        (1, 1, (1, 2)),
        (1, 2, (3, 4)),
        (2, 1, (5,)),
    )
    assert idx.flat_epsilon([(1, 0), (1,)]) == (1, 0, 1, 0, 1)


def test_labeled_partition_counts():
    two_copies = LabeledIndex.build([1], [2])
    assert len(enumerate_labeled_partitions(two_copies, [(1,)])) == 2

    squared_pair = LabeledIndex.build([2], [2])
    assert len(enumerate_labeled_partitions(squared_pair, [(1, 1)])) == 15

    mixed = LabeledIndex.build([1, 1], [1, 1])
    only_singletons = enumerate_labeled_partitions(mixed, [(1,), (0,)])
    assert len(only_singletons) == 1
    assert only_singletons[0].k == 2
