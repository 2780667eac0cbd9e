import datetime as dt
import itertools
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ehrvec.corpus import TrainingPair, WindowConfig, flatten_timeline, generate_pairs, n_pairs
from ehrvec.ingest import PatientTimeline

A, B, C = 0, 1, 2
d1, d2 = dt.date(2010, 1, 1), dt.date(2010, 2, 1)


def brute_pairs(seq, w):
    T = len(seq)
    return [(seq[t], seq[t + j]) for t in range(T) for j in range(-w, w + 1)
            if j != 0 and 0 <= t + j < T]


def test_singleton_visits_order_invariant():
    t = PatientTimeline("p", [(d1, [A]), (d2, [B])])
    for epoch in range(5):
        assert flatten_timeline(t, epoch, WindowConfig(5, 7)) == [A, B]


def test_flatten_deterministic():
    t = PatientTimeline("p", [(d1, [A, B, C])])
    cfg = WindowConfig(5, 123)
    assert flatten_timeline(t, 3, cfg) == flatten_timeline(t, 3, cfg)


def test_flatten_permutation_frequencies():
    t = PatientTimeline("p", [(d1, [A, B, C])])
    cfg = WindowConfig(5, 99)
    counts = Counter(tuple(flatten_timeline(t, e, cfg)) for e in range(1000))
    assert set(counts) == set(itertools.permutations([A, B, C]))
    for perm in counts:
        assert abs(counts[perm] / 1000 - 1 / 6) <= 0.05


def test_visits_stay_in_date_order():
    t = PatientTimeline("p", [(d1, [A, B]), (d2, [C, C])])
    for e in range(20):
        seq = flatten_timeline(t, e, WindowConfig(2, 1))
        assert sorted(seq[:2]) == [A, B] and seq[2:] == [C, C]


def test_pairs_boundary_clipping():
    assert generate_pairs([A, B, C], 1) == [(A, B), (B, A), (B, C), (C, B)]


def test_pairs_window_exceeds_length():
    got = generate_pairs([A, B, C], 5)
    positions = [(i, j) for i in range(3) for j in range(3) if i != j]
    assert got == [([A, B, C][i], [A, B, C][j]) for i, j in positions]
    assert len(got) == 6


def test_single_position_no_pairs():
    assert generate_pairs([A], 3) == []


def test_pair_type():
    [p, *_] = generate_pairs([A, B], 1)
    assert isinstance(p, TrainingPair) and p.center == A and p.context == B


def test_window_config_rejects_zero():
    with pytest.raises(ValueError):
        WindowConfig(0, 1)


@pytest.mark.parametrize("T", range(0, 21))
@pytest.mark.parametrize("w", range(1, 7))
def test_pair_count_formula(T, w):
    seq = list(range(T))
    assert len(generate_pairs(seq, w)) == len(brute_pairs(seq, w)) == n_pairs(T, w)
    if T > 2 * w:
        assert n_pairs(T, w) == 2 * w * T - w * (w + 1)


@given(st.lists(st.integers(0, 5), max_size=25), st.integers(1, 6))
def test_pairs_match_brute_force_and_symmetric(seq, w):
    got = [tuple(p) for p in generate_pairs(seq, w)]
    assert got == brute_pairs(seq, w)
    counts = Counter(got)
    assert all(counts[(a, b)] == counts[(b, a)] for a, b in counts)


@given(st.lists(st.lists(st.integers(0, 9), min_size=1, max_size=5), min_size=1, max_size=6),
       st.integers(0, 2**32), st.integers(0, 50))
def test_flatten_is_permutation(visits, seed, epoch):
    t = PatientTimeline("px", [(d1 + dt.timedelta(days=i), v) for i, v in enumerate(visits)])
    seq = flatten_timeline(t, epoch, WindowConfig(1, seed))
    assert Counter(seq) == Counter(c for v in visits for c in v)
    assert len(seq) == t.n_codes()
