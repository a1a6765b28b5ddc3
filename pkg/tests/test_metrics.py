import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from graphite.metrics import auc, average_precision, mean_and_stderr


def brute_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    return sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(pos, neg)) / (len(pos) * len(neg))


def test_auc_examples():
    assert auc([0.9, 0.8, 0.3, 0.2], [1, 1, 0, 0]) == 1.0
    assert auc([0.2, 0.3, 0.8, 0.9], [1, 1, 0, 0]) == 0.0
    assert auc([0.9, 0.5, 0.5, 0.1], [1, 0, 1, 0]) == pytest.approx(0.875)


def test_auc_single_class_errors():
    with pytest.raises(ValueError):
        auc([0.1, 0.2], [1, 1])


@given(st.lists(st.tuples(st.integers(0, 5), st.booleans()), min_size=2, max_size=30))
def test_auc_matches_brute_force(pairs):
    scores = [float(s) for s, _ in pairs]
    labels = [int(l) for _, l in pairs]
    if len(set(labels)) < 2:
        return
    assert auc(scores, labels) == pytest.approx(brute_auc(scores, labels))


@given(st.lists(st.integers(-40, 40), min_size=4, max_size=20), st.integers(0, 1000))
def test_auc_invariant_to_monotone_transform(scores, seed):
    # grid values stay distinct after exp, unlike arbitrary floats
    labels = np.random.default_rng(seed).integers(0, 2, len(scores))
    if len(set(labels.tolist())) < 2:
        return
    s = np.array(scores) / 8.0
    assert auc(s, labels) == pytest.approx(auc(np.exp(s) * 3 + 1, labels))


def test_ap_examples():
    assert average_precision([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert average_precision([0.9, 0.5, 0.1], [1, 0, 1]) == pytest.approx((1 + 2 / 3) / 2)
    assert average_precision([0.3, 0.2], [1, 1]) == 1.0


def test_ap_tie_break_by_index():
    # equal scores: earlier index ranks first
    assert average_precision([0.5, 0.5], [0, 1]) == 0.5
    assert average_precision([0.5, 0.5], [1, 0]) == 1.0


def test_mean_and_stderr():
    m, se = mean_and_stderr([1.0, 2.0, 3.0])
    assert m == 2.0 and se == pytest.approx(1 / np.sqrt(3))
    assert mean_and_stderr([4.0]) == (4.0, 0.0)
