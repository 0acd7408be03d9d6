import numpy as np
import pytest
from hypothesis import given, strategies as st

from mvclust.errors import DomainError, UsageError
from mvclust.metrics import acc, confusion_matrix, hungarian, nmi

from _oracles import brute_acc, brute_assignment_cost, definition_nmi

labelings = st.integers(1, 12).flatmap(
    lambda n: st.tuples(st.lists(st.integers(0, 4), min_size=n, max_size=n),
                        st.lists(st.integers(0, 4), min_size=n, max_size=n)))


def test_acc_examples():
    assert acc([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0
    assert acc([0, 1, 0, 1], [0, 0, 1, 1]) == 0.5


def test_acc_matches_permutation_search(rng):
    for _ in range(50):
        pred, truth = rng.integers(0, 3, size=8), rng.integers(0, 3, size=8)
        assert acc(pred, truth) == pytest.approx(brute_acc(pred, truth), abs=1e-12)


def test_acc_more_clusters_than_classes():
    # unmatched clusters count as wrong
    assert acc([0, 1, 2, 3], [0, 0, 1, 1]) == 0.5
    assert acc([0, 0, 0, 0], [0, 1, 2, 3]) == 0.25


def test_nmi_examples():
    assert nmi([2, 2, 0, 1], [0, 0, 1, 2]) == pytest.approx(1.0, abs=1e-12)
    assert nmi([0, 0, 0, 0], [0, 1, 0, 1]) == 0.0
    assert nmi([3, 3, 3], [1, 1, 1]) == 1.0


def test_nmi_matches_definition(rng):
    for _ in range(50):
        pred, truth = rng.integers(0, 4, size=10), rng.integers(0, 3, size=10)
        assert abs(nmi(pred, truth) - definition_nmi(list(pred), list(truth))) <= 1e-12


@given(labelings, st.permutations(range(5)), st.permutations(range(5)))
def test_relabeling_invariance(pair, perm_a, perm_b):
    pred, truth = np.array(pair[0]), np.array(pair[1])
    relabeled_pred, relabeled_truth = np.array(perm_a)[pred], np.array(perm_b)[truth]
    assert acc(relabeled_pred, relabeled_truth) == pytest.approx(acc(pred, truth), abs=1e-12)
    assert nmi(relabeled_pred, relabeled_truth) == pytest.approx(nmi(pred, truth), abs=1e-12)


@given(labelings)
def test_bounds_and_symmetry(pair):
    pred, truth = pair
    a = acc(pred, truth)
    top_pair = confusion_matrix(pred, truth).max() / len(pred)
    assert top_pair - 1e-12 <= a <= 1.0
    assert 0.0 <= nmi(pred, truth) <= 1.0
    assert nmi(pred, truth) == pytest.approx(nmi(truth, pred), abs=1e-12)


def test_confusion_matrix_counts():
    conf = confusion_matrix([0, 1, 1, 2], [1, 1, 0, 1])
    np.testing.assert_array_equal(conf, [[0, 1], [1, 1], [0, 1]])
    assert conf.sum() == 4


def test_hungarian_examples():
    cost = np.ones((4, 4)) - np.eye(4)
    np.testing.assert_array_equal(hungarian(cost), [0, 1, 2, 3])
    np.testing.assert_array_equal(hungarian([[7.0]]), [0])


def test_hungarian_matches_brute_force(rng):
    for _ in range(30):
        cost = rng.integers(0, 10, size=(5, 5)).astype(float)
        cols = hungarian(cost)
        assert sorted(cols) == list(range(5))
        assert cost[np.arange(5), cols].sum() == brute_assignment_cost(cost)


def test_hungarian_beats_identity_and_random(rng):
    cost = rng.normal(size=(6, 6))
    best = cost[np.arange(6), hungarian(cost)].sum()
    assert best <= np.trace(cost) + 1e-12
    for _ in range(50):
        assert best <= cost[np.arange(6), rng.permutation(6)].sum() + 1e-12


def test_hungarian_prefers_lexicographically_smallest_optimum():
    np.testing.assert_array_equal(hungarian(np.zeros((3, 3))), [0, 1, 2])


def test_hungarian_rectangular_is_padded():
    cols = hungarian([[5.0, 0.0, 9.0], [0.0, 5.0, 9.0]])
    assert cols.shape == (3,)
    np.testing.assert_array_equal(cols[:2], [1, 0])


def test_errors():
    with pytest.raises(DomainError):
        hungarian([[0.0, np.nan], [1.0, 2.0]])
    with pytest.raises(UsageError):
        acc([0, 1], [0])
    with pytest.raises(UsageError):
        nmi([0, 1, 1], [0, 1])
    with pytest.raises(UsageError):
        acc([], [])
    with pytest.raises(UsageError):
        acc([0, -1], [0, 1])
