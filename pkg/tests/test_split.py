import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from esrn.dataset import COLUMNS, DataError, Sample, from_arrays, to_columns
from esrn.split import kennard_stone, ssmd_split, standardize, train_size


def random_samples(rng, n):
    return from_arrays(*(rng.lognormal(0, 1, n) for _ in range(4)), Dl=rng.lognormal(0, 1, n))


def assert_contained(split):
    tr = to_columns(split.train)
    te = to_columns(split.test)
    for c in COLUMNS:
        assert tr[c].min() <= te[c].min() and te[c].max() <= tr[c].max(), c


def test_standardize_hand_values():
    z = standardize(np.array([1.0, 2.0, 3.0]))
    assert np.allclose(z[:, 0], [-1.224744871391589, 0.0, 1.224744871391589], atol=1e-12)


def test_standardize_idempotent():
    rng = np.random.default_rng(0)
    z = standardize(rng.normal(size=(30, 3)))
    assert np.allclose(standardize(z), z, atol=1e-12)
    assert np.allclose(z.mean(axis=0), 0, atol=1e-9) and np.allclose(z.std(axis=0), 1, atol=1e-9)


def test_standardize_constant_column():
    with pytest.raises(DataError):
        standardize(np.array([[1.0, 2.0], [1.0, 3.0]]))


def test_train_size_rounding():
    assert train_size(660, 0.7) == 462
    assert train_size(5, 0.5) == 3  # 2.5 rounds up
    assert train_size(4, 0.01) == 2
    assert train_size(4, 0.99) == 3


def _max_min_spread(points, subset):
    return min(np.linalg.norm(points[i] - points[j]) for i, j in itertools.combinations(subset, 2))


def test_collinear_four_points():
    rows = [Sample(float(x) + 1.0, 1.0, 1.0, 1.0, 1.0) for x in range(4)]
    split = ssmd_split(rows, 0.5, seed=0)
    assert split.train_indices == (0, 3) and split.test_indices == (1, 2)
    pts = np.array([[x] for x in range(4)], dtype=float)
    best = max(itertools.combinations(range(4), 2), key=lambda s: _max_min_spread(pts, s))
    assert tuple(best) == split.train_indices


def test_interior_point_left_out():
    # square corners plus the centre in (w, d); the centre is the most interior point
    coords = [(1, 1), (3, 1), (1, 3), (3, 3), (2, 2)]
    rows = [Sample(float(a), float(b), 1.0, 1.0, 1.0) for a, b in coords]
    split = ssmd_split(rows, 0.8, seed=0)
    assert split.test_indices == (4,)
    pts = np.array(coords, dtype=float)
    best = max(itertools.combinations(range(5), 4), key=lambda s: _max_min_spread(pts, s))
    assert tuple(best) == split.train_indices


def test_random_set_invariants():
    rng = np.random.default_rng(11)
    rows = random_samples(rng, 50)
    split = ssmd_split(rows, 0.7, seed=1)
    assert len(split.train) == 35 and len(split.test) == 15
    assert set(split.train_indices).isdisjoint(split.test_indices)
    assert sorted(split.train_indices + split.test_indices) == list(range(50))
    assert_contained(split)


def test_determinism_and_manifest():
    rng = np.random.default_rng(2)
    rows = random_samples(rng, 40)
    a, b = ssmd_split(rows, 0.7, seed=3), ssmd_split(rows, 0.7, seed=3)
    assert a == b
    m = a.manifest()
    assert m["n_train"] == 28 and m["seed"] == 3 and m["train_indices"] == list(a.train_indices)


def test_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(DataError):
        ssmd_split(random_samples(rng, 3), 0.7)
    with pytest.raises(DataError):
        ssmd_split([Sample(1.0, 1.0, 1.0, 1.0, 1.0)] * 6, 0.5)
    with pytest.raises(ValueError):
        ssmd_split(random_samples(rng, 10), 1.0)


def test_unique_extremes_selected_without_seeding():
    # plain Kennard-Stone also lands the unique extremes in this easy case
    X = np.array([[0.0], [10.0], [4.0], [5.0], [6.0]])
    assert set(kennard_stone(X, 2, keep_extremes=False)) == {0, 1}


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(6, 60), st.floats(0.3, 0.9))
def test_range_containment_property(seed, n, fraction):
    rows = random_samples(np.random.default_rng(seed), n)
    split = ssmd_split(rows, fraction, seed=seed)
    assert len(split.train) == train_size(n, fraction)
    if len(split.train) >= 2 * len(COLUMNS):
        assert_contained(split)
