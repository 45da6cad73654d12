import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from urbangan import cluster as cl
from urbangan.errors import ArgumentError, ShapeError

SIX = np.array([0.0, 0.1, 0.2, 10.0, 10.1, 10.2])


def test_six_point_instance():
    inertia, cents = oracles.best_partition(SIX, 2)
    m = cl.kmeans_fit(SIX, 2, seed=0)
    assert sorted(m.centroids.ravel()) == pytest.approx(cents, abs=1e-12)
    assert m.inertia == pytest.approx(inertia, abs=1e-12)
    assert inertia == pytest.approx(0.04, abs=1e-12)


def test_k_equals_distinct_rows():
    x = np.array([[0.0, 1.0], [2.0, 2.0], [5.0, -1.0], [2.0, 2.0]])
    m = cl.kmeans_fit(x, 3, seed=1)
    assert m.inertia == 0.0
    assert sorted(map(tuple, m.centroids)) == sorted({tuple(r) for r in x})


def test_deterministic():
    x = np.random.default_rng(0).random((40, 5))
    a, b = cl.kmeans_fit(x, 4, seed=3), cl.kmeans_fit(x, 4, seed=3)
    assert np.array_equal(a.centroids, b.centroids) and a.to_json() == b.to_json()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 6), st.integers(6, 40))
def test_inertia_monotone_and_assignments_nearest(seed, k, n):
    x = np.random.default_rng(seed).random((n, 3))
    m = cl.kmeans_fit(x, k, seed=seed, restarts=2)
    assert all(b <= a + 1e-9 * max(1.0, a) for a, b in zip(m.history, m.history[1:]))
    # brute-force nearest centroid per row
    for i, row in enumerate(x):
        d = [float(np.sum((row - c) ** 2)) for c in m.centroids]
        assert d[m.assignments[i]] == min(d)
    recomputed = sum(float(np.sum((x[i] - m.centroids[m.assignments[i]]) ** 2)) for i in range(n))
    assert m.inertia == pytest.approx(recomputed, rel=1e-12, abs=1e-12)


def test_small_instances_reach_exhaustive_optimum():
    rng = np.random.default_rng(4)
    for _ in range(5):
        x = rng.random((7, 1))
        inertia, _ = oracles.best_partition(x, 3)
        assert cl.kmeans_fit(x, 3, seed=0).inertia == pytest.approx(inertia, abs=1e-12)


def test_duplicate_points_need_reseed():
    x = np.array([[0.0]] * 5 + [[1.0]])
    m = cl.kmeans_fit(x, 2, seed=0)
    assert m.inertia == 0.0


class TestSelectK:
    def test_three_distinct_rows(self):
        x = np.repeat(np.array([[0.0, 0.0], [1.0, 3.0], [4.0, 1.0]]), 5, axis=0)
        r = cl.select_k(x, range(1, 6))
        assert r.k == 3 and r.explained[3] == 1.0 and not r.flagged

    def test_k1_explains_nothing(self):
        x = np.random.default_rng(1).random((20, 2))
        assert cl.select_k(x, [1, 2]).explained[1] == 0.0

    def test_flag_when_never_reached(self):
        x = np.random.default_rng(2).random((30, 4))
        r = cl.select_k(x, [1, 2], explained_threshold=0.99)
        assert r.flagged and r.k == 2

    def test_bad_range(self):
        with pytest.raises(ArgumentError):
            cl.select_k(np.zeros((3, 1)), [1, 5])


class TestAssign:
    def test_centroid_assigned_to_itself(self):
        x = np.random.default_rng(5).random((30, 4))
        m = cl.kmeans_fit(x, 5, seed=0)
        for j, c in enumerate(m.centroids):
            assert cl.assign(m, c) == j

    def test_reproduces_stored_assignments(self):
        x = np.random.default_rng(6).random((50, 3))
        m = cl.kmeans_fit(x, 4, seed=2)
        assert np.array_equal(cl.assign_all(m, x), m.assignments)

    def test_length_mismatch(self):
        m = cl.kmeans_fit(np.random.default_rng(0).random((5, 3)), 2)
        with pytest.raises(ShapeError):
            cl.assign(m, np.zeros(4))


def test_invalid_k():
    with pytest.raises(ArgumentError):
        cl.kmeans_fit(np.zeros((3, 2)), 4)
    with pytest.raises(ArgumentError):
        cl.kmeans_fit(np.zeros((3, 2)), 0)


def test_assignments_csv():
    m = cl.kmeans_fit(SIX, 2)
    lines = m.assignments_csv([f"m{i}" for i in range(6)]).splitlines()
    assert lines[0] == "map_id,cluster" and len(lines) == 7
