import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from stockssm.dyngraph import (combine_adjacency, decay_matrix, dump_graph_csv, spearman_from_series,
                               spearman_matrix)
from stockssm.panel import IndustryMap, Window


def brute_spearman(a, b):
    """Rank each series by counting, then Pearson of the ranks."""
    def ranks(x):
        return np.array([1 + sum(y < v for y in x) + 0.5 * (sum(y == v for y in x) - 1) for v in x])
    ra, rb = ranks(a), ranks(b)
    ra, rb = ra - ra.mean(), rb - rb.mean()
    den = np.sqrt((ra ** 2).sum() * (rb ** 2).sum())
    return 0.0 if den == 0 else float((ra * rb).sum() / den)


def test_textbook_case():
    q, _ = spearman_from_series(np.array([[1, 2, 3, 4, 5], [1, 3, 2, 5, 4]], dtype=float))
    assert q[0, 1] == 0.8


def test_identical_and_reversed():
    x = np.array([3.0, 1.0, 4.0, 1.5, 9.0, 2.6])
    q, _ = spearman_from_series(np.stack([x, x, -x]))
    assert q[0, 1] == 1.0 and q[0, 2] == -1.0


def test_constant_series_flagged():
    q, const = spearman_from_series(np.array([[1.0, 1, 1, 1], [1, 2, 3, 4], [4, 1, 2, 2]]))
    assert const == (0,)
    assert q[0, 1] == 0 and q[0, 2] == 0 and q[0, 0] == 1


def test_ties_use_pearson_of_average_ranks():
    a = np.array([1.0, 2, 2, 3, 5])
    b = np.array([2.0, 1, 4, 3, 3])
    q, _ = spearman_from_series(np.stack([a, b]))
    assert q[0, 1] == pytest.approx(brute_spearman(a, b), abs=1e-12)


def test_needs_three_points():
    with pytest.raises(ValueError):
        spearman_from_series(np.ones((2, 2)))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 8), elements=st.integers(-3, 3).map(float)))
def test_matches_brute_force_with_ties(x):
    q, _ = spearman_from_series(x)
    for i in range(4):
        for j in range(4):
            expect = 1.0 if i == j else brute_spearman(x[i], x[j])
            assert q[i, j] == pytest.approx(expect, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_invariants(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((5, 12))
    q, _ = spearman_from_series(x)
    np.testing.assert_array_equal(q, q.T)
    assert np.all(np.abs(q) <= 1) and np.all(np.diag(q) == 1)
    # strictly increasing transform of one series
    y = x.copy()
    y[2] = np.exp(3 * y[2]) + 7
    np.testing.assert_allclose(spearman_from_series(y)[0], q, atol=1e-14)


def test_spearman_matrix_uses_close_channel(rng):
    feats = rng.standard_normal((3, 10, 6))
    sim = spearman_matrix(Window(5, feats, np.zeros(3)))
    np.testing.assert_array_equal(sim.q, spearman_from_series(feats[:, :, 0])[0])
    assert sim.t == 5


def test_decay_matrix_levels():
    ind = IndustryMap({"a": ("P1", "S1"), "b": ("P1", "S1"), "c": ("P1", "S2"), "d": ("P2", "S3")})
    d = decay_matrix(ind, ["a", "b", "c", "d"]).d
    assert d[0, 1] == 1.0 and d[0, 2] == 0.5 and d[0, 3] == 0.1
    np.testing.assert_array_equal(d, d.T)
    assert np.all(np.diag(d) == 1)


def test_combine_adjacency():
    assert combine_adjacency(np.array([[1, 0.8], [0.8, 1]]), np.array([[1, 0.5], [0.5, 1]]))[0, 1] == 0.4
    q = np.array([[1, -0.3], [-0.3, 1]])
    np.testing.assert_array_equal(combine_adjacency(q, np.ones((2, 2))), q)
    with pytest.raises(ValueError):
        combine_adjacency(np.eye(2), np.eye(3))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_adjacency_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    q, _ = spearman_from_series(rng.standard_normal((4, 10)))
    d = rng.choice([1.0, 0.5, 0.1], size=(4, 4))
    d = np.triu(d) + np.triu(d, 1).T
    np.fill_diagonal(d, 1.0)
    a = combine_adjacency(q, d)
    np.testing.assert_array_equal(a, a.T)
    assert np.all(np.abs(a) <= d)


def test_dump_graph_csv(tmp_path):
    a = np.array([[1.0, 0.2], [0.2, 1.0]])
    dump_graph_csv(tmp_path / "g.csv", a, np.eye(2, dtype=bool), ["X", "Y"])
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "i,j,weight,retained"
    assert lines[2] == "X,Y,0.2,0"
