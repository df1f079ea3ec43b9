import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from casecascade.ranking import (
    DocScore,
    SimilarityMatrix,
    diagnostics_tsv,
    max_pool,
    pair_matrix,
    score_candidate,
    streaming_max_pool,
    top_k,
)

from oracles import brute_cosine, brute_max


def test_pair_matrix_examples():
    v = np.array([[0.3, 0.4]])
    np.testing.assert_allclose(pair_matrix(v, v).values, [[1.0]], atol=1e-15)
    e1, e2 = [1.0, 0.0], [0.0, 1.0]
    np.testing.assert_array_equal(pair_matrix([e1, e2], [e1]).values, [[1.0], [0.0]])
    rng = np.random.default_rng(0)
    assert pair_matrix(rng.normal(size=(2, 4)), rng.normal(size=(3, 4))).shape == (2, 3)


def test_pair_matrix_errors_and_zero_rows():
    with pytest.raises(ValueError):
        pair_matrix(np.zeros((0, 3)), np.ones((1, 3)))
    with pytest.raises(ValueError, match="mismatch"):
        pair_matrix(np.ones((1, 3)), np.ones((1, 2)))
    m = pair_matrix([[0.0, 0.0], [1.0, 0.0]], [[2.0, 0.0]]).values
    np.testing.assert_array_equal(m, [[0.0], [1.0]])


def _m(values):
    return SimilarityMatrix("q", "c", np.array(values, dtype=float))


def test_max_pool_examples():
    s = max_pool(_m([[0.1, 0.9], [0.3, 0.2]]))
    assert (s.score, s.argmax_pair) == (0.9, (0, 1))
    assert max_pool(_m([[0.5, 0.5], [0.5, 0.5]])).argmax_pair == (0, 0)
    assert max_pool(_m([[0.25]])).score == 0.25
    with pytest.raises(ValueError):
        max_pool(_m(np.zeros((0, 0))))


def test_top_k_examples():
    scores = [DocScore("B", 0.5, (0, 0)), DocScore("A", 0.5, (0, 0))]
    assert [s.candidate_id for s in top_k(scores, 1)] == ["A"]
    assert len(top_k(scores, 10)) == 2
    many = [DocScore(f"c{i}", i / 10, (0, 0)) for i in range(10)]
    assert [s.candidate_id for s in top_k(many, 5)] == ["c9", "c8", "c7", "c6", "c5"]
    with pytest.raises(ValueError):
        top_k(scores, 0)


_mat = st.integers(1, 6).flatmap(
    lambda n: st.integers(1, 6).flatmap(
        lambda m: arrays(np.float64, (n, m), elements=st.sampled_from([-1.0, -0.5, 0.0, 0.25, 0.5, 1.0]))
        | arrays(np.float64, (n, m), elements=st.floats(-1, 1))
    )
)


@given(_mat)
def test_max_pool_is_global_max(values):
    s = max_pool(_m(values))
    best, where = brute_max(values.tolist())
    assert s.score == best and s.argmax_pair == where
    assert s.score == values[s.argmax_pair]
    assert (values <= s.score).all()


_units = st.integers(1, 5).flatmap(
    lambda n: arrays(np.float64, (n, 4), elements=st.floats(-10, 10, allow_nan=False))
)


@settings(max_examples=200)
@given(_units, _units)
def test_pair_matrix_properties(a, b):
    ab = pair_matrix(a, b).values
    ba = pair_matrix(b, a).values
    np.testing.assert_allclose(ab, ba.T, rtol=0, atol=1e-12)
    for i in range(len(a)):
        for j in range(len(b)):
            assert ab[i, j] == pytest.approx(brute_cosine(a[i], b[j]), abs=1e-12)
    full = max_pool(pair_matrix(a, b))
    stream = streaming_max_pool(a, b)
    assert (full.score, full.argmax_pair) == (stream.score, stream.argmax_pair)
    assert score_candidate(a, b, cap=0) == score_candidate(a, b, cap=10**9)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=20), st.floats(0.1, 10), st.floats(-3, 3),
       st.integers(1, 25))
def test_top_k_affine_invariance(values, scale, shift, k):
    scores = [DocScore(f"c{i:02d}", v, (0, 0)) for i, v in enumerate(values)]
    moved = [DocScore(s.candidate_id, s.score * scale + shift, (0, 0)) for s in scores]
    # rounding can merge distinct scores into ties; skip those draws
    if len({s.score for s in moved}) == len({s.score for s in scores}):
        assert [s.candidate_id for s in top_k(scores, k)] == [s.candidate_id for s in top_k(moved, k)]


@given(st.lists(st.floats(0, 1), min_size=2, max_size=20), st.integers(1, 10))
def test_top_k_ignores_low_newcomer(values, k):
    scores = [DocScore(f"c{i:02d}", v, (0, 0)) for i, v in enumerate(values)]
    before = top_k(scores, k)
    if len(before) < k:
        return
    newcomer = DocScore("zz", before[-1].score - 0.5, (0, 0))
    assert top_k(scores + [newcomer], k) == before


def test_diagnostics_tsv():
    text = diagnostics_tsv([DocScore("c1", 0.5, (1, 2))])
    assert text == "candidate_id\tscore\targmax_row\targmax_col\nc1\t0.500000\t1\t2\n"
