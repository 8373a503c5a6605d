import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cohortrag.errors import ColdStartRequired, ValidationError
from cohortrag.users import build_user_records, cold_start_record, pool_user, unit, user_matrix

from conftest import make_matrix


def test_single_doc_pool_is_identity():
    matrix = make_matrix({"d1": [1.0, 2.0, 3.0]})
    record = pool_user("u", ["d1"], matrix)
    assert np.allclose(record.pooled, [1.0, 2.0, 3.0])
    assert record.n_u == 1


def test_two_doc_pool_is_midpoint():
    matrix = make_matrix({"d1": [1.0, 0.0], "d2": [0.0, 1.0]})
    record = pool_user("u", ["d1", "d2"], matrix)
    assert np.allclose(record.pooled, [0.5, 0.5])


def test_pool_matches_elementwise_mean_oracle():
    rng = np.random.default_rng(5)
    vectors = {f"d{i}": rng.normal(size=16).tolist() for i in range(5)}
    matrix = make_matrix(vectors)
    record = pool_user("u", list(vectors), matrix)
    oracle = np.zeros(16)
    for vec in vectors.values():
        oracle += np.asarray(vec, dtype=np.float32)
    oracle /= len(vectors)
    assert np.max(np.abs(record.pooled - oracle)) < 1e-6


def test_unembedded_docs_are_skipped():
    matrix = make_matrix({"d1": [2.0, 0.0]})
    record = pool_user("u", ["d1", "missing"], matrix)
    assert record.n_u == 1
    assert record.doc_ids == ["d1"]


def test_zero_embedded_docs_raises_cold_start():
    matrix = make_matrix({"other": [1.0]})
    with pytest.raises(ColdStartRequired) as excinfo:
        pool_user("lonely", ["nope"], matrix)
    assert excinfo.value.user_id == "lonely"


def test_cold_start_record_uses_query_embedding():
    record = cold_start_record("u", np.array([0.0, 1.0]))
    assert record.cold_start
    assert record.n_u == 1
    assert np.allclose(record.pooled, [0.0, 1.0])
    assert record.bag.shape == (1, 2)


def test_cold_start_dim_mismatch():
    with pytest.raises(ValidationError, match="dim"):
        cold_start_record("u", np.array([1.0, 2.0]), dim=3)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.lists(st.floats(-100, 100, width=32), min_size=3, max_size=3),
        min_size=1,
        max_size=8,
    ),
    st.randoms(),
)
def test_pool_is_order_invariant(rows, rnd):
    ids = [f"d{i}" for i in range(len(rows))]
    matrix = make_matrix(dict(zip(ids, rows)))
    base = pool_user("u", ids, matrix).pooled
    shuffled = list(ids)
    rnd.shuffle(shuffled)
    assert np.max(np.abs(pool_user("u", shuffled, matrix).pooled - base)) < 1e-6


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.lists(st.floats(-10, 10, width=32), min_size=2, max_size=2),
        min_size=1,
        max_size=6,
    ),
    st.floats(0.1, 8.0),
)
def test_pool_scales_linearly(rows, c):
    ids = [f"d{i}" for i in range(len(rows))]
    base = pool_user("u", ids, make_matrix(dict(zip(ids, rows)))).pooled
    scaled_rows = [[v * c for v in row] for row in rows]
    scaled = pool_user("u", ids, make_matrix(dict(zip(ids, scaled_rows)))).pooled
    assert np.allclose(scaled, base * np.float32(c), rtol=1e-4, atol=1e-4)


def test_pooled_equals_bag_mean_invariant():
    rng = np.random.default_rng(9)
    vectors = {f"d{i}": rng.normal(size=8).tolist() for i in range(7)}
    record = pool_user("u", list(vectors), make_matrix(vectors))
    assert np.max(np.abs(record.pooled - record.bag.mean(axis=0))) < 1e-6


def test_build_user_records_and_matrix(toy_corpus):
    records = build_user_records(toy_corpus)
    assert set(records) == {"alice", "bob"}
    matrix = user_matrix(records)
    assert matrix.id_order == ["alice", "bob"]
    norms = np.linalg.norm(matrix.data, axis=1)
    assert np.allclose(norms, 1.0, atol=1e-6)


def test_unit_zero_vector_convention():
    z = unit(np.zeros(3, dtype=np.float32))
    assert np.allclose(z, 0.0)
