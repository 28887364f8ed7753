from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from amgstokes import io
from amgstokes.errors import ParseError, UnsupportedField
from amgstokes.sparse import build_csr, to_block

BAD = Path(__file__).parent / "data" / "mtx_bad"

# line reported for each malformed corpus file; truncation is reported at the last line
BAD_MATRICES = {
    "index_out_of_range.mtx": 3,
    "complex_field.mtx": 1,
    "pattern_field.mtx": 1,
    "too_few_entries.mtx": 4,
    "too_many_entries.mtx": 4,
    "bad_number.mtx": 3,
    "symmetric_upper.mtx": 3,
    "no_banner.mtx": 1,
    "empty.mtx": 1,
    "missing_size.mtx": 2,
    "short_size.mtx": 2,
    "nan_value.mtx": 3,
    "zero_rows.mtx": 2,
}
BAD_VECTORS = {"vector_short.mtx": 3, "vector_empty.mtx": 2, "vector_two_columns.mtx": 2}


@pytest.mark.parametrize("name,line", sorted(BAD_MATRICES.items()))
def test_bad_matrix_files(name, line):
    with pytest.raises(ParseError) as exc:
        io.read_matrix(BAD / name)
    assert exc.value.line == line


@pytest.mark.parametrize("name,line", sorted(BAD_VECTORS.items()))
def test_bad_vector_files(name, line):
    with pytest.raises(ParseError) as exc:
        io.read_vector(BAD / name)
    assert exc.value.line == line


def test_unsupported_fields_have_their_own_type():
    for name in ("complex_field.mtx", "pattern_field.mtx"):
        with pytest.raises(UnsupportedField):
            io.read_matrix(BAD / name)


def test_corpus_is_complete():
    assert {p.name for p in BAD.iterdir()} == set(BAD_MATRICES) | set(BAD_VECTORS)


def test_symmetric_expansion(tmp_path):
    p = tmp_path / "s.mtx"
    p.write_text("%%MatrixMarket matrix coordinate real symmetric\n% comment\n3 3 4\n1 1 2\n2 1 -1\n2 2 2\n3 3 5\n")
    A = io.read_matrix(p)
    np.testing.assert_array_equal(A.todense(), [[2, -1, 0], [-1, 2, 0], [0, 0, 5]])


def test_integer_field_and_duplicates(tmp_path):
    p = tmp_path / "i.mtx"
    p.write_text("%%MatrixMarket matrix coordinate integer general\n2 2 3\n1 1 2\n1 1 3\n2 2 -4\n")
    A = io.read_matrix(p)
    assert A.dtype == np.float64
    np.testing.assert_array_equal(A.todense(), [[5, 0], [0, -4]])


def test_block_matrix_written_as_scalar(tmp_path):
    I = np.eye(4)
    A = to_block(build_csr(4, 4, [(i, i, 1.0) for i in range(4)]), 2)
    io.write_matrix(tmp_path / "b.mtx", A)
    np.testing.assert_array_equal(io.read_matrix(tmp_path / "b.mtx").todense(), I)


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_matrix_roundtrip_is_bit_exact(tmp_path, n, m, seed):
    rng = np.random.default_rng(seed)
    k = rng.integers(0, n * m + 1)
    rows, cols = rng.integers(0, n, k), rng.integers(0, m, k)
    vals = rng.standard_normal(k) * 10.0 ** rng.integers(-300, 300, k)
    A = build_csr(n, m, (rows, cols, vals))
    p = tmp_path / "a.mtx"
    io.write_matrix(p, A)
    B = io.read_matrix(p)
    assert B.shape == A.shape
    np.testing.assert_array_equal(B.ptr, A.ptr)
    np.testing.assert_array_equal(B.col, A.col)
    np.testing.assert_array_equal(B.val, A.val)


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=30))
def test_vector_roundtrip_is_bit_exact(tmp_path, values):
    p = tmp_path / "v.mtx"
    io.write_vector(p, values)
    np.testing.assert_array_equal(io.read_vector(p), np.array(values))


_tokens = st.sampled_from(["1", "2", "0", "-1", "1.5", "x", "1e400", "%", "nan", "3 3", "1 1 1", ""])


@settings(max_examples=200, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.sampled_from(["real general", "real symmetric", "integer general", "complex general", "real"]),
       st.lists(st.lists(_tokens, max_size=4).map(" ".join), max_size=6))
def test_fuzz_never_crashes(tmp_path, header, body):
    """Arbitrary bodies either parse into a valid matrix or raise ParseError."""
    p = tmp_path / "f.mtx"
    p.write_text("\n".join([f"%%MatrixMarket matrix coordinate {header}"] + body) + "\n")
    try:
        A = io.read_matrix(p)
    except ParseError:
        return
    assert A.nnz <= A.nrows * A.ncols


@settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.binary(max_size=200))
def test_fuzz_binary_input(tmp_path, data):
    p = tmp_path / "b.mtx"
    p.write_bytes(data)
    try:
        io.read_matrix(p)
    except ParseError:
        pass
