import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from gfsa_lab import numerics as nm

from .oracles import naive_matmul


def test_matmul_identity(rng):
    m = rng.standard_normal((3, 3))
    assert np.array_equal(nm.matmul(np.eye(3), m), m)


def test_matmul_permutation():
    out = nm.matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.array_equal(out, [[2.0, 1.0], [4.0, 3.0]])


def test_matmul_against_triple_loop(rng):
    a, b = rng.standard_normal((5, 7)), rng.standard_normal((7, 3))
    np.testing.assert_allclose(nm.matmul(a, b), naive_matmul(a, b), rtol=0, atol=1e-13)


def test_matmul_mismatch_names_shapes():
    with pytest.raises(nm.ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        nm.matmul(np.zeros((2, 3)), np.zeros((2, 3)))


def test_matmul_associativity(rng):
    for _ in range(50):
        a, b, c = (rng.standard_normal((4, 4)) for _ in range(3))
        left = nm.matmul(nm.matmul(a, b), c)
        right = nm.matmul(a, nm.matmul(b, c))
        assert np.abs(left - right).max() <= 1e-9 * max(1.0, np.abs(left).max())


def test_softmax_uniform_row():
    np.testing.assert_allclose(nm.softmax_rows(np.zeros((1, 3))), [[1 / 3] * 3], atol=1e-16)


def test_softmax_large_entries_do_not_overflow():
    out = nm.softmax_rows(np.array([[1000.0, 1000.0, -1000.0]]))
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [[0.5, 0.5, 0.0]], atol=1e-300)


def test_softmax_high_precision_oracle():
    # exp(k)/sum exp, k = 1..3, evaluated with mpmath at 50 digits
    expected = [0.0900305731703804579980221, 0.2447284710547976524729596, 0.6652409557748218895290183]
    np.testing.assert_allclose(nm.softmax_rows(np.array([[1.0, 2.0, 3.0]]))[0], expected,
                               rtol=0, atol=1e-14)


def test_softmax_rows_sum_to_one(rng):
    for _ in range(1000):
        m = rng.standard_normal((int(rng.integers(1, 8)), int(rng.integers(1, 12)))) * 30
        assert np.abs(nm.softmax_rows(m).sum(axis=1) - 1).max() <= 1e-12


def test_softmax_does_not_mutate():
    m = np.array([[1.0, 2.0]])
    nm.softmax_rows(m)
    assert np.array_equal(m, [[1.0, 2.0]])


# -- SVD ----------------------------------------------------------------------

def test_svd_identity(backend):
    np.testing.assert_array_equal(nm.svd(np.eye(4), backend=backend).sigma, np.ones(4))


def test_svd_diagonal_ascending(backend):
    r = nm.svd(np.diag([3.0, 1.0, 2.0]), backend=backend)
    np.testing.assert_allclose(r.sigma, [1.0, 2.0, 3.0], rtol=0, atol=1e-15)


def test_svd_against_gram_eigenvalues(rng, backend):
    m = rng.standard_normal((6, 6))
    oracle = np.sqrt(np.clip(np.linalg.eigvalsh(m.T @ m), 0, None))
    np.testing.assert_allclose(nm.svd(m, backend=backend).sigma, oracle, rtol=0, atol=1e-9)


@pytest.mark.parametrize("shape", [(7, 3), (3, 7), (1, 5), (5, 1), (1, 1)])
def test_svd_rectangular(rng, shape, backend):
    m = rng.standard_normal(shape)
    r = nm.svd(m, backend=backend)
    k = min(shape)
    assert r.u.shape == (shape[0], k) and r.vt.shape == (k, shape[1])
    np.testing.assert_allclose(r.reconstruct(), m, atol=1e-12)
    np.testing.assert_allclose(r.u.T @ r.u, np.eye(k), atol=1e-12)
    np.testing.assert_allclose(r.vt @ r.vt.T, np.eye(k), atol=1e-12)


def test_svd_rank_deficient_completes_basis(backend):
    r = nm.svd(np.full((4, 4), 0.25), backend=backend)
    np.testing.assert_allclose(r.sigma, [0, 0, 0, 1], atol=1e-15)
    np.testing.assert_allclose(r.u.T @ r.u, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(r.reconstruct(), np.full((4, 4), 0.25), atol=1e-15)


def test_svd_zero_matrix(backend):
    r = nm.svd(np.zeros((3, 2)), backend=backend)
    assert np.array_equal(r.sigma, [0.0, 0.0])
    assert np.array_equal(r.reconstruct(), np.zeros((3, 2)))


def test_svd_is_deterministic(rng, backend):
    m = rng.standard_normal((9, 9))
    a, b = nm.svd(m, backend=backend), nm.svd(m, backend=backend)
    assert np.array_equal(a.sigma, b.sigma) and np.array_equal(a.u, b.u)


def test_svd_backends_agree(rng):
    if len(nm.available_backends()) < 2:
        pytest.skip("compiled kernel not built")
    m = rng.standard_normal((20, 13))
    a, b = nm.svd(m, backend="cython"), nm.svd(m, backend="python")
    np.testing.assert_allclose(a.sigma, b.sigma, atol=1e-12)


def test_svd_non_convergence_reports_sweeps(monkeypatch, rng):
    monkeypatch.setattr(nm, "SVD_MAX_SWEEPS", 1)
    with pytest.raises(nm.SvdConvergenceError) as info:
        nm.svd(rng.standard_normal((8, 8)))
    assert info.value.sweeps == 1


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 64).flatmap(
    lambda r: st.integers(2, 64).flatmap(
        lambda c: arrays(np.float64, (r, c), elements=st.floats(-1e3, 1e3, allow_subnormal=False)))))
def test_svd_reconstruction_property(m):
    r = nm.svd(m)
    assert np.all(r.sigma >= 0) and np.all(np.diff(r.sigma) >= 0)
    err = np.abs(r.reconstruct() - m).max()
    assert err <= 1e-8 * max(1.0, np.abs(m).max())


# -- RNG and text format -----------------------------------------------------------

def test_rng_same_seed_same_stream():
    assert np.array_equal(nm.Rng(7).uniform((5,)), nm.Rng(7).uniform((5,)))
    assert not np.array_equal(nm.Rng(7).uniform((5,)), nm.Rng(8).uniform((5,)))


def test_rng_golden_prefix():
    # pins the PCG64 stream so golden files never drift silently
    np.testing.assert_array_equal(nm.Rng(0).uniform((3,)),
                                  [0.6369616873214543, 0.2697867137638703, 0.04097352393619469])


def test_rng_rejects_out_of_range_seed():
    with pytest.raises(ValueError):
        nm.Rng(-1)
    with pytest.raises(ValueError):
        nm.Rng(2**64)


def test_row_stochastic_rows_sum_to_one():
    a = nm.Rng(3).row_stochastic(6)
    np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-15)


def test_matrix_text_round_trip(rng, tmp_path):
    m = rng.standard_normal((4, 3)) * 10.0 ** rng.integers(-20, 20, (4, 3))
    path = tmp_path / "m.mat"
    nm.write_matrix(path, m)
    assert np.array_equal(nm.read_matrix(path), m)
    assert path.read_text().splitlines()[0] == "4 3"


@pytest.mark.parametrize("text, line", [
    ("", 1),
    ("2 x\n1 2\n", 1),
    ("2 2\n1 2\n3\n", 3),
    ("2 2\n1 2\n3 abc\n", 3),
    ("2 2\n1 2\n", 2),
    ("1 2\nnan 1\n", 2),
])
def test_matrix_parse_errors_carry_line(text, line):
    with pytest.raises(nm.MatrixFormatError) as info:
        nm.parse_matrix(text)
    assert info.value.line == line


def test_read_matrix_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        nm.read_matrix(tmp_path / "nope.mat")


def test_format_csv_uses_17_digits():
    text = nm.format_csv(["a", "b"], [(1, 0.1)])
    assert text == "a,b\n1,0.10000000000000001\n"
