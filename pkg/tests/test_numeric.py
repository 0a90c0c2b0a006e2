import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cka_distill.numeric import Rng, as_tensor, finite_diff_grad, frobenius_norm, matmul, max_relative_error


def triple_loop(a, b):
    n, k = a.shape
    m = b.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s = s + float(a[i, t]) * float(b[t, j])
            out[i, j] = s
    return out


@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_matmul_matches_triple_loop_bitwise(n, k, m, seed):
    g = np.random.default_rng(seed)
    a = g.standard_normal((n, k)) * 10.0 ** g.integers(-5, 5, (n, k))
    b = g.standard_normal((k, m))
    assert np.array_equal(matmul(a, b), triple_loop(a, b))


def test_matmul_shape_mismatch():
    with pytest.raises(ValueError, match="shape mismatch"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_as_tensor_validation():
    assert as_tensor([1, 2]).dtype == np.float64
    with pytest.raises(ValueError, match="NaN or Inf"):
        as_tensor([1.0, np.nan])
    with pytest.raises(ValueError, match="1 to 3 dims"):
        as_tensor(np.zeros((1, 1, 1, 1)))
    with pytest.raises(ValueError, match="empty"):
        as_tensor(np.zeros((0, 3)))


def test_frobenius_norm():
    assert frobenius_norm([[3.0, 0.0], [0.0, 4.0]]) == 5.0


def test_finite_diff_on_cubic():
    x = np.array([0.5, -1.5, 2.0])
    num = finite_diff_grad(lambda v: float(np.sum(v**3)), x)
    np.testing.assert_allclose(num, 3 * x**2, rtol=1e-8)


def test_finite_diff_reports_non_finite_index():
    with np.errstate(invalid="ignore", divide="ignore"), pytest.raises(FloatingPointError, match=r"\(1,\)"):
        finite_diff_grad(lambda v: float(np.sqrt(v).sum()), np.array([1.0, 0.0]))


def test_max_relative_error_floor():
    assert max_relative_error([1e-9], [0.0]) == pytest.approx(1e-3)
    assert max_relative_error([2.0], [1.0]) == 0.5


def test_rng_determinism_and_spawn():
    a, b = Rng(7), Rng(7)
    assert np.array_equal(a.normal(5), b.normal(5))
    assert np.array_equal(Rng(7).spawn(3).uniform(4), Rng(7).spawn(3).uniform(4))
    assert not np.array_equal(Rng(7).spawn(3).uniform(4), Rng(7).spawn(4).uniform(4))
    with pytest.raises(ValueError):
        Rng(-1)
