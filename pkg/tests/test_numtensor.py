import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fusionbench import _kernels
from fusionbench.errors import DimensionError, ParameterError
from fusionbench.numtensor import (
    Rng,
    circular_convolve,
    hadamard,
    matvec,
    resolve_mode,
    rng_gaussian,
    rng_uniform_index,
    rng_uniform_sign,
    tanh_map,
)

from conftest import rel

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_matvec_examples():
    np.testing.assert_array_equal(matvec(np.eye(2), [3, -1]), [3, -1])
    np.testing.assert_array_equal(matvec([[1, 2], [0, 1]], [1, 1], [10, 10]), [13, 11])
    np.testing.assert_array_equal(matvec(np.zeros((1, 3)), [5, 6, 7]), [0])


def test_matvec_shape_errors_name_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2,\)"):
        matvec(np.zeros((2, 3)), np.zeros(2))
    with pytest.raises(DimensionError):
        matvec(np.zeros((2, 3)), np.zeros(3), np.zeros(3))


@settings(max_examples=50, deadline=None)
@given(
    arrays(np.float64, (4, 5), elements=finite),
    arrays(np.float64, 5, elements=finite),
    arrays(np.float64, 5, elements=finite),
    finite,
    finite,
)
def test_matvec_linear(W, x, y, alpha, beta):
    lhs = matvec(W, alpha * x + beta * y)
    rhs = alpha * matvec(W, x) + beta * matvec(W, y)
    scale = np.abs(W) @ (np.abs(alpha * x) + np.abs(beta * y))
    assert np.all(np.abs(lhs - rhs) <= 1e-12 * np.maximum(scale, 1e-300) + 1e-300)


def test_hadamard_examples():
    np.testing.assert_array_equal(hadamard([1, 1, 1], [4, 5, 6]), [4, 5, 6])
    np.testing.assert_array_equal(hadamard([0, 0], [9, -9]), [0, 0])
    np.testing.assert_array_equal(hadamard([2, -3], [-1, 4]), [-2, -12])
    with pytest.raises(DimensionError):
        hadamard([1, 2], [1, 2, 3])


@given(arrays(np.float64, 6, elements=finite), arrays(np.float64, 6, elements=finite))
def test_hadamard_commutative_bitwise(a, b):
    assert np.array_equal(hadamard(a, b), hadamard(b, a))


@given(st.lists(st.integers(-1000, 1000), min_size=3, max_size=3))
def test_hadamard_associative_on_exact_products(vals):
    # integer-valued doubles: products are exact, so regrouping is bit-identical
    a, b, c = (np.full(4, float(v)) for v in vals)
    assert np.array_equal(hadamard(hadamard(a, b), c), hadamard(a, hadamard(b, c)))


def test_tanh_examples():
    np.testing.assert_array_equal(tanh_map([0, 0, 0]), [0, 0, 0])
    assert abs(tanh_map([1e9])[0] - 1.0) < 1e-12
    mpmath.mp.dps = 50
    ref = float(mpmath.tanh(mpmath.mpf("0.5")))
    assert abs(tanh_map([0.5])[0] - ref) <= 1e-16


def test_tanh_range():
    x = Rng(3).gaussian(1000, 5.0)
    y = tanh_map(x)
    assert np.all(np.abs(y) <= 1.0)


def direct_oracle(a, b):
    d = len(a)
    return np.array([sum(a[j] * b[(k - j) % d] for j in range(d)) for k in range(d)])


@pytest.mark.parametrize("mode", ["direct", "frequency"])
def test_convolve_examples(mode, backend):
    np.testing.assert_allclose(circular_convolve([1, 0, 0], [7, 8, 9], mode, backend), [7, 8, 9], atol=1e-12)
    np.testing.assert_allclose(circular_convolve([1, 2], [3, 4], mode, backend), [11, 10], atol=1e-12)


def test_convolve_commutative(backend):
    rng = Rng(8)
    for _ in range(20):
        a, b = rng.gaussian(8), rng.gaussian(8)
        for mode in ("direct", "frequency"):
            assert rel(circular_convolve(a, b, mode, backend), circular_convolve(b, a, mode, backend)) < 1e-12


def test_convolve_direct_vs_frequency_200_instances(backend):
    rng = Rng(2024)
    worst = 0.0
    for _ in range(200):
        d = int(rng.uniform_index(1, 64)[0])
        a, b = rng.gaussian(d), rng.gaussian(d)
        direct = circular_convolve(a, b, "direct", backend)
        freq = circular_convolve(a, b, "frequency", backend)
        worst = max(worst, rel(direct, freq), rel(direct, direct_oracle(a, b)))
    assert worst < 1e-9


def test_convolve_batched_matches_rows():
    rng = Rng(5)
    a = rng.gaussian(30).reshape(3, 10)
    b = rng.gaussian(30).reshape(3, 10)
    out = circular_convolve(a, b)
    for r in range(3):
        np.testing.assert_allclose(out[r], direct_oracle(a[r], b[r]), rtol=1e-12, atol=1e-12)


def test_convolve_length_mismatch():
    with pytest.raises(DimensionError):
        circular_convolve([1, 2], [1, 2, 3])
    with pytest.raises(ParameterError):
        resolve_mode("fast", 4)


def test_auto_mode_threshold():
    assert resolve_mode("auto", 63) == "direct"
    assert resolve_mode("auto", 64) == "frequency"


def _splitmix_reference(state, count):
    # textbook SplitMix64 on Python ints
    out = []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & (2**64 - 1)
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & (2**64 - 1)
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & (2**64 - 1)
        out.append(z ^ (z >> 31))
    return out


def test_splitmix_known_answer(backend):
    words = _kernels.get_backend(backend).splitmix_block(0, 0, 4)
    assert [int(w) for w in words] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F, 0xF88BB8A8724C81EC]


def test_rng_stream_is_counter_mode_splitmix():
    rng = Rng(99)
    first = rng.words(5)
    rest = rng.words(3)
    expected = _splitmix_reference(rng.key, 8)
    assert [int(w) for w in np.concatenate([first, rest])] == expected


def test_rng_backends_bit_identical():
    if _kernels.compiled is None:
        pytest.skip("compiled kernels not built")
    for key, start, n in [(0, 0, 10), (2**64 - 1, 2**63, 1000), (12345, 7, 1)]:
        assert np.array_equal(_kernels.compiled.splitmix_block(key, start, n), _kernels.python.splitmix_block(key, start, n))


def test_rng_determinism():
    a, b = Rng(42), Rng(42)
    assert np.array_equal(a.uniform_sign(100), b.uniform_sign(100))
    assert np.array_equal(a.uniform_index(100, 7), b.uniform_index(100, 7))
    assert np.array_equal(a.gaussian(100, 2.0), b.gaussian(100, 2.0))
    assert not np.array_equal(Rng(1).words(4), Rng(2).words(4))


def test_rng_degenerate_bound():
    assert np.all(rng_uniform_index(Rng(0), 50, 1) == 1)


def test_rng_sign_mean():
    signs = rng_uniform_sign(Rng(7), 10**5)
    assert set(np.unique(signs)) == {-1, 1}
    assert abs(signs.mean()) < 0.02


def test_rng_index_histogram_uniform():
    d = 10
    idx = Rng(11).uniform_index(10**5, d)
    assert idx.min() >= 1 and idx.max() <= d
    counts = np.bincount(idx, minlength=d + 1)[1:]
    expected = 10**5 / d
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert chi2 < 27.9  # chi-square(9) 0.999 quantile


def test_rng_gaussian_moments():
    x = rng_gaussian(Rng(5), 10**5, 3.0)
    assert abs(x.mean()) < 0.05
    assert abs(x.std() - 3.0) < 0.05


def test_rng_rejection_handles_large_bounds():
    d = 2**63 + 1  # rejection probability near one half
    idx = Rng(3).uniform_index(1000, d)
    assert idx.min() >= 1 and idx.max() <= d


@pytest.mark.parametrize("call", [
    lambda r: r.uniform_sign(0),
    lambda r: r.uniform_index(5, 0),
    lambda r: r.gaussian(5, 0.0),
    lambda r: r.gaussian(0, 1.0),
])
def test_rng_invalid_bounds(call):
    with pytest.raises(ParameterError):
        call(Rng(0))


def test_rng_seed_range():
    with pytest.raises(ParameterError):
        Rng(-1)
    with pytest.raises(ParameterError):
        Rng(2**64)
