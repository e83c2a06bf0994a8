import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from otfsnoma.exceptions import DimensionError, NearSingularEqualizer
from otfsnoma.otfs_core import (
    BlockCirculant,
    apply_channel,
    dft_matrix,
    equalize,
    isfft,
    kron_transform,
    materialize,
    sfft,
    tf_eigenvalues,
)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def eigenvalues_by_definition(a, N, M):
    """Direct double sum over the first column (no FFT)."""
    d = np.zeros(N * M, dtype=complex)
    for k in range(N):
        for l in range(M):
            for n in range(N):
                for m in range(M):
                    d[k * M + l] += (a[n * M + m] * np.exp(2j * np.pi * l * m / M)
                                     * np.exp(-2j * np.pi * k * n / N))
    return d


class TestTransforms:
    def test_zeros_map_to_zeros(self):
        assert np.all(isfft(np.zeros(4), 2, 2) == 0)
        assert np.all(sfft(np.zeros(4), 2, 2) == 0)

    def test_isfft_of_unit_impulse(self):
        x = np.zeros(4, dtype=complex)
        x[0] = 1.0
        # oracle: explicit 4x4 Kronecker product of unitary DFT matrices
        T = np.kron(dft_matrix(2).conj().T, dft_matrix(2))
        np.testing.assert_allclose(isfft(x, 2, 2), T @ x, atol=1e-15)
        np.testing.assert_allclose(np.abs(isfft(x, 2, 2)), 0.5, atol=1e-15)

    def test_isfft_matches_dense_operator(self):
        rng = np.random.default_rng(3)
        for N, M in [(2, 3), (4, 4), (8, 2)]:
            x = crandn(rng, N * M)
            np.testing.assert_allclose(isfft(x, N, M), kron_transform(N, M) @ x, atol=1e-12)

    def test_round_trips(self):
        rng = np.random.default_rng(0)
        x = crandn(rng, 64)
        np.testing.assert_allclose(sfft(isfft(x, 8, 8), 8, 8), x, atol=1e-12)
        X = crandn(rng, 16)
        np.testing.assert_allclose(isfft(sfft(X, 4, 4), 4, 4), X, atol=1e-12)

    def test_sfft_of_constant_grid(self):
        c = 0.3 - 1.2j
        N, M = 4, 2
        x = sfft(np.full(N * M, c), N, M)
        expected = np.zeros(N * M, dtype=complex)
        expected[0] = c * np.sqrt(N * M)
        np.testing.assert_allclose(x, expected, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            isfft(np.zeros(5), 2, 2)
        with pytest.raises(DimensionError):
            sfft(np.zeros((2, 2)), 2, 2)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
    def test_unitary(self, N, M, seed):
        x = crandn(np.random.default_rng(seed), N * M)
        assert abs(np.linalg.norm(isfft(x, N, M)) - np.linalg.norm(x)) <= 1e-12 * np.linalg.norm(x)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.complex_numbers(max_magnitude=10, allow_nan=False))
    def test_linearity(self, seed, alpha):
        rng = np.random.default_rng(seed)
        x, y = crandn(rng, 12), crandn(rng, 12)
        lhs = isfft(alpha * x + y, 3, 4)
        np.testing.assert_allclose(lhs, alpha * isfft(x, 3, 4) + isfft(y, 3, 4), atol=1e-9)


class TestBlockCirculant:
    def test_materialize_circulant(self):
        a, b = 1.0 + 2j, -0.5j
        np.testing.assert_array_equal(materialize(BlockCirculant(np.array([a, b]), 1, 2)),
                                      [[a, b], [b, a]])
        np.testing.assert_array_equal(materialize(BlockCirculant(np.array([a, b]), 2, 1)),
                                      [[a, b], [b, a]])

    def test_materialize_first_column_and_structure(self):
        rng = np.random.default_rng(1)
        N, M = 3, 4
        a = crandn(rng, N * M)
        H = materialize(BlockCirculant(a, N, M))
        np.testing.assert_array_equal(H[:, 0], a)
        blocks = H.reshape(N, M, N, M).transpose(0, 2, 1, 3)
        for n in range(N):
            for n2 in range(N):
                np.testing.assert_array_equal(blocks[n, n2], blocks[(n - n2) % N, 0])
                B = blocks[n, n2]
                for m in range(M):
                    np.testing.assert_array_equal(np.roll(B[:, 0], m), B[:, m])

    def test_size_guard(self):
        with pytest.raises(DimensionError):
            materialize(BlockCirculant(np.zeros(17 * 16), 17, 16))

    def test_single_dc_tap(self):
        d = tf_eigenvalues(BlockCirculant.from_taps([(0, 0, 1.0)], 4, 4))
        np.testing.assert_allclose(d, np.ones(16), atol=1e-15)

    def test_two_taps(self):
        N, M = 4, 8
        d = tf_eigenvalues(BlockCirculant.from_taps([(0, 0, 1.0), (1, 1, 1.0)], N, M)).reshape(N, M)
        k, l = np.meshgrid(np.arange(N), np.arange(M), indexing="ij")
        np.testing.assert_allclose(d, 1 + np.exp(2j * np.pi * l / M) * np.exp(-2j * np.pi * k / N),
                                   atol=1e-13)
        assert d[0, 0] == pytest.approx(2.0)

    def test_eigenvalues_match_definition(self):
        rng = np.random.default_rng(5)
        a = crandn(rng, 12)
        np.testing.assert_allclose(tf_eigenvalues(BlockCirculant(a, 3, 4)),
                                   eigenvalues_by_definition(a, 3, 4), atol=1e-12)

    def test_eigenvalues_match_dense_diagonalization(self):
        rng = np.random.default_rng(7)
        h = BlockCirculant(crandn(rng, 16), 4, 4)
        T = kron_transform(4, 4)
        D = T.conj().T @ materialize(h) @ T
        np.testing.assert_allclose(np.diag(D), tf_eigenvalues(h), atol=1e-12)
        assert np.linalg.norm(D - np.diag(np.diag(D))) < 1e-12

    def test_other_ordering_gives_conjugate_convention(self):
        # T H T^H is also diagonal but carries exp(-j l m / M) exp(+j k n / N)
        rng = np.random.default_rng(8)
        N, M = 2, 2
        a = crandn(rng, N * M)
        h = BlockCirculant(a, N, M)
        T = kron_transform(N, M)
        D = T @ materialize(h) @ T.conj().T
        assert np.linalg.norm(D - np.diag(np.diag(D))) < 1e-12
        flipped = eigenvalues_by_definition(np.conj(a), N, M).conj()
        np.testing.assert_allclose(np.diag(D), flipped, atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.sampled_from([1, 2, 4, 8]), st.sampled_from([1, 2, 4, 8]), st.integers(0, 2**32 - 1))
    def test_diagonalization_property(self, N, M, seed):
        h = BlockCirculant(crandn(np.random.default_rng(seed), N * M), N, M)
        T = kron_transform(N, M)
        H = materialize(h)
        D = T.conj().T @ H @ T
        err = np.linalg.norm(D - np.diag(tf_eigenvalues(h)))
        assert err <= 1e-9 * np.linalg.norm(H)


class TestEqualizer:
    def test_all_ones_is_identity(self):
        rng = np.random.default_rng(0)
        y = crandn(rng, 8)
        np.testing.assert_allclose(equalize(y, np.ones(8), 2, 4), y, atol=1e-13)

    def test_singular_raises(self):
        d = np.ones(4, dtype=complex)
        d[2] = 0.0
        with pytest.raises(NearSingularEqualizer):
            equalize(np.ones(4), d, 2, 2)

    def test_noise_free_model_recovers_superposition(self):
        # dense end-to-end simulation: y = H (x0 + sum_q x_q), x_q = SFFT of user q's TF grid
        rng = np.random.default_rng(11)
        N, M = 4, 4
        x0 = crandn(rng, N * M)
        interference = np.zeros(N * M, dtype=complex)
        for q in range(1, M + 1):
            X = np.zeros((N, M), dtype=complex)
            X[:, q - 1] = crandn(rng, N)
            interference += kron_transform(N, M).conj().T @ X.reshape(-1)
        h = BlockCirculant.from_taps([(0, 0, 0.8 + 0.1j), (1, 1, -0.4j)], N, M)
        y = materialize(h) @ (x0 + interference)
        out = equalize(y, tf_eigenvalues(h), N, M)
        target = x0 + interference
        assert np.linalg.norm(out - target) <= 1e-9 * np.linalg.norm(target)

    def test_apply_channel_matches_dense(self):
        rng = np.random.default_rng(2)
        h = BlockCirculant(crandn(rng, 16), 4, 4)
        x = crandn(rng, 16)
        np.testing.assert_allclose(apply_channel(h, x), materialize(h) @ x, atol=1e-12)
