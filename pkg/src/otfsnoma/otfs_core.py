"""Delay-Doppler / time-frequency transforms and block-circulant channels.

Grids of size N x M are stored flat, row-major over (Doppler or time index,
delay or frequency index): entry ``(k, l)`` lives at ``k*M + l``.  All DFT
matrices are unitary, ``F_n[p, q] = exp(-2j*pi*p*q/n) / sqrt(n)``.

With ``T = F_N^H kron F_M`` (the ISFFT), a delay-Doppler channel matrix H
that is block-circulant with circulant blocks satisfies

    T^H H T = diag(d),   d[k*M + l] = sum_{n,m} a[n*M + m]
                                       * exp(+2j*pi*l*m/M) * exp(-2j*pi*k*n/N)

where ``a`` is the first column of H.  The equalizer ``T diag(d)^-1 T^H``
therefore inverts H exactly.  Note the ordering: ``T H T^H`` diagonalizes H
too, but with the conjugate phase convention, so it is not the one used here.
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, NearSingularEqualizer

DEG_TOL = 1e-12
MATERIALIZE_MAX = 256


def _check_grid(x, N, M):
    x = np.asarray(x, dtype=np.complex128)
    if N < 1 or M < 1:
        raise DimensionError(f"grid dimensions must be positive, got N={N}, M={M}")
    if x.ndim != 1 or x.size != N * M:
        raise DimensionError(f"expected a flat vector of length N*M={N * M}, got shape {x.shape}")
    return x


def dft_matrix(n):
    """Unitary DFT matrix of size n."""
    idx = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / n) / np.sqrt(n)


def isfft(x, N, M):
    """Map a delay-Doppler grid to the time-frequency plane, ``(F_N^H kron F_M) x``."""
    x = _check_grid(x, N, M).reshape(N, M)
    X = np.fft.ifft(np.fft.fft(x, axis=1, norm="ortho"), axis=0, norm="ortho")
    return X.reshape(-1)


def sfft(X, N, M):
    """Exact inverse of :func:`isfft`, ``(F_N kron F_M^H) X``."""
    X = _check_grid(X, N, M).reshape(N, M)
    x = np.fft.fft(np.fft.ifft(X, axis=1, norm="ortho"), axis=0, norm="ortho")
    return x.reshape(-1)


@dataclass(frozen=True)
class BlockCirculant:
    """NM x NM block-circulant matrix with circulant M x M blocks.

    ``first_column[n*M + m]`` is the entry in row ``n*M + m`` of column 0;
    every other entry follows from cyclic shifts along both indices.
    """

    first_column: np.ndarray
    N: int
    M: int

    def __post_init__(self):
        col = _check_grid(self.first_column, self.N, self.M)
        object.__setattr__(self, "first_column", col)

    @classmethod
    def from_taps(cls, taps, N, M):
        """Sparse constructor from ``(doppler_index, delay_index, gain)`` triples."""
        col = np.zeros(N * M, dtype=np.complex128)
        for k, l, gain in taps:
            col[(k % N) * M + (l % M)] += gain
        return cls(col, N, M)


def tf_eigenvalues(h):
    """Eigenvalues of a block-circulant channel in the TF domain.

    Returns a flat length-NM vector whose entry ``k*M + l`` is
    ``sum_{n,m} a[n*M+m] exp(+2j*pi*l*m/M) exp(-2j*pi*k*n/N)``.
    """
    a = h.first_column.reshape(h.N, h.M)
    d = np.fft.fft(np.fft.ifft(a, axis=1) * h.M, axis=0)
    return d.reshape(-1)


def materialize(h):
    """Dense form of a block-circulant matrix; intended for tests only."""
    N, M = h.N, h.M
    if N * M > MATERIALIZE_MAX:
        raise DimensionError(f"refusing to materialize a {N * M}x{N * M} matrix")
    a = h.first_column.reshape(N, M)
    n = np.arange(N)
    m = np.arange(M)
    dn = (n[:, None] - n[None, :]) % N
    dm = (m[:, None] - m[None, :]) % M
    # H[(n, m), (n', m')] = a[n - n', m - m']
    H = a[dn[:, None, :, None], dm[None, :, None, :]]
    return H.reshape(N * M, N * M)


def kron_transform(N, M):
    """Dense ``T = F_N^H kron F_M``, the matrix form of :func:`isfft`."""
    return np.kron(dft_matrix(N).conj().T, dft_matrix(M))


def apply_channel(h, x):
    """Noise-free delay-Doppler channel output ``H x`` computed via the TF domain."""
    d = tf_eigenvalues(h)
    return isfft(d * sfft(x, h.N, h.M), h.N, h.M)


def equalize(y, d_combined, N, M, deg_tol=DEG_TOL):
    """Frequency-domain linear equalizer ``T diag(d)^-1 T^H y``.

    ``d_combined`` is the combined eigenvalue vector, e.g. ``sum_v conj(w_v) d_v``.
    """
    d = _check_grid(d_combined, N, M)
    if np.any(np.abs(d) <= deg_tol):
        raise NearSingularEqualizer(
            f"min |d| = {np.abs(d).min():.3e} is at or below {deg_tol:.0e}"
        )
    return isfft(sfft(y, N, M) / d, N, M)
