"""Hot per-iteration kernels with a numba path and a pure-numpy path.

The SCA loop and the feasibility checks evaluate the same few quantities for
every channel vector at every iterate: the effective gain ``w^H h``, the
inverse received power and its gradient, and the worst-case margin
``|w^H g| - sigma ||w||``.  Both implementations live here; the public
names at the bottom are bound once at import time.

Set ``OTFSNOMA_NUMBA=0`` in the environment to force the numpy path (the
numba path is used by default when numba imports).
"""
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


def _env_wants_numba():
    flag = os.environ.get("OTFSNOMA_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


USE_NUMBA = numba is not None and _env_wants_numba()


# --------------------------------------------------------------------------
# numpy implementations
# --------------------------------------------------------------------------
def inv_power_terms_numpy(w, H):
    """Inverse powers ``1/|w^H h_k|^2`` and their gradients for rows of H.

    Parameters
    ----------
    w : (V,) complex ndarray
    H : (K, V) complex ndarray
        One channel vector per row.

    Returns
    -------
    f : (K,) float ndarray
        ``inf`` where the gain is exactly zero.
    grad : (K, V) complex ndarray
        ``-2 h h^H w / |w^H h|^4``; zero rows where ``f`` is infinite.
    gain : (K,) complex ndarray
        ``w^H h_k``.
    """
    gain = H @ np.conj(w)
    p = np.abs(gain) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        f = 1.0 / p
        grad = -2.0 * H * (np.conj(gain) / p**2)[:, None]
    bad = p == 0.0
    if bad.any():
        f[bad] = np.inf
        grad[bad] = 0.0
    return f, grad, gain


def robust_terms_numpy(w, G, sigma):
    """Worst-case margins, inverse worst-case powers and their gradients.

    The margin of row k is ``|w^H g_k| - sigma ||w||``; the inverse power is
    ``margin^-2`` when the margin is positive and ``inf`` otherwise.

    Returns
    -------
    f : (K,) float ndarray
    grad : (K, V) complex ndarray
        Zero rows where the margin is not positive.
    margin : (K,) float ndarray
    """
    gain = G @ np.conj(w)
    a = np.abs(gain)
    nw = np.sqrt(np.real(np.vdot(w, w)))
    margin = a - sigma * nw
    ok = margin > 0.0
    f = np.full(a.shape, np.inf)
    grad = np.zeros(G.shape, dtype=np.complex128)
    if ok.any():
        f[ok] = 1.0 / margin[ok] ** 2
        # G_k w / a_k == g_k * conj(gain_k) / a_k
        direction = G[ok] * (np.conj(gain[ok]) / a[ok])[:, None]
        direction -= (sigma / nw) * w[None, :]
        grad[ok] = -2.0 * direction / (margin[ok] ** 3)[:, None]
    return f, grad, margin


def sampled_min_power_numpy(w, g_hat, E):
    """Smallest ``|w^H (g_hat + e)|^2`` over the rows ``e`` of E.

    Returns the minimum and the index of the row attaining it.
    """
    vals = np.abs(np.vdot(w, g_hat) + E @ np.conj(w)) ** 2
    idx = int(np.argmin(vals))
    return float(vals[idx]), idx


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------
if numba is not None:

    @numba.njit(cache=True)
    def inv_power_terms_numba(w, H):
        K, V = H.shape
        f = np.empty(K)
        grad = np.zeros((K, V), dtype=np.complex128)
        gain = np.empty(K, dtype=np.complex128)
        for k in range(K):
            s = 0j
            for v in range(V):
                s += H[k, v] * np.conj(w[v])
            gain[k] = s
            p = s.real * s.real + s.imag * s.imag
            if p == 0.0:
                f[k] = np.inf
                continue
            f[k] = 1.0 / p
            c = -2.0 * np.conj(s) / (p * p)
            for v in range(V):
                grad[k, v] = c * H[k, v]
        return f, grad, gain

    @numba.njit(cache=True)
    def robust_terms_numba(w, G, sigma):
        K, V = G.shape
        nw2 = 0.0
        for v in range(V):
            nw2 += w[v].real * w[v].real + w[v].imag * w[v].imag
        nw = np.sqrt(nw2)
        f = np.empty(K)
        grad = np.zeros((K, V), dtype=np.complex128)
        margin = np.empty(K)
        for k in range(K):
            s = 0j
            for v in range(V):
                s += G[k, v] * np.conj(w[v])
            a = np.abs(s)
            m = a - sigma * nw
            margin[k] = m
            if m <= 0.0:
                f[k] = np.inf
                continue
            f[k] = 1.0 / (m * m)
            c = -2.0 / (m * m * m)
            cs = np.conj(s) / a
            for v in range(V):
                grad[k, v] = c * (G[k, v] * cs - (sigma / nw) * w[v])
        return f, grad, margin

    @numba.njit(cache=True)
    def sampled_min_power_numba(w, g_hat, E):
        n, V = E.shape
        a = 0j
        for v in range(V):
            a += np.conj(w[v]) * g_hat[v]
        best = np.inf
        idx = 0
        for i in range(n):
            s = a
            for v in range(V):
                s += np.conj(w[v]) * E[i, v]
            p = s.real * s.real + s.imag * s.imag
            if p < best:
                best = p
                idx = i
        return best, idx


def _as_c(x):
    return np.ascontiguousarray(x, dtype=np.complex128)


if USE_NUMBA:

    def inv_power_terms(w, H):
        return inv_power_terms_numba(_as_c(w), _as_c(H))

    def robust_terms(w, G, sigma):
        return robust_terms_numba(_as_c(w), _as_c(G), float(sigma))

    def sampled_min_power(w, g_hat, E):
        best, idx = sampled_min_power_numba(_as_c(w), _as_c(g_hat), _as_c(E))
        return float(best), int(idx)

else:
    inv_power_terms = inv_power_terms_numpy
    robust_terms = robust_terms_numpy
    sampled_min_power = sampled_min_power_numpy
