"""SINR/SNR expressions, rate thresholds and the minimum NOMA rate.

All effective gains are ``w^H d`` (conjugated weights), matching the
vector form used by the optimization problems.  Rates are in bits per
channel use (log base 2).
"""
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InfeasibleTarget

W_NORM_TOL = 1e-9


@dataclass(frozen=True)
class ProblemParams:
    """Scalars of the beamforming problem.

    ``rho`` is the linear transmit SNR; ``R0`` the high-mobility user's
    target rate in BPCU; ``sigma`` the CSI-error radius.
    """

    M: int
    N: int
    V: int
    rho: float
    R0: float = 0.5
    sigma: float = 0.0
    eta: float = field(init=False)
    eps: float = field(init=False)
    eps1: float = field(init=False)

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        eta, eps, eps1 = _thresholds(self.rho, self.R0, self.N, self.M)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "eps1", eps1)

    @classmethod
    def from_db(cls, M, N, V, rho_db, R0=0.5, sigma=0.0):
        return cls(M=M, N=N, V=V, rho=db_to_linear(rho_db), R0=R0, sigma=sigma)


def db_to_linear(x_db):
    return 10.0 ** (x_db / 10.0)


def _thresholds(rho, R0, N, M):
    if not 0 < R0 < 1:
        # SINR_I = rho / (rho + positive) < 1, so log2(1 + SINR_I) < 1 always.
        raise InfeasibleTarget(f"target rate R0={R0} must lie in (0, 1) BPCU")
    eta = 2.0**R0 - 1.0
    eps1 = rho * M * (1.0 / eta - 1.0)
    return eta, N * eps1, eps1


def thresholds(p):
    """``(eta, eps, eps1)`` for the given parameters."""
    return _thresholds(p.rho, p.R0, p.N, p.M)


def check_beamformer(w):
    w = np.asarray(w, dtype=np.complex128).reshape(-1)
    if np.real(np.vdot(w, w)) > 1.0 + W_NORM_TOL:
        raise ValueError(f"beamformer power {np.real(np.vdot(w, w)):.6g} exceeds 1")
    return w


def user_eigenvalue_grid(ch, user):
    """(N, M, V) grid of per-antenna TF eigenvalues for one user.

    User 0 returns the true g; NOMA users repeat h_{i,l} along Doppler.
    """
    if user == 0:
        return ch.g
    if not 1 <= user <= ch.M:
        raise IndexError(f"user index {user} out of range 0..{ch.M}")
    return np.broadcast_to(ch.h[user - 1][None, :, :], ch.g.shape)


def inverse_gain_sum(w, d):
    """``sum |w^H d_j|^-2`` over all leading positions of d (last axis = antenna)."""
    gain = np.asarray(d).reshape(-1, np.shape(d)[-1]) @ np.conj(w)
    p = np.abs(gain) ** 2
    if np.any(p == 0.0):
        return np.inf
    return float(np.sum(1.0 / p))


def sinr_high_mobility(w, ch, p, user=0):
    """Post-equalization SINR of the high-mobility user's symbols at ``user``.

    Equals ``rho / (rho + (1/NM) sum_{k,l} |w^H d_{k,l}|^-2)``; 0 when any
    combined eigenvalue vanishes (detection impossible).
    """
    w = check_beamformer(w)
    d = user_eigenvalue_grid(ch, user)
    s = inverse_gain_sum(w, d)
    if not np.isfinite(s):
        return 0.0
    NM = d.shape[0] * d.shape[1]
    return p.rho / (p.rho + s / NM)


def snr_noma(w, ch, p, user):
    """SNR of NOMA user ``user`` after SIC, ``rho |w^H h_{i,i-1}|^2``."""
    if not 1 <= user <= ch.M:
        raise IndexError(f"NOMA user index {user} out of range 1..{ch.M}")
    w = check_beamformer(w)
    return p.rho * float(np.abs(np.vdot(w, ch.h[user - 1, user - 1])) ** 2)


def noma_rates(w, ch, p):
    """Per-user rates ``log2(1 + SNR_i)`` for users 1..M."""
    w = check_beamformer(w)
    diag = ch.h[np.arange(ch.M), np.arange(ch.M)]  # h_{i, i-1}
    snr = p.rho * np.abs(diag @ np.conj(w)) ** 2
    return np.log2(1.0 + snr)


def min_rate(w, ch, p, users=None):
    """Minimum NOMA rate on the true channels and the per-user rates.

    Returns ``(0.0, rates)`` when the SIC constraints fail on the true
    channels, because the NOMA rates are then not achievable.  ``users``
    restricts the minimum to a subset (1-based), e.g. ``[1]`` for the
    single-user case.
    """
    from .robust import check_sic_constraints

    w = check_beamformer(w)
    rates = noma_rates(w, ch, p)
    report = check_sic_constraints(w, ch, p, mode="true_channel")
    if not report.feasible:
        return 0.0, rates
    idx = np.arange(ch.M) if users is None else np.asarray(users) - 1
    return float(np.min(rates[idx])), rates
