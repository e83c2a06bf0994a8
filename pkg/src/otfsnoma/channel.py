"""Sparse delay-Doppler channels, effective beamforming vectors and CSI errors.

User 0 is the high-mobility user; users 1..M are the low-mobility NOMA users.
For each (user, antenna) pair the delay-Doppler channel is a handful of
integer taps ``(doppler_index, delay_index, gain)``.  The beamforming
problems only ever see the TF eigenvalues of those channels:

* ``g[k, l, v]`` -- eigenvalue ``(k, l)`` of user 0 at antenna v,
* ``h[i-1, l, v]`` -- eigenvalue ``(0, l)`` of NOMA user i at antenna v.

NOMA users have no Doppler, so their eigenvalues do not depend on k.
"""
import json
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import DimensionError, InvalidTapIndex
from .otfs_core import BlockCirculant, tf_eigenvalues


@dataclass(frozen=True)
class ChannelConfig:
    N: int = 8
    M: int = 8
    V: int = 4
    u0_taps: tuple = ((0, 0), (1, 1))
    noma_taps: tuple = ((0, 0), (0, 1))
    # Each tap gain is CN(0, tap_variance); two taps give unit total power.
    tap_variance: float = 0.5
    # Documentation only; neither enters any computation.
    subcarrier_spacing_hz: float = 2000.0
    carrier_frequency_hz: float = 4e9

    def __post_init__(self):
        object.__setattr__(self, "u0_taps", tuple(tuple(int(i) for i in t) for t in self.u0_taps))
        object.__setattr__(self, "noma_taps", tuple(tuple(int(i) for i in t) for t in self.noma_taps))
        if min(self.N, self.M, self.V) < 1:
            raise DimensionError("N, M and V must be positive")
        for k, l in self.u0_taps + self.noma_taps:
            if not (0 <= k < self.N and 0 <= l < self.M):
                raise InvalidTapIndex(f"tap ({k}, {l}) outside the {self.N}x{self.M} grid")
        for k, _ in self.noma_taps:
            if k != 0:
                raise InvalidTapIndex("NOMA users are low-mobility: Doppler index must be 0")
        if self.tap_variance <= 0:
            raise ValueError("tap_variance must be positive")


@dataclass(frozen=True)
class ChannelTapSet:
    """Tap gains for every (user, antenna).

    ``gains[i, v, p]`` is the gain of tap p for user i at antenna v; user 0
    uses ``cfg.u0_taps`` positions, users 1..M use ``cfg.noma_taps``.
    """

    cfg: ChannelConfig
    u0_gains: np.ndarray  # (V, P0)
    noma_gains: np.ndarray  # (M, V, P1)

    def taps(self, user, antenna):
        """``[(doppler, delay, gain), ...]`` for one user/antenna pair."""
        if user == 0:
            pos, gains = self.cfg.u0_taps, self.u0_gains[antenna]
        else:
            pos, gains = self.cfg.noma_taps, self.noma_gains[user - 1, antenna]
        return [(k, l, complex(g)) for (k, l), g in zip(pos, gains)]

    def block_circulant(self, user, antenna):
        return BlockCirculant.from_taps(self.taps(user, antenna), self.cfg.N, self.cfg.M)


@dataclass(frozen=True)
class EffectiveChannel:
    """Per-(k, l) beamforming vectors seen by the optimizer.

    Attributes
    ----------
    h : (M, M, V) complex
        ``h[i-1, l]`` is the vector h_{i,l} of NOMA user i.
    g : (N, M, V) complex
        True high-mobility channel vectors g_{k,l}.
    g_hat : (N, M, V) complex
        Base-station estimates; ``||g - g_hat|| <= sigma`` elementwise in (k, l).
    sigma : float
        Error-ball radius assumed by the robust design.
    """

    h: np.ndarray
    g: np.ndarray
    g_hat: np.ndarray
    sigma: float = 0.0

    @property
    def N(self):
        return self.g.shape[0]

    @property
    def M(self):
        return self.g.shape[1]

    @property
    def V(self):
        return self.g.shape[2]

    def with_estimates(self, g_hat, sigma):
        return replace(self, g_hat=np.asarray(g_hat, dtype=np.complex128), sigma=float(sigma))

    def to_json(self):
        return json.dumps(
            {
                "N": self.N, "M": self.M, "V": self.V, "sigma": self.sigma,
                "h": _complex_to_list(self.h),
                "g": _complex_to_list(self.g),
                "g_hat": _complex_to_list(self.g_hat),
            }
        )

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        return cls(
            h=_list_to_complex(doc["h"]),
            g=_list_to_complex(doc["g"]),
            g_hat=_list_to_complex(doc["g_hat"]),
            sigma=float(doc["sigma"]),
        )


def _complex_to_list(a):
    a = np.asarray(a, dtype=np.complex128)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _list_to_complex(x):
    a = np.asarray(x, dtype=np.float64)
    return a[..., 0] + 1j * a[..., 1]


def _cn(rng, size, variance):
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def sample_taps(cfg, rng):
    """Draw i.i.d. CN(0, tap_variance) gains for every tap, user and antenna."""
    u0 = _cn(rng, (cfg.V, len(cfg.u0_taps)), cfg.tap_variance)
    noma = _cn(rng, (cfg.M, cfg.V, len(cfg.noma_taps)), cfg.tap_variance)
    return ChannelTapSet(cfg=cfg, u0_gains=u0, noma_gains=noma)


def effective_channels(taps):
    """Build h_{i,l} and g_{k,l} from the TF eigenvalues of each tap set.

    The returned channel has perfect estimates (``g_hat = g``, ``sigma = 0``).
    """
    cfg = taps.cfg
    N, M, V = cfg.N, cfg.M, cfg.V
    g = np.empty((N, M, V), dtype=np.complex128)
    h = np.empty((M, M, V), dtype=np.complex128)
    for v in range(V):
        g[:, :, v] = tf_eigenvalues(taps.block_circulant(0, v)).reshape(N, M)
        for i in range(1, M + 1):
            d = tf_eigenvalues(taps.block_circulant(i, v)).reshape(N, M)
            h[i - 1, :, v] = d[0]
    return EffectiveChannel(h=h, g=g, g_hat=g.copy(), sigma=0.0)


def sample_ball(rng, size, V, radius=1.0):
    """Points uniform in the complex V-dimensional ball (real dimension 2V)."""
    size = tuple(np.atleast_1d(size))
    z = rng.standard_normal(size + (2 * V,))
    z /= np.linalg.norm(z, axis=-1, keepdims=True)
    r = rng.random(size + (1,)) ** (1.0 / (2 * V))
    z *= radius * r
    return z[..., :V] + 1j * z[..., V:]


def sample_sphere(rng, size, V, radius=1.0):
    """Points uniform on the complex V-dimensional sphere of given radius."""
    size = tuple(np.atleast_1d(size))
    z = rng.standard_normal(size + (2 * V,))
    z *= radius / np.linalg.norm(z, axis=-1, keepdims=True)
    return z[..., :V] + 1j * z[..., V:]


def apply_csi_error(ch, sigma, rng):
    """Return ``ch`` with estimates ``g_hat = g - e``, e uniform in the sigma-ball.

    One independent error per (k, l).  The unit-ball draw is scaled by sigma,
    so a fixed rng state gives the same error directions for every sigma.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    e = sample_ball(rng, (ch.N, ch.M), ch.V, radius=1.0) * sigma
    return ch.with_estimates(ch.g - e, sigma)


def taps_to_json(taps):
    cfg = taps.cfg
    return json.dumps(
        {
            "config": {
                "N": cfg.N, "M": cfg.M, "V": cfg.V,
                "u0_taps": [list(t) for t in cfg.u0_taps],
                "noma_taps": [list(t) for t in cfg.noma_taps],
                "tap_variance": cfg.tap_variance,
                "subcarrier_spacing_hz": cfg.subcarrier_spacing_hz,
                "carrier_frequency_hz": cfg.carrier_frequency_hz,
            },
            "u0_gains": _complex_to_list(taps.u0_gains),
            "noma_gains": _complex_to_list(taps.noma_gains),
        }
    )


def taps_from_json(text):
    doc = json.loads(text)
    cfg = ChannelConfig(**doc["config"])
    return ChannelTapSet(
        cfg=cfg,
        u0_gains=_list_to_complex(doc["u0_gains"]).reshape(cfg.V, len(cfg.u0_taps)),
        noma_gains=_list_to_complex(doc["noma_gains"]).reshape(cfg.M, cfg.V, len(cfg.noma_taps)),
    )
