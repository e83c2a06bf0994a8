"""Worst-case received power under a norm-bounded CSI error.

For a beamformer w, estimate g_hat and error radius sigma, the inner problem

    psi = min_{||e|| <= sigma} |w^H (g_hat + e)|^2

has a closed form: the objective only sees e through the scalar w^H e, whose
modulus is at most sigma ||w||, so ``psi = max(|w^H g_hat| - sigma ||w||, 0)^2``.
When the margin is positive the minimizer sits on the sphere and follows from
the KKT system ``(w w^H + lam I) e = -w w^H g_hat``, ``||e|| = sigma`` with

    lam = ||w|| |w^H g_hat| / sigma - ||w||^2,
    e   = -w (w^H g_hat) / (||w||^2 + lam).

A non-positive margin means an admissible error nulls the link entirely, in
which case the high-mobility rate constraint cannot be guaranteed.
"""
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from . import _accel
from .channel import sample_sphere
from .exceptions import ZeroBeamformer

NULL_TOL = 1e-12
REL_SLACK = 1e-6


@dataclass(frozen=True)
class WorstCaseResult:
    psi: float
    nulled: bool
    e_star: np.ndarray = None
    lam: float = None


def worst_case_power(w, g_hat, sigma):
    """Closed-form minimum of ``|w^H (g_hat + e)|^2`` over ``||e|| <= sigma``."""
    w = np.asarray(w, dtype=np.complex128).reshape(-1)
    g_hat = np.asarray(g_hat, dtype=np.complex128).reshape(-1)
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    nw = float(np.linalg.norm(w))
    if nw == 0.0:
        raise ZeroBeamformer("worst-case power is undefined for w = 0")
    c = complex(np.vdot(w, g_hat))  # w^H g_hat
    a = abs(c)
    if sigma == 0.0:
        return WorstCaseResult(psi=a * a, nulled=a == 0.0, e_star=np.zeros_like(w), lam=None)
    margin = a - sigma * nw
    if margin <= NULL_TOL * max(1.0, a):
        # Any e with w^H e = -w^H g_hat and ||e|| <= sigma nulls the link.
        e = -w * c / nw**2
        return WorstCaseResult(psi=0.0, nulled=True, e_star=e, lam=0.0)
    lam = nw * a / sigma - nw**2
    e = -w * c / (nw**2 + lam)
    return WorstCaseResult(psi=margin * margin, nulled=False, e_star=e, lam=lam)


def worst_case_powers(w, G_hat, sigma):
    """Vectorized ``psi`` and nulled flags for every row of ``G_hat``."""
    G = np.asarray(G_hat, dtype=np.complex128).reshape(-1, np.shape(G_hat)[-1])
    f, _, margin = _accel.robust_terms(w, G, sigma)
    a = np.abs(G @ np.conj(w))
    nulled = margin <= NULL_TOL * np.maximum(1.0, a)
    psi = np.where(nulled, 0.0, np.maximum(margin, 0.0) ** 2)
    return psi, nulled


def kkt_residuals(w, g_hat, sigma, result):
    """Residuals of the stationarity and complementary-slackness conditions."""
    w = np.asarray(w, dtype=np.complex128)
    e = result.e_star
    ww = np.outer(w, np.conj(w))
    stat = (ww + result.lam * np.eye(w.size)) @ e + ww @ g_hat
    return float(np.linalg.norm(stat)), float(abs(np.real(np.vdot(e, e)) - sigma**2))


# --------------------------------------------------------------------------
# feasibility of the SIC / target-rate constraints
# --------------------------------------------------------------------------
@dataclass
class FeasibilityReport:
    """Outcome of checking the SIC constraints for one beamformer.

    Slacks are relative: ``(bound - value) / bound``; negative means violated.
    """

    feasible: bool
    mode: str
    reasons: list = field(default_factory=list)
    u0_sum: float = 0.0
    eps: float = 0.0
    u0_slack: float = 0.0
    noma_sums: list = field(default_factory=list)
    eps1: float = 0.0
    noma_slack: float = 0.0
    power: float = 0.0
    nulled_count: int = 0

    @property
    def nulled(self):
        return self.nulled_count > 0

    @property
    def min_slack(self):
        return min(self.u0_slack, self.noma_slack, 1.0 - self.power)

    def to_dict(self):
        d = asdict(self)
        for key in ("u0_sum", "u0_slack"):
            if not np.isfinite(d[key]):
                d[key] = None
        d["noma_sums"] = [x if np.isfinite(x) else None for x in d["noma_sums"]]
        if not np.isfinite(d["noma_slack"]):
            d["noma_slack"] = None
        return d


def _rel_slack(value, bound):
    if not np.isfinite(value):
        return -np.inf
    return (bound - value) / bound


def check_sic_constraints(w, ch, p, mode="worst_case", rel_tol=REL_SLACK):
    """Check the high-mobility rate / SIC constraints for beamformer ``w``.

    ``worst_case`` uses the estimates and the error radius ``ch.sigma``:
    the sum of inverse worst-case powers over (k, l) must stay below ``eps``
    and no (k, l) may be nullable.  ``true_channel`` uses the true g with
    zero error radius.  In both modes every NOMA user's inverse-power sum over
    l must stay below ``eps1`` and ``||w||^2 <= 1``.
    """
    w = np.asarray(w, dtype=np.complex128).reshape(-1)
    if mode == "worst_case":
        G, sigma = ch.g_hat, ch.sigma
    elif mode == "true_channel":
        G, sigma = ch.g, 0.0
    else:
        raise ValueError(f"unknown mode {mode!r}")
    reasons = []
    power = float(np.real(np.vdot(w, w)))
    G2 = G.reshape(-1, ch.V)
    f, _, margin = _accel.robust_terms(w, G2, sigma)
    a = np.abs(G2 @ np.conj(w))
    nulled = margin <= NULL_TOL * np.maximum(1.0, a)
    n_nulled = int(np.count_nonzero(nulled))
    u0_sum = float(np.inf if n_nulled else np.sum(f))
    if n_nulled:
        reasons.append("nulled")
    u0_slack = _rel_slack(u0_sum, p.eps)
    if n_nulled == 0 and u0_slack < -rel_tol:
        reasons.append("u0_rate")

    fh, _, _ = _accel.inv_power_terms(w, ch.h.reshape(-1, ch.V))
    noma_sums = fh.reshape(ch.M, ch.M).sum(axis=1)
    noma_slack = min(_rel_slack(s, p.eps1) for s in noma_sums)
    if noma_slack < -rel_tol:
        reasons.append("noma_sic")
    if power > 1.0 + rel_tol:
        reasons.append("power")
    return FeasibilityReport(
        feasible=not reasons,
        mode=mode,
        reasons=reasons,
        u0_sum=u0_sum,
        eps=p.eps,
        u0_slack=u0_slack,
        noma_sums=[float(x) for x in noma_sums],
        eps1=p.eps1,
        noma_slack=float(noma_slack),
        power=power,
        nulled_count=n_nulled,
    )


# --------------------------------------------------------------------------
# sampling oracle
# --------------------------------------------------------------------------
def sampled_worst_case(w, g_hat, sigma, rng, n_samples=10**6, refine=True, chunk=1 << 16,
                       refine_iters=500):
    """Numerical estimate of ``min_{||e||<=sigma} |w^H (g_hat + e)|^2``.

    Draws ``n_samples`` errors uniformly on the sphere of radius sigma, keeps
    the best one, then (optionally) polishes it with projected gradient
    descent on the ball.  Uses no knowledge of the closed form.

    Returns ``(value, e)``.
    """
    w = np.asarray(w, dtype=np.complex128).reshape(-1)
    g_hat = np.asarray(g_hat, dtype=np.complex128).reshape(-1)
    V = w.size
    if sigma == 0.0:
        return abs(complex(np.vdot(w, g_hat))) ** 2, np.zeros(V, dtype=np.complex128)
    best, best_e = np.inf, np.zeros(V, dtype=np.complex128)
    left = n_samples
    while left > 0:
        n = min(chunk, left)
        E = sample_sphere(rng, n, V, radius=sigma)
        val, idx = _accel.sampled_min_power(w, g_hat, E)
        if val < best:
            best, best_e = val, E[idx].copy()
        left -= n
    if not refine:
        return best, best_e
    e = best_e
    step = 1.0 / max(np.real(np.vdot(w, w)), 1e-300)
    for _ in range(refine_iters):
        c = np.vdot(w, g_hat + e)
        e_new = e - step * w * c
        nrm = np.linalg.norm(e_new)
        if nrm > sigma:
            e_new *= sigma / nrm
        if np.linalg.norm(e_new - e) <= 1e-15 * max(1.0, sigma):
            e = e_new
            break
        e = e_new
    e = _slsqp_polish(w, g_hat, sigma, e)
    val = float(abs(np.vdot(w, g_hat + e)) ** 2)
    if val < best:
        best, best_e = val, e
    return best, best_e


def _slsqp_polish(w, g_hat, sigma, e0):
    # Projected gradient crawls when the ball barely misses the nulling plane.
    V = w.size
    a = complex(np.vdot(w, g_hat))

    def fun(x):
        c = a + complex(np.vdot(w, x[:V] + 1j * x[V:]))
        gc = 2.0 * w * c
        return (c.real ** 2 + c.imag ** 2) / sigma ** 2, np.concatenate([gc.real, gc.imag]) / sigma ** 2

    cons = {"type": "ineq", "fun": lambda x: 1.0 - (x @ x) / sigma ** 2, "jac": lambda x: -2.0 * x / sigma ** 2}
    x0 = np.concatenate([e0.real, e0.imag])
    res = optimize.minimize(fun, x0, jac=True, method="SLSQP", constraints=[cons],
                            options={"ftol": 1e-300, "maxiter": 500})
    x = res.x
    nrm = np.linalg.norm(x)
    if nrm > sigma:
        x = x * (sigma / nrm)
    e = x[:V] + 1j * x[V:]
    return e if abs(a + np.vdot(w, e)) <= abs(a + np.vdot(w, e0)) else e0


def oracle_agreement(w, g_hat, sigma, rng, n_samples=10**6, rtol=0.01, refine=True):
    """Compare the closed-form ``1/psi`` with a sampled worst case.

    Returns ``(agree, closed_form_inverse, sampled_inverse)``.  For a nullable
    link the closed form is infinite and the sampled maximum should blow up.
    """
    res = worst_case_power(w, g_hat, sigma)
    val, _ = sampled_worst_case(w, g_hat, sigma, rng, n_samples=n_samples, refine=refine)
    sampled_inv = np.inf if val == 0.0 else 1.0 / val
    if res.nulled:
        return sampled_inv > 1e6, np.inf, sampled_inv
    exact_inv = 1.0 / res.psi
    return abs(sampled_inv - exact_inv) <= rtol * exact_inv, exact_inv, sampled_inv
