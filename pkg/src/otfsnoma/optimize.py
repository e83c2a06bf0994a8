"""Beamformer designers: SCA (robust), SDR with Gaussian randomization
(perfect CSI) and the random baseline.

Gradient convention: for a real-valued f of complex w, ``grad`` below is
``2 df/dconj(w)``, so the first-order model along a step d is
``f(w0) + Re{grad^H d}``.
"""
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .conic import ConicProblem, PsdBlock, SocRow, solve_conic
from .exceptions import (
    AllStartsFailed,
    DegenerateDirection,
    NoFeasibleRandomization,
    NulledRegion,
    SdpInfeasible,
)
from .robust import NULL_TOL, REL_SLACK, check_sic_constraints

DEG_TOL = 1e-12
RANK_ONE_TOL = 1e-6


# --------------------------------------------------------------------------
# gradients
# --------------------------------------------------------------------------
def inv_power(w, h):
    return 1.0 / abs(np.vdot(w, h)) ** 2


def grad_inv_power(w, h):
    """Gradient of ``1 / |w^H h|^2``: ``-2 h h^H w / (w^H h h^H w)^2``."""
    w = np.asarray(w, dtype=np.complex128)
    h = np.asarray(h, dtype=np.complex128)
    if abs(np.vdot(w, h)) <= DEG_TOL:
        raise DegenerateDirection("|w^H h| vanishes; 1/|w^H h|^2 is not differentiable")
    _, grad, _ = _accel.inv_power_terms(w, h[None, :])
    return grad[0]


def robust_power(w, g_hat, sigma):
    margin = abs(np.vdot(w, g_hat)) - sigma * np.linalg.norm(w)
    return np.inf if margin <= 0 else 1.0 / margin**2


def grad_robust_power(w, g_hat, sigma):
    """Gradient of ``(|w^H g_hat| - sigma ||w||)^-2`` outside the nulled region."""
    w = np.asarray(w, dtype=np.complex128)
    g_hat = np.asarray(g_hat, dtype=np.complex128)
    margin = abs(np.vdot(w, g_hat)) - sigma * np.linalg.norm(w)
    if margin <= DEG_TOL:
        raise NulledRegion(f"margin {margin:.3e} <= 0: an admissible error nulls the link")
    _, grad, _ = _accel.robust_terms(w, g_hat[None, :], sigma)
    return grad[0]


def _realify(grad):
    """Coefficients of Re{grad^H d} in the stacked real vector [Re d, Im d]."""
    return np.concatenate([grad.real, grad.imag], axis=-1)


def random_beamformer(V, rng):
    """Isotropic unit-norm beamformer."""
    w = rng.standard_normal(V) + 1j * rng.standard_normal(V)
    return w / np.linalg.norm(w)


# --------------------------------------------------------------------------
# the (robust) SIC model shared by SCA and SDR
# --------------------------------------------------------------------------
class SicModel:
    """Constraint and objective functions of the robust max-min problem.

    ``users`` (1-based) selects whose received power enters the objective;
    all users' SIC constraints are always enforced.
    """

    def __init__(self, ch, p, users=None):
        self.ch, self.p = ch, p
        self.V, self.M = ch.V, ch.M
        self.users = np.arange(1, ch.M + 1) if users is None else np.asarray(users, dtype=int)
        idx = self.users - 1
        self.H_obj = np.ascontiguousarray(ch.h[idx, idx])
        self.G = np.ascontiguousarray(ch.g_hat.reshape(-1, ch.V))
        self.H_all = np.ascontiguousarray(ch.h.reshape(-1, ch.V))
        self.sigma = ch.sigma

    def evaluate(self, w, grads=False):
        fo, go, _ = _accel.inv_power_terms(w, self.H_obj)
        fr, gr, margin = _accel.robust_terms(w, self.G, self.sigma)
        fh, gh, _ = _accel.inv_power_terms(w, self.H_all)
        a = margin + self.sigma * np.linalg.norm(w)
        nulled = bool(np.any(margin <= NULL_TOL * np.maximum(1.0, a)))
        out = {
            "t": float(np.max(fo)),
            "u0": np.inf if nulled else float(np.sum(fr)),
            "noma": fh.reshape(self.M, self.M).sum(axis=1),
            "power": float(np.real(np.vdot(w, w))),
            "nulled": nulled,
        }
        if grads:
            out.update(fo=fo, go=go, fr=fr, gr=gr, fh=fh, gh=gh)
        return out

    def violation(self, ev):
        """0 when feasible; otherwise the largest log-ratio over the bounds."""
        if ev["nulled"] or not np.isfinite(ev["u0"]) or not np.all(np.isfinite(ev["noma"])):
            return np.inf
        v = max(np.log(ev["u0"] / self.p.eps), float(np.max(np.log(ev["noma"] / self.p.eps1))),
                np.log(ev["power"]))
        return max(v, 0.0) if v > np.log1p(REL_SLACK) else 0.0

    def linear_models(self, w0, ev):
        """First-order models ``value + coef . (x - x0)`` at ``w0``.

        ``x`` stacks ``[Re w, Im w]``.  Returns a dict with ``(value, coef)``
        pairs for the objective terms (one per objective user), the summed
        high-mobility constraint and each NOMA user's summed constraint.
        """
        gh = _realify(ev["gh"]).reshape(self.M, self.M, 2 * self.V).sum(axis=1)
        return {
            "objective": (ev["fo"], _realify(ev["go"])),
            "u0": (float(ev["fr"].sum()), _realify(ev["gr"].sum(axis=0))),
            "noma": (ev["fh"].reshape(self.M, self.M).sum(axis=1), gh),
        }

    def linearized_problem(self, w0, ev):
        """Conic subproblem at ``w0`` over x = [Re w, Im w, t]."""
        V = self.V
        n = 2 * V + 1
        x0 = np.concatenate([w0.real, w0.imag])
        lin = self.linear_models(w0, ev)
        rows, rhs = [], []
        fo, co = lin["objective"]
        for j in range(co.shape[0]):
            rows.append(np.concatenate([co[j], [-1.0]]))
            rhs.append(co[j] @ x0 - fo[j])
        fr, cr = lin["u0"]
        rows.append(np.concatenate([cr, [0.0]]))
        rhs.append(self.p.eps - fr + cr @ x0)
        fh, ch_ = lin["noma"]
        for i in range(self.M):
            rows.append(np.concatenate([ch_[i], [0.0]]))
            rhs.append(self.p.eps1 - fh[i] + ch_[i] @ x0)
        A = np.array(rows)
        b = np.array(rhs)
        scale = np.maximum(np.maximum(np.abs(A).max(axis=1), np.abs(b)), 1e-300)
        F = np.zeros((2 * V, n))
        F[:, : 2 * V] = np.eye(2 * V)
        ball = SocRow(F=F, f=np.zeros(2 * V), g=np.zeros(n), h=1.0)
        c = np.zeros(n)
        c[-1] = 1.0
        return ConicProblem(c=c, A_ub=A / scale[:, None], b_ub=b / scale, soc=[ball])


# --------------------------------------------------------------------------
# SCA
# --------------------------------------------------------------------------
@dataclass
class ScaOptions:
    n_starts: int = 10
    max_iter: int = 50
    rel_tol: float = 1e-5
    max_backtracks: int = 12
    users: tuple = None  # objective users (1-based); None = all


@dataclass
class ScaState:
    """Per-start iteration record.  ``history`` holds the true objective
    ``max_i 1/|w^H h_{i,i-1}|^2`` at every accepted feasible iterate."""

    w0: np.ndarray
    t: float = np.inf
    iteration: int = 0
    history: list = field(default_factory=list)
    feasible: list = field(default_factory=list)
    status: str = "running"


@dataclass
class ScaResult:
    w: np.ndarray
    t: float
    state: ScaState
    states: list
    report: object
    iterations: int


def _sca_single_start(model, w0, opts):
    state = ScaState(w0=w0)
    ev = model.evaluate(w0, grads=True)
    if ev["nulled"] or not np.all(np.isfinite(ev["fo"])) or not np.all(np.isfinite(ev["fh"])):
        state.status = "degenerate_start"
        return state
    viol = model.violation(ev)
    if viol == 0.0:
        state.t = ev["t"]
        state.history.append(ev["t"])
    state.feasible.append(viol == 0.0)
    w = w0
    for it in range(opts.max_iter):
        sol = solve_conic(model.linearized_problem(w, ev))
        state.iteration = it + 1
        if not sol.ok:
            state.status = "subproblem_infeasible" if it == 0 else "subproblem_" + sol.status.lower()
            return state
        w_bar = sol.x[: model.V] + 1j * sol.x[model.V: 2 * model.V]
        w_bar /= max(1.0, np.linalg.norm(w_bar))  # solver tolerance can overshoot the ball
        step = w_bar - w
        accepted = None
        alpha = 1.0
        for _ in range(opts.max_backtracks):
            cand = w + alpha * step
            ev_c = model.evaluate(cand)
            viol_c = model.violation(ev_c)
            if viol == 0.0:
                if viol_c == 0.0 and ev_c["t"] <= ev["t"]:
                    accepted = cand
                    break
            elif viol_c < viol:
                accepted = cand
                break
            alpha *= 0.5
        if accepted is None:
            state.status = "stalled" if viol == 0.0 else "infeasible_stalled"
            break
        t_prev = ev["t"]
        was_feasible = viol == 0.0
        w = accepted
        ev = model.evaluate(w, grads=True)
        viol = model.violation(ev)
        state.feasible.append(viol == 0.0)
        state.w0 = w
        if viol == 0.0:
            state.t = ev["t"]
            state.history.append(ev["t"])
            if was_feasible and abs(t_prev - ev["t"]) <= opts.rel_tol * ev["t"]:
                state.status = "converged"
                break
    else:
        state.status = "max_iter"
    if viol != 0.0:
        state.t = np.inf
    return state


def sca_solve(ch, p, rng, opts=None):
    """Robust max-min beamforming by successive linearization.

    Each start draws a random unit-norm w0, linearizes every constraint
    function and the objective terms at w0, solves the resulting
    second-order-cone program, and moves towards its solution with a
    backtracking step that only accepts points improving feasibility (while
    infeasible) or the true objective (once feasible).  The best final point
    that passes the worst-case SIC check over all starts is returned.
    """
    opts = opts or ScaOptions()
    model = SicModel(ch, p, users=opts.users)
    states = []
    best = None
    total_iters = 0
    for s in range(opts.n_starts):
        w0 = random_beamformer(ch.V, rng)
        state = _sca_single_start(model, w0, opts)
        total_iters += state.iteration
        states.append(state)
        if not np.isfinite(state.t):
            continue
        report = check_sic_constraints(state.w0, ch, p, mode="worst_case")
        if not report.feasible:
            state.status += "+posthoc_failed"
            continue
        if best is None or state.t < best[0].t:
            best = (state, report)
    if best is None:
        raise AllStartsFailed(f"no feasible beamformer after {opts.n_starts} starts")
    state, report = best
    return ScaResult(w=state.w0, t=state.t, state=state, states=states, report=report,
                     iterations=total_iters)


# --------------------------------------------------------------------------
# SDR
# --------------------------------------------------------------------------
def hermitian_params(V):
    """Index layout of the real parameters of a Hermitian V x V matrix.

    Returns ``(diag, upper_re, upper_im, pairs)``: parameter indices for the
    diagonal, the real parts and imaginary parts of the strict upper
    triangle, and the (i, j) pairs of that triangle.
    """
    pairs = [(i, j) for i in range(V) for j in range(i + 1, V)]
    n_off = len(pairs)
    return np.arange(V), V + np.arange(n_off), V + n_off + np.arange(n_off), pairs


def trace_coefficients(hvecs):
    """Coefficients of ``h^H W h`` in the Hermitian parameters, one row per h."""
    hvecs = np.atleast_2d(hvecs)
    V = hvecs.shape[1]
    diag, ure, uim, pairs = hermitian_params(V)
    out = np.zeros((hvecs.shape[0], V * V))
    out[:, diag] = np.abs(hvecs) ** 2
    for k, (i, j) in enumerate(pairs):
        cross = np.conj(hvecs[:, i]) * hvecs[:, j]
        out[:, ure[k]] = 2.0 * cross.real
        out[:, uim[k]] = -2.0 * cross.imag
    return out


def hermitian_from_params(theta, V):
    diag, ure, uim, pairs = hermitian_params(V)
    W = np.zeros((V, V), dtype=np.complex128)
    W[np.arange(V), np.arange(V)] = theta[diag]
    for k, (i, j) in enumerate(pairs):
        W[i, j] = theta[ure[k]] + 1j * theta[uim[k]]
        W[j, i] = np.conj(W[i, j])
    return W


def _psd_embedding_basis(V, n_total):
    """Basis so that sum theta_i B_i = [[A, -B], [B, A]] for W = A + jB."""
    diag, ure, uim, pairs = hermitian_params(V)
    basis = np.zeros((n_total, 2 * V, 2 * V))
    for i in range(V):
        basis[diag[i], i, i] = 1.0
        basis[diag[i], V + i, V + i] = 1.0
    for k, (i, j) in enumerate(pairs):
        for (r, c) in ((i, j), (j, i), (V + i, V + j), (V + j, V + i)):
            basis[ure[k], r, c] = 1.0
        # B[i, j] = im, B[j, i] = -im; lower-left block is B, upper-right is -B
        basis[uim[k], V + i, j] = 1.0
        basis[uim[k], V + j, i] = -1.0
        basis[uim[k], i, V + j] = -1.0
        basis[uim[k], j, V + i] = 1.0
    return basis


def _hyperbolic(n, a, b, const=2.0):
    """Cone row encoding ``x_a * x_b >= const^2 / 4`` with x_a, x_b >= 0."""
    F = np.zeros((2, n))
    F[1, a], F[1, b] = 1.0, -1.0
    g = np.zeros(n)
    g[a] = g[b] = 1.0
    return SocRow(F=F, f=np.array([const, 0.0]), g=g, h=0.0)


def build_sdr_problem(ch, p, single_user=None):
    """Relaxed lifted problem without the rank constraint.

    Variable layout: Hermitian parameters of W, then t, x_{i,l}, y_{k,l},
    u_{k,l} >= 1/(eps y_{k,l}), z_{i,l} >= 1/(eps1 x_{i,l}).  With ``single_user = i``
    the objective maximizes x_{i,i-1} instead of the max-min epigraph.
    """
    V, M, N = ch.V, ch.M, ch.N
    nW = V * V
    it = nW
    ix = it + 1 + np.arange(M * M)
    iy = ix[-1] + 1 + np.arange(N * M)
    iu = iy[-1] + 1 + np.arange(N * M)
    iz = iu[-1] + 1 + np.arange(M * M)
    n = iz[-1] + 1

    c = np.zeros(n)
    if single_user is None:
        c[it] = 1.0
    else:
        c[ix[(single_user - 1) * M + (single_user - 1)]] = -1.0

    # tr{W G} - y = 0 ; tr{W H} - x = 0
    Tg = trace_coefficients(ch.g.reshape(-1, V))
    Th = trace_coefficients(ch.h.reshape(-1, V))
    A_eq = np.zeros((N * M + M * M, n))
    A_eq[: N * M, :nW] = Tg
    A_eq[np.arange(N * M), iy] = -1.0
    A_eq[N * M:, :nW] = Th
    A_eq[N * M + np.arange(M * M), ix] = -1.0
    b_eq = np.zeros(A_eq.shape[0])

    A_ub, b_ub = [], []
    # u and z are stored divided by eps and eps1 to keep them O(1)
    row = np.zeros(n)
    row[iu] = 1.0
    A_ub.append(row)
    b_ub.append(1.0)
    for i in range(M):
        row = np.zeros(n)
        row[iz[i * M:(i + 1) * M]] = 1.0
        A_ub.append(row)
        b_ub.append(1.0)
    row = np.zeros(n)
    diag, _, _, _ = hermitian_params(V)
    row[diag] = 1.0
    A_ub.append(row)
    b_ub.append(1.0)
    A_ub = np.array(A_ub)
    b_ub = np.array(b_ub)

    soc = []
    if single_user is None:
        for i in range(M):
            soc.append(_hyperbolic(n, ix[i * M + i], it))
    for j in range(N * M):
        soc.append(_hyperbolic(n, iu[j], iy[j], 2.0 / np.sqrt(p.eps)))
    for j in range(M * M):
        soc.append(_hyperbolic(n, iz[j], ix[j], 2.0 / np.sqrt(p.eps1)))

    lb = np.full(n, -np.inf)
    lb[ix] = lb[iy] = lb[iu] = lb[iz] = 0.0
    lb[diag] = 0.0
    psd = PsdBlock(_psd_embedding_basis(V, n), np.zeros((2 * V, 2 * V)))
    prob = ConicProblem(c=c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, soc=soc, psd=psd, lb=lb)
    layout = {"W": slice(0, nW), "t": it, "x": ix, "y": iy, "u": iu, "z": iz}
    return prob, layout


@dataclass
class SdrResult:
    w: np.ndarray
    W: np.ndarray
    eigvals: np.ndarray
    rank_one: bool
    relaxed_objective: float
    n_candidates: int = 0
    n_feasible: int = 0
    report: object = None

    @property
    def eig_ratio(self):
        return float(self.eigvals[1] / self.eigvals[0]) if self.eigvals.size > 1 else 0.0


def _objective_power(w, H_obj):
    return float(np.min(np.abs(H_obj @ np.conj(w)) ** 2))


def gaussian_randomization(W, model, rng, n_rand=200, include_principal=True):
    """Draw rank-one candidates from W and keep the best feasible one.

    Candidates are ``W^{1/2} v`` with v ~ CN(0, I), normalized to unit norm.
    Returns ``(w, n_candidates, n_feasible)``; w is None when none is feasible.
    """
    lam, U = np.linalg.eigh(W)
    lam = np.clip(lam, 0.0, None)
    root = U * np.sqrt(lam)[None, :]
    V = W.shape[0]
    cands = []
    if include_principal:
        cands.append(U[:, -1])
    v = (rng.standard_normal((n_rand, V)) + 1j * rng.standard_normal((n_rand, V))) / np.sqrt(2.0)
    cands.extend(v @ root.T)
    best, best_val, n_feas = None, -np.inf, 0
    for w in cands:
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            continue
        w = w / nrm
        if model.violation(model.evaluate(w)) != 0.0:
            continue
        n_feas += 1
        val = _objective_power(w, model.H_obj)
        if val > best_val:  # strict: ties keep the lowest index
            best, best_val = w, val
    return best, len(cands), n_feas


def _solve_relaxation(ch, p, single_user):
    if ch.sigma != 0.0:
        raise ValueError("SDR applies to perfect CSI only (sigma = 0)")
    prob, layout = build_sdr_problem(ch, p, single_user=single_user)
    sol = solve_conic(prob)
    if sol.status == "Infeasible":
        raise SdpInfeasible("the relaxed problem is infeasible")
    if not sol.ok:
        raise SdpInfeasible(f"SDP solve failed: {sol.status} ({sol.solver_status})")
    W = hermitian_from_params(sol.x[layout["W"]], ch.V)
    lam = np.linalg.eigvalsh(W)[::-1]
    return W, lam, sol, layout


def sdr_solve(ch, p, rng, n_rand=200, users=None):
    """SDR with Gaussian randomization for the perfect-CSI max-min problem."""
    W, lam, sol, layout = _solve_relaxation(ch, p, None)
    model = SicModel(ch, p, users=users)
    relaxed = float(sol.x[layout["t"]])
    rank_one = lam[0] > 0 and lam[1] / lam[0] <= RANK_ONE_TOL if lam.size > 1 else True
    if rank_one:
        w = _principal(W)
        report = check_sic_constraints(w, ch, p, mode="worst_case")
        if report.feasible:
            return SdrResult(w, W, lam, True, relaxed, 1, 1, report)
    w, n_c, n_f = gaussian_randomization(W, model, rng, n_rand=n_rand)
    if w is None:
        raise NoFeasibleRandomization(f"none of {n_c} randomized candidates is feasible")
    report = check_sic_constraints(w, ch, p, mode="worst_case")
    return SdrResult(w, W, lam, bool(rank_one), relaxed, n_c, n_f, report)


def _principal(W):
    lam, U = np.linalg.eigh(W)
    w = U[:, -1] * np.sqrt(max(lam[-1], 0.0))
    nrm = np.linalg.norm(w)
    return w / nrm if nrm > 1.0 else w


def sdr_single_user(ch, p, user=1, rng=None, n_rand=200):
    """Maximize one NOMA user's received power subject to all SIC constraints.

    The relaxation is expected to be tight (rank one); if it is not, falls
    back to Gaussian randomization and reports ``rank_one=False``.
    """
    W, lam, sol, layout = _solve_relaxation(ch, p, user)
    rank_one = lam.size == 1 or (lam[0] > 0 and lam[1] / lam[0] <= RANK_ONE_TOL)
    relaxed = 1.0 / max(float(sol.x[layout["x"][(user - 1) * ch.M + (user - 1)]]), 1e-300)
    model = SicModel(ch, p, users=[user])
    if rank_one:
        w = _principal(W)
        report = check_sic_constraints(w, ch, p, mode="worst_case")
        return SdrResult(w, W, lam, True, relaxed, 1, int(report.feasible), report)
    rng = rng if rng is not None else np.random.default_rng(0)
    w, n_c, n_f = gaussian_randomization(W, model, rng, n_rand=n_rand)
    if w is None:
        raise NoFeasibleRandomization(f"none of {n_c} randomized candidates is feasible")
    report = check_sic_constraints(w, ch, p, mode="worst_case")
    return SdrResult(w, W, lam, False, relaxed, n_c, n_f, report)
