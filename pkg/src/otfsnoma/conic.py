"""Small real-valued conic programs and a Clarabel-backed solver.

Standard form over a real decision vector x:

    minimize    c . x
    subject to  A_ub x <= b_ub
                A_eq x == b_eq
                ||F_j x + f_j|| <= g_j . x + h_j        (one entry per cone)
                Z0 + sum_i x_i Z_i  is PSD              (optional block)
                lb <= x <= ub

Complex model variables are stacked as ``[real parts, imag parts]`` and a
Hermitian matrix W = A + jB enters the PSD block through its real embedding
``[[A, -B], [B, A]]``.
"""
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

import clarabel

FEAS_TOL = 1e-7
GAP_TOL = 1e-7


@dataclass
class SocRow:
    """``||F x + f|| <= g . x + h``."""

    F: np.ndarray
    f: np.ndarray
    g: np.ndarray
    h: float


@dataclass
class PsdBlock:
    """``offset + sum_i x_i basis[i]`` must be PSD (symmetric d x d matrices)."""

    basis: np.ndarray  # (n, d, d)
    offset: np.ndarray  # (d, d)

    @property
    def dim(self):
        return self.offset.shape[0]

    def evaluate(self, x):
        return self.offset + np.tensordot(x, self.basis, axes=1)


@dataclass
class ConicProblem:
    c: np.ndarray
    A_ub: np.ndarray = None
    b_ub: np.ndarray = None
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None
    soc: list = field(default_factory=list)
    psd: PsdBlock = None
    lb: np.ndarray = None
    ub: np.ndarray = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        if self.A_ub is None:
            self.A_ub, self.b_ub = np.zeros((0, n)), np.zeros(0)
        if self.A_eq is None:
            self.A_eq, self.b_eq = np.zeros((0, n)), np.zeros(0)
        self.A_ub = np.asarray(self.A_ub, dtype=float).reshape(-1, n)
        self.b_ub = np.asarray(self.b_ub, dtype=float).reshape(-1)
        self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, n)
        self.b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)
        if self.lb is not None:
            self.lb = np.asarray(self.lb, dtype=float).reshape(n)
        if self.ub is not None:
            self.ub = np.asarray(self.ub, dtype=float).reshape(n)
        if self.A_ub.shape[0] != self.b_ub.size or self.A_eq.shape[0] != self.b_eq.size:
            raise ValueError("row counts of A and b disagree")
        for row in self.soc:
            if row.F.shape[1] != n or row.g.size != n or row.F.shape[0] != row.f.size:
                raise ValueError("second-order cone row has inconsistent dimensions")
        if self.psd is not None and self.psd.basis.shape[0] != n:
            raise ValueError("PSD basis must have one matrix per variable")

    @property
    def n(self):
        return self.c.size

    # ---------------------------------------------------------------- JSON
    def to_json(self):
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        def bound(a):
            if a is None:
                return None
            return [None if not np.isfinite(v) else float(v) for v in a]

        doc = {
            "c": arr(self.c),
            "A_ub": arr(self.A_ub), "b_ub": arr(self.b_ub),
            "A_eq": arr(self.A_eq), "b_eq": arr(self.b_eq),
            "soc": [{"F": arr(r.F), "f": arr(r.f), "g": arr(r.g), "h": float(r.h)} for r in self.soc],
            "psd": None if self.psd is None else {
                "basis": arr(self.psd.basis), "offset": arr(self.psd.offset)},
            "lb": bound(self.lb), "ub": bound(self.ub),
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        n = len(doc["c"])

        def mat(key):
            return np.asarray(doc[key], dtype=float).reshape(-1, n)

        def bound(key, fill):
            if doc[key] is None:
                return None
            return np.array([fill if v is None else v for v in doc[key]], dtype=float)

        psd = None
        if doc["psd"] is not None:
            psd = PsdBlock(np.asarray(doc["psd"]["basis"], dtype=float),
                           np.asarray(doc["psd"]["offset"], dtype=float))
        return cls(
            c=np.asarray(doc["c"], dtype=float),
            A_ub=mat("A_ub"), b_ub=np.asarray(doc["b_ub"], dtype=float),
            A_eq=mat("A_eq"), b_eq=np.asarray(doc["b_eq"], dtype=float),
            soc=[SocRow(np.asarray(r["F"], dtype=float).reshape(-1, n), np.asarray(r["f"], dtype=float),
                        np.asarray(r["g"], dtype=float), r["h"]) for r in doc["soc"]],
            psd=psd, lb=bound("lb", -np.inf), ub=bound("ub", np.inf),
        )

    # ------------------------------------------------------------ residuals
    def primal_residual(self, x):
        """Largest constraint violation at x (0 when feasible)."""
        r = 0.0
        if self.b_ub.size:
            r = max(r, float(np.max(self.A_ub @ x - self.b_ub)))
        if self.b_eq.size:
            r = max(r, float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        for row in self.soc:
            r = max(r, float(np.linalg.norm(row.F @ x + row.f) - (row.g @ x + row.h)))
        if self.psd is not None:
            r = max(r, -float(np.linalg.eigvalsh(self.psd.evaluate(x))[0]))
        if self.lb is not None:
            r = max(r, float(np.max(np.where(np.isfinite(self.lb), self.lb - x, 0.0))))
        if self.ub is not None:
            r = max(r, float(np.max(np.where(np.isfinite(self.ub), x - self.ub, 0.0))))
        return max(r, 0.0)


@dataclass
class SolveStatus:
    status: str  # Optimal | Infeasible | MaxIter | NumericalFailure
    x: np.ndarray
    obj: float
    primal_residual: float
    gap: float
    solver_status: str = ""
    iterations: int = 0

    @property
    def ok(self):
        return self.status == "Optimal"


def _svec_index(d):
    """Rows of Clarabel's scaled upper-triangle (column-major) vectorization."""
    rows, cols = [], []
    for j in range(d):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
    return np.array(rows), np.array(cols)


def _to_clarabel(prob):
    n = prob.n
    blocks_A, blocks_b, cones = [], [], []
    A_eq, b_eq = prob.A_eq, prob.b_eq
    if b_eq.size:
        blocks_A.append(A_eq)
        blocks_b.append(b_eq)
        cones.append(clarabel.ZeroConeT(b_eq.size))
    A_ub, b_ub = [prob.A_ub], [prob.b_ub]
    eye = np.eye(n)
    if prob.lb is not None:
        m = np.isfinite(prob.lb)
        A_ub.append(-eye[m])
        b_ub.append(-prob.lb[m])
    if prob.ub is not None:
        m = np.isfinite(prob.ub)
        A_ub.append(eye[m])
        b_ub.append(prob.ub[m])
    A_ub, b_ub = np.vstack(A_ub), np.concatenate(b_ub)
    if b_ub.size:
        blocks_A.append(A_ub)
        blocks_b.append(b_ub)
        cones.append(clarabel.NonnegativeConeT(b_ub.size))
    for row in prob.soc:
        # s = b - A x = (g.x + h, F x + f)
        blocks_A.append(np.vstack([-row.g[None, :], -row.F]))
        blocks_b.append(np.concatenate([[row.h], row.f]))
        cones.append(clarabel.SecondOrderConeT(row.f.size + 1))
    if prob.psd is not None:
        d = prob.psd.dim
        ri, ci = _svec_index(d)
        scale = np.where(ri == ci, 1.0, np.sqrt(2.0))
        blocks_A.append(-(prob.psd.basis[:, ri, ci] * scale).T)
        blocks_b.append(prob.psd.offset[ri, ci] * scale)
        cones.append(clarabel.PSDTriangleConeT(d))
    A = sp.csc_matrix(np.vstack(blocks_A))
    b = np.concatenate(blocks_b)
    return A, b, cones


# Settings tried in order until one meets the Optimal tolerances; the later
# variants trade speed for accuracy on badly scaled instances.
_RETRY_SETTINGS = (
    {},
    {"equilibrate_enable": False},
    {"iterative_refinement_reltol": 1e-14, "iterative_refinement_abstol": 1e-14,
     "iterative_refinement_max_iter": 50},
)


def _solve_once(prob, A, b, cones, tol, max_iter, overrides):
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = max_iter
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    settings.tol_ktratio = 1e-7
    for key, val in overrides.items():
        setattr(settings, key, val)
    sol = clarabel.DefaultSolver(sp.csc_matrix((prob.n, prob.n)), prob.c, A, b, cones, settings).solve()
    raw = str(sol.status)
    x = np.asarray(sol.x, dtype=float)
    if "Infeasible" in raw:
        return SolveStatus("Infeasible", x, np.nan, np.inf, np.inf, raw, sol.iterations)
    obj_p = float(prob.c @ x) if x.size else np.nan
    obj_d = float(sol.obj_val_dual)
    gap = abs(obj_p - obj_d) / max(1.0, abs(obj_p), abs(obj_d))
    resid = prob.primal_residual(x) if x.size else np.inf
    if raw in ("Solved", "AlmostSolved") and resid <= FEAS_TOL and gap <= GAP_TOL:
        status = "Optimal"
    elif raw == "MaxIterations":
        status = "MaxIter"
    else:
        status = "NumericalFailure"
    return SolveStatus(status, x, obj_p, resid, gap, raw, sol.iterations)


def solve_conic(prob, tol=1e-9, max_iter=200):
    """Solve ``prob`` with the Clarabel interior-point method.

    The status is ``Optimal`` only when the solver converged, the primal
    residual is at most ``FEAS_TOL`` and the relative duality gap at most
    ``GAP_TOL``.  A run that misses those tolerances is repeated with a
    fixed sequence of more careful settings.  Deterministic for identical
    inputs.
    """
    A, b, cones = _to_clarabel(prob)
    res = None
    for overrides in _RETRY_SETTINGS:
        res = _solve_once(prob, A, b, cones, tol, max_iter, overrides)
        if res.ok or res.status == "Infeasible":
            return res
    return res
