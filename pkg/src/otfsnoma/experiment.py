"""Monte-Carlo sweeps of the beamforming schemes and their summaries.

Every trial gets its own seed derived from the base seed; the channel, the
CSI-error directions and the designer randomness come from separate streams
of that seed, so all grid points of one trial share the same channel
realization (common random numbers) and any row can be replayed alone.
"""
import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .channel import ChannelConfig, apply_csi_error, effective_channels, sample_taps
from .exceptions import ConfigError, OtfsNomaError
from .optimize import ScaOptions, random_beamformer, sca_solve, sdr_single_user, sdr_solve
from .rates import ProblemParams, min_rate
from .robust import check_sic_constraints

SCHEMES = ("sca", "sdr", "random")
_SCHEME_CODE = {"sca": 0, "sdr": 1, "random": 2}


@dataclass
class ExperimentConfig:
    rho_db: list = field(default_factory=lambda: [float(x) for x in range(0, 45, 5)])
    sigmas: list = field(default_factory=lambda: [0.0, 0.05, 0.1, 0.2])
    Vs: list = field(default_factory=lambda: [4])
    M: int = 8
    N: int = 8
    R0: float = 0.5
    schemes: list = field(default_factory=lambda: ["sca", "random"])
    trials: int = 100
    seed: int = 0
    single_user: bool = False
    n_starts: int = 10
    n_rand: int = 200
    threads: int = 1
    out: str = None

    def validate(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.rho_db or not self.sigmas or not self.Vs:
            raise ConfigError("rho_db, sigmas and Vs must be non-empty")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise ConfigError(f"unknown schemes {bad}; choose from {SCHEMES}")
        if "sdr" in self.schemes and any(s != 0 for s in self.sigmas):
            raise ConfigError("the sdr scheme requires sigma = 0 at every grid point")
        if any(s < 0 for s in self.sigmas):
            raise ConfigError("sigma must be non-negative")
        if not 0 < self.R0 < 1:
            raise ConfigError("R0 must lie in (0, 1) BPCU")
        if min(self.M, self.N) < 2 or min(self.Vs) < 1:
            raise ConfigError("need M, N >= 2 (two-path channel) and V >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        return self

    @classmethod
    def from_dict(cls, doc):
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            cfg = cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.rho_db = [float(x) for x in cfg.rho_db]
        cfg.sigmas = [float(x) for x in cfg.sigmas]
        cfg.Vs = [int(x) for x in cfg.Vs]
        cfg.schemes = list(cfg.schemes)
        return cfg.validate()

    @classmethod
    def from_json_file(cls, path):
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(doc)


@dataclass
class ResultRow:
    scheme: str
    rho_db: float
    sigma: float
    V: int
    trial: int
    seed: int
    r_min: float
    rates: list
    designer_ok: bool
    nulled_event: bool
    robust_feasible: bool
    true_feasible: bool
    iterations: int
    wall_time: float = 0.0


CSV_FIELDS = [f.name for f in fields(ResultRow) if f.name != "wall_time"]


def trial_seed(base_seed, trial):
    return int(np.random.SeedSequence([int(base_seed), int(trial)]).generate_state(1, np.uint32)[0])


def _channel_for(seed, M, N, V, sigma):
    cfg = ChannelConfig(N=N, M=M, V=V)
    ch_true = effective_channels(sample_taps(cfg, np.random.default_rng([seed, 0])))
    return apply_csi_error(ch_true, sigma, np.random.default_rng([seed, 1]))


def evaluate_point(scheme, rho_db, sigma, V, trial, seed, M=8, N=8, R0=0.5, single_user=False,
                   n_starts=10, n_rand=200):
    """Design one beamformer and score it on the true channel."""
    t0 = time.perf_counter()
    ch = _channel_for(seed, M, N, V, sigma)
    p = ProblemParams.from_db(M, N, V, rho_db, R0=R0, sigma=sigma)
    rng = np.random.default_rng([seed, 2, _SCHEME_CODE[scheme]])
    users = [1] if single_user else None
    w, iters, ok = None, 0, True
    try:
        if scheme == "random":
            w = random_beamformer(V, rng)
        elif scheme == "sca":
            res = sca_solve(ch, p, rng, ScaOptions(n_starts=n_starts, users=users))
            w, iters = res.w, res.iterations
        elif single_user:
            w = sdr_single_user(ch, p, user=1, rng=rng, n_rand=n_rand).w
        else:
            w = sdr_solve(ch, p, rng, n_rand=n_rand).w
    except OtfsNomaError:
        ok = False
    if w is None:
        rates = [0.0] * M
        return ResultRow(scheme, rho_db, sigma, V, trial, seed, 0.0, rates, False, False, False,
                         False, iters, time.perf_counter() - t0)
    wc = check_sic_constraints(w, ch, p, mode="worst_case")
    tc = check_sic_constraints(w, ch, p, mode="true_channel")
    r_min, rates = min_rate(w, ch, p, users=users)
    if wc.nulled:
        # an admissible CSI error could null the link: target not guaranteed
        r_min = 0.0
    return ResultRow(scheme, float(rho_db), float(sigma), int(V), int(trial), int(seed), float(r_min),
                     [float(r) for r in rates], ok, wc.nulled, wc.feasible, tc.feasible, iters,
                     time.perf_counter() - t0)


def _jobs(cfg):
    for scheme in cfg.schemes:
        for V in cfg.Vs:
            for sigma in cfg.sigmas:
                for rho in cfg.rho_db:
                    for trial in range(cfg.trials):
                        yield (scheme, rho, sigma, V, trial, trial_seed(cfg.seed, trial), cfg.M, cfg.N,
                               cfg.R0, cfg.single_user, cfg.n_starts, cfg.n_rand)


def _run_job(job):
    return evaluate_point(*job)


def run_experiment(cfg, progress=None):
    """Run every (scheme, V, sigma, rho, trial) point; rows come back in that order."""
    cfg.validate()
    jobs = list(_jobs(cfg))
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            rows = list(pool.map(_run_job, jobs, chunksize=max(1, len(jobs) // (8 * cfg.threads))))
    else:
        rows = []
        for i, job in enumerate(jobs):
            rows.append(_run_job(job))
            if progress is not None:
                progress(i + 1, len(jobs))
    return rows


def replay_row(cfg, row):
    """Recompute one row from its seed and the experiment config."""
    return evaluate_point(row.scheme, row.rho_db, row.sigma, row.V, row.trial, row.seed, cfg.M,
                          cfg.N, cfg.R0, cfg.single_user, cfg.n_starts, cfg.n_rand)


def rows_to_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for r in rows:
        d = asdict(r)
        d["rates"] = ";".join(repr(x) for x in r.rates)
        writer.writerow([repr(d[k]) if isinstance(d[k], float) else d[k] for k in CSV_FIELDS])
    return buf.getvalue()


def timings_to_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["scheme", "rho_db", "sigma", "V", "trial", "wall_time"])
    for r in rows:
        writer.writerow([r.scheme, r.rho_db, r.sigma, r.V, r.trial, f"{r.wall_time:.6f}"])
    return buf.getvalue()


def summarize(rows):
    """Mean R_min per (scheme, sigma, V, rho_db) with counts and standard errors."""
    groups = {}
    for r in rows:
        groups.setdefault((r.scheme, r.sigma, r.V, r.rho_db), []).append(r.r_min)
    out = []
    for (scheme, sigma, V, rho), vals in sorted(groups.items()):
        if not vals:
            continue
        a = np.asarray(vals, dtype=float)
        se = float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else None
        out.append({
            "scheme": scheme, "sigma": sigma, "V": V, "rho_db": rho,
            "n": int(a.size), "mean_r_min": float(a.mean()), "stderr": se,
            "zero_fraction": float(np.mean(a == 0.0)),
        })
    return out
