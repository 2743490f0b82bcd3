"""Seeded experiment instances, trial execution and report aggregation."""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .rwp import MAX_NET_DIM, RwpCertificate, certify, tau as tau_of
from .solvers import (
    DANTZIG,
    LASSO,
    SensingMatrix,
    SolverError,
    SolverOptions,
    as_matrix,
    solve_dantzig,
    solve_lasso,
)
from .space import CsSpaceModel, hard_threshold
from .theorem import (
    SlackVector,
    TheoremConstants,
    bound_check,
    default_rho,
    epsilon_solver,
    forward_constants,
    proof_step_slacks,
)

ENSEMBLES = ("gaussian", "bernoulli", "partial_orthogonal", "identity")
SEED_MASK = (1 << 64) - 1

MATRIX_STREAM = 1
SIGNAL_STREAM = 2
NOISE_STREAM = 3


def rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by ``seed XOR stream``."""
    return np.random.Generator(np.random.Philox(key=(int(seed) ^ stream) & SEED_MASK))


def trial_seed(master: int, index: int) -> int:
    """Per-trial seed derived from a master seed, independent of execution order."""
    state = np.random.SeedSequence([int(master) & SEED_MASK, int(index)]).generate_state(1, np.uint64)
    return int(state[0])


@dataclass(frozen=True)
class TrialConfig:
    m: int
    n: int
    k: int
    ensemble: str = "gaussian"
    kappa: float = 0.5
    lam: float = 1.0
    theta: float = 1.0
    model: str = LASSO
    seed: int = 0
    rho: Optional[float] = None
    alpha: Optional[float] = None
    delta: float = 0.02
    matrix_seed: Optional[int] = None
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError(f"m and n must be >= 1, got m={self.m}, n={self.n}")
        if not 1 <= self.k <= self.n:
            raise ValueError(f"k must lie in [1, n={self.n}], got {self.k}")
        if self.ensemble not in ENSEMBLES:
            raise ValueError(f"ensemble must be one of {ENSEMBLES}, got {self.ensemble!r}")
        if self.model not in (LASSO, DANTZIG):
            raise ValueError(f"model must be 'lasso' or 'dantzig', got {self.model!r}")
        if not 0 < self.kappa < 1:
            raise ValueError(f"kappa must lie in (0, 1), got {self.kappa}")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not 0 <= self.theta <= 1:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if not 0 <= self.seed <= SEED_MASK:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.rho is not None and not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrialConfig":
        if not isinstance(d, dict):
            raise ConfigError("<root>", f"expected a JSON object, got {type(d).__name__}")
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        known = {f.name for f in fields(cls)}
        for name in sorted(set(d) - known):
            raise ConfigError(name, "unknown TrialConfig field")
        for name, kinds in _FIELD_TYPES.items():
            if name not in d or (d[name] is None and type(None) in kinds):
                continue
            v = d[name]
            if isinstance(v, bool) or not isinstance(v, kinds):
                shown = "lambda" if name == "lam" else name
                raise ConfigError(shown, f"expected {' or '.join(k.__name__ for k in kinds)}, got {v!r}")
            if float in kinds:
                d[name] = float(v)
        if "solver" in d:
            s = d["solver"]
            if not isinstance(s, dict):
                raise ConfigError("solver", "expected an object")
            try:
                d["solver"] = SolverOptions(**s)
            except (TypeError, ValueError) as exc:
                raise ConfigError("solver", str(exc)) from None
        try:
            return cls(**d)
        except ValueError as exc:
            raise ConfigError(_field_in(str(exc)), str(exc)) from None


class ConfigError(ValueError):
    """Malformed configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"field '{field}': {message}")
        self.field = field


_FIELD_TYPES = {
    "m": (int,),
    "n": (int,),
    "k": (int,),
    "ensemble": (str,),
    "kappa": (int, float),
    "lam": (int, float),
    "theta": (int, float),
    "model": (str,),
    "seed": (int,),
    "rho": (int, float, type(None)),
    "alpha": (int, float, type(None)),
    "delta": (int, float),
    "matrix_seed": (int, type(None)),
}


def _field_in(message: str) -> str:
    head = message.split()[0] if message else "<root>"
    return {"m": "m/n", "lambda": "lambda"}.get(head, head)


@dataclass
class TrialRecord:
    trial_id: int
    config: TrialConfig
    phi_digest: str
    x_nat: np.ndarray
    omega: np.ndarray
    x_star: Optional[np.ndarray]
    slacks: Optional[SlackVector]
    eps: float
    constants: Optional[TheoremConstants] = None
    certificate: Optional[RwpCertificate] = None
    lhs: float = math.nan
    rhs: float = math.nan
    admissible: bool = True
    solver_ok: bool = True
    slacks_ok: bool = True
    bound_ok: Optional[bool] = None
    error: str = ""
    wall_ms: float = 0.0

    @property
    def passed(self) -> bool:
        return self.solver_ok and self.admissible and self.slacks_ok and self.bound_ok is not False

    @property
    def alpha_lower(self) -> float:
        if self.certificate is not None:
            return self.certificate.alpha_lower
        return self.constants.alpha if self.constants is not None else math.nan


@dataclass
class ConverseRecord:
    model: str
    kappa: float
    alpha: float
    lam: float
    tau: float
    x_star: np.ndarray
    x_star_norm: float
    noise_corr: float
    admissible: bool
    witness: bool

    @property
    def passed(self) -> bool:
        return self.x_star_norm <= 1e-8


def gen_matrix(ensemble: str, m: int, n: int, seed: int) -> SensingMatrix:
    if m < 1 or n < 1:
        raise ValueError(f"m and n must be >= 1, got m={m}, n={n}")
    rng = rng_for(seed)
    if ensemble == "gaussian":
        A = rng.standard_normal((m, n)) / math.sqrt(m)
    elif ensemble == "bernoulli":
        A = rng.choice((-1.0, 1.0), size=(m, n)) / math.sqrt(m)
    elif ensemble == "partial_orthogonal":
        if m > n:
            raise ValueError(f"partial_orthogonal requires m <= n, got m={m}, n={n}")
        Q, R = np.linalg.qr(rng.standard_normal((n, n)))
        Q = Q * np.sign(np.diag(R))
        A = Q[:m]
    elif ensemble == "identity":
        if m != n:
            raise ValueError(f"identity ensemble requires m == n, got m={m}, n={n}")
        A = np.eye(n)
    else:
        raise ValueError(f"unknown ensemble {ensemble!r}")
    return SensingMatrix(A)


def gen_sparse_signal(n: int, k: int, seed: int) -> np.ndarray:
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    rng = rng_for(seed)
    support = rng.choice(n, size=k, replace=False)
    x = np.zeros(n)
    x[support] = rng.uniform(1.0, 2.0, size=k) * rng.choice((-1.0, 1.0), size=k)
    return x


def scale_to_admissible(phi, g, bound: float, theta: float) -> np.ndarray:
    """Rescale ``g`` so that ``||Phi^T omega||_inf = theta * bound``."""
    if bound < 0:
        raise ValueError(f"bound must be nonnegative, got {bound}")
    if not 0 <= theta <= 1:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    g = np.asarray(g, dtype=np.float64)
    corr = float(np.max(np.abs(as_matrix(phi).entries.T @ g)))
    if corr == 0.0 or theta == 0.0 or bound == 0.0:
        return np.zeros_like(g)
    return (theta * bound / corr) * g


def gen_admissible_noise(phi, bound: float, theta: float, seed: int) -> np.ndarray:
    phi = as_matrix(phi)
    g = rng_for(seed).standard_normal(phi.m)
    return scale_to_admissible(phi, g, bound, theta)


_CERT_CACHE: dict[tuple, RwpCertificate] = {}


def certificate_for(phi: SensingMatrix, rho: float, delta: float) -> RwpCertificate:
    key = (phi.digest(), rho, delta)
    if key not in _CERT_CACHE:
        _CERT_CACHE[key] = certify(phi, rho, delta)
    return _CERT_CACHE[key]


def run_trial(config: TrialConfig, trial_id: int = 0) -> TrialRecord:
    """Generate one instance, solve it and evaluate every check.

    Robust width parameters come from ``config.alpha`` when given (taken on
    trust), else from the net certificate when ``n <= 5``. Larger problems get
    the proof-step slacks only.
    """
    t0 = time.perf_counter()
    cfg = config
    mseed = cfg.seed if cfg.matrix_seed is None else cfg.matrix_seed
    phi = gen_matrix(cfg.ensemble, cfg.m, cfg.n, mseed ^ MATRIX_STREAM)
    x_nat = gen_sparse_signal(cfg.n, cfg.k, cfg.seed ^ SIGNAL_STREAM)
    level = cfg.kappa * cfg.lam if cfg.model == LASSO else cfg.lam
    omega = gen_admissible_noise(phi, level, cfg.theta, cfg.seed ^ NOISE_STREAM)
    y = phi.entries @ x_nat + omega
    eps = epsilon_solver(cfg.solver.tol_kkt, x_nat)
    rec = TrialRecord(trial_id, cfg, phi.digest(), x_nat, omega, None, None, eps)
    rec.admissible = float(np.max(np.abs(phi.entries.T @ omega))) <= level * (1.0 + 1e-12)

    space = CsSpaceModel(cfg.n, cfg.k)
    rho = cfg.rho if cfg.rho is not None else default_rho(cfg.model, cfg.kappa, space.bound_L)
    alpha = cfg.alpha
    if alpha is None and cfg.n <= MAX_NET_DIM:
        rec.certificate = certificate_for(phi, rho, cfg.delta)
        alpha = rec.certificate.alpha_lower if rec.certificate.alpha_lower > 0 else None
    if alpha is not None:
        rec.constants = forward_constants(cfg.model, rho, alpha, cfg.kappa, space.bound_L, tau=tau_of(phi))

    try:
        solve = solve_lasso if cfg.model == LASSO else solve_dantzig
        rec.x_star = solve(phi, y, cfg.lam, cfg.solver)
    except SolverError as exc:
        rec.solver_ok = False
        rec.error = str(exc)
        rec.x_star = exc.best_x
        rec.wall_ms = (time.perf_counter() - t0) * 1e3
        return rec

    a = hard_threshold(x_nat, cfg.k)
    rec.slacks = proof_step_slacks(cfg.model, phi, x_nat, rec.x_star, a, cfg.lam, cfg.kappa, space, rec.constants)
    rec.slacks_ok = rec.slacks.min_step() >= -eps
    if rec.constants is not None and rec.constants.valid:
        rec.lhs, rec.rhs, rec.bound_ok = bound_check(rec.constants, x_nat, rec.x_star, a, cfg.lam, eps)
    rec.wall_ms = (time.perf_counter() - t0) * 1e3
    return rec


def converse_trial(phi, x_nat, kappa: float | None, model: str, alpha: float | None = None, opts: SolverOptions | None = None) -> ConverseRecord:
    """Run the zero-solution construction behind the converse direction.

    With ``omega = -Phi x_nat`` the data vanish, so zero solves both models.
    ``lam`` is ``tau alpha ||x_nat|| / kappa`` (Lasso) or ``tau alpha ||x_nat||``
    (Dantzig). When no ``alpha`` is supplied, twice the gain of ``x_nat`` is
    used so that ``||Phi x_nat|| < alpha ||x_nat||`` holds.
    """
    phi = as_matrix(phi)
    x_nat = np.asarray(x_nat, dtype=np.float64)
    nx = float(np.linalg.norm(x_nat))
    if nx == 0:
        raise ValueError("x_nat must be nonzero")
    if model == LASSO:
        if kappa is None or not 0 < kappa < 1:
            raise ValueError(f"kappa must lie in (0, 1), got {kappa}")
        kap = kappa
    elif model == DANTZIG:
        kap = 1.0
    else:
        raise ValueError(f"unknown model {model!r}")
    gain = float(np.linalg.norm(phi.entries @ x_nat)) / nx
    if alpha is None:
        alpha = 2.0 * gain if gain > 0 else 1.0
    t = tau_of(phi)
    if t == 0:
        raise ValueError("tau(Phi) is zero; the construction needs a nonzero operator")
    lam = t * alpha * nx / kap
    omega = -(phi.entries @ x_nat)
    y = phi.entries @ x_nat + omega
    solve = solve_lasso if model == LASSO else solve_dantzig
    x_star = solve(phi, y, lam, opts)
    corr = float(np.max(np.abs(phi.entries.T @ omega)))
    witness = gain < alpha
    return ConverseRecord(
        model=model,
        kappa=kap,
        alpha=alpha,
        lam=lam,
        tau=t,
        x_star=x_star,
        x_star_norm=float(np.linalg.norm(x_star)),
        noise_corr=corr,
        admissible=(corr <= kap * lam * (1.0 + 1e-12)) if witness else True,
        witness=witness,
    )


def _run_indexed(args):
    idx, cfg = args
    return run_trial(cfg, trial_id=idx)


@dataclass
class ExperimentSummary:
    records: list
    n_trials: int
    n_passed: int
    n_solver_failures: int
    n_theorem_violations: int
    n_inadmissible: int
    worst_slacks: dict
    tightness_max: Optional[float]
    tightness_mean: Optional[float]

    @property
    def pass_rate(self) -> float:
        return self.n_passed / self.n_trials

    def to_dict(self, seed: Optional[int] = None) -> dict:
        return {
            "tool_version": __version__,
            "seed": seed,
            "n_trials": self.n_trials,
            "n_passed": self.n_passed,
            "pass_rate": self.pass_rate,
            "n_solver_failures": self.n_solver_failures,
            "n_theorem_violations": self.n_theorem_violations,
            "n_inadmissible": self.n_inadmissible,
            "worst_slacks": self.worst_slacks,
            "tightness_max": self.tightness_max,
            "tightness_mean": self.tightness_mean,
        }


def summarize(records: Sequence[TrialRecord]) -> ExperimentSummary:
    records = sorted(records, key=lambda r: r.trial_id)
    solved = [r for r in records if r.solver_ok]
    worst = {}
    for name in ("step1", "step2", "step3"):
        vals = [getattr(r.slacks, name) for r in solved if r.slacks is not None]
        worst[name] = min(vals) if vals else None
    ratios = [r.lhs / r.rhs for r in solved if r.bound_ok is not None and r.rhs > 0]
    violations = sum(1 for r in solved if not r.slacks_ok or r.bound_ok is False)
    return ExperimentSummary(
        records=list(records),
        n_trials=len(records),
        n_passed=sum(1 for r in records if r.passed),
        n_solver_failures=len(records) - len(solved),
        n_theorem_violations=violations,
        n_inadmissible=sum(1 for r in records if not r.admissible),
        worst_slacks=worst,
        tightness_max=max(ratios) if ratios else None,
        tightness_mean=float(np.mean(ratios)) if ratios else None,
    )


def run_experiment(configs: Sequence[TrialConfig], parallelism: int = 1) -> ExperimentSummary:
    """Run every config; trial ids are list positions, so output ignores worker count."""
    if not configs:
        raise ValueError("config list is empty")
    jobs = list(enumerate(configs))
    if parallelism <= 1 or len(jobs) == 1:
        records = [_run_indexed(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            records = list(pool.map(_run_indexed, jobs, chunksize=max(1, len(jobs) // (4 * parallelism))))
    return summarize(records)


REPORT_COLUMNS = (
    "trial_id", "model", "m", "n", "k", "kappa", "lambda", "rho", "alpha_lower",
    "c0", "c1", "lhs", "rhs", "step1", "step2", "step3", "pass", "seed", "tool_version",
)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "" if math.isnan(v) else format(v, ".17g")
    return str(v)


def report_row(rec: TrialRecord, with_timing: bool = False) -> list[str]:
    c = rec.config
    const = rec.constants
    rho = const.rho if const is not None else (rec.certificate.rho if rec.certificate else math.nan)
    s = rec.slacks
    row = [
        rec.trial_id, c.model, c.m, c.n, c.k, c.kappa, c.lam, rho, rec.alpha_lower,
        const.c0 if const is not None and const.valid else None,
        const.c1 if const is not None and const.valid else None,
        rec.lhs, rec.rhs,
        s.step1 if s else None, s.step2 if s else None, s.step3 if s else None,
        rec.passed, c.seed, __version__,
    ]
    if with_timing:
        row.append(round(rec.wall_ms, 3))
    return [_fmt(v) for v in row]


def report_csv(records: Sequence[TrialRecord], with_timing: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(REPORT_COLUMNS + (("wall_ms",) if with_timing else ()))
    for rec in sorted(records, key=lambda r: r.trial_id):
        w.writerow(report_row(rec, with_timing))
    return buf.getvalue()


def expand_trials(base: TrialConfig, trials: int, master_seed: int) -> list[TrialConfig]:
    """``trials`` copies of ``base`` with per-trial seeds split from the master."""
    return [replace(base, seed=trial_seed(master_seed, i)) for i in range(trials)]
