"""Solvers for the Lasso and Dantzig selector models.

Lasso::

    min 0.5 * ||Phi x - y||_2^2 + lam * ||x||_1

Dantzig selector::

    min ||x||_1  subject to  ||Phi^T (Phi x - y)||_inf <= lam

Both solvers stop on first-order optimality certificates rather than
iteration counts, and finish with an active-set polish that lands on the
exact minimizer once the support has been identified.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .space import as_signal

LASSO = "lasso"
DANTZIG = "dantzig"
MODELS = (LASSO, DANTZIG)


class SolverError(RuntimeError):
    """Raised when a solver fails to certify optimality.

    Carries the best iterate found and its residual so callers can record
    the failure instead of crashing.
    """

    def __init__(self, message: str, best_x: np.ndarray, residual: float):
        super().__init__(message)
        self.best_x = best_x
        self.residual = residual


class InfeasibleError(SolverError):
    pass


def power_iteration_norm_sq(entries: np.ndarray, rtol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest eigenvalue of ``Phi^T Phi`` by power iteration.

    Returns a Rayleigh quotient, hence never an overestimate.
    """
    A = np.asarray(entries, dtype=np.float64)
    n = A.shape[1]
    v = np.ones(n) / math.sqrt(n)
    v = v + 1e-3 * np.arange(n) / n  # break symmetric stalls
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = A.T @ (A @ v)
        new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(new - est) <= rtol * max(new, 1e-300):
            return new
        est = new
    return est


@dataclass(frozen=True, eq=False)
class SensingMatrix:
    """Dense real M x N sensing operator with cached spectral data."""

    entries: np.ndarray
    spectral_norm_sq: float = field(init=False)

    def __post_init__(self):
        arr = np.array(self.entries, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"sensing matrix must be 2-D and nonempty, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("sensing matrix has non-finite entries")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)
        # LAPACK SVD gives the norm to machine precision; power iteration
        # can only underestimate, which would make certificates unsound.
        object.__setattr__(self, "spectral_norm_sq", float(np.linalg.norm(arr, 2)) ** 2)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    @property
    def spectral_norm(self) -> float:
        return math.sqrt(self.spectral_norm_sq)

    @property
    def T(self) -> np.ndarray:
        return self.entries.T

    def __matmul__(self, x):
        return self.entries @ x

    def digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(np.asarray(self.entries.shape, dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(self.entries).tobytes())
        return h.hexdigest()[:16]


def as_matrix(phi) -> SensingMatrix:
    return phi if isinstance(phi, SensingMatrix) else SensingMatrix(phi)


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 20_000
    tol_kkt: float = 1e-8
    tol_obj: float = 1e-12

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        for name in ("tol_kkt", "tol_obj"):
            val = getattr(self, name)
            if not 0.0 < val < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {val}")


@dataclass(frozen=True)
class OptimalityReport:
    model: str
    dual_feas_margin: float
    support_stationarity: float
    objective: float
    iterations: int = 0


def soft_threshold(v, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _check_problem(phi, y, lam):
    phi = as_matrix(phi)
    y = as_signal(y, "y")
    if y.size != phi.m:
        raise ValueError(f"y has length {y.size}, expected {phi.m}")
    if not (lam > 0 and math.isfinite(lam)):
        raise ValueError(f"lambda must be positive and finite, got {lam}")
    return phi, y, float(lam)


def lasso_objective(phi, y, lam, x) -> float:
    A = phi.entries if isinstance(phi, SensingMatrix) else np.asarray(phi, dtype=np.float64)
    r = A @ x - y
    return 0.5 * float(r @ r) + lam * float(np.sum(np.abs(x)))


def optimality_report(model: str, phi, y, lam, x, iterations: int = 0) -> OptimalityReport:
    phi, y, lam = _check_problem(phi, y, lam)
    x = as_signal(x)
    A = phi.entries
    corr = A.T @ (y - A @ x)
    if model == LASSO:
        margin = lam - float(np.max(np.abs(corr)))
        supp = x != 0
        stat = float(np.max(np.abs(corr[supp] - lam * np.sign(x[supp])))) if supp.any() else 0.0
        objective = lasso_objective(phi, y, lam, x)
    elif model == DANTZIG:
        margin = lam - float(np.max(np.abs(corr)))
        stat = 0.0
        objective = float(np.sum(np.abs(x)))
    else:
        raise ValueError(f"unknown model {model!r}")
    return OptimalityReport(model, margin, stat, objective, iterations)


def _lasso_kkt(A, y, lam, x, tol):
    """Scaled KKT residual; <= 1 means the post-conditions hold at ``tol``."""
    corr = A.T @ (y - A @ x)
    res = max(float(np.max(np.abs(corr))) - lam, 0.0) / (lam * tol)
    xmax = float(np.max(np.abs(x)))
    if xmax > 0:
        big = np.abs(x) > tol * xmax
        if big.any():
            st = float(np.max(np.abs(corr[big] - lam * np.sign(x[big]))))
            res = max(res, st / (lam * tol))
    return res


def _lasso_polish(A, y, lam, x):
    supp = np.flatnonzero(x)
    if supp.size == 0 or supp.size > A.shape[0]:
        return None
    s = np.sign(x[supp])
    As = A[:, supp]
    G = As.T @ As
    try:
        xs = np.linalg.solve(G, As.T @ y - lam * s)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.sign(xs) == s):
        return None
    out = np.zeros_like(x)
    out[supp] = xs
    return out


def solve_lasso(
    phi,
    y,
    lam: float,
    opts: SolverOptions | None = None,
    x0=None,
    callback: Optional[Callable[[int, np.ndarray, float], None]] = None,
    full_output: bool = False,
):
    """Accelerated proximal gradient with a function-value safeguard.

    Whenever the accelerated step would raise the objective, the momentum is
    dropped and a plain proximal step from the current iterate is taken, so
    the objective sequence passed to ``callback`` never increases.

    Returns the minimizer, or ``(x, OptimalityReport)`` with ``full_output``.
    """
    phi, y, lam = _check_problem(phi, y, lam)
    opts = opts or SolverOptions()
    A = phi.entries
    n = phi.n
    Aty = A.T @ y

    def done(x, it):
        if full_output:
            return x, optimality_report(LASSO, phi, y, lam, x, iterations=it)
        return x

    if phi.spectral_norm_sq == 0.0 or float(np.max(np.abs(Aty))) <= lam:
        x = np.zeros(n)
        if callback is not None:
            callback(0, x, lasso_objective(phi, y, lam, x))
        return done(x, 0)

    x = np.zeros(n) if x0 is None else as_signal(x0, "x0").copy()
    if x.size != n:
        raise ValueError(f"warm start has length {x.size}, expected {n}")
    step = 1.0 / phi.spectral_norm_sq
    obj = lambda v: lasso_objective(A, y, lam, v)  # noqa: E731
    fx = obj(x)
    if callback is not None:
        callback(0, x, fx)

    w = x.copy()
    t = 1.0
    stable = 0
    prev_supp = None
    for it in range(1, opts.max_iters + 1):
        grad = A.T @ (A @ w) - Aty
        z = soft_threshold(w - step * grad, step * lam)
        fz = obj(z)
        if fz > fx:
            # restart: plain proximal step from x is a guaranteed descent
            grad = A.T @ (A @ x) - Aty
            z = soft_threshold(x - step * grad, step * lam)
            fz = obj(z)
            t = 1.0
            w = z.copy()
            if fz > fx:
                z, fz = x, fx
        else:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            w = z + ((t - 1.0) / t_new) * (z - x)
            t = t_new
        f_prev = fx
        x, fx = z, fz
        if callback is not None:
            callback(it, x, fx)

        supp = tuple(np.flatnonzero(x))
        stable = stable + 1 if supp == prev_supp else 0
        prev_supp = supp

        if _lasso_kkt(A, y, lam, x, opts.tol_kkt) <= 1.0:
            return done(x, it)
        stalled = abs(f_prev - fx) <= opts.tol_obj * max(1.0, abs(fx))
        if stable == 5 or (stable > 5 and stable % 50 == 0) or stalled:
            xp = _lasso_polish(A, y, lam, x)
            if xp is not None:
                fp = obj(xp)
                if fp <= fx + 1e-12 and _lasso_kkt(A, y, lam, xp, opts.tol_kkt) <= 1.0:
                    if callback is not None:
                        callback(it, xp, fp)
                    return done(xp, it)

    res = _lasso_kkt(A, y, lam, x, opts.tol_kkt) * opts.tol_kkt
    raise SolverError(f"lasso did not reach KKT tolerance in {opts.max_iters} iterations", x, res)


def _dantzig_feas(A, b, lam, x) -> float:
    """Relative constraint violation: max(|A x - b|_inf / lam - 1, 0)."""
    return max(float(np.max(np.abs(A @ x - b))) / lam - 1.0, 0.0)


def _dantzig_gap(A, b, lam, x, w) -> float:
    """Relative duality gap after scaling ``w`` to dual feasibility."""
    s = float(np.max(np.abs(A @ w)))
    if s > 1.0:
        w = w / s
    dual = -float(w @ b) - lam * float(np.sum(np.abs(w)))
    primal = float(np.sum(np.abs(x)))
    return (primal - dual) / max(1.0, primal)


def _polish_candidates(A, b, lam, x, p):
    xmax = float(np.max(np.abs(x)))
    r = A @ x - b
    Ap = np.abs(A @ p)
    pmax = float(np.max(np.abs(p)))
    viol = np.flatnonzero(np.abs(r) > lam)
    supports, actives = [viol], [viol]
    for rel in (1e-6, 1e-4, 1e-3, 1e-2, 5e-2):
        if xmax > 0:
            supports.append(np.flatnonzero(np.abs(x) > rel * xmax))
        supports.append(np.flatnonzero(Ap >= 1.0 - 10 * rel))
        actives.append(np.flatnonzero(np.abs(r) >= lam * (1.0 - 10 * rel)))
        if pmax > 0:
            actives.append(np.flatnonzero(np.abs(p) > rel * pmax))
    seen = set()
    for S in supports:
        for T in actives:
            key = (S.tobytes(), T.tobytes())
            if S.size == 0 or T.size == 0 or key in seen:
                continue
            seen.add(key)
            yield S, T


def _dantzig_polish(A, b, lam, x, p, tol):
    """Vertex candidates from primal/dual active sets; first certified wins."""
    r = A @ x - b
    for S, T in _polish_candidates(A, b, lam, x, p):
        sig = np.sign(r[T])
        sig[sig == 0] = np.sign(p[T])[sig == 0]
        xs, *_ = np.linalg.lstsq(A[np.ix_(T, S)], b[T] + lam * sig, rcond=None)
        cand = np.zeros_like(x)
        cand[S] = xs
        if _dantzig_feas(A, b, lam, cand) > tol:
            continue
        wT, *_ = np.linalg.lstsq(A[np.ix_(S, T)], -np.sign(xs), rcond=None)
        w = np.zeros_like(x)
        w[T] = np.where(sig * wT >= 0, wT, 0.0)
        for dual in (w, p):
            if _dantzig_gap(A, b, lam, cand, dual) <= tol:
                return cand
    return None


def solve_dantzig(
    phi,
    y,
    lam: float,
    opts: SolverOptions | None = None,
    full_output: bool = False,
):
    """Primal-dual hybrid gradient on the box-constrained form.

    The problem is written as ``min ||x||_1 + I_box(A x)`` with
    ``A = Phi^T Phi`` and box ``[b - lam, b + lam]``, ``b = Phi^T y``. The stop
    rule requires primal feasibility within ``tol_kkt`` and a relative duality
    gap within ``tol_kkt``.
    """
    phi, y, lam = _check_problem(phi, y, lam)
    opts = opts or SolverOptions()
    A = phi.entries.T @ phi.entries
    b = phi.entries.T @ y
    n = phi.n
    tol = opts.tol_kkt

    def done(x, it):
        if full_output:
            return x, optimality_report(DANTZIG, phi, y, lam, x, iterations=it)
        return x

    if float(np.max(np.abs(b))) <= lam:
        return done(np.zeros(n), 0)
    # b lies in range(Phi^T) = range(A), so A x = b is solvable and the
    # feasible set is never empty for lam > 0.
    eta = 0.99 / phi.spectral_norm_sq
    omega = 1.0  # primal weight: tau = eta / omega, sigma = eta * omega

    def merit(xv, pv):
        pinf = np.linalg.norm(np.maximum(np.abs(A @ xv - b) - lam, 0.0)) / lam
        dinf = np.linalg.norm(np.maximum(np.abs(A @ pv) - 1.0, 0.0))
        return pinf + dinf + abs(_dantzig_gap(A, b, lam, xv, pv))

    x = np.zeros(n)
    p = np.zeros(n)
    x_sum, p_sum, count = np.zeros(n), np.zeros(n), 0
    x_start, p_start = x.copy(), p.copy()
    merit_start = merit(x, p)
    best, best_res = x.copy(), math.inf
    check_every = 32
    for it in range(1, opts.max_iters + 1):
        tau, sigma = eta / omega, eta * omega
        x_new = soft_threshold(x - tau * (A @ p), tau)
        q = p + sigma * (A @ (2.0 * x_new - x))
        p = q - sigma * np.clip(q / sigma, b - lam, b + lam)
        x = x_new
        x_sum += x
        p_sum += p
        count += 1
        if it % check_every:
            continue
        feas = _dantzig_feas(A, b, lam, x)
        gap = _dantzig_gap(A, b, lam, x, p)
        if feas <= tol and gap <= tol:
            return done(x, it)
        cand = _dantzig_polish(A, b, lam, x, p, tol)
        if cand is not None:
            return done(cand, it)
        res = max(feas, gap)
        if res < best_res:
            best, best_res = x.copy(), res

        # adaptive restart to the better of current and averaged iterate
        xa, pa = x_sum / count, p_sum / count
        m_cur, m_avg = merit(x, p), merit(xa, pa)
        xr, pr, mr = (xa, pa, m_avg) if m_avg < m_cur else (x, p, m_cur)
        if mr <= 0.2 * merit_start or count >= 64 * check_every:
            dx = np.linalg.norm(xr - x_start)
            dp = np.linalg.norm(pr - p_start)
            if dx > 1e-12 and dp > 1e-12:
                omega = math.exp(0.5 * math.log(dp / dx) + 0.5 * math.log(omega))
            x, p = xr.copy(), pr.copy()
            x_start, p_start, merit_start = x.copy(), p.copy(), mr
            x_sum[:], p_sum[:], count = 0.0, 0.0, 0

    raise SolverError(
        f"dantzig did not reach feasibility/gap tolerance in {opts.max_iters} iterations",
        best,
        best_res,
    )


def oracle_dantzig_lp(phi, y, lam: float, max_n: int = 8) -> np.ndarray:
    """Exact Dantzig minimizer by enumerating basic feasible points.

    In the split form ``x = x+ - x-`` a vertex never has both parts of one
    coordinate positive, so every vertex is determined by a support ``S``,
    an equally sized set ``T`` of active constraints and their signs, through
    ``A[T, S] x_S = b_T + lam * sign_T``. All such points are enumerated; the
    feasible one with least l1 norm wins, ties to the lexicographically
    smallest vector.
    """
    phi, y, lam = _check_problem(phi, y, lam)
    n = phi.n
    if n > max_n:
        raise ValueError(f"oracle limited to n <= {max_n}, got {n}")
    A = phi.entries.T @ phi.entries
    b = phi.entries.T @ y
    if float(np.max(np.abs(b))) <= lam:
        return np.zeros(n)

    best_x = None
    best_obj = math.inf
    feas_tol = lam * (1.0 + 1e-10)
    for s in range(1, n + 1):
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=s))).T  # (s, 2^s)
        for S in itertools.combinations(range(n), s):
            for T in itertools.combinations(range(n), s):
                sub = A[np.ix_(T, S)]
                sv = np.linalg.svd(sub, compute_uv=False)
                if sv[-1] <= 1e-10 * max(sv[0], 1e-300):
                    continue
                rhs = b[list(T)][:, None] + lam * signs
                XS = np.linalg.solve(sub, rhs)  # (s, 2^s)
                X = np.zeros((n, XS.shape[1]))
                X[list(S)] = XS
                viol = np.max(np.abs(A @ X - b[:, None]), axis=0)
                ok = np.flatnonzero(viol <= feas_tol)
                for j in ok:
                    cand = X[:, j]
                    obj = float(np.sum(np.abs(cand)))
                    if best_x is None or obj < best_obj - 1e-12 * max(1.0, best_obj):
                        best_x, best_obj = cand.copy(), obj
                    elif abs(obj - best_obj) <= 1e-12 * max(1.0, best_obj) and tuple(cand) < tuple(best_x):
                        best_x = cand.copy()
    if best_x is None:
        raise InfeasibleError("no basic feasible point found", np.zeros(n), math.inf)
    return best_x
