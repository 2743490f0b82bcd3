"""Robust width and l1-constrained minimal singular value bounds.

A matrix has the (rho, alpha) robust width property when
``||Phi x||_2 >= alpha ||x||_2`` for every x with ``||x||_2 > rho ||x||_1``.
The best alpha is the infimum of ``||Phi x||_2`` over unit vectors in the
cone ``{rho ||x||_1 <= ||x||_2}``. This module brackets that infimum from
below with a deterministic covering net (sound, small N only) and from above
with a multistart projected descent (any N, heuristic).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .solvers import SensingMatrix, as_matrix
from .space import as_signal

NET = "net"
COLUMN_ENUM = "column_enum"
HEURISTIC_ONLY = "heuristic_only"

MAX_NET_DIM = 5


class Verdict(enum.Enum):
    CONSISTENT = "consistent"
    VIOLATES = "violates"


@dataclass(frozen=True)
class RwpCertificate:
    rho: float
    alpha_lower: float
    alpha_upper: float
    net_delta: float
    method: str
    vacuous: bool = False

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.alpha_lower < 0:
            raise ValueError(f"alpha_lower must be nonnegative, got {self.alpha_lower}")
        if self.alpha_lower > self.alpha_upper + 1e-10:
            raise ValueError(
                f"alpha_lower={self.alpha_lower} exceeds alpha_upper={self.alpha_upper}"
            )

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "alpha_lower": self.alpha_lower,
            "alpha_upper": self.alpha_upper if math.isfinite(self.alpha_upper) else None,
            "net_delta": self.net_delta,
            "method": self.method,
            "vacuous": self.vacuous,
        }


@dataclass(frozen=True)
class CmsvEstimate:
    k: int
    r_lower: float
    r_upper: float

    def __post_init__(self):
        if not 0 <= self.r_lower <= self.r_upper + 1e-10:
            raise ValueError(f"inconsistent bounds [{self.r_lower}, {self.r_upper}]")


@dataclass(frozen=True)
class NetResult:
    alpha_lower: float
    net_min: float
    points_total: int
    points_in_cone: int
    pitch: float
    covering_radius: float

    @property
    def vacuous(self) -> bool:
        return self.points_in_cone == 0


def net_pitch(n: int, delta: float) -> tuple[float, int]:
    """Grid pitch on the cube faces giving covering radius at most ``delta``.

    A unit vector scaled to the cube surface is within ``h/2`` (sup norm) of a
    grid point on its face, hence within ``h/2 * sqrt(n-1)`` in l2; the radial
    map onto the sphere is nonexpansive outside the unit ball.
    """
    if n == 1:
        return 2.0, 2
    h_max = 2.0 * delta / math.sqrt(n - 1)
    per_axis = math.ceil(2.0 / h_max) + 1
    return 2.0 / (per_axis - 1), per_axis


def _face_chunks(n: int, per_axis: int, chunk: int = 1 << 18):
    """Yield unit-sphere net points, one antipodal representative each.

    ``||Phi p||`` and the cone test are even in p, so only faces with
    ``p_i = +1`` are enumerated.
    """
    grid = np.linspace(-1.0, 1.0, per_axis)
    free = n - 1
    if free == 0:
        yield np.ones((1, 1))
        return
    # split free coordinates into an outer product loop and an inner block
    inner = 0
    while inner < free and per_axis ** (inner + 1) <= chunk:
        inner += 1
    inner = max(inner, 1)
    outer = free - inner
    inner_pts = np.stack(np.meshgrid(*([grid] * inner), indexing="ij"), axis=-1).reshape(-1, inner)
    for face in range(n):
        others = [j for j in range(n) if j != face]
        for outer_idx in np.ndindex(*([per_axis] * outer)):
            P = np.empty((inner_pts.shape[0], n))
            P[:, face] = 1.0
            for pos, j in enumerate(others[:outer]):
                P[:, j] = grid[outer_idx[pos]]
            P[:, others[outer:]] = inner_pts
            P /= np.linalg.norm(P, axis=1, keepdims=True)
            yield P


def net_lower_bound(phi, rho: float, delta: float) -> NetResult:
    phi = as_matrix(phi)
    n = phi.n
    if n > MAX_NET_DIM:
        raise ValueError(
            f"net certification limited to n <= {MAX_NET_DIM}, got n={n}; use heuristic_only"
        )
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    pitch, per_axis = net_pitch(n, delta)
    cover = pitch / 2.0 * math.sqrt(n - 1) if n > 1 else 0.0
    # relaxed cone test: every true cone member has a net point within delta
    cone_cap = 1.0 + rho * math.sqrt(n) * delta
    A = phi.entries
    lo = math.inf
    total = inside = 0
    for P in _face_chunks(n, per_axis):
        total += P.shape[0]
        keep = rho * np.sum(np.abs(P), axis=1) <= cone_cap
        if not keep.any():
            continue
        inside += int(keep.sum())
        gains = np.linalg.norm(P[keep] @ A.T, axis=1)
        lo = min(lo, float(gains.min()))
    if inside == 0:
        return NetResult(0.0, math.inf, total, 0, pitch, cover)
    # the delta slack is the whole margin; sigma_max comes from an SVD, not power iteration
    return NetResult(max(0.0, lo - phi.spectral_norm * delta), lo, total, inside, pitch, cover)


def certify_alpha_lower(phi, rho: float, delta: float) -> float:
    """Certified ``alpha`` with ``||Phi x|| >= alpha ||x||`` on the whole cone."""
    return net_lower_bound(phi, rho, delta).alpha_lower


def _ratio(v: np.ndarray) -> float:
    return float(np.sum(np.abs(v)) / np.linalg.norm(v))


def _threshold_for_ratio(a: np.ndarray, cap: float) -> float | None:
    """Threshold t with ratio(soft(a, t)) == cap, for sorted descending ``a >= 0``.

    On the stretch where exactly j entries survive, the squared ratio is
    (S1 - j t)^2 / (S2 - 2 t S1 + j t^2) with S1, S2 the prefix sums, so the
    crossing solves a quadratic.
    """
    n = a.size
    S1 = np.cumsum(a)
    S2 = np.cumsum(a * a)
    c2 = cap * cap
    # with one survivor the ratio is identically 1 <= cap, so start at two
    for j in range(2, n + 1):
        lo = a[j] if j < n else 0.0
        hi = a[j - 1]
        if hi <= lo:
            continue
        s1, s2 = S1[j - 1], S2[j - 1]
        # j (j - c2) t^2 - 2 s1 (j - c2) t + (s1^2 - c2 s2) = 0
        qa, qb, qc = j * (j - c2), -2.0 * s1 * (j - c2), s1 * s1 - c2 * s2
        if qa == 0.0:
            roots = [-qc / qb] if qb != 0.0 else []
        else:
            disc = qb * qb - 4 * qa * qc
            if disc < 0:
                continue
            sq = math.sqrt(disc)
            roots = [(-qb - sq) / (2 * qa), (-qb + sq) / (2 * qa)]
        for t in sorted(roots):
            if lo <= t <= hi and s1 - j * t > 0:
                return float(t)
    return None


def project_to_cone_sphere(x: np.ndarray, rho: float, iters: int = 50) -> np.ndarray | None:
    """Map ``x`` to a unit vector with ``rho ||x||_1 <= 1``.

    Soft-thresholding lowers the l1/l2 ratio monotonically. The crossing
    threshold is solved in closed form, then nudged by bisection if rounding
    left the result on the infeasible side. Returns None when the set is
    empty (rho > 1).
    """
    if rho > 1.0:
        return None
    cap = 1.0 / rho
    nx = np.linalg.norm(x)
    if nx == 0:
        return None
    x = x / nx
    if _ratio(x) <= cap:
        return x
    ax, sx = np.abs(x), np.sign(x)
    ok = lambda v: v.any() and _ratio(v) <= cap
    best = None
    t = _threshold_for_ratio(np.sort(ax)[::-1], cap)
    if t is not None:
        for bump in (0.0, 1e-15, 1e-13, 1e-11):
            s = sx * np.maximum(ax - (t + bump * ax.max()), 0.0)
            if ok(s):
                best = s
                break
        else:
            lo, hi = t, float(np.max(ax))
            for _ in range(iters):
                tm = 0.5 * (lo + hi)
                s = sx * np.maximum(ax - tm, 0.0)
                if not s.any():
                    hi = tm
                elif _ratio(s) <= cap:
                    best, hi = s, tm
                else:
                    lo = tm
    if best is None:
        # ties in the top magnitude: fall back to a signed basis vector
        i = int(np.argmax(ax))
        best = np.zeros_like(x)
        best[i] = sx[i] or 1.0
    best = best / np.linalg.norm(best)
    return best if rho * np.sum(np.abs(best)) <= 1.0 + 1e-15 else None


def _descent_from(A, G, x, rho, step, iters):
    best_val, best_x = math.inf, None
    for _ in range(iters):
        prev = x
        x = project_to_cone_sphere(x - step * (G @ x), rho)
        if x is None:
            break
        if np.max(np.abs(x - prev)) <= 1e-13:
            break
        val = float(np.linalg.norm(A @ x))
        if val < best_val:
            best_val, best_x = val, x
    return best_val, best_x


def estimate_alpha_upper(phi, rho: float, restarts: int = 20, seed: int = 0, iters: int = 200, return_witness: bool = False):
    """Smallest ``||Phi x||`` found over feasible unit cone vectors.

    Every evaluated point passes the cone test, so the value is an upper bound
    on the true infimum. Returns ``inf`` when the cone is empty.
    """
    if restarts < 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")
    phi = as_matrix(phi)
    A = phi.entries
    G = A.T @ A
    n = phi.n
    step = 1.0 / phi.spectral_norm_sq if phi.spectral_norm_sq > 0 else 1.0
    rng = np.random.default_rng(seed)
    starts = [e for e in np.eye(n)]
    # eigenvectors of the smallest eigenvalues of Phi^T Phi are natural seeds
    _, vecs = np.linalg.eigh(G)
    starts += [vecs[:, j] for j in range(min(n, 3))]
    starts += [rng.standard_normal(n) for _ in range(restarts)]
    best_val, best_x = math.inf, None
    for x0 in starts:
        x = project_to_cone_sphere(np.asarray(x0, dtype=np.float64), rho)
        if x is None:
            continue
        v0 = float(np.linalg.norm(A @ x))
        if v0 < best_val:
            best_val, best_x = v0, x
        val, xv = _descent_from(A, G, x, rho, step, iters)
        if val < best_val:
            best_val, best_x = val, xv
    if return_witness:
        return best_val, best_x
    return best_val


def certify(phi, rho: float, delta: float = 0.02, restarts: int = 20, seed: int = 0) -> RwpCertificate:
    """Bracket the robust width gain; net lower bound only for ``n <= 5``."""
    phi = as_matrix(phi)
    upper = estimate_alpha_upper(phi, rho, restarts=restarts, seed=seed)
    if phi.n <= MAX_NET_DIM:
        net = net_lower_bound(phi, rho, delta)
        return RwpCertificate(
            rho=rho,
            alpha_lower=net.alpha_lower,
            alpha_upper=upper,
            net_delta=delta,
            method=NET,
            vacuous=net.vacuous,
        )
    return RwpCertificate(rho=rho, alpha_lower=0.0, alpha_upper=upper, net_delta=delta, method=HEURISTIC_ONLY)


def tau(phi) -> float:
    """``sup ||Phi x||_2`` over the l1 ball, attained at a signed basis vector."""
    A = as_matrix(phi).entries
    return float(np.max(np.linalg.norm(A, axis=0)))


def l1_cmsv(phi, k: int, mode: str = "net", delta: float = 0.02, restarts: int = 20, seed: int = 0) -> CmsvEstimate:
    """Bounds on ``r_k = min ||Phi x|| / ||x||`` over ``||x||_1 <= sqrt(k) ||x||_2``.

    The cone S_k is the robust width cone at ``rho = 1/sqrt(k)``. For k = 1 it
    contains only 1-sparse vectors, so ``r_1`` is the smallest column norm.
    """
    phi = as_matrix(phi)
    if not 1 <= k <= phi.n:
        raise ValueError(f"k must lie in [1, {phi.n}], got {k}")
    if mode == "exact_k1":
        if k != 1:
            raise ValueError("mode 'exact_k1' requires k = 1")
        r = float(np.min(np.linalg.norm(phi.entries, axis=0)))
        return CmsvEstimate(k, r, r)
    rho = 1.0 / math.sqrt(k)
    upper = estimate_alpha_upper(phi, rho, restarts=restarts, seed=seed)
    if mode == "net":
        lower = certify_alpha_lower(phi, rho, delta)
    elif mode == "heuristic":
        lower = 0.0
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return CmsvEstimate(k, lower, upper)


def rwp_violation_witness(phi, rho: float, alpha: float, x) -> Verdict:
    """Decide whether ``x`` witnesses failure of the (rho, alpha) property.

    Both equivalent phrasings are evaluated independently and must agree.
    """
    A = as_matrix(phi).entries
    x = as_signal(x)
    if not x.any():
        raise ValueError("witness vector must be nonzero")
    gain = float(np.linalg.norm(A @ x))
    l2 = float(np.linalg.norm(x))
    l1 = float(np.sum(np.abs(x)))
    # phrasing 1: small gain must imply compressibility
    fails_first = gain < alpha * l2 and not (l2 <= rho * l1)
    # phrasing 2: incompressibility must imply large gain
    fails_second = l2 > rho * l1 and not (gain >= alpha * l2)
    if fails_first != fails_second:
        raise AssertionError("the two robust width phrasings disagree")
    return Verdict.VIOLATES if fails_first else Verdict.CONSISTENT
