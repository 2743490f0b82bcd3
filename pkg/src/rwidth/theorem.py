"""Constants and executable inequality checks for the stable recovery theorems.

For a solved instance with error ``z = x* - x_nat``, each intermediate
inequality of the recovery argument is evaluated and reported as a slack
``rhs - lhs``. A negative slack beyond solver accuracy would falsify the
argument on that instance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .solvers import DANTZIG, LASSO, as_matrix
from .space import CsSpaceModel, as_signal, decompose, subgradient_sharp


@dataclass(frozen=True)
class TheoremConstants:
    model: str
    rho: float
    alpha: float
    kappa: float
    L: float
    valid: bool
    c0: Optional[float] = None
    c1: Optional[float] = None
    tau: Optional[float] = None


@dataclass(frozen=True)
class ConverseParams:
    rho: float
    alpha: float
    kappa: float
    # set when the kappa-free reading was applied to the Dantzig converse
    kappa_convention: Optional[str] = None


@dataclass(frozen=True)
class SlackVector:
    step1: float
    step2: float
    step3: float
    bound: float = math.nan

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.step1, self.step2, self.step3)

    def min_step(self) -> float:
        return min(self.as_tuple())


@dataclass(frozen=True)
class DualNormReport:
    dual_norm: float
    pairing_gap: float
    subgradient_slack: float
    bounded: bool
    attained: bool
    pairing_ok: bool

    @property
    def passed(self) -> bool:
        return self.bounded and self.attained and self.pairing_ok and self.subgradient_slack >= -1e-12


def _check_model(model: str) -> None:
    if model not in (LASSO, DANTZIG):
        raise ValueError(f"unknown model {model!r}")


def proviso_threshold(model: str, kappa: float, L: float) -> float:
    _check_model(model)
    return (1.0 - kappa) / (2.0 * L) if model == LASSO else 1.0 / (2.0 * L)


def default_rho(model: str, kappa: float, L: float) -> float:
    """Half the proviso threshold, leaving headroom in ``C0``."""
    return 0.5 * proviso_threshold(model, kappa, L)


def forward_constants(model: str, rho: float, alpha: float, kappa: float, L: float, tau: float | None = None) -> TheoremConstants:
    """Recovery constants implied by the (rho, alpha) robust width property.

    Lasso: ``C0 = ((1-kappa)/(2 rho) - L)^-1``, ``C1 = (1+kappa)/(alpha^2 rho)``
    when ``rho < (1-kappa)/(2L)``. Dantzig: ``C0 = (1/(2 rho) - L)^-1``,
    ``C1 = 2/(alpha^2 rho)`` when ``rho < 1/(2L)``.
    """
    _check_model(model)
    if not (rho > 0 and alpha > 0 and L > 0):
        raise ValueError(f"rho, alpha and L must be positive, got {rho}, {alpha}, {L}")
    if model == LASSO and not 0 < kappa < 1:
        raise ValueError(f"kappa must lie in (0, 1), got {kappa}")
    if not rho < proviso_threshold(model, kappa, L):
        return TheoremConstants(model, rho, alpha, kappa, L, valid=False, tau=tau)
    if model == LASSO:
        c0 = 1.0 / ((1.0 - kappa) / (2.0 * rho) - L)
        c1 = (1.0 + kappa) / (alpha**2 * rho)
    else:
        c0 = 1.0 / (1.0 / (2.0 * rho) - L)
        c1 = 2.0 / (alpha**2 * rho)
    return TheoremConstants(model, rho, alpha, kappa, L, valid=True, c0=c0, c1=c1, tau=tau)


def converse_params(model: str, c0: float, c1: float, kappa: float | None, tau: float) -> ConverseParams:
    """Robust width parameters implied by recovery constants.

    ``rho = 2 C0`` and ``alpha = kappa / (2 tau C1)``. The Dantzig model has no
    kappa in its recovery hypothesis, so kappa is fixed to 1 there unless the
    caller overrides it; the result records which convention was used.
    """
    _check_model(model)
    if not (c0 > 0 and c1 > 0 and tau > 0):
        raise ValueError(f"c0, c1 and tau must be positive, got {c0}, {c1}, {tau}")
    convention = None
    if model == LASSO:
        if kappa is None or not 0 < kappa < 1:
            raise ValueError(f"kappa must lie in (0, 1), got {kappa}")
    elif kappa is None:
        kappa = 1.0
        convention = "kappa=1"
    elif not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    else:
        convention = "kappa-override"
    return ConverseParams(rho=2.0 * c0, alpha=kappa / (2.0 * tau * c1), kappa=kappa, kappa_convention=convention)


def epsilon_solver(tol_kkt: float, x_nat) -> float:
    """Additive slack allowance for inequalities that are exact only at optima."""
    return 10.0 * tol_kkt * (1.0 + float(np.linalg.norm(as_signal(x_nat))))


def proof_step_slacks(
    model: str,
    phi,
    x_nat,
    x_star,
    a,
    lam: float,
    kappa: float,
    space: CsSpaceModel,
    constants: TheoremConstants | None = None,
) -> SlackVector:
    """Slacks of the three intermediate inequalities (and the final bound).

    Lasso, with ``z = x* - x_nat``:

    1. ``||x*||_1 - kappa ||z||_1 <= ||x_nat||_1``
    2. ``||z||_1 <= 2/(1-kappa) ||x_nat - a||_1 + 2L/(1-kappa) ||z||_2``
    3. ``||Phi z||_2^2 <= (1+kappa) lam ||z||_1``

    Dantzig uses ``||x*||_1 <= ||x_nat||_1``, the kappa = 0 form of (2), and
    ``||Phi z||_2^2 <= 2 lam ||z||_1``. Inequality (2) is also checked through
    the explicit decomposition of z, see :func:`step2_decomposition_slack`.
    """
    _check_model(model)
    A = as_matrix(phi).entries
    x_nat = as_signal(x_nat, "x_nat")
    x_star = as_signal(x_star, "x_star")
    a = as_signal(a, "a")
    if not space.contains(a):
        raise ValueError(f"a must be {space.sparsity}-sparse")
    z = x_star - x_nat
    l1 = lambda v: float(np.sum(np.abs(v)))  # noqa: E731
    z1n, z2n = l1(z), float(np.linalg.norm(z))
    tail = l1(x_nat - a)
    L = space.bound_L
    Az = A @ z
    fit = float(Az @ Az)
    if model == LASSO:
        s1 = l1(x_nat) - (l1(x_star) - kappa * z1n)
        s2 = (2.0 * tail + 2.0 * L * z2n) / (1.0 - kappa) - z1n
        s3 = (1.0 + kappa) * lam * z1n - fit
    else:
        s1 = l1(x_nat) - l1(x_star)
        s2 = 2.0 * tail + 2.0 * L * z2n - z1n
        s3 = 2.0 * lam * z1n - fit
    bound = math.nan
    if constants is not None and constants.valid:
        lhs, rhs, _ = bound_check(constants, x_nat, x_star, a, lam)
        bound = rhs - lhs
    return SlackVector(s1, s2, s3, bound)


def step2_decomposition_slack(model: str, x_nat, x_star, a, kappa: float, space: CsSpaceModel) -> float:
    """Intermediate form of inequality (2) through ``z = z1 + z2``.

    Checks ``||z1||_1 <= 2/(1-kappa) ||x_nat - a||_1 + (1+kappa)/(1-kappa) ||z2||_1``
    (kappa = 0 for Dantzig) on the decomposition supplied by the space.
    """
    _check_model(model)
    x_nat = as_signal(x_nat, "x_nat")
    z = as_signal(x_star, "x_star") - x_nat
    a = as_signal(a, "a")
    k = 0.0 if model == DANTZIG else kappa
    d = decompose(space, a, z)
    tail = float(np.sum(np.abs(x_nat - a)))
    rhs = 2.0 / (1.0 - k) * tail + (1.0 + k) / (1.0 - k) * float(np.sum(np.abs(d.z2)))
    return rhs - float(np.sum(np.abs(d.z1)))


def lemma1_report(x, probes=None) -> DualNormReport:
    """Check the dual-norm facts for the l1 subgradient at ``x``.

    ``probes`` is an optional (P, N) array of points y at which the
    subgradient inequality ``||y||_1 >= ||x||_1 + <u, y - x>`` is evaluated;
    its worst slack is reported.
    """
    x = as_signal(x)
    u = subgradient_sharp(x)
    dual = float(np.max(np.abs(u)))
    l1x = float(np.sum(np.abs(x)))
    gap = float(u @ x) - l1x
    slack = math.inf
    if probes is not None:
        Y = np.atleast_2d(np.asarray(probes, dtype=np.float64))
        slack = float(np.min(np.sum(np.abs(Y), axis=1) - l1x - (Y - x) @ u))
    return DualNormReport(
        dual_norm=dual,
        pairing_gap=gap,
        subgradient_slack=slack,
        bounded=dual <= 1.0,
        attained=(dual == 1.0) if x.any() else True,
        pairing_ok=abs(gap) <= 1e-12 * max(1.0, l1x),
    )


def bound_check(constants: TheoremConstants, x_nat, x_star, a, lam: float, eps: float = 0.0) -> tuple[float, float, bool]:
    """Evaluate ``||x* - x_nat||_2 <= C0 ||x_nat - a||_1 + C1 lam``."""
    if not constants.valid:
        raise ValueError("bound check needs valid constants (proviso violated)")
    x_nat = as_signal(x_nat, "x_nat")
    lhs = float(np.linalg.norm(as_signal(x_star, "x_star") - x_nat))
    rhs = constants.c0 * float(np.sum(np.abs(x_nat - as_signal(a, "a")))) + constants.c1 * lam
    return lhs, rhs, lhs <= rhs + eps
