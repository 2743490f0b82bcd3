"""Compressed sensing space for k-sparse vectors under the l1 norm.

The structure norm is l1, its dual is l-infinity, and the model set is the
set of k-sparse vectors. The decomposition bound is ``L = sqrt(k)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SHARP = "sharp"
TWO = "two"
DUAL = "dual"


def as_signal(x, name: str = "x") -> np.ndarray:
    """Coerce ``x`` to a finite 1-D float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < 1:
        raise ValueError(f"{name} must have at least one entry")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def norm(x, which: str = SHARP) -> float:
    x = as_signal(x)
    if which == SHARP:
        return float(np.sum(np.abs(x)))
    if which == TWO:
        # scale first so tiny or huge entries neither underflow nor overflow when squared
        top = float(np.max(np.abs(x))) if x.size else 0.0
        return top * float(np.linalg.norm(x / top)) if top > 0 else 0.0
    if which == DUAL:
        return float(np.max(np.abs(x)))
    raise ValueError(f"unknown norm {which!r}; expected 'sharp', 'two' or 'dual'")


def subgradient_sharp(x) -> np.ndarray:
    """Element of the l1 subdifferential at ``x``; zero coordinates map to 0."""
    return np.sign(as_signal(x))


def bound_L(k: int) -> float:
    if k < 1:
        raise ValueError(f"sparsity must be >= 1, got {k}")
    return math.sqrt(k)


@dataclass(frozen=True)
class CsSpaceModel:
    dim: int
    sparsity: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if not 1 <= self.sparsity <= self.dim:
            raise ValueError(f"sparsity must lie in [1, {self.dim}], got {self.sparsity}")

    @property
    def bound_L(self) -> float:
        return bound_L(self.sparsity)

    def contains(self, a) -> bool:
        a = as_signal(a, "a")
        return a.size == self.dim and int(np.count_nonzero(a)) <= self.sparsity

    def zero(self) -> np.ndarray:
        return np.zeros(self.dim)


@dataclass(frozen=True)
class Decomposition:
    z1: np.ndarray
    z2: np.ndarray
    support: tuple[int, ...]


def _support_set(a: np.ndarray, k: int) -> np.ndarray:
    # supp(a) padded with the lowest unused indices up to size k
    mask = a != 0
    if mask.sum() < k:
        free = np.flatnonzero(~mask)[: k - int(mask.sum())]
        mask[free] = True
    return np.flatnonzero(mask)


def decompose(space: CsSpaceModel, a, v) -> Decomposition:
    """Split ``v = z1 + z2`` with ``z2`` on a size-k set containing supp(a).

    ``z1`` lives off supp(a), so ``||a + z1||_1 = ||a||_1 + ||z1||_1``, and
    ``z2`` has at most k nonzeros, so ``||z2||_1 <= sqrt(k) ||v||_2``.
    """
    a = as_signal(a, "a")
    v = as_signal(v, "v")
    if a.size != space.dim or v.size != space.dim:
        raise ValueError(f"a and v must have dimension {space.dim}")
    if not space.contains(a):
        raise ValueError(
            f"a has {np.count_nonzero(a)} nonzeros, more than sparsity {space.sparsity}"
        )
    T = _support_set(a, space.sparsity)
    z2 = np.zeros_like(v)
    z2[T] = v[T]
    z1 = v.copy()
    z1[T] = 0.0
    return Decomposition(z1=z1, z2=z2, support=tuple(int(i) for i in T))


def hard_threshold(x, k: int) -> np.ndarray:
    """Best k-term approximation; magnitude ties go to the lowest index."""
    x = as_signal(x)
    if not 1 <= k <= x.size:
        raise ValueError(f"k must lie in [1, {x.size}], got {k}")
    # stable sort on -|x| keeps lower indices first among equal magnitudes
    keep = np.argsort(-np.abs(x), kind="stable")[:k]
    out = np.zeros_like(x)
    out[keep] = x[keep]
    return out
